"""Angular Hausdorff distance, bounded-Lipschitz LP, rotation experiments."""
from __future__ import annotations

import math

import numpy as np
import pytest

import conekit as ck
from conekit.metrics import (AngularHausdorffOptions, _bl_lp, _merge_atoms,
                             dbl_metric_axioms_check)

from oracles import dbl_vertex_enumeration


def dirac_measure(u: np.ndarray, v: np.ndarray, w: np.ndarray,
                  k: int = 1) -> ck.EmpiricalConicMeasure:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    return ck.EmpiricalConicMeasure(
        d=u.shape[1], k=k, u=u, v=v, w=np.atleast_1d(np.asarray(w, float)),
        total_samples=max(8, u.shape[0]), seed=0, cone_spec_hash="synthetic")


def random_sphere(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# angular Hausdorff: exact tiers


def test_subspace_pairs_use_principal_angles():
    theta = 0.35
    L1 = ck.subspace(2, 1)
    L2 = ck.subspace(2, 1, basis=np.array([[math.cos(theta),
                                            math.sin(theta)]]))
    rep = ck.angular_hausdorff(L1, L2)
    assert rep.method == "principal-angles"
    assert rep.gap == 0.0
    assert rep.value == pytest.approx(theta, abs=1e-12)


def test_subspace_dimension_mismatch_is_right_angle():
    rep = ck.angular_hausdorff(ck.subspace(3, 1), ck.subspace(3, 2))
    assert rep.value == pytest.approx(math.pi / 2)
    trivial = ck.angular_hausdorff(ck.subspace(3, 0), ck.subspace(3, 0))
    assert trivial.value == 0.0


def test_identity_and_symmetry():
    rng = np.random.default_rng(41)
    C = ck.rays(rng.standard_normal((5, 3)))
    assert ck.angular_hausdorff(C, C).value == 0.0
    D = ck.rotated(C, 1, 2, 0.4)
    ab = ck.angular_hausdorff(C, D).value
    ba = ck.angular_hausdorff(D, C).value
    assert ab == pytest.approx(ba, abs=1e-9)


def test_rotation_family_distance_matches_angle():
    # rotations move every unit vector by at most theta, and the certified
    # bracket in d = 3 must contain the true value
    C = ck.orthant(3)
    for theta in (0.05, 0.2, 0.45):
        D = ck.rotated(C, 1, 2, theta)
        fast = ck.angular_hausdorff(C, D)
        assert fast.method == "ascent"
        assert fast.value <= theta + 1e-8
        cert = ck.angular_hausdorff(
            C, D, AngularHausdorffOptions(certify=True))
        assert cert.method == "certified-grid"
        assert cert.gap <= 1e-3 + 1e-12
        assert cert.value <= theta + 1e-9
        assert cert.value + cert.gap >= theta - 1e-9


def test_certified_mode_d2():
    C = ck.orthant(2)
    D = ck.rotated(C, 1, 2, 0.3)
    rep = ck.angular_hausdorff(C, D, AngularHausdorffOptions(certify=True))
    assert rep.method == "certified-grid"
    assert abs(rep.value - 0.3) <= rep.gap + 1e-9
    assert rep.gap <= 1e-3 + 1e-12


def test_certified_triangle_inequality():
    C = ck.orthant(3)
    D = ck.rotated(C, 1, 2, 0.2)
    E = ck.rotated(C, 1, 2, 0.45)
    opts = AngularHausdorffOptions(certify=True)
    cd = ck.angular_hausdorff(C, D, opts)
    de = ck.angular_hausdorff(D, E, opts)
    ce = ck.angular_hausdorff(C, E, opts)
    slack = 2.0 * (cd.gap + de.gap + ce.gap)
    assert ce.value <= cd.value + de.value + slack


def test_circular_pair_distance():
    # coaxial circular cones differ exactly by the half-angle difference
    C = ck.circular(3, 0.4)
    D = ck.circular(3, 0.7)
    rep = ck.angular_hausdorff(C, D, AngularHausdorffOptions(certify=True))
    assert abs(rep.value - 0.3) <= rep.gap + 1e-6


def test_ascent_options_respected():
    C = ck.orthant(3)
    D = ck.rotated(C, 2, 3, 0.25)
    r1 = ck.angular_hausdorff(C, D, AngularHausdorffOptions(seed=0))
    r2 = ck.angular_hausdorff(C, D, AngularHausdorffOptions(seed=0))
    assert r1.value == r2.value          # deterministic for a fixed seed
    with pytest.raises(ck.MetricError):
        ck.angular_hausdorff(C, ck.orthant(4))


# ---------------------------------------------------------------------------
# polarity


def test_polarity_preserves_distance_on_random_pairs():
    rng = np.random.default_rng(42)
    failures = []
    for trial in range(50):
        d = int(rng.integers(2, 5))
        C = ck.rays(rng.standard_normal((int(rng.integers(2, 7)), d)))
        D = ck.rays(rng.standard_normal((int(rng.integers(2, 7)), d)))
        rep = ck.polarity_isometry_check(C, D)
        if not rep.passed:
            failures.append((trial, rep.details))
    assert not failures, failures


def test_polarity_skip_path_full_space():
    full = ck.rays(np.vstack([np.eye(3), -np.eye(3)]))
    rep = ck.polarity_isometry_check(full, ck.orthant(3))
    assert rep.passed and "skip" in rep.details


# ---------------------------------------------------------------------------
# bounded-Lipschitz LP


def test_two_point_dirac_closed_form():
    rng = np.random.default_rng(43)
    for _ in range(100):
        d = int(rng.integers(2, 5))
        u1, v1 = random_sphere(rng, 1, d), random_sphere(rng, 1, d)
        u2, v2 = random_sphere(rng, 1, d), random_sphere(rng, 1, d)
        mu = dirac_measure(u1, v1, [1.0])
        nu = dirac_measure(u2, v2, [1.0])
        rep = ck.dbl_distance(mu, nu)
        gap_dist = np.linalg.norm(np.concatenate([u1 - u2, v1 - v2], axis=1))
        assert rep.method == "exact-lp"
        assert rep.value == pytest.approx(min(float(gap_dist), 2.0), abs=1e-9)


def test_lp_against_vertex_enumeration():
    # enumeration cost is C(2m + m(m-1), m); m = 5 is the largest size that
    # stays cheap (m = 6 alone costs minutes)
    rng = np.random.default_rng(44)
    for _ in range(15):
        m = int(rng.integers(2, 6))
        Z = np.hstack([random_sphere(rng, m, 2), random_sphere(rng, m, 2)])
        c = rng.standard_normal(m)
        got, _ = _bl_lp(Z, c)
        want = dbl_vertex_enumeration(Z, c)
        assert got == pytest.approx(want, abs=1e-7)


def test_dbl_identity_and_relabeling():
    rng = np.random.default_rng(45)
    u, v = random_sphere(rng, 20, 3), random_sphere(rng, 20, 3)
    w = np.full(20, 1.0 / 64)
    mu = dirac_measure(u, v, w)
    assert ck.dbl_distance(mu, mu).value == 0.0
    perm = rng.permutation(20)
    nu = dirac_measure(u[perm], v[perm], w[perm])
    assert ck.dbl_distance(mu, nu).value == 0.0
    # splitting one atom into two half-weight copies changes nothing
    u2 = np.vstack([u, u[:1]])
    v2 = np.vstack([v, v[:1]])
    w2 = np.concatenate([w, [w[0]]])
    w2[0] = 0.0
    w2[0], w2[-1] = w[0] / 2, w[0] / 2
    split = dirac_measure(u2, v2, w2)
    assert ck.dbl_distance(mu, split).value == 0.0
    third = dirac_measure(random_sphere(rng, 20, 3),
                          random_sphere(rng, 20, 3), w)
    direct = ck.dbl_distance(mu, third).value
    relabeled = ck.dbl_distance(nu, third).value
    assert direct == pytest.approx(relabeled, abs=1e-12)


def test_dbl_scale_with_weights():
    # halving all weights halves the optimum (LP is positively homogeneous)
    rng = np.random.default_rng(46)
    u1, v1 = random_sphere(rng, 5, 2), random_sphere(rng, 5, 2)
    u2, v2 = random_sphere(rng, 5, 2), random_sphere(rng, 5, 2)
    w = np.full(5, 0.1)
    d1 = ck.dbl_distance(dirac_measure(u1, v1, w),
                         dirac_measure(u2, v2, w)).value
    d2 = ck.dbl_distance(dirac_measure(u1, v1, w / 2),
                         dirac_measure(u2, v2, w / 2)).value
    assert d2 == pytest.approx(d1 / 2, abs=1e-9)


def test_dbl_dimension_mismatch():
    rng = np.random.default_rng(47)
    mu = dirac_measure(random_sphere(rng, 2, 2), random_sphere(rng, 2, 2),
                       [0.1, 0.1])
    nu = dirac_measure(random_sphere(rng, 2, 3), random_sphere(rng, 2, 3),
                       [0.1, 0.1])
    with pytest.raises(ck.MetricError):
        ck.dbl_distance(mu, nu)


def test_merge_atoms_bookkeeping():
    rng = np.random.default_rng(48)
    Z = np.hstack([random_sphere(rng, 50, 2), random_sphere(rng, 50, 2)])
    c = rng.standard_normal(50) / 50
    Zm, cm, movement = _merge_atoms(Z, c, h=0.5)
    assert Zm.shape[0] < 50
    assert cm.sum() == pytest.approx(c.sum(), abs=1e-12)
    assert movement >= 0.0
    # merged LP differs from the raw LP by at most the reported movement
    raw, _ = _bl_lp(Z, c)
    merged, _ = _bl_lp(Zm, cm)
    assert abs(raw - merged) <= movement + 1e-9


def test_aggregated_route_on_large_supports():
    rng = np.random.default_rng(49)
    m = 3000
    mu = dirac_measure(random_sphere(rng, m, 3), random_sphere(rng, m, 3),
                       np.full(m, 1.0 / m))
    nu = dirac_measure(random_sphere(rng, m, 3), random_sphere(rng, m, 3),
                       np.full(m, 1.0 / m))
    rep = ck.dbl_distance(mu, nu)
    assert rep.method == "aggregated-lp"
    assert rep.gap > 0.0
    assert rep.certificate["n_merged"] <= 2 * 1200


def test_metric_axioms_on_sampled_measures():
    measures = []
    for seed, cone in [(1, ck.orthant(2)),
                       (2, ck.orthant(2)),
                       (3, ck.rotated(ck.orthant(2), 1, 2, 0.5)),
                       (4, ck.rays(np.array([[1.0, 0.2], [0.3, 1.0]])))]:
        measures.append(ck.empirical_support_measure(
            cone, 1, ck.biconic_all(), 800, seed=seed))
    rep = dbl_metric_axioms_check(measures)
    assert rep.passed, rep.details
    with pytest.raises(ck.MetricError):
        dbl_metric_axioms_check(measures[:2])


def test_noise_floor_regression():
    # independent re-samples of the same boundary measure sit near zero,
    # and the floor shrinks as the sample grows
    C = ck.orthant(2)
    eta = ck.biconic_all()
    m500_a = ck.empirical_support_measure(C, 1, eta, 500, seed=101)
    m500_b = ck.empirical_support_measure(C, 1, eta, 500, seed=202)
    floor500 = ck.dbl_distance(m500_a, m500_b).value
    assert floor500 <= 0.15
    m4k_a = ck.empirical_support_measure(C, 1, eta, 4000, seed=101)
    m4k_b = ck.empirical_support_measure(C, 1, eta, 4000, seed=202)
    floor4k = ck.dbl_distance(m4k_a, m4k_b).value
    assert floor4k < floor500


# ---------------------------------------------------------------------------
# rotation experiment


def test_holder_experiment_structure_and_bounds():
    out = ck.holder_experiment(ck.orthant(3), (1, 2), [0.4, 0.1], [1, 2],
                               20_000, seed=51)
    rows = out["rows"]
    assert len(rows) == 4
    assert {r["k"] for r in rows} == {1, 2}
    for r in rows:
        assert r["dbl"] >= 0.0
        assert r["bound_ok"]
        assert r["dbl_over_sqrt_theta"] == pytest.approx(
            r["dbl"] / math.sqrt(r["theta"]), rel=1e-12)
    assert set(out["summary"]) == {1, 2}
    for s in out["summary"].values():
        assert s["coupling_bound_ok"]


def test_holder_log_log_slope():
    thetas = [0.4, 0.2, 0.1, 0.05]
    out = ck.holder_experiment(ck.orthant(3), (1, 2), thetas, [1],
                               100_000, seed=52)
    rows = sorted(out["rows"], key=lambda r: r["theta"])
    x = np.log([r["theta"] for r in rows])
    y = np.log([max(r["dbl"], 1e-12) for r in rows])
    slope = np.polyfit(x, y, 1)[0]
    assert slope >= 0.4
    assert out["summary"][1]["ratio_spread"] <= 10.0
    assert out["summary"][1]["monotonicity_inversions"] <= 1


def test_holder_rejects_nonpositive_angles():
    with pytest.raises(ck.MetricError):
        ck.holder_experiment(ck.orthant(2), (1, 2), [0.0, 0.1], [1], 100,
                             seed=0)
