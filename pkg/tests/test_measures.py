"""Sampling engine, degree histograms, boundary measures, parallel masses."""
from __future__ import annotations

import math

import numpy as np
import pytest

import conekit as ck
from conekit.measures import (BLOCK, STREAM_A, STREAM_B, _mean_sd,
                              gaussian_sample, gaussian_stream)

from oracles import gamma_moment


# ---------------------------------------------------------------------------
# the Gaussian stream


def test_stream_is_chunk_stable():
    # a prefix of a longer run matches a shorter run bit for bit
    a = gaussian_sample(3, 1000, seed=5)
    b = gaussian_sample(3, 70000, seed=5)
    assert np.array_equal(a, b[:1000])
    # crossing a block boundary changes nothing
    c = gaussian_sample(3, BLOCK + 17, seed=5)
    assert np.array_equal(c, b[:BLOCK + 17])


def test_stream_separation_and_seeding():
    a = gaussian_sample(4, 500, seed=9, stream_id=0)
    b = gaussian_sample(4, 500, seed=9, stream_id=1)
    c = gaussian_sample(4, 500, seed=10, stream_id=0)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_moments():
    X = gaussian_sample(5, 200_000, seed=1)
    assert np.max(np.abs(X.mean(axis=0))) < 4.0 / math.sqrt(200_000)
    cov = np.cov(X.T)
    assert np.max(np.abs(cov - np.eye(5))) < 0.02


def test_stream_generator_interface():
    it = gaussian_stream(2, seed=3)
    rows = np.array([next(it) for _ in range(10)])
    assert np.array_equal(rows, gaussian_sample(2, 10, seed=3))


def test_worker_count_does_not_change_results(monkeypatch):
    C = ck.rays(np.random.default_rng(2).standard_normal((5, 3)))
    est1 = ck.phi_f_mc(C, ck.f_moment(1, 0), None, 150_000, seed=7)
    iv1 = ck.intrinsic_volumes_mc(C, 150_000, seed=7)
    monkeypatch.setenv("CONEKIT_WORKERS", "4")
    est4 = ck.phi_f_mc(C, ck.f_moment(1, 0), None, 150_000, seed=7)
    iv4 = ck.intrinsic_volumes_mc(C, 150_000, seed=7)
    assert est1.value == est4.value and est1.stderr == est4.stderr
    assert np.array_equal(iv1.counts, iv4.counts)
    assert np.array_equal(iv1.values, iv4.values)


def test_mean_sd_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1000)
    est = _mean_sd([(float(x.sum()), float((x * x).sum()))], 1000)
    assert est.value == pytest.approx(x.mean(), abs=1e-12)
    assert est.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(1000),
                                       rel=1e-10)


# ---------------------------------------------------------------------------
# intrinsic volumes


def test_orthant_intrinsic_volumes_binomial():
    d, n = 3, 200_000
    est = ck.intrinsic_volumes_mc(ck.orthant(d), n, seed=11)
    expect = np.array([math.comb(d, k) for k in range(d + 1)]) / 2.0 ** d
    band = 4.0 * np.sqrt(expect * (1.0 - expect) / n)
    assert np.all(np.abs(est.values - expect) <= band)
    assert est.counts.sum() == n
    assert est.values.sum() == 1.0          # exact in floating point


def test_subspace_degrees_are_deterministic():
    est = ck.intrinsic_volumes_mc(ck.subspace(4, 2), 5000, seed=1)
    assert np.array_equal(est.counts, [0, 0, 5000, 0, 0])
    assert est.values[2] == 1.0
    trivial = ck.intrinsic_volumes_mc(ck.subspace(3, 0), 1000, seed=1)
    assert trivial.counts[0] == 1000


def test_dual_histogram_is_reversed():
    rng = np.random.default_rng(21)
    C = ck.rays(rng.standard_normal((5, 3)))
    a = ck.intrinsic_volumes_mc(C, 100_000, seed=3)
    b = ck.intrinsic_volumes_mc(ck.dual(C), 100_000, seed=3)
    assert np.array_equal(a.counts, b.counts[::-1])


def test_circular_cone_needs_inversion_route():
    with pytest.raises(ck.EstimationError, match="inversion"):
        ck.intrinsic_volumes_mc(ck.circular(3, 0.5), 1000, seed=0)


# ---------------------------------------------------------------------------
# empirical boundary measures


def test_empirical_measure_atoms_orthogonal_unit():
    C = ck.orthant(2)
    mu = ck.empirical_support_measure(C, 1, ck.biconic_all(), 50_000, seed=13)
    assert np.allclose(np.linalg.norm(mu.u, axis=1), 1.0, atol=1e-9)
    assert np.allclose(np.linalg.norm(mu.v, axis=1), 1.0, atol=1e-9)
    dots = np.einsum("ij,ij->i", mu.u, mu.v)
    assert np.max(np.abs(dots)) < 1e-9
    # weights are all 1/N and total the degree-1 share (1/2 for the quadrant)
    assert np.all(mu.w == 1.0 / 50_000)
    assert mu.total_weight() == pytest.approx(0.5, abs=4.0 * 0.5 / math.sqrt(50_000))
    # quadrant edge atoms lie on the axes, normals point outward
    assert np.allclose(np.abs(mu.u).max(axis=1), 1.0, atol=1e-9)


def test_empirical_measure_degree_range():
    C = ck.orthant(3)
    for bad in (0, 3, -1):
        with pytest.raises(ck.EstimationError, match="omega_extremes"):
            ck.empirical_support_measure(C, bad, ck.biconic_all(), 100, seed=0)


def test_empirical_measure_eta_restriction():
    C = ck.orthant(2)
    eta = ck.cap_product(np.array([1.0, 0.0]), 0.2,
                         np.array([0.0, -1.0]), math.pi)
    mu = ck.empirical_support_measure(C, 1, eta, 20_000, seed=14)
    full = ck.empirical_support_measure(C, 1, ck.biconic_all(), 20_000, seed=14)
    assert mu.n_atoms < full.n_atoms
    # every kept u lies within the cap
    assert np.all(mu.u @ np.array([1.0, 0.0]) >= math.cos(0.2) - 1e-9)


def test_measure_save_load_round_trip(tmp_path):
    C = ck.rays(np.random.default_rng(3).standard_normal((4, 3)))
    mu = ck.empirical_support_measure(C, 2, ck.biconic_all(), 5000, seed=15)
    path = mu.save(tmp_path / "mu.csv")
    back = ck.EmpiricalConicMeasure.load(path)
    assert back.d == mu.d and back.k == mu.k
    assert back.total_samples == mu.total_samples
    assert back.cone_spec_hash == mu.cone_spec_hash
    assert back.n_atoms == mu.n_atoms
    # 12 significant digits survive the text round trip
    assert np.max(np.abs(back.u - mu.u)) < 1e-11
    assert np.max(np.abs(back.w - mu.w)) < 1e-15
    header = (tmp_path / "mu.csv").read_text().splitlines()[0]
    assert header == "u_1,u_2,u_3,v_1,v_2,v_3,w"


def test_measure_load_requires_sidecar(tmp_path):
    p = tmp_path / "lonely.csv"
    p.write_text("u_1,u_2,v_1,v_2,w\n")
    with pytest.raises(ck.EstimationError, match="sidecar"):
        ck.EmpiricalConicMeasure.load(p)


def test_measure_validation_rejects_bad_atoms():
    good = ck.EmpiricalConicMeasure(
        d=2, k=1, u=np.array([[1.0, 0.0]]), v=np.array([[0.0, 1.0]]),
        w=np.array([0.5]), total_samples=2, seed=0, cone_spec_hash="x")
    good.validate()
    bad = ck.EmpiricalConicMeasure(
        d=2, k=1, u=np.array([[2.0, 0.0]]), v=np.array([[0.0, 1.0]]),
        w=np.array([0.5]), total_samples=2, seed=0, cone_spec_hash="x")
    with pytest.raises(ck.EstimationError):
        bad.validate()
    neg = ck.EmpiricalConicMeasure(
        d=2, k=1, u=np.array([[1.0, 0.0]]), v=np.array([[0.0, 1.0]]),
        w=np.array([-0.1]), total_samples=2, seed=0, cone_spec_hash="x")
    with pytest.raises(ck.EstimationError):
        neg.validate()


# ---------------------------------------------------------------------------
# scalar functionals against closed-form moments


def test_phi_f_chi_square_oracles():
    n = 400_000
    d = 4
    C = ck.orthant(d)
    # E ||P||^2 = d/2 for the orthant (each coordinate is a half-Gaussian)
    est = ck.phi_f_mc(C, ck.f_moment(1, 0), None, n, seed=17)
    assert abs(est.value - d / 2) <= 4 * est.stderr
    # E ||P||^2 ||Q||^2 = d(d-1)/4 by coordinate independence
    est2 = ck.phi_f_mc(C, ck.f_moment(1, 1), None, n, seed=17)
    assert abs(est2.value - d * (d - 1) / 4) <= 4 * est2.stderr
    # subspace: ||P||^2 is chi-square with k dof -> E = k, E square = k(k+2)
    S = ck.subspace(5, 3)
    m1 = ck.phi_f_mc(S, ck.f_moment(1, 0), None, n, seed=18)
    m2 = ck.phi_f_mc(S, ck.f_moment(2, 0), None, n, seed=18)
    assert abs(m1.value - 3.0) <= 4 * m1.stderr
    assert abs(m2.value - 15.0) <= 4 * m2.stderr


def test_phi_f_constant_is_exact():
    est = ck.phi_f_mc(ck.orthant(3), ck.f_one(), None, 10_000, seed=0)
    assert est.value == 1.0 and est.stderr == 0.0


def test_phi_f_radial_moment_oracle():
    # ||x||^2 = a + b, so f(a,b) = sqrt(a+b) has the chi moment mean
    n = 300_000
    d = 3
    est = ck.phi_f_mc(ck.orthant(d), lambda a, b: np.sqrt(a + b), None, n,
                      seed=19)
    expect = gamma_moment(d + 1) / gamma_moment(d)  # E chi_d
    assert abs(est.value - expect) <= 4 * est.stderr


def test_phi_f_rejects_non_finite():
    f = lambda a, b: np.where(b > 0.5, np.inf, 1.0)  # noqa: E731
    with pytest.raises(ck.EstimationError, match="non-finite"):
        ck.phi_f_mc(ck.orthant(2), f, None, 1000, seed=0)


def test_phi_f_rejects_bad_shape():
    f = lambda a, b: np.float64(1.0)  # noqa: E731
    with pytest.raises(ck.EstimationError, match="shape"):
        ck.phi_f_mc(ck.orthant(2), f, None, 1000, seed=0)


# ---------------------------------------------------------------------------
# parallel masses


def test_parallel_mass_matches_indicator_functional_exactly():
    C = ck.rays(np.random.default_rng(23).standard_normal((5, 3)))
    lam = 0.6
    a = ck.local_parallel_mass(C, lam, None, 120_000, seed=21)
    b = ck.phi_f_mc(C, ck.f_steiner_indicator(lam), None, 120_000, seed=21)
    assert a.value == b.value
    assert a.stderr == b.stderr


def test_parallel_mass_monotone_and_bounded():
    C = ck.circular(3, 0.4)
    vals = [ck.local_parallel_mass(C, lam, None, 50_000, seed=22).value
            for lam in (0.0, 0.3, 0.6, 0.9, 1.2)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert 0.0 < vals[0] < vals[-1] < 1.0


def test_exclude_cone_subtracts_cone_mass():
    C = ck.orthant(2)
    lam = 0.5
    n = 80_000
    with_cone = ck.local_parallel_mass(C, lam, None, n, seed=23)
    without = ck.local_parallel_mass(C, lam, None, n, seed=23,
                                     exclude_cone=True)
    cone_only = ck.local_parallel_mass(C, 0.0, None, n, seed=23)
    assert with_cone.value - without.value == pytest.approx(cone_only.value,
                                                            abs=1e-15)


def test_parallel_mass_range_check():
    with pytest.raises(ck.EstimationError):
        ck.local_parallel_mass(ck.orthant(2), math.pi / 2, None, 100, seed=0)


# ---------------------------------------------------------------------------
# extreme degrees


def test_omega_extremes_orthant():
    d, n = 3, 200_000
    e0, ed = ck.omega_extremes(ck.orthant(d), None, n, seed=24)
    expect = 2.0 ** -d
    assert abs(e0.value - expect) <= 4 * max(e0.stderr, 1e-12)
    assert abs(ed.value - expect) <= 4 * max(ed.stderr, 1e-12)


def test_omega_extremes_full_subspace():
    e0, ed = ck.omega_extremes(ck.subspace(3, 3), None, 5000, seed=25)
    assert e0.value == 0.0 and ed.value == 1.0


def test_omega_extremes_cap_accepts_zero_part():
    # for samples inside the cone the complement is o, which every cap accepts
    d, n = 2, 100_000
    C = ck.orthant(d)
    eta = ck.cap_product(np.array([1.0, 1.0]), math.pi,   # u side: everything
                         np.array([-1.0, 0.0]), 0.3)      # v side: small cap
    _, ed = ck.omega_extremes(C, eta, n, seed=26)
    _, ed_all = ck.omega_extremes(C, None, n, seed=26)
    assert ed.value == ed_all.value                       # v-cap never filters o
    e0, _ = ck.omega_extremes(C, eta, n, seed=26)
    e0_all, _ = ck.omega_extremes(C, None, n, seed=26)
    assert e0.value < e0_all.value                        # u is o there, v is not


# ---------------------------------------------------------------------------
# inversion route


def test_inversion_matches_face_counting():
    n = 200_000
    C = ck.orthant(3)
    inv = ck.support_measure_via_inversion(C, None, None, n, seed=27)
    iv = ck.intrinsic_volumes_mc(C, n, seed=27)
    for k in (1, 2):
        tol = 4.0 * math.hypot(inv.stderr[k - 1], float(iv.stderr[k]))
        assert abs(inv.values[k - 1] - iv.values[k]) <= tol + 1e-12


def test_inversion_on_circular_cone_half_space_limit():
    # a circular cone in d=2 with alpha=pi/4 is a rotated quadrant
    n = 200_000
    C = ck.circular(2, math.pi / 4)
    inv = ck.support_measure_via_inversion(C, None, None, n, seed=28)
    assert abs(inv.values[0] - 0.5) <= 4 * inv.stderr[0]


def test_inversion_condition_number_pins():
    c4 = ck.inversion_coeffs(4, None)
    c6 = ck.inversion_coeffs(6, None)
    assert 60.0 < c4.cond < 90.0
    assert 1600.0 < c6.cond < 2300.0


def test_seed_validation():
    with pytest.raises(ck.EstimationError):
        gaussian_sample(3, 10, seed=-1)
    with pytest.raises(ck.EstimationError):
        gaussian_sample(3, 10, seed=2 ** 64)


def test_streams_partition_identity_checks():
    # lhs and rhs streams must be distinct or the identity checks correlate
    assert STREAM_A != STREAM_B
    a = gaussian_sample(2, 100, seed=1, stream_id=STREAM_A)
    b = gaussian_sample(2, 100, seed=1, stream_id=STREAM_B)
    assert not np.array_equal(a, b)
