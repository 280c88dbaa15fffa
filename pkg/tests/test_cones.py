"""Cone constructors, duals, biconic sets, and the two spec formats."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

import conekit as ck
from conekit.cones import DUPLICATE_TOL


def test_rays_normalizes_and_dedups():
    G = np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 5.0],
                  [1e-10 + 1.0, 1e-16]])  # near-duplicate of e1
    C = ck.rays(G)
    assert C.n_generators == 2
    assert np.allclose(np.linalg.norm(C.generators, axis=1), 1.0)
    assert C.orthogonal


def test_rays_rejects_degenerate():
    with pytest.raises(ck.ConeError):
        ck.rays(np.array([[0.0, 0.0]]))
    with pytest.raises(ck.ConeError):
        ck.rays(np.array([[1.0, np.nan]]))
    with pytest.raises(ck.ConeError):
        ck.rays(np.array([[1.0], [2.0]]))  # d = 1 not supported


def test_orthogonality_autodetect():
    assert ck.rays(np.eye(3)).orthogonal
    assert not ck.rays(np.array([[1.0, 0.0], [1.0, 1.0]])).orthogonal
    # forcing the flag on a non-orthogonal family must fail
    with pytest.raises(ck.ConeError):
        ck.rays(np.array([[1.0, 0.0], [1.0, 1.0]]), orthogonal=True)


def test_orthant_constructor():
    C = ck.orthant(4)
    assert C.orthogonal and C.n_generators == 4
    assert np.allclose(C.generators, np.eye(4))


def test_subspace_constructor_checks_orthonormality():
    r = 1.0 / math.sqrt(2.0)
    S = ck.subspace(3, 2, basis=np.array([[r, r, 0.0], [0.0, 0.0, 1.0]]))
    assert np.allclose(S.basis @ S.basis.T, np.eye(2), atol=1e-12)
    with pytest.raises(ck.ConeError):
        ck.subspace(3, 4)
    with pytest.raises(ck.ConeError):
        ck.subspace(3, 2, basis=np.array([[1.0, 1.0, 0], [0.0, 1.0, 0]]))


def test_circular_constructor_bounds():
    C = ck.circular(3, 0.7)
    assert abs(np.linalg.norm(C.axis) - 1.0) < 1e-12
    for bad in (0.0, math.pi / 2, -0.2, 2.0):
        with pytest.raises(ck.ConeError):
            ck.circular(3, bad)


def test_generator_storage_is_readonly():
    C = ck.orthant(3)
    with pytest.raises(ValueError):
        C.generators[0, 0] = 5.0


# ---------------------------------------------------------------------------
# duals


def test_dual_of_subspace_is_orthocomplement():
    rng = np.random.default_rng(3)
    B, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    S = ck.subspace(5, 2, basis=B.T)
    Sd = ck.dual(S)
    assert isinstance(Sd, ck.SubspaceCone) and Sd.k == 3
    assert np.max(np.abs(S.basis @ Sd.basis.T)) < 1e-10


def test_dual_of_circular_flips_axis_and_angle():
    C = ck.circular(4, 0.6)
    D = ck.dual(C)
    assert isinstance(D, ck.CircularCone)
    assert np.allclose(D.axis, -C.axis)
    assert abs(D.half_angle - (math.pi / 2 - 0.6)) < 1e-12


def test_double_dual_round_trip():
    rng = np.random.default_rng(11)
    C = ck.rays(rng.standard_normal((5, 3)))
    Cdd = ck.dual(ck.dual(C))
    assert Cdd is C  # dual of the wrapper returns the base cone
    S = ck.subspace(4, 2)
    Sdd = ck.dual(ck.dual(S))
    assert np.allclose(np.abs(Sdd.basis @ S.basis.T), np.eye(2), atol=1e-10)


def test_dual_membership_characterization():
    # x in the polar  iff  <x, g> <= 0 for every generator g
    rng = np.random.default_rng(12)
    G = rng.standard_normal((6, 4))
    C = ck.rays(G)
    D = ck.dual(C)
    X = rng.standard_normal((300, 4))
    inner_ok = np.max(X @ C.generators.T, axis=1) <= 1e-10
    member = np.array([ck.contains(D, x) for x in X])
    assert np.array_equal(member, inner_ok)


def test_rotated_moves_generators_by_theta():
    C = ck.orthant(2)
    R = ck.rotated(C, 1, 2, 0.3)
    g = R.generators
    # e1 -> (cos, sin), e2 -> (-sin, cos)
    expect = np.array([[math.cos(0.3), math.sin(0.3)],
                       [-math.sin(0.3), math.cos(0.3)]])
    assert np.allclose(np.sort(g, axis=0), np.sort(expect, axis=0), atol=1e-12)
    with pytest.raises(ck.ConeError):
        ck.rotated(C, 0, 1, 0.3)   # planes are 1-based
    with pytest.raises(ck.ConeError):
        ck.rotated(C, 1, 1, 0.3)


def test_is_full_space():
    full = ck.rays(np.vstack([np.eye(3), -np.eye(3)]))
    assert ck.is_full_space(full)
    assert not ck.is_full_space(ck.orthant(3))
    assert ck.is_full_space(ck.subspace(3, 3))


def test_cone_hash_stability_and_sensitivity():
    a = ck.cone_hash(ck.orthant(3))
    b = ck.cone_hash(ck.orthant(3))
    c = ck.cone_hash(ck.orthant(4))
    d = ck.cone_hash(ck.subspace(3, 3))
    assert a == b
    assert len({a, c, d}) == 3


# ---------------------------------------------------------------------------
# biconic sets


def test_biconic_all_accepts_everything():
    eta = ck.biconic_all()
    rng = np.random.default_rng(0)
    X = rng.standard_normal((10, 3))
    assert np.all(eta.evaluate(X, X))


def test_cap_product_membership_and_scaling_invariance():
    eta = ck.cap_product(np.array([1.0, 0.0]), 0.5,
                         np.array([0.0, 1.0]), 0.5)
    u = np.array([[1.0, 0.1], [0.0, 1.0]])
    v = np.array([[0.1, 1.0], [1.0, 0.0]])
    got = eta.evaluate(u, v)
    assert got[0] and not got[1]
    # biconic: invariant under independent positive scaling of each part
    rng = np.random.default_rng(5)
    for _ in range(50):
        s, t = rng.uniform(0.01, 100.0, size=2)
        assert np.array_equal(eta.evaluate(u * s, v * t), got)


def test_cap_product_zero_part_policy():
    # the origin belongs to every cone, so a zero component always passes
    eta = ck.cap_product(np.array([1.0, 0.0]), 0.1,
                         np.array([1.0, 0.0]), 0.1)
    z = np.zeros((1, 2))
    far = np.array([[0.0, 1.0]])
    assert eta.evaluate(z, z)[0]
    assert eta.evaluate(z, far)[0] == False  # noqa: E712 — v-part still filters
    assert eta.evaluate(far, z)[0] == False  # noqa: E712


def test_cap_product_validation():
    e1 = np.array([1.0, 0.0])
    with pytest.raises(ck.BiconicError):
        ck.cap_product(e1 * 0.0, 0.5, e1, 0.5)
    for bad in (0.0, -0.1, 3.5):
        with pytest.raises(ck.BiconicError):
            ck.cap_product(e1, bad, e1, 0.5)


def test_custom_biconic_error_wrapping():
    def bad(u, v):
        raise RuntimeError("boom")

    eta = ck.custom_biconic(bad)
    with pytest.raises(ck.BiconicError):
        eta.evaluate(np.ones((1, 2)), np.ones((1, 2)))


# ---------------------------------------------------------------------------
# file format and inline grammar


def test_parse_inline_specs():
    assert isinstance(ck.parse_cone_spec("orthant:3"), ck.PolyhedralCone)
    S = ck.parse_cone_spec("subspace:4,2")
    assert isinstance(S, ck.SubspaceCone) and S.k == 2
    C = ck.parse_cone_spec("circular:3,0.7")
    assert isinstance(C, ck.CircularCone)
    R = ck.parse_cone_spec("rotated:orthant:2,1,2,0.1")
    assert isinstance(R, ck.PolyhedralCone)
    # nested rotation: base itself contains commas
    R2 = ck.parse_cone_spec("rotated:rotated:orthant:2,1,2,0.1,1,2,0.2")
    delta = ck.angular_hausdorff(R2, ck.rotated(ck.orthant(2), 1, 2, 0.3))
    assert delta.value < 1e-9
    D = ck.parse_cone_spec("dual:orthant:3")
    assert isinstance(D, ck.DualCone)


def test_parse_cone_file_round_trip(tmp_path: Path):
    p = tmp_path / "cone.txt"
    p.write_text("d=3 kind=rays\n1 0 0\n0.5 0.5 0\n0 0 2\n")
    C = ck.parse_cone_file(p)
    assert isinstance(C, ck.PolyhedralCone) and C.n_generators == 3
    q = tmp_path / "rot.txt"
    q.write_text(f"d=3 kind=rotated\nplane=1,2 theta=0.25 base={p.name}\n")
    R = ck.parse_cone_file(q)
    assert isinstance(R, ck.PolyhedralCone)
    rep = ck.angular_hausdorff(R, ck.rotated(C, 1, 2, 0.25))
    assert rep.value < 1e-9


def test_parse_cone_file_subspace_and_circular(tmp_path: Path):
    p = tmp_path / "sub.txt"
    p.write_text("d=3 kind=subspace\nk=1\n0 2 0\n")
    S = ck.parse_cone_file(p)
    assert isinstance(S, ck.SubspaceCone)
    assert np.allclose(np.abs(S.basis), [[0.0, 1.0, 0.0]])
    c = tmp_path / "circ.txt"
    c.write_text("# a comment\nd=4 kind=circular\nalpha=0.5\n")
    C = ck.parse_cone_file(c)
    assert isinstance(C, ck.CircularCone) and C.dim == 4


def test_parse_errors_carry_line_numbers(tmp_path: Path):
    p = tmp_path / "bad.txt"
    p.write_text("d=3 kind=rays\n1 0\n")   # wrong row width
    with pytest.raises(ck.ConeParseError, match="line 2"):
        ck.parse_cone_file(p)
    p.write_text("d=3 kind=rays\n1 0 zebra\n")
    with pytest.raises(ck.ConeParseError, match="line 2"):
        ck.parse_cone_file(p)
    p.write_text("kind=rays\n1 0 0\n")
    with pytest.raises(ck.ConeParseError, match="line 1"):
        ck.parse_cone_file(p)
    with pytest.raises(ck.ConeParseError):
        ck.parse_cone_spec("orthant:banana")
    with pytest.raises(ck.ConeParseError):
        ck.parse_cone_spec(str(tmp_path / "missing.txt"))


def test_make_cone_matches_parse():
    C1 = ck.make_cone("orthant:5")
    C2 = ck.parse_cone_spec("orthant:5")
    assert ck.cone_hash(C1) == ck.cone_hash(C2)


def test_describe_mentions_shape():
    s = ck.describe(ck.orthant(3))
    assert "3" in s
    assert "polyhedral" in s


def test_duplicate_tolerance_boundary():
    # vectors farther apart than the dedup tolerance stay distinct
    eps = 10 * DUPLICATE_TOL
    C = ck.rays(np.array([[1.0, 0.0], [math.cos(eps), math.sin(eps)]]))
    assert C.n_generators == 2
