"""Distances between cones and between empirical boundary measures.

Two metrics live here.  The angular Hausdorff distance between closed convex
cones is computed from one-sided suprema of the angular distance over the
unit-sphere trace of each cone — by exact linear algebra for subspace pairs,
multistart projected ascent in general, and an optional certified
branch-and-bound on the sphere for d <= 3.  The bounded-Lipschitz distance
between weighted atom measures on paired spheres is an exact finite linear
program (test function values as variables) with an aggregation fallback
whose merge cost is tracked as a rigorous gap.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import pdist, squareform

from .cones import (BiconicSet, CircularCone, Cone, DualCone, PolyhedralCone,
                    SubspaceCone, ambient_dim, biconic_all, cone_hash, dual,
                    is_full_space, rotated)
from .measures import STREAM_MAIN, EmpiricalConicMeasure, _map_blocks
from .projection import angular_distance_batch, face_dims_batch, project_batch
from .reporting import CheckReport, DistanceReport

# Exact-LP size threshold; beyond it atoms are grid-merged first.
MAX_EXACT_ATOMS = 2000
AGGREGATION_TARGET = 1200


class MetricError(RuntimeError):
    """Distance computation failed or exceeded its certification budget."""


# ---------------------------------------------------------------------------
# Angular Hausdorff distance between cones


@dataclass(frozen=True)
class AngularHausdorffOptions:
    """Controls for the one-sided supremum searches."""

    starts: int = 32          # random ascent starts per direction
    max_iters: int = 200      # ascent iteration cap
    pitch: float = 1e-3       # certified enclosure width target
    certify: bool = False     # run the d<=3 branch-and-bound certificate
    seed: int = 0             # seeds the random ascent starts
    # total cells the certificate may evaluate; the near-optimal region is
    # two-dimensional, so the frontier peaks around a million cells at the
    # default pitch (they are cheap batched evaluations)
    cell_budget: int = 5_000_000


def _unit_candidates(cone: Cone, rng: np.random.Generator, count: int
                     ) -> np.ndarray:
    """Starting rays on the cone's sphere trace: structural plus random."""
    d = ambient_dim(cone)
    cands = []
    base = cone.base if isinstance(cone, DualCone) else cone
    if isinstance(base, PolyhedralCone) and not isinstance(cone, DualCone):
        cands.append(base.generators)
    elif isinstance(base, SubspaceCone) and not isinstance(cone, DualCone):
        if base.k > 0:
            cands.append(base.basis)
            cands.append(-base.basis)
    elif isinstance(base, CircularCone) and not isinstance(cone, DualCone):
        axis = base.axis
        cands.append(axis[None, :])
        # boundary ring of the circular cone
        W = rng.standard_normal((8, d))
        W -= np.outer(W @ axis, axis)
        norms = np.linalg.norm(W, axis=1)
        W = W[norms > 1e-12] / norms[norms > 1e-12][:, None]
        if W.size:
            cands.append(math.cos(base.half_angle) * axis[None, :]
                         + math.sin(base.half_angle) * W)
    raw = rng.standard_normal((count, d))
    P = project_batch(cone, raw)
    norms = np.linalg.norm(P, axis=1)
    good = norms > 1e-12
    if np.any(good):
        cands.append(P[good] / norms[good][:, None])
    if not cands:
        return np.empty((0, d))
    U = np.concatenate(cands, axis=0)
    # snap onto the cone's sphere trace (structural candidates already there)
    PU = project_batch(cone, U)
    norms = np.linalg.norm(PU, axis=1)
    good = norms > 1e-12
    return PU[good] / norms[good][:, None]


def _directed_sup_ascent(C: Cone, D: Cone, opts: AngularHausdorffOptions,
                         rng: np.random.Generator) -> tuple[float, int]:
    """sup over C's sphere trace of the angular distance to D, by ascent.

    Maximizing the angular distance equals minimizing the projected length
    onto D, a convex function, so projected gradient descent on it converges
    to the constrained minimum from each start; multistart handles the
    nonconvex feasible set (sphere trace).
    """
    U = _unit_candidates(C, rng, opts.starts)
    if U.shape[0] == 0:
        return 0.0, 0     # empty sphere trace (the trivial cone)
    h = np.linalg.norm(project_batch(D, U), axis=1)
    best = float(np.max(angular_distance_batch(D, U)))
    t = np.full(U.shape[0], 0.5)
    iters = 0
    for _ in range(opts.max_iters):
        iters += 1
        live = (h > 1e-14) & (t > 1e-14)
        if not np.any(live):
            break
        G = project_batch(D, U)
        gn = np.linalg.norm(G, axis=1)
        grad = np.zeros_like(G)
        nz = gn > 1e-14
        grad[nz] = G[nz] / gn[nz][:, None]
        step = U - t[:, None] * grad
        Pc = project_batch(C, step)
        pn = np.linalg.norm(Pc, axis=1)
        ok = live & (pn > 1e-14)
        Unew = np.where(ok[:, None], Pc / np.maximum(pn, 1e-300)[:, None], U)
        hnew = np.linalg.norm(project_batch(D, Unew), axis=1)
        improved = ok & (hnew < h - 1e-15)
        U[improved] = Unew[improved]
        h[improved] = hnew[improved]
        t[improved] *= 1.2
        t[live & ~improved] *= 0.5
    best = max(best, float(np.max(angular_distance_batch(D, U))))
    return min(best, 0.5 * math.pi), iters


def _sphere_grid(delta: float) -> tuple[np.ndarray, float]:
    """Latitude-longitude net of S^2 with covering radius <= 0.75 * delta."""
    centers = []
    n_lat = max(2, int(math.ceil(math.pi / delta)))
    for i in range(n_lat):
        theta = (i + 0.5) * math.pi / n_lat
        ring_n = max(1, int(math.ceil(2.0 * math.pi * math.sin(theta) / delta)))
        phi = (np.arange(ring_n) + 0.5) * 2.0 * math.pi / ring_n
        centers.append(np.column_stack([
            np.full(ring_n, math.sin(theta) * 1.0) * np.cos(phi),
            np.full(ring_n, math.sin(theta) * 1.0) * np.sin(phi),
            np.full(ring_n, math.cos(theta)),
        ]))
    return np.concatenate(centers, axis=0), 0.75 * delta


def _tangent_basis(centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.zeros_like(centers)
    ref[:, 0] = 1.0
    swap = np.abs(centers[:, 0]) > 0.9
    ref[swap] = 0.0
    ref[swap, 1] = 1.0
    e1 = ref - centers * np.einsum("ij,ij->i", ref, centers)[:, None]
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(centers, e1)
    return e1, e2


def _directed_sup_circle(C: Cone, D: Cone, opts: AngularHausdorffOptions,
                         warm_lower: float) -> tuple[float, float, dict]:
    """Certified directed supremum on the unit circle by a single fine scan."""
    step = max(opts.pitch / 2.0, 1e-6)
    count = int(math.ceil(2.0 * math.pi / step))
    ang = (np.arange(count) + 0.5) * 2.0 * math.pi / count
    centers = np.column_stack([np.cos(ang), np.sin(ang)])
    rho = math.pi / count            # covering radius of the scan
    da_C = angular_distance_batch(C, centers)
    da_D = angular_distance_batch(D, centers)
    reachable = da_C <= rho
    lower = warm_lower
    if np.any(reachable):
        P = project_batch(C, centers[reachable])
        pn = np.linalg.norm(P, axis=1)
        ok = pn > 1e-12
        if np.any(ok):
            feas = P[ok] / pn[ok][:, None]
            lower = max(lower, float(np.max(angular_distance_batch(D, feas))))
    cell_upper = np.minimum(da_D + rho, 0.5 * math.pi)
    cell_upper[~reachable] = -np.inf
    upper = float(np.max(cell_upper, initial=-np.inf))
    upper = max(upper, lower)
    cert = {"upper": upper, "lower": lower, "levels": 1,
            "cells_evaluated": int(count)}
    return lower, upper, cert


_FACET_CACHE: "weakref.WeakKeyDictionary[PolyhedralCone, np.ndarray | None]" \
    = weakref.WeakKeyDictionary()


def _cross_candidates(G: np.ndarray, constraints: np.ndarray) -> np.ndarray:
    """Unit rays on pairwise plane intersections satisfying all constraints."""
    out = []
    n = G.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            r = np.cross(G[i], G[j])
            nrm = float(np.linalg.norm(r))
            if nrm < 1e-12:
                continue
            r = r / nrm
            for s in (r, -r):
                if float(np.max(constraints @ s)) <= 1e-10:
                    out.append(s)
    if not out:
        return np.zeros((0, 3))
    return np.unique(np.round(np.asarray(out), 12), axis=0)


def _facet_normals_3d(cone: PolyhedralCone) -> np.ndarray | None:
    """Outward facet normals of a full-dimensional polyhedral cone in R^3.

    The polar {y : <g_j, y> <= 0} is pointed exactly when the cone is
    full-dimensional, and its extreme rays (the facet normals) lie on
    pairwise intersections of the generator planes.  The candidate set is
    verified before use: it must span R^3, and every extreme-ray candidate of
    the induced halfspace intersection must project back into the cone, which
    certifies that the halfspace description is not larger than the cone.
    Returns None when no certified description exists.
    """
    if cone in _FACET_CACHE:
        return _FACET_CACHE[cone]
    normals: np.ndarray | None = None
    G = cone.generators
    if cone.dim == 3 and cone.n_generators >= 2:
        R = _cross_candidates(G, G)
        if R.shape[0] >= 3 and np.linalg.svd(R, compute_uv=False)[2] > 1e-8:
            primal = _cross_candidates(R, R)
            if primal.shape[0] >= 3:
                back = project_batch(cone, primal)
                if float(np.max(np.linalg.norm(primal - back, axis=1))) <= 1e-8:
                    normals = R
    _FACET_CACHE[cone] = normals
    return normals


def _caps_inside(cone: Cone, centers: np.ndarray, radii: np.ndarray
                 ) -> np.ndarray:
    """Per-cap certificate that the whole spherical cap lies inside the cone.

    The Lipschitz upper bound d_a(center) + rho cannot see that the distance
    is identically zero on the cone's interior, so without this certificate a
    vanishing directed supremum (one trace contained in the other) forces the
    search to refine a full 2-D region down to the pitch.  Certificates:
    full-space cones accept every cap; circular cones compare the axis angle
    against alpha - rho; dual cones check every base generator stays at angle
    >= pi/2 + rho; orthogonal full-rank polyhedral cones are intersections of
    the generator halfspaces, and other full-dimensional polyhedral cones in
    R^3 fall back to an exact facet-normal enumeration.  Variants without a
    cheap certificate return all-False (the search still terminates, just
    without the shortcut).
    """
    if is_full_space(cone):
        return np.ones(centers.shape[0], dtype=bool)
    if isinstance(cone, CircularCone):
        ang = np.arccos(np.clip(centers @ cone.axis, -1.0, 1.0))
        return ang + radii <= cone.half_angle
    if isinstance(cone, DualCone) and isinstance(cone.base, PolyhedralCone):
        ang = np.arccos(np.clip(centers @ cone.base.generators.T, -1.0, 1.0))
        return np.min(ang, axis=1) >= 0.5 * math.pi + radii
    if isinstance(cone, PolyhedralCone) and cone.orthogonal \
            and cone.n_generators == cone.dim:
        ang = np.arccos(np.clip(centers @ cone.generators.T, -1.0, 1.0))
        return np.max(ang, axis=1) <= 0.5 * math.pi - radii
    if isinstance(cone, PolyhedralCone) and cone.dim == 3:
        normals = _facet_normals_3d(cone)
        if normals is not None:
            ang = np.arccos(np.clip(centers @ normals.T, -1.0, 1.0))
            return np.min(ang, axis=1) >= 0.5 * math.pi + radii
    return np.zeros(centers.shape[0], dtype=bool)


def _dedup_cells(centers: np.ndarray, radii: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Merge overlapping caps, preserving coverage of their union.

    Children spawned from adjacent parents overlap heavily when the
    near-optimal set is a curve rather than a point, and without merging the
    frontier grows geometrically.  Snapping centers to a lattice of pitch
    0.2 * min(radii) and inflating each representative by the geodesic
    distance to its farthest merged member keeps the union covered exactly.
    """
    q = 0.2 * float(radii.min())
    if q <= 0.0:
        return centers, radii
    key = np.round(centers / q).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True,
                                  return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if first.shape[0] == centers.shape[0]:
        return centers, radii
    reps = centers[first]
    chord = np.linalg.norm(centers - reps[inverse], axis=1)
    geo = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    merged = np.zeros(first.shape[0])
    np.maximum.at(merged, inverse, radii + geo)
    return reps, merged


def _directed_sup_certified(C: Cone, D: Cone, opts: AngularHausdorffOptions,
                            warm_lower: float) -> tuple[float, float, dict]:
    """Certified enclosure of the directed supremum, d = 3 only.

    Branch-and-bound over spherical caps: the angular distance to either cone
    is 1-Lipschitz along sphere geodesics, so a cap of radius rho centered at
    c can be pruned when it cannot meet C's trace (distance to C exceeds rho)
    and otherwise contributes at most d_a(c, D) + rho.  Feasible evaluation
    points come from projecting cap centers onto C.
    """
    if ambient_dim(C) == 2:
        return _directed_sup_circle(C, D, opts, warm_lower)
    if ambient_dim(C) != 3:
        raise MetricError("certified search requires ambient dimension <= 3")
    # analytic roof for circular pairs: every trace point of C lies within
    # angle(axes) + half_angle(C) of D's axis.  Without it, a pair whose
    # maximizer set is a whole boundary ring forces the grid to refine the
    # ring band to the pitch scale and exhausts the cell budget.
    sup_roof = 0.5 * math.pi
    if isinstance(C, CircularCone) and isinstance(D, CircularCone):
        axgap = math.acos(float(np.clip(float(C.axis @ D.axis), -1.0, 1.0)))
        sup_roof = min(sup_roof,
                       max(axgap + C.half_angle - D.half_angle, 0.0))
    centers, rho = _sphere_grid(0.2)
    radii = np.full(centers.shape[0], rho)
    lower = warm_lower
    resolved = -np.inf       # best upper bound among cells no longer split
    total_cells = centers.shape[0]
    levels = 0
    while centers.shape[0]:
        levels += 1
        da_C = angular_distance_batch(C, centers)
        da_D = angular_distance_batch(D, centers)
        reachable = da_C <= radii
        if np.any(reachable):
            P = project_batch(C, centers[reachable])
            pn = np.linalg.norm(P, axis=1)
            ok = pn > 1e-12
            if np.any(ok):
                feas = P[ok] / pn[ok][:, None]
                lower = max(lower,
                            float(np.max(angular_distance_batch(D, feas))))
        cell_upper = np.minimum(da_D + radii, sup_roof)
        cell_upper[_caps_inside(D, centers, radii)] = 0.0
        cell_upper[~reachable] = -np.inf
        # cells bounded within the pitch of the incumbent are resolved;
        # only cells that could exceed it get split further
        split = reachable & (cell_upper > lower + opts.pitch)
        done = reachable & ~split
        if np.any(done):
            resolved = max(resolved, float(np.max(cell_upper[done])))
        if not np.any(split):
            break
        # pre-check with the worst-case child count so the frontier arrays
        # are never materialized past the budget (memory safety)
        if total_cells + 9 * int(np.count_nonzero(split)) > opts.cell_budget:
            raise MetricError(
                f"certified search exceeded its {opts.cell_budget}-cell "
                "budget before reaching the requested pitch")
        parents = centers[split]
        prho = radii[split]
        e1, e2 = _tangent_basis(parents)
        offs = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]
        kids = []
        for i, j in offs:
            shift = parents + 0.6 * prho[:, None] * (i * e1 + j * e2)
            kids.append(shift / np.linalg.norm(shift, axis=1)[:, None])
        centers = np.concatenate(kids, axis=0)
        radii = np.concatenate([0.55 * prho] * len(offs))
        centers, radii = _dedup_cells(centers, radii)
        total_cells += centers.shape[0]
        if total_cells > opts.cell_budget:
            raise MetricError(
                f"certified search exceeded its {opts.cell_budget}-cell "
                "budget before reaching the requested pitch")
    upper = max(resolved, lower)
    cert = {"upper": upper, "lower": lower, "levels": levels,
            "cells_evaluated": int(total_cells)}
    return lower, upper, cert


def _subspace_directed(C: SubspaceCone, D: SubspaceCone) -> float:
    """Exact directed supremum for linear subspaces via principal angles."""
    if C.k == 0:
        return 0.0
    if D.k == 0:
        return 0.5 * math.pi
    M = D.basis @ C.basis.T
    s = np.linalg.svd(M, compute_uv=False)
    smin = float(s[-1]) if s.size >= C.k else 0.0
    if C.k > D.k:
        # trace of C has directions orthogonal to all of D
        smin = 0.0
    smin = min(max(smin, 0.0), 1.0)
    return float(np.arctan2(math.sqrt(max(1.0 - smin * smin, 0.0)), smin))


def angular_hausdorff(C: Cone, D: Cone,
                      opts: AngularHausdorffOptions | None = None
                      ) -> DistanceReport:
    """Two-sided angular Hausdorff distance between closed convex cones.

    Subspace pairs are exact (principal angles).  Otherwise multistart
    projected ascent estimates both directed suprema (a guaranteed lower
    bound; ``gap`` is NaN to mark the missing enclosure), and with
    ``certify=True`` in d = 3 a branch-and-bound tightens each direction to
    the requested pitch and reports the rigorous gap.
    """
    if ambient_dim(C) != ambient_dim(D):
        raise MetricError("cones must share an ambient dimension")
    opts = opts or AngularHausdorffOptions()
    if cone_hash(C) == cone_hash(D):
        # canonically identical cones: the distance is 0 by the axiom,
        # no estimator noise
        return DistanceReport(value=0.0, method="identical", iterations=0,
                              gap=0.0)
    if isinstance(C, SubspaceCone) and isinstance(D, SubspaceCone):
        value = max(_subspace_directed(C, D), _subspace_directed(D, C))
        return DistanceReport(value=value, method="principal-angles",
                              iterations=0, gap=0.0)
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [opts.seed, 0x6d657472], dtype=np.uint64)))
    v1, it1 = _directed_sup_ascent(C, D, opts, rng)
    v2, it2 = _directed_sup_ascent(D, C, opts, rng)
    if opts.certify:
        l1, u1, c1 = _directed_sup_certified(C, D, opts, warm_lower=v1)
        l2, u2, c2 = _directed_sup_certified(D, C, opts, warm_lower=v2)
        lower = max(l1, l2)
        upper = max(u1, u2)
        return DistanceReport(value=lower, method="certified-grid",
                              iterations=it1 + it2, gap=upper - lower,
                              certificate={"forward": c1, "backward": c2})
    return DistanceReport(value=max(v1, v2), method="ascent",
                          iterations=it1 + it2, gap=float("nan"))


def polarity_isometry_check(C: Cone, D: Cone,
                            opts: AngularHausdorffOptions | None = None,
                            tol: float = 5e-3) -> CheckReport:
    """Checks that dualizing both cones preserves their angular distance.

    Skipped (reported as passing, with a note) when either side is the full
    space or the distance reaches pi/2, where the sphere traces degenerate.
    """
    opts = opts or AngularHausdorffOptions()
    r1 = angular_hausdorff(C, D, opts)
    if is_full_space(C) or is_full_space(D) \
            or r1.value >= 0.5 * math.pi - 1e-9:
        return CheckReport(name="polarity-isometry", lhs=r1.value,
                           rhs=r1.value, stderr_combined=0.0, sigmas=0.0,
                           passed=True,
                           details="skipped: degenerate sphere trace")
    r2 = angular_hausdorff(dual(C), dual(D), opts)
    gaps = 0.0
    for r in (r1, r2):
        gaps += r.gap if math.isfinite(r.gap) else 0.0
    slack = max(tol, 2.0 * gaps)
    diff = abs(r1.value - r2.value)
    return CheckReport(name="polarity-isometry", lhs=r1.value, rhs=r2.value,
                       stderr_combined=0.0, sigmas=0.0,
                       passed=bool(diff <= slack),
                       details=(f"methods={r1.method}/{r2.method}; "
                                f"slack={slack:g}; diff={diff:.3e}"))


# ---------------------------------------------------------------------------
# Bounded-Lipschitz distance between empirical measures


def _atom_matrix(m: EmpiricalConicMeasure) -> np.ndarray:
    return np.hstack([m.u, m.v])


def _merge_atoms(Z: np.ndarray, c: np.ndarray, h: float
                 ) -> tuple[np.ndarray, np.ndarray, float]:
    """Grid-merge atoms; returns (reps, merged signed weights, movement cost).

    Atoms in one grid cell collapse onto their absolute-weight centroid; the
    movement cost sums |weight| times displacement over all atoms, bounding
    the distance perturbation for 1-Lipschitz test functions.
    """
    cells = np.floor(Z / h).astype(np.int64)
    _, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    m = int(inverse.max()) + 1
    wabs = np.abs(c)
    totw = np.bincount(inverse, weights=wabs, minlength=m)
    reps = np.zeros((m, Z.shape[1]))
    for col in range(Z.shape[1]):
        sums = np.bincount(inverse, weights=wabs * Z[:, col], minlength=m)
        counts = np.bincount(inverse, weights=np.ones_like(wabs), minlength=m)
        plain = np.bincount(inverse, weights=Z[:, col], minlength=m)
        with np.errstate(invalid="ignore", divide="ignore"):
            reps[:, col] = np.where(totw > 0, sums / np.maximum(totw, 1e-300),
                                    plain / np.maximum(counts, 1.0))
    merged_c = np.bincount(inverse, weights=c, minlength=m)
    movement = float(np.sum(np.abs(c) * np.linalg.norm(Z - reps[inverse],
                                                       axis=1)))
    return reps, merged_c, movement


def _bl_lp(Z: np.ndarray, c: np.ndarray) -> tuple[float, int]:
    """Exact bounded-Lipschitz value over atoms Z with signed weights c."""
    m = Z.shape[0]
    if m == 0:
        return 0.0, 0
    if m == 1:
        return float(abs(c[0])), 0
    dist = squareform(pdist(Z))
    iu, ju = np.triu_indices(m, k=1)
    close = dist[iu, ju] < 2.0
    iu, ju = iu[close], ju[close]
    n_pairs = iu.size
    if n_pairs:
        rows = np.repeat(np.arange(2 * n_pairs), 2)
        cols = np.concatenate([np.column_stack([iu, ju]).ravel(),
                               np.column_stack([ju, iu]).ravel()])
        vals = np.tile([1.0, -1.0], 2 * n_pairs)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * n_pairs, m))
        b = np.concatenate([dist[iu, ju], dist[iu, ju]])
    else:
        A, b = None, None
    res = linprog(c=-c, A_ub=A, b_ub=b, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise MetricError(f"bounded-Lipschitz LP failed: {res.message}")
    nit = int(np.asarray(getattr(res, "nit", 0)).ravel()[0] or 0)
    return max(float(-res.fun), 0.0), nit


def dbl_distance(mu: EmpiricalConicMeasure, nu: EmpiricalConicMeasure,
                 *, max_exact: int = MAX_EXACT_ATOMS) -> DistanceReport:
    """Bounded-Lipschitz distance between two weighted atom measures.

    Exact for supports up to ``max_exact`` merged atoms: the optimal test
    function is found by linear programming over its atom values, with the
    Lipschitz constraints only on pairs closer than 2 (farther pairs are
    implied by the value bound).  Larger instances are first merged on an
    adaptive grid; the mass-times-movement cost of merging is returned as
    ``gap``, a rigorous bound on the perturbation.
    """
    if mu.d != nu.d:
        raise MetricError("measures must share an ambient dimension")
    Zs = np.vstack([_atom_matrix(mu), _atom_matrix(nu)])
    ws = np.concatenate([mu.w, -nu.w])
    if Zs.shape[0] == 0:
        return DistanceReport(value=0.0, method="exact-lp", iterations=0,
                              gap=0.0)
    # exact-duplicate atoms (e.g. coupled samples) cancel before the LP
    uniq, inverse = np.unique(Zs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    c = np.zeros(uniq.shape[0])
    np.add.at(c, inverse, ws)
    live = c != 0.0
    Z, c = uniq[live], c[live]
    if Z.shape[0] <= max_exact:
        value, nit = _bl_lp(Z, c)
        return DistanceReport(value=value, method="exact-lp", iterations=nit,
                              gap=0.0)
    h = 0.02
    movement = 0.0
    reps, merged_c = Z, c
    while True:
        reps, merged_c, movement = _merge_atoms(Z, c, h)
        keep = merged_c != 0.0
        if np.count_nonzero(keep) <= AGGREGATION_TARGET:
            reps, merged_c = reps[keep], merged_c[keep]
            break
        h *= 1.4
    value, nit = _bl_lp(reps, merged_c)
    return DistanceReport(value=value, method="aggregated-lp", iterations=nit,
                          gap=movement,
                          certificate={"n_raw": int(Z.shape[0]),
                                       "n_merged": int(reps.shape[0]),
                                       "grid": h})


def dbl_metric_axioms_check(measures: Sequence[EmpiricalConicMeasure],
                            *, identity_tol: float = 1e-9,
                            symmetry_tol: float = 1e-9,
                            triangle_slack: float = 1e-8) -> CheckReport:
    """Verifies metric axioms of the bounded-Lipschitz distance empirically.

    Needs at least three measures: identity of indiscernibles on the
    diagonal, symmetry by solving both orientations, and every ordered
    triangle inequality up to solver slack.
    """
    if len(measures) < 3:
        raise MetricError("need at least three measures for the axiom check")
    n = len(measures)
    Dmat = np.zeros((n, n))
    worst_sym = 0.0
    worst_id = 0.0
    for i in range(n):
        worst_id = max(worst_id, dbl_distance(measures[i], measures[i]).value)
        for j in range(n):
            if i != j:
                Dmat[i, j] = dbl_distance(measures[i], measures[j]).value
    for i in range(n):
        for j in range(i + 1, n):
            worst_sym = max(worst_sym, abs(Dmat[i, j] - Dmat[j, i]))
    worst_tri = -math.inf
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if len({i, j, k}) == 3:
                    worst_tri = max(worst_tri,
                                    Dmat[i, k] - Dmat[i, j] - Dmat[j, k])
    passed = (worst_id <= identity_tol and worst_sym <= symmetry_tol
              and worst_tri <= triangle_slack)
    details = (f"identity={worst_id:.3e}; symmetry={worst_sym:.3e}; "
               f"triangle_excess={worst_tri:.3e}; n={n}")
    return CheckReport(name="dbl-metric-axioms", lhs=max(worst_tri, 0.0),
                       rhs=0.0, stderr_combined=0.0, sigmas=0.0,
                       passed=bool(passed), details=details)


# ---------------------------------------------------------------------------
# Rotation-family Hoelder experiment


def _coupled_measures(C: Cone, D: Cone, k: int, eta: BiconicSet, n: int,
                      seed: int, stream: int = STREAM_MAIN):
    """Degree-k atom measures of two cones built from one Gaussian stream.

    Returns both measures plus coupling statistics: total matched weight,
    the mass-weighted movement between matched atoms, and the unmatched
    weight on each side — the ingredients of the coupling upper bound on the
    bounded-Lipschitz distance.
    """
    d = ambient_dim(C)

    def per_block(X: np.ndarray):
        out = []
        sels = []
        for cone in (C, D):
            P = project_batch(cone, X)
            fd = face_dims_batch(cone, X, P)
            Q = X - P
            na = np.linalg.norm(P, axis=1)
            nb = np.linalg.norm(Q, axis=1)
            sel = (fd == k) & (na > 1e-12) & (nb > 1e-12)
            U = np.zeros_like(P)
            V = np.zeros_like(P)
            U[sel] = P[sel] / na[sel][:, None]
            V[sel] = Q[sel] / nb[sel][:, None]
            good = np.zeros(sel.shape, dtype=bool)
            good[sel] = eta.evaluate(U[sel], V[sel])
            out.append((U, V))
            sels.append(good)
        selC, selD = sels
        (UC, VC), (UD, VD) = out
        both = selC & selD
        move = np.sqrt(np.einsum("ij,ij->i", UC[both] - UD[both],
                                 UC[both] - UD[both])
                       + np.einsum("ij,ij->i", VC[both] - VD[both],
                                   VC[both] - VD[both]))
        return (UC[selC], VC[selC], UD[selD], VD[selD],
                int(np.count_nonzero(both)), float(np.sum(np.minimum(move, 2.0))),
                int(np.count_nonzero(selC & ~both)),
                int(np.count_nonzero(selD & ~both)))

    parts = _map_blocks(d, n, seed, stream, per_block)
    UC = np.concatenate([p[0] for p in parts], axis=0)
    VC = np.concatenate([p[1] for p in parts], axis=0)
    UD = np.concatenate([p[2] for p in parts], axis=0)
    VD = np.concatenate([p[3] for p in parts], axis=0)
    matched = sum(p[4] for p in parts)
    move_sum = sum(p[5] for p in parts)
    only_C = sum(p[6] for p in parts)
    only_D = sum(p[7] for p in parts)
    mu = EmpiricalConicMeasure(d=d, k=k, u=UC, v=VC,
                               w=np.full(UC.shape[0], 1.0 / n),
                               total_samples=n, seed=seed,
                               cone_spec_hash=cone_hash(C), stream=stream)
    nu = EmpiricalConicMeasure(d=d, k=k, u=UD, v=VD,
                               w=np.full(UD.shape[0], 1.0 / n),
                               total_samples=n, seed=seed,
                               cone_spec_hash=cone_hash(D), stream=stream)
    stats = {
        "matched_weight": matched / n,
        "matched_movement": move_sum / n,
        "unmatched_weight": (only_C + only_D) / n,
    }
    return mu, nu, stats


def holder_experiment(C: Cone, rotation_plane: tuple[int, int],
                      theta_schedule: Sequence[float], k_list: Sequence[int],
                      n: int, seed: int,
                      eta: BiconicSet | None = None) -> dict:
    """Distance growth of boundary measures under small rotations of a cone.

    For each angle theta the cone is rotated in the given coordinate plane
    and the degree-k measures of the original and rotated cone are built from
    one common sample stream, so their bounded-Lipschitz distance reflects
    geometry rather than sampling noise.  Each row records the distance and
    its ratio to sqrt(theta); the square-root normalization is the scaling
    the underlying continuity bound predicts, so flat ratios mean the
    empirical growth matches it.  The coupling construction also yields a
    per-row upper bound (matched movement plus unmatched mass), which is
    checked against the LP value.
    """
    if eta is None:
        eta = biconic_all()
    thetas = sorted(float(t) for t in theta_schedule)
    if any(t <= 0 for t in thetas):
        raise MetricError("rotation angles must be positive")
    i, j = rotation_plane
    rows = []
    for theta in thetas:
        D = rotated(C, i, j, theta)
        for k in k_list:
            mu, nu, stats = _coupled_measures(C, D, k, eta, n, seed)
            rep = dbl_distance(mu, nu)
            bound = (stats["matched_movement"] + stats["unmatched_weight"])
            rows.append({
                "theta": theta,
                "k": int(k),
                "dbl": rep.value,
                "dbl_over_sqrt_theta": rep.value / math.sqrt(theta),
                "n": n,
                "seed": seed,
                "lp_method": rep.method,
                "lp_gap": rep.gap,
                "coupling_bound": bound,
                "bound_ok": bool(rep.value <= bound + rep.gap + 1e-9),
            })
    summary = {}
    for k in k_list:
        krows = [r for r in rows if r["k"] == k]
        ratios = [r["dbl_over_sqrt_theta"] for r in krows]
        positive = [r for r in ratios if r > 0]
        ratio_spread = (max(positive) / min(positive)) if positive else 0.0
        inversions = 0
        for a, b in zip(krows, krows[1:]):
            slack = a["lp_gap"] + b["lp_gap"] + 1e-9
            if b["dbl"] < a["dbl"] - slack:
                inversions += 1
        summary[int(k)] = {
            "ratio_spread": ratio_spread,
            "monotonicity_inversions": inversions,
            "coupling_bound_ok": all(r["bound_ok"] for r in krows),
        }
    return {"rows": rows, "summary": summary}
