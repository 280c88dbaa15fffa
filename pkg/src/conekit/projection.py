"""Metric projection onto cones, Moreau complements, and face identification.

The batch engine is the workhorse for the Monte Carlo estimators: closed
forms for orthogonal-generator polyhedral cones, subspaces, and circular
cones; a batched Lawson-Hanson active-set solver for general polyhedral
cones (all samples advance in lockstep, with normal-equation Cholesky
factors cached per visited face pattern).  Single-point ``project`` runs the
same engine on a 1-row batch, so its iteration diagnostics reflect the real
solve path.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy import optimize as sopt

from .cones import (ANGLE_SLACK, DEGENERATE_NORM, MEMBERSHIP_RTOL, Cone,
                    ConeError, CircularCone, DualCone, PolyhedralCone,
                    SubspaceCone, positive_dimension)
from .reporting import CheckReport

# Face-identification tolerance: generators g with |<g, n>| <= FACE_TOL*||n||
# count as lying in the supporting hyperplane of the Moreau complement n.
FACE_TOL = 1e-8
# Rank threshold for column-pivoted QR, relative to the leading diagonal.
RANK_TOL = 1e-10
# Lawson-Hanson sweep cap factor: at most 10*n index additions per sample.
SWEEP_CAP_FACTOR = 10

_POW2 = (np.uint64(1) << np.arange(64, dtype=np.uint64))


class ProjectionError(RuntimeError):
    """Projection solver failed (degenerate generator set)."""


@dataclass(frozen=True)
class ProjectionResult:
    point: np.ndarray        # nearest point in C
    complement: np.ndarray   # nearest point in the polar cone (Moreau)
    face_dim: int            # dim of the face whose relint holds `point`
    residual_check: float    # |<point, complement>| / max(1, ||x||^2)
    nnls_iterations: int


# ---------------------------------------------------------------------------
# Per-cone solver caches, keyed by object identity (cones are immutable).

_CACHES: "weakref.WeakKeyDictionary[PolyhedralCone, dict]" = weakref.WeakKeyDictionary()


def _cache_for(cone: PolyhedralCone) -> dict:
    cache = _CACHES.get(cone)
    if cache is None:
        G = cone.generators
        cache = {
            "gram": G @ G.T,          # A^T A for A = G.T (columns = generators)
            "chol": {},               # passive-set key -> Cholesky factor or None
            "rank": {},               # face-mask key -> rank of selected generators
            "rank_full": None,
        }
        _CACHES[cone] = cache
    return cache


def _rank_of_rows(G: np.ndarray, rows: np.ndarray) -> int:
    """Rank of the selected generator rows via column-pivoted QR."""
    if rows.size == 0:
        return 0
    R = sla.qr(G[rows].T, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] <= 0.0:
        return 0
    return int(np.sum(diag > RANK_TOL * diag[0]))


def _rank_full(cone: PolyhedralCone) -> int:
    cache = _cache_for(cone)
    if cache["rank_full"] is None:
        cache["rank_full"] = _rank_of_rows(cone.generators,
                                           np.arange(cone.n_generators))
    return cache["rank_full"]


def _mask_keys(mask: np.ndarray) -> np.ndarray:
    """uint64 keys for boolean rows (n <= 64)."""
    n = mask.shape[1]
    return mask.astype(np.uint64) @ _POW2[:n]


# ---------------------------------------------------------------------------
# Batched Lawson-Hanson NNLS for general polyhedral cones


def _solve_passive_groups(cone: PolyhedralCone, passive: np.ndarray,
                          Atb_rows: np.ndarray) -> np.ndarray:
    """Least-squares coefficients on each sample's passive set.

    passive: (m, n) boolean, Atb_rows: (m, n).  Returns z (m, n) with zeros
    off the passive sets.  Normal-equation Cholesky factors are cached per
    pattern; singular patterns fall back to pseudoinverse solves.
    """
    cache = _cache_for(cone)
    gram = cache["gram"]
    chol_cache = cache["chol"]
    m, n = passive.shape
    z = np.zeros((m, n))
    keys = _mask_keys(passive)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_keys[1:] != sorted_keys[:-1]])
    boundaries = np.r_[boundaries, m]
    for gi in range(len(boundaries) - 1):
        rows = order[boundaries[gi]:boundaries[gi + 1]]
        key = int(sorted_keys[boundaries[gi]])
        S = np.flatnonzero(passive[rows[0]])
        if S.size == 0:
            continue
        if key not in chol_cache:
            sub = gram[np.ix_(S, S)]
            try:
                chol_cache[key] = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError:
                chol_cache[key] = None  # singular pattern: pseudoinverse route
        entry = chol_cache[key]
        rhs = Atb_rows[np.ix_(rows, S)].T  # (|S|, g)
        if entry is not None:
            y = sla.solve_triangular(entry, rhs, lower=True, check_finite=False)
            zS = sla.solve_triangular(entry.T, y, lower=False, check_finite=False)
        else:
            zS = np.linalg.pinv(gram[np.ix_(S, S)]) @ rhs
        z[np.ix_(rows, S)] = zS.T
    return z


def _kkt_violation(G: np.ndarray, x: np.ndarray, lam: np.ndarray) -> float:
    """Worst KKT violation of a candidate: dual feasibility + stationarity."""
    w = G @ (x - lam @ G)
    viol = float(np.max(w))
    support = lam > 0
    if np.any(support):
        viol = max(viol, float(np.max(np.abs(w[support]))))
    return viol


def _nnls_fallback(cone: PolyhedralCone, x: np.ndarray) -> np.ndarray:
    """Per-sample reference solve for rows the batched sweep gave up on.

    scipy's active-set solver is tried first, but its result is only
    accepted after a KKT check: on degenerate face-boundary inputs it can
    report a spurious zero residual for a suboptimal solution.  Rejected or
    failed solves retry under deterministic jitter, then switch to a
    bounded-variable least-squares solve (a different pivoting strategy).
    """
    G = cone.generators
    A = G.T
    scale = max(1.0, float(np.linalg.norm(x)))
    tol = 1e-9 * scale
    try:
        lam, _ = sopt.nnls(A, x)
        if _kkt_violation(G, x, lam) <= tol:
            return lam
    except Exception:
        pass
    # deterministic jitter from the sample bytes; tiny relative to ||x||
    h = np.frombuffer(np.ascontiguousarray(x).tobytes(), dtype=np.uint8)
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [np.uint64(h.sum() + 1), np.uint64(len(h))], dtype=np.uint64)))
    jitter = 1e-10 * scale
    for _ in range(3):
        try:
            lam, _ = sopt.nnls(A, x + jitter * rng.standard_normal(x.shape))
            if _kkt_violation(G, x, lam) <= tol:
                return lam
        except Exception:
            pass
        jitter *= 10
    res = sopt.lsq_linear(A, x, bounds=(0.0, np.inf), method="bvls",
                          tol=1e-14)
    lam = np.maximum(res.x, 0.0)
    if _kkt_violation(G, x, lam) <= tol:
        return lam
    raise ProjectionError(
        "NNLS failed to converge (degenerate generator set)")


def _nnls_batch(cone: PolyhedralCone, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched Lawson-Hanson: coefficients and sweep counts for every row."""
    G = cone.generators
    n = G.shape[0]
    N = X.shape[0]
    if n > 64:
        # pattern keys use uint64 bit masks; very wide generator sets take
        # the per-sample reference solver instead
        lam = np.empty((N, n))
        for i in range(N):
            lam[i] = _nnls_fallback(cone, X[i])
        return lam, np.full(N, -1, dtype=np.int64)
    cache = _cache_for(cone)
    gram = cache["gram"]
    Atb = X @ G.T
    lam = np.zeros((N, n))
    passive = np.zeros((N, n), dtype=bool)
    iters = np.zeros(N, dtype=np.int64)
    xscale = np.maximum(1.0, np.linalg.norm(X, axis=1))
    tolw = 1e-10 * xscale
    tolz = 1e-12 * xscale
    active = np.arange(N)
    stalled: list[int] = []
    max_sweeps = SWEEP_CAP_FACTOR * n + 10
    for _ in range(max_sweeps):
        if active.size == 0:
            break
        w = Atb[active] - lam[active] @ gram
        w[passive[active]] = -np.inf
        jstar = np.argmax(w, axis=1)
        wmax = w[np.arange(active.size), jstar]
        keep = wmax > tolw[active]
        active = active[keep]
        if active.size == 0:
            break
        jstar = jstar[keep]
        passive[active, jstar] = True
        iters[active] += 1
        # inner loop: restore feasibility (strictly positive passive coeffs)
        need = active
        for _ in range(n + 1):
            if need.size == 0:
                break
            z = _solve_passive_groups(cone, passive[need], Atb[need])
            lam_need = lam[need]
            # only strictly negative coefficients force a feasibility step;
            # a +1e-15 passive coefficient has denom <= 0 below and would
            # otherwise never be droppable, stalling the whole row
            neg = (z < -tolz[need, None]) & passive[need]
            has_neg = np.any(neg, axis=1)
            ok = need[~has_neg]
            lam[ok] = np.maximum(z[~has_neg], 0.0)
            need = need[has_neg]
            if need.size == 0:
                break
            zb, lb, negb = z[has_neg], lam_need[has_neg], neg[has_neg]
            denom = lb - zb
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(negb & (denom > 0), lb / denom, np.inf)
            alpha = np.minimum(np.min(ratio, axis=1), 1.0)
            lnew = lb + alpha[:, None] * (zb - lb)
            # force the argmin ratio coordinates out of the passive set
            drop = negb & (ratio <= alpha[:, None] * (1 + 1e-12))
            lnew[drop] = 0.0
            lnew[~passive[need]] = 0.0
            lam[need] = np.maximum(lnew, 0.0)
            passive[need] &= ~drop
        else:
            stalled.extend(need.tolist())
            active = np.setdiff1d(active, need, assume_unique=True)
    stalled.extend(active.tolist())
    for i in dict.fromkeys(stalled):
        lam[i] = _nnls_fallback(cone, X[i])
        iters[i] = -1  # fallback marker; reported as cap+1 by project()
    return lam, iters


# ---------------------------------------------------------------------------
# Batch projection dispatch


def _project_circular_batch(cone: CircularCone, X: np.ndarray) -> np.ndarray:
    axis = cone.axis
    sigma = math.tan(cone.half_angle)
    t = X @ axis
    W = X - t[:, None] * axis
    r = np.linalg.norm(W, axis=1)
    inside = r <= sigma * t
    polar = r <= -t / sigma  # equivalently t <= -r*tan(alpha)
    blend = ~(inside | polar)
    P = np.where(inside[:, None], X, 0.0)
    if np.any(blend):
        coef = (t[blend] + sigma * r[blend]) / (1.0 + sigma * sigma)
        safe_r = np.where(r[blend] > 0, r[blend], 1.0)
        What = W[blend] / safe_r[:, None]
        P[blend] = coef[:, None] * (axis[None, :] + sigma * What)
    return P


def project_batch(cone: Cone, X: np.ndarray,
                  want_iters: bool = False):
    """Projections of the rows of X onto the cone; optionally sweep counts."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != cone.dim:
        raise ConeError(f"points have dim {X.shape[1]}, cone has {cone.dim}")
    iters = None
    if isinstance(cone, PolyhedralCone):
        if cone.orthogonal:
            T = X @ cone.generators.T
            P = np.maximum(T, 0.0) @ cone.generators
            iters = np.zeros(X.shape[0], dtype=np.int64)
        else:
            lam, iters = _nnls_batch(cone, X)
            P = lam @ cone.generators
    elif isinstance(cone, SubspaceCone):
        B = cone.basis
        P = (X @ B.T) @ B if cone.k > 0 else np.zeros_like(X)
        iters = np.zeros(X.shape[0], dtype=np.int64)
    elif isinstance(cone, CircularCone):
        P = _project_circular_batch(cone, X)
        iters = np.zeros(X.shape[0], dtype=np.int64)
    elif isinstance(cone, DualCone):
        base_P, iters = project_batch(cone.base, X, want_iters=True)
        P = X - base_P
    else:
        raise ConeError(f"unknown cone variant {type(cone).__name__}")
    if want_iters:
        return P, iters
    return P


def face_dims_batch(cone: Cone, X: np.ndarray, P: np.ndarray | None = None,
                    tol: float = FACE_TOL) -> np.ndarray:
    """Dimension of the face whose relative interior holds each projection."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if P is None:
        P = project_batch(cone, X)
    if isinstance(cone, SubspaceCone):
        xs = np.maximum(1.0, np.linalg.norm(X, axis=1))
        nonzero = np.linalg.norm(P, axis=1) > tol * xs
        return np.where(nonzero, cone.k, 0).astype(np.int64)
    if isinstance(cone, DualCone):
        # complementary face: dim F_hat = d - dim F, with the base projection
        # recovered from the Moreau split
        base_dims = face_dims_batch(cone.base, X, X - P, tol)
        return cone.dim - base_dims
    if not isinstance(cone, PolyhedralCone):
        raise ConeError(
            f"{type(cone).__name__} has no polyhedral skeleton; use the "
            "parallel-mass inversion path")
    G = cone.generators
    if cone.orthogonal:
        T = X @ G.T
        return np.count_nonzero(T > 0.0, axis=1).astype(np.int64)
    nvec = X - P
    xs = np.maximum(1.0, np.linalg.norm(X, axis=1))
    pn = np.linalg.norm(P, axis=1)
    nn = np.linalg.norm(nvec, axis=1)
    out = np.zeros(X.shape[0], dtype=np.int64)
    zero_p = pn <= tol * xs
    full = (~zero_p) & (nn <= tol * xs)
    out[full] = _rank_full(cone)
    rest = np.flatnonzero(~(zero_p | full))
    if rest.size:
        mask = np.abs(nvec[rest] @ G.T) <= tol * nn[rest, None]
        cache = _cache_for(cone)
        rank_cache = cache["rank"]
        keys = _mask_keys(mask) if G.shape[0] <= 64 else None
        if keys is None:
            for ri, row in enumerate(rest):
                out[row] = _rank_of_rows(G, np.flatnonzero(mask[ri]))
        else:
            uniq, inv = np.unique(keys, return_inverse=True)
            ranks = np.empty(uniq.size, dtype=np.int64)
            for ui, key in enumerate(uniq):
                key = int(key)
                r = rank_cache.get(key)
                if r is None:
                    first = np.flatnonzero(inv == ui)[0]
                    r = _rank_of_rows(G, np.flatnonzero(mask[first]))
                    rank_cache[key] = r
                ranks[ui] = r
            out[rest] = ranks[inv]
    return out


# ---------------------------------------------------------------------------
# Single-point API


def _circular_face_dim(cone: CircularCone, x: np.ndarray, p: np.ndarray,
                       q: np.ndarray) -> int:
    xs = max(1.0, float(np.linalg.norm(x)))
    if np.linalg.norm(p) <= MEMBERSHIP_RTOL * xs:
        return 0
    if np.linalg.norm(q) <= MEMBERSHIP_RTOL * xs:
        return cone.dim
    return 1  # boundary rays are the 1-dimensional faces


def project(cone: Cone, x: np.ndarray) -> ProjectionResult:
    """Metric projection with Moreau complement and face diagnostics."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ConeError("non-finite input point")
    if x.shape[0] != cone.dim:
        raise ConeError(f"point has dim {x.shape[0]}, cone has {cone.dim}")
    P, iters = project_batch(cone, x[None, :], want_iters=True)
    p = P[0]
    q = x - p
    it = int(iters[0])
    if it < 0:
        it = SWEEP_CAP_FACTOR * _n_generators(cone) + 11
    residual = abs(float(p @ q)) / max(1.0, float(x @ x))
    if isinstance(cone, CircularCone):
        fdim = _circular_face_dim(cone, x, p, q)
    elif isinstance(cone, (PolyhedralCone, SubspaceCone, DualCone)):
        fdim = int(face_dims_batch(cone, x[None, :], P)[0])
    else:
        raise ConeError(f"unknown cone variant {type(cone).__name__}")
    return ProjectionResult(point=p, complement=q, face_dim=fdim,
                            residual_check=residual, nnls_iterations=it)


def _n_generators(cone: Cone) -> int:
    if isinstance(cone, PolyhedralCone):
        return cone.n_generators
    if isinstance(cone, DualCone):
        return cone.base.n_generators
    return 1


def face_dimension(cone: Cone, x: np.ndarray, result: ProjectionResult,
                   tol: float = FACE_TOL) -> int:
    """Face dimension at a precomputed projection (polyhedral/subspace only)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if isinstance(cone, CircularCone):
        raise ConeError("circular cones have no polyhedral skeleton; use the "
                        "parallel-mass inversion path")
    P = np.asarray(result.point, dtype=float)[None, :]
    return int(face_dims_batch(cone, x[None, :], P, tol)[0])


# ---------------------------------------------------------------------------
# Membership and angular geometry


def contains(cone: Cone, x: np.ndarray, tol: float = MEMBERSHIP_RTOL) -> bool:
    """True iff the distance to the cone is <= tol * max(1, ||x||)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ConeError("non-finite input point")
    P = project_batch(cone, x[None, :])
    return bool(np.linalg.norm(x - P[0]) <= tol * max(1.0, np.linalg.norm(x)))


def contains_batch(cone: Cone, X: np.ndarray,
                   tol: float = MEMBERSHIP_RTOL) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = project_batch(cone, X)
    xs = np.maximum(1.0, np.linalg.norm(X, axis=1))
    return np.linalg.norm(X - P, axis=1) <= tol * xs


def angular_distance_batch(cone: Cone, X: np.ndarray,
                           P: np.ndarray | None = None) -> np.ndarray:
    """Angular distances of the rows of X to the cone, in [0, pi/2].

    Uses atan2(||complement||, ||projection||), which equals
    arccos(||projection|| / ||x||) by the Moreau orthogonality but is accurate
    at both ends of the range.  The origin is at angular distance pi/2 by
    convention.
    """
    if not positive_dimension(cone):
        raise ConeError("angular distance undefined for the trivial cone {o}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if P is None:
        P = project_batch(cone, X)
    a = np.linalg.norm(P, axis=1)
    b = np.linalg.norm(X - P, axis=1)
    out = np.arctan2(b, a)
    out[np.linalg.norm(X, axis=1) <= DEGENERATE_NORM] = math.pi / 2
    return out


def angular_distance(x: np.ndarray, cone: Cone) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ConeError("non-finite input point")
    return float(angular_distance_batch(cone, x[None, :])[0])


def in_angular_parallel_set(cone: Cone, lam: float, x: np.ndarray) -> bool:
    """Membership in the closed angular parallel set at angle lam < pi/2."""
    if not (0.0 <= lam < math.pi / 2):
        raise ConeError(f"parallel-set angle must lie in [0, pi/2), got {lam}")
    return bool(angular_distance(x, cone) <= lam + ANGLE_SLACK)


# ---------------------------------------------------------------------------
# Homogeneity and the projection stability bounds


def projection_homogeneity_check(cone: Cone, x: np.ndarray,
                                 lam: float) -> bool:
    """Positive homogeneity of the projection map at relative tol 1e-8."""
    if not lam > 0:
        raise ConeError(f"homogeneity scale must be positive, got {lam}")
    x = np.asarray(x, dtype=float).reshape(-1)
    p = project(cone, x).point
    p_scaled = project(cone, lam * x).point
    bound = 1e-8 * max(1.0, lam * float(np.linalg.norm(x)))
    return bool(np.linalg.norm(p_scaled - lam * p) <= bound)


def _c_eps(eps: float) -> float:
    return 2.0 * (1.0 / math.pi + math.tan(math.pi / 2 - eps))


def stability_scan(C: Cone, D: Cone, X: np.ndarray, delta_a: float,
                   slack: float = 1e-8) -> dict:
    """Batched projection-stability bounds over the rows of X.

    Checks, for every row x:
      (i)  ||P_C x - P_D x|| <= ||x|| sqrt(10 delta_a) + slack
      (ii) cos(angle(P_C x, P_D x)) >= 1 - c_eps * delta_a - slack, whenever
           some eps > 0 satisfies delta_a <= pi/2-eps and both angular
           distances are <= pi/2-eps (rows failing the hypothesis are skipped).

    delta_a must upper-bound the angular Hausdorff distance of C and D; both
    bounds are monotone in delta_a so a valid upper bound is safe.

    Margin conventions follow each inequality's direction: the euclidean
    margin is max(lhs - rhs) (negative = satisfied), the angular margin is
    min(cos - bound) (positive = satisfied).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    PC = project_batch(C, X)
    PD = project_batch(D, X)
    xn = np.linalg.norm(X, axis=1)
    lhs_e = np.linalg.norm(PC - PD, axis=1)
    rhs_e = xn * math.sqrt(10.0 * delta_a)
    eucl_viol = lhs_e > rhs_e + slack

    da_C = angular_distance_batch(C, X, PC)
    da_D = angular_distance_batch(D, X, PD)
    eps = math.pi / 2 - np.maximum(delta_a, np.maximum(da_C, da_D))
    applicable = eps > 1e-9
    nC = np.linalg.norm(PC, axis=1)
    nD = np.linalg.norm(PD, axis=1)
    nonzero = (nC > DEGENERATE_NORM) & (nD > DEGENERATE_NORM)
    applicable &= nonzero
    cosang = np.full(X.shape[0], np.nan)
    idx = np.flatnonzero(applicable)
    if idx.size:
        dots = np.einsum("ij,ij->i", PC[idx], PD[idx]) / (nC[idx] * nD[idx])
        cosang[idx] = np.clip(dots, -1.0, 1.0)
    ceps = np.where(applicable, 2.0 * (1.0 / math.pi +
                                       np.tan(math.pi / 2 - eps)), np.nan)
    ang_viol = applicable & (cosang < 1.0 - ceps * delta_a - slack)
    worst_e = float(np.max(lhs_e - rhs_e)) if X.shape[0] else 0.0
    margins_a = np.where(applicable, cosang - (1.0 - ceps * delta_a), np.nan)
    finite_a = margins_a[np.isfinite(margins_a)]
    return {
        "n": int(X.shape[0]),
        "euclidean_violations": int(np.count_nonzero(eucl_viol)),
        "euclidean_worst_margin": worst_e,
        "angular_checked": int(np.count_nonzero(applicable)),
        "angular_skipped": int(np.count_nonzero(~applicable)),
        "angular_violations": int(np.count_nonzero(ang_viol)),
        "angular_worst_margin": float(np.min(finite_a)) if finite_a.size else math.nan,
    }


def lemma_projection_stability(C: Cone, D: Cone, x: np.ndarray,
                               delta_a: float,
                               slack: float = 1e-8) -> CheckReport:
    """Projection stability bounds at a single point.

    lhs/rhs report the Euclidean inequality; the angular (cosine) inequality
    and its applicability are recorded in details.  delta_a is the
    caller-supplied upper bound on the angular Hausdorff distance.
    """
    if not (math.isfinite(delta_a) and delta_a >= 0):
        raise ConeError(f"delta_a must be a finite nonnegative angle, got {delta_a}")
    x = np.asarray(x, dtype=float).reshape(-1)
    scan = stability_scan(C, D, x[None, :], delta_a, slack)
    lhs = float(np.linalg.norm(project_batch(C, x[None, :])[0]
                               - project_batch(D, x[None, :])[0]))
    rhs = float(np.linalg.norm(x)) * math.sqrt(10.0 * delta_a)
    eucl_ok = scan["euclidean_violations"] == 0
    if scan["angular_checked"] == 0:
        ang_status = "skipped (hypothesis not met)"
        ang_ok = True
    else:
        ang_ok = scan["angular_violations"] == 0
        ang_status = (f"ok, margin {scan['angular_worst_margin']:.3e}"
                      if ang_ok else
                      f"violated, margin {scan['angular_worst_margin']:.3e}")
    details = (f"euclidean margin {rhs - lhs:.3e}; angular: {ang_status}; "
               f"slack {slack:g}; delta_a {delta_a:g}")
    return CheckReport(name="projection-stability", lhs=lhs, rhs=rhs,
                       stderr_combined=0.0, sigmas=0.0,
                       passed=bool(eucl_ok and ang_ok), details=details)
