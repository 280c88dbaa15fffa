"""Gaussian Monte Carlo estimators for conic boundary measures.

All estimators share one block-structured sampling scheme: standard normal
vectors are drawn in fixed blocks of 65536, each block seeded by its own
counter-based generator key (seed, stream id, block index).  Results are
therefore reproducible bit-for-bit for a given (n, seed, stream) triple,
independent of how many worker threads process the blocks, because blocks
are reduced in index order.

Set the environment variable CONEKIT_WORKERS to parallelize block
processing across threads (the heavy numpy kernels release the GIL).
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import steiner
from .cones import (ANGLE_SLACK, MEMBERSHIP_RTOL, BiconicSet, CircularCone,
                    Cone, DualCone, PolyhedralCone, SubspaceCone, ambient_dim,
                    biconic_all, cone_hash)
from .projection import face_dims_batch, project_batch
from .reporting import MCEstimate, fmt12
from .steiner import TaggedFunction

BLOCK = 1 << 16
# Named sampling streams: identity checks draw their two sides from
# independent streams so the comparison has honest error bars.
STREAM_MAIN = 0
STREAM_A = 1
STREAM_B = 2
# Angular distances below this count as "on the cone" when a positive
# distance is required (e.g. excluding the cone itself from parallel sets).
POSITIVE_ANGLE_TOL = 1e-12


class EstimationError(RuntimeError):
    """Estimator precondition violated or non-finite values encountered."""


# ---------------------------------------------------------------------------
# Sampling engine


def _block_rng(seed: int, stream_id: int, block_index: int) -> np.random.Generator:
    if not 0 <= seed < 2 ** 64:
        raise EstimationError(f"seed must fit in 64 bits, got {seed}")
    if not 0 <= stream_id < 2 ** 32:
        raise EstimationError(f"stream id must fit in 32 bits, got {stream_id}")
    key = np.array([seed, (stream_id << 32) | block_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_stream(d: int, seed: int, stream_id: int = STREAM_MAIN
                    ) -> Iterator[np.ndarray]:
    """Infinite stream of standard normal vectors in R^d.

    The vector at position i is a pure function of (d, seed, stream_id, i):
    consuming the stream in any chunking yields identical values.
    """
    if d < 1:
        raise EstimationError(f"dimension must be >= 1, got {d}")
    block_index = 0
    while True:
        X = _block_rng(seed, stream_id, block_index).standard_normal((BLOCK, d))
        yield from X
        block_index += 1


def gaussian_sample(d: int, n: int, seed: int,
                    stream_id: int = STREAM_MAIN) -> np.ndarray:
    """First n vectors of the stream as an (n, d) array."""
    out = np.empty((n, d))
    for lo, X in _iter_blocks(d, n, seed, stream_id):
        out[lo:lo + X.shape[0]] = X
    return out


def _iter_blocks(d: int, n: int, seed: int, stream_id: int):
    for bi in range((n + BLOCK - 1) // BLOCK):
        count = min(BLOCK, n - bi * BLOCK)
        yield bi * BLOCK, _block_rng(seed, stream_id, bi).standard_normal(
            (count, d))


def _worker_count() -> int:
    raw = os.environ.get("CONEKIT_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_blocks(d: int, n: int, seed: int, stream_id: int,
                fn: Callable[[np.ndarray], object]) -> list:
    """Apply fn to every sample block; results come back in block order."""
    if n < 1:
        raise EstimationError(f"sample count must be >= 1, got {n}")
    n_blocks = (n + BLOCK - 1) // BLOCK

    def run(block_index: int):
        count = min(BLOCK, n - block_index * BLOCK)
        X = _block_rng(seed, stream_id, block_index).standard_normal((count, d))
        return fn(X)

    workers = _worker_count()
    if workers == 1 or n_blocks == 1:
        return [run(bi) for bi in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(n_blocks)))


def _mean_sd(per_block: list[tuple[float, float]], n: int) -> MCEstimate:
    """Mean and standard error from per-block (sum, sum-of-squares) pairs."""
    s1 = 0.0
    s2 = 0.0
    for b1, b2 in per_block:
        s1 += b1
        s2 += b2
    mean = s1 / n
    if n > 1:
        var = max(s2 - n * mean * mean, 0.0) / (n - 1)
    else:
        var = 0.0
    return MCEstimate(value=mean, stderr=math.sqrt(var / n), n=n)


def _split_parts(cone: Cone, X: np.ndarray):
    """Projection, complement, squared part norms, and angular distance."""
    P = project_batch(cone, X)
    Q = X - P
    a = np.einsum("ij,ij->i", P, P)
    b = np.einsum("ij,ij->i", Q, Q)
    da = np.arctan2(np.sqrt(b), np.sqrt(a))
    # the origin sits at angular distance pi/2 by convention
    da = np.where((a == 0.0) & (b == 0.0), 0.5 * math.pi, da)
    return P, Q, a, b, da


# ---------------------------------------------------------------------------
# Intrinsic volumes


@dataclass(frozen=True)
class IntrinsicVolumeEstimate:
    """Estimated degree distribution v_0..v_d with binomial standard errors."""

    values: np.ndarray       # (d+1,), sums to 1.0 in floating point
    stderr: np.ndarray       # (d+1,)
    counts: np.ndarray       # (d+1,) integer face-degree counts, sum == n
    n: int

    def __iter__(self):
        yield self.values
        yield self.stderr


def _require_face_degrees(cone: Cone, what: str) -> None:
    base = cone.base if isinstance(cone, DualCone) else cone
    if isinstance(base, CircularCone):
        raise EstimationError(
            f"{what} needs per-sample face degrees, which circular cones do "
            "not expose; use support_measure_via_inversion instead")


def intrinsic_volumes_mc(cone: Cone, n: int, seed: int,
                         *, stream: int = STREAM_MAIN) -> IntrinsicVolumeEstimate:
    """Gaussian face-degree histogram: an unbiased intrinsic-volume estimator.

    The counts partition the sample exactly.  ``values`` is counts/n with the
    largest share nudged at the last-ulp level so the floating-point vector
    sums to exactly 1.0; raw counts are preserved alongside.
    """
    _require_face_degrees(cone, "intrinsic_volumes_mc")
    d = ambient_dim(cone)

    def per_block(X: np.ndarray):
        P = project_batch(cone, X)
        fd = face_dims_batch(cone, X, P)
        return np.bincount(fd, minlength=d + 1)

    counts = sum(_map_blocks(d, n, seed, stream, per_block))
    counts = np.asarray(counts, dtype=np.int64)
    if int(counts.sum()) != n:
        raise EstimationError("face-degree counts failed to partition the "
                              f"sample: {counts.tolist()} vs n={n}")
    values = counts / n
    # single-ulp walk: adding the whole defect at once can overshoot (one
    # sum-ulp is several ulps of a single share) and oscillate.  Pairwise
    # summation rounding can also make one coordinate skip over 1.0, so the
    # walk retries along successive coordinates until the sum lands exactly.
    for j in np.argsort(-values):
        saved = values[j]
        for _ in range(64):
            defect = 1.0 - float(values.sum())
            if defect == 0.0:
                break
            values[j] = np.nextafter(values[j],
                                      math.inf if defect > 0 else -math.inf)
        if float(values.sum()) == 1.0:
            break
        values[j] = saved
    p = counts / n
    stderr = np.sqrt(p * (1.0 - p) / n)
    return IntrinsicVolumeEstimate(values=values, stderr=stderr,
                                   counts=counts, n=n)


# ---------------------------------------------------------------------------
# Empirical boundary measures


@dataclass(frozen=True, eq=False)
class EmpiricalConicMeasure:
    """Weighted atoms (u, v) on paired unit spheres, weights multiples of 1/N."""

    d: int
    k: int
    u: np.ndarray                # (M, d) unit rows
    v: np.ndarray                # (M, d) unit rows
    w: np.ndarray                # (M,) nonnegative weights
    total_samples: int
    seed: int
    cone_spec_hash: str
    degenerate_samples: int = 0
    stream: int = STREAM_MAIN

    @property
    def n_atoms(self) -> int:
        return int(self.w.shape[0])

    def total_weight(self) -> float:
        return float(self.w.sum())

    def validate(self, tol: float = 1e-9) -> None:
        if self.u.shape != (self.n_atoms, self.d) or \
                self.v.shape != (self.n_atoms, self.d):
            raise EstimationError("atom array shapes are inconsistent")
        if self.n_atoms:
            un = np.linalg.norm(self.u, axis=1)
            vn = np.linalg.norm(self.v, axis=1)
            if np.max(np.abs(un - 1.0)) > tol or np.max(np.abs(vn - 1.0)) > tol:
                raise EstimationError("atoms must lie on the unit spheres")
        if np.any(self.w < 0):
            raise EstimationError("weights must be nonnegative")
        if self.w.sum() > 1.0 + 1e-12:
            raise EstimationError("total weight exceeds 1")

    def save(self, path: str | Path) -> Path:
        """Write atoms as CSV plus a JSON metadata sidecar; returns CSV path."""
        path = Path(path)
        cols = ([f"u_{i}" for i in range(1, self.d + 1)]
                + [f"v_{i}" for i in range(1, self.d + 1)] + ["w"])
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(self.n_atoms):
                row = np.concatenate([self.u[i], self.v[i], [self.w[i]]])
                fh.write(",".join(fmt12(x) for x in row) + "\n")
        sidecar = {
            "d": self.d,
            "k": self.k,
            "N": self.total_samples,
            "seed": self.seed,
            "cone_spec_hash": self.cone_spec_hash,
            "degenerate_samples": self.degenerate_samples,
            "stream": self.stream,
            "n_atoms": self.n_atoms,
            "total_weight": self.total_weight(),
        }
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EmpiricalConicMeasure":
        path = Path(path)
        sidecar_path = path.with_suffix(".json")
        if not sidecar_path.exists():
            raise EstimationError(f"metadata sidecar missing: {sidecar_path}")
        with open(sidecar_path) as fh:
            meta = json.load(fh)
        d = int(meta["d"])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = data.reshape(0, 2 * d + 1)
        if data.shape[1] != 2 * d + 1:
            raise EstimationError(
                f"expected {2 * d + 1} columns in {path}, got {data.shape[1]}")
        m = cls(d=d, k=int(meta["k"]), u=data[:, :d], v=data[:, d:2 * d],
                w=data[:, 2 * d], total_samples=int(meta["N"]),
                seed=int(meta["seed"]),
                cone_spec_hash=str(meta["cone_spec_hash"]),
                degenerate_samples=int(meta.get("degenerate_samples", 0)),
                stream=int(meta.get("stream", STREAM_MAIN)))
        m.validate()
        return m


def empirical_support_measure(cone: Cone, k: int, eta: BiconicSet, n: int,
                              seed: int, *, stream: int = STREAM_MAIN
                              ) -> EmpiricalConicMeasure:
    """Atoms of the degree-k boundary measure restricted to a biconic set.

    A sample contributes when its face degree equals k and its normalized
    (projection, complement) pair lands in eta; each atom carries weight 1/n.
    Samples whose selected part is numerically zero are counted as degenerate
    and dropped (they cannot be normalized onto the spheres).
    """
    d = ambient_dim(cone)
    if not 1 <= k <= d - 1:
        raise EstimationError(
            f"degree k={k} outside [1, {d - 1}]; the extreme degrees have no "
            "sphere-pair atoms (see omega_extremes)")
    _require_face_degrees(cone, "empirical_support_measure")

    def per_block(X: np.ndarray):
        P = project_batch(cone, X)
        fd = face_dims_batch(cone, X, P)
        sel = fd == k
        if not np.any(sel):
            return np.empty((0, d)), np.empty((0, d)), 0
        Ps, Xs = P[sel], X[sel]
        Qs = Xs - Ps
        na = np.linalg.norm(Ps, axis=1)
        nb = np.linalg.norm(Qs, axis=1)
        good = (na > 1e-12) & (nb > 1e-12)
        degenerate = int(np.count_nonzero(~good))
        U = Ps[good] / na[good][:, None]
        V = Qs[good] / nb[good][:, None]
        keep = eta.evaluate(U, V)
        return U[keep], V[keep], degenerate

    parts = _map_blocks(d, n, seed, stream, per_block)
    U = np.concatenate([p[0] for p in parts], axis=0)
    V = np.concatenate([p[1] for p in parts], axis=0)
    degenerate = sum(p[2] for p in parts)
    w = np.full(U.shape[0], 1.0 / n)
    measure = EmpiricalConicMeasure(d=d, k=k, u=U, v=V, w=w, total_samples=n,
                                    seed=seed, cone_spec_hash=cone_hash(cone),
                                    degenerate_samples=degenerate,
                                    stream=stream)
    measure.validate()
    return measure


# ---------------------------------------------------------------------------
# Scalar functionals


def _resolve_fn(f) -> tuple[Callable, str]:
    if isinstance(f, TaggedFunction):
        return f.fn, f.name
    if callable(f):
        return f, getattr(f, "__name__", "custom")
    raise EstimationError(f"f must be a TaggedFunction or callable, got {f!r}")


def phi_f_mc(cone: Cone, f, eta: BiconicSet | None, n: int, seed: int,
             *, stream: int = STREAM_MAIN) -> MCEstimate:
    """Mean of f(||projection||^2, ||complement||^2) over eta-filtered samples.

    Samples outside eta contribute 0 (the measure-side restriction), so the
    estimate targets the restricted functional, not a conditional mean.
    """
    fn, fname = _resolve_fn(f)
    if eta is None:
        eta = biconic_all()
    d = ambient_dim(cone)

    def per_block(X: np.ndarray):
        P, Q, a, b, _ = _split_parts(cone, X)
        vals = np.asarray(fn(a, b), dtype=float)
        if vals.shape != a.shape:
            raise EstimationError(
                f"f {fname!r} returned shape {vals.shape}, expected {a.shape}")
        bad = ~np.isfinite(vals)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EstimationError(
                f"f {fname!r} produced a non-finite value at "
                f"a={a[i]!r}, b={b[i]!r}")
        vals = vals * eta.evaluate(P, Q)
        return float(vals.sum()), float((vals * vals).sum())

    return _mean_sd(_map_blocks(d, n, seed, stream, per_block), n)


def local_parallel_mass(cone: Cone, lam: float, eta: BiconicSet | None,
                        n: int, seed: int, *, exclude_cone: bool = False,
                        stream: int = STREAM_MAIN) -> MCEstimate:
    """Gaussian mass of the angular parallel set at lam, restricted to eta.

    With ``exclude_cone`` the cone itself (angular distance <= 1e-12) is
    removed, leaving the mass strictly added by the angular enlargement.
    Matches phi_f_mc with the corresponding indicator tag bit-for-bit.
    """
    if not (0.0 <= lam < 0.5 * math.pi):
        raise EstimationError(f"lambda must lie in [0, pi/2), got {lam}")
    if eta is None:
        eta = biconic_all()
    d = ambient_dim(cone)

    def per_block(X: np.ndarray):
        P, Q, _, _, da = _split_parts(cone, X)
        cond = da <= lam + ANGLE_SLACK
        if exclude_cone:
            cond &= da > POSITIVE_ANGLE_TOL
        vals = cond.astype(float) * eta.evaluate(P, Q)
        return float(vals.sum()), float((vals * vals).sum())

    return _mean_sd(_map_blocks(d, n, seed, stream, per_block), n)


def omega_extremes(cone: Cone, eta: BiconicSet | None, n: int, seed: int,
                   *, stream: int = STREAM_MAIN
                   ) -> tuple[MCEstimate, MCEstimate]:
    """Masses of the extreme degrees 0 and d restricted to eta.

    Membership uses the relative residual test: a sample lies in the cone
    when its complement norm is below tol * max(1, ||x||), and in the polar
    when its projection norm is.  Returns (degree-0, degree-d) estimates.
    """
    if eta is None:
        eta = biconic_all()
    d = ambient_dim(cone)

    def per_block(X: np.ndarray):
        P, Q, a, b, _ = _split_parts(cone, X)
        scale = np.maximum(1.0, np.sqrt(a + b))
        in_polar = np.sqrt(a) <= MEMBERSHIP_RTOL * scale
        in_cone = np.sqrt(b) <= MEMBERSHIP_RTOL * scale
        mask = eta.evaluate(P, Q)
        v0 = in_polar.astype(float) * mask
        vd = in_cone.astype(float) * mask
        return (float(v0.sum()), float((v0 * v0).sum()),
                float(vd.sum()), float((vd * vd).sum()))

    parts = _map_blocks(d, n, seed, stream, per_block)
    est0 = _mean_sd([(p[0], p[1]) for p in parts], n)
    estd = _mean_sd([(p[2], p[3]) for p in parts], n)
    return est0, estd


# ---------------------------------------------------------------------------
# Parallel-mass inversion


@dataclass(frozen=True)
class InversionEstimate:
    """Boundary-measure masses recovered from parallel masses on a grid."""

    values: np.ndarray        # (d-1,) recovered degree masses 1..d-1
    stderr: np.ndarray        # (d-1,) exact per-sample functional errors
    nu: np.ndarray            # (m,) raw parallel-set masses on the grid
    nu_stderr: np.ndarray     # (m,)
    lambda_grid: np.ndarray   # (m,)
    cond: float
    n: int


def support_measure_via_inversion(cone: Cone, eta: BiconicSet | None,
                                  lambda_grid: Sequence[float] | None,
                                  n: int, seed: int,
                                  *, stream: int = STREAM_MAIN
                                  ) -> InversionEstimate:
    """Recover degree masses 1..d-1 from parallel masses, works on any cone.

    The strict parallel masses (cone excluded) on the grid form a linear
    system in the degree masses; applying its pseudoinverse per sample keeps
    the reported standard errors exact for the recovered linear functionals
    under the common coupling.
    """
    if eta is None:
        eta = biconic_all()
    d = ambient_dim(cone)
    coeffs = steiner.inversion_coeffs(d, lambda_grid)
    grid = coeffs.lambda_grid
    A_T = coeffs.matrix.T          # (m, d-1)

    def per_block(X: np.ndarray):
        P, Q, _, _, da = _split_parts(cone, X)
        mask = eta.evaluate(P, Q)
        C = ((da[:, None] <= grid[None, :] + ANGLE_SLACK)
             & (da[:, None] > POSITIVE_ANGLE_TOL)
             & mask[:, None]).astype(float)
        S = C @ A_T                # per-sample recovered functionals
        return (S.sum(axis=0), (S * S).sum(axis=0),
                C.sum(axis=0), (C * C).sum(axis=0))

    parts = _map_blocks(d, n, seed, stream, per_block)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    c1 = sum(p[2] for p in parts)
    c2 = sum(p[3] for p in parts)
    values = s1 / n
    nu = c1 / n
    if n > 1:
        var_s = np.maximum(s2 - n * values * values, 0.0) / (n - 1)
        var_c = np.maximum(c2 - n * nu * nu, 0.0) / (n - 1)
    else:
        var_s = np.zeros_like(values)
        var_c = np.zeros_like(nu)
    return InversionEstimate(values=values, stderr=np.sqrt(var_s / n),
                             nu=nu, nu_stderr=np.sqrt(var_c / n),
                             lambda_grid=grid, cond=coeffs.cond, n=n)


# ---------------------------------------------------------------------------
# Quadrature-expansion sides of the identity checks


def _route(cone: Cone) -> str:
    base = cone.base if isinstance(cone, DualCone) else cone
    if isinstance(base, (PolyhedralCone, SubspaceCone)):
        return "faces"
    return "inversion"


def steiner_rhs_mc(cone: Cone, f, eta: BiconicSet | None, n: int, seed: int,
                   *, stream: int = STREAM_B,
                   lambda_grid: Sequence[float] | None = None) -> MCEstimate:
    """Degree-expansion side of the moment identity, as a single MC mean.

    Face route (polyhedral skeletons): each sample contributes the moment
    coefficient of its face degree.  Inversion route (circular cones): the
    interior degrees come through the parallel-mass pseudoinverse, the
    extreme degrees through membership indicators.  Either way the whole
    expansion is one per-sample functional, so the standard error is exact.
    """
    if isinstance(f, TaggedFunction):
        tagged = f
    else:
        raise EstimationError("steiner_rhs_mc needs a TaggedFunction (the "
                              "coefficients are computed by quadrature)")
    if eta is None:
        eta = biconic_all()
    d = ambient_dim(cone)
    I = steiner.I_vector(tagged, d)

    if _route(cone) == "faces":
        def per_block(X: np.ndarray):
            P = project_batch(cone, X)
            Q = X - P
            fd = face_dims_batch(cone, X, P)
            vals = I[fd] * eta.evaluate(P, Q)
            return float(vals.sum()), float((vals * vals).sum())

        return _mean_sd(_map_blocks(d, n, seed, stream, per_block), n)

    coeffs = steiner.inversion_coeffs(d, lambda_grid)
    grid = coeffs.lambda_grid
    weights = coeffs.matrix.T @ I[1:d]      # (m,)

    def per_block(X: np.ndarray):
        P, Q, a, b, da = _split_parts(cone, X)
        mask = eta.evaluate(P, Q)
        C = ((da[:, None] <= grid[None, :] + ANGLE_SLACK)
             & (da[:, None] > POSITIVE_ANGLE_TOL)
             & mask[:, None]).astype(float)
        scale = np.maximum(1.0, np.sqrt(a + b))
        in_polar = np.sqrt(a) <= MEMBERSHIP_RTOL * scale
        in_cone = np.sqrt(b) <= MEMBERSHIP_RTOL * scale
        vals = (C @ weights
                + I[0] * (in_polar.astype(float) * mask)
                + I[d] * (in_cone.astype(float) * mask))
        return float(vals.sum()), float((vals * vals).sum())

    return _mean_sd(_map_blocks(d, n, seed, stream, per_block), n)


def local_rhs_mc(cone: Cone, lam: float, eta: BiconicSet | None, n: int,
                 seed: int, *, stream: int = STREAM_B,
                 lambda_grid: Sequence[float] | None = None) -> MCEstimate:
    """Degree-expansion side of the parallel-mass identity at one angle."""
    if not (0.0 <= lam < 0.5 * math.pi):
        raise EstimationError(f"lambda must lie in [0, pi/2), got {lam}")
    if eta is None:
        eta = biconic_all()
    d = ambient_dim(cone)
    g = np.zeros(d + 1)
    g[d] = 1.0
    for k in range(1, d):
        g[k] = steiner.g_coeff(d, k, lam)

    if _route(cone) == "faces":
        def per_block(X: np.ndarray):
            P = project_batch(cone, X)
            Q = X - P
            fd = face_dims_batch(cone, X, P)
            vals = g[fd] * eta.evaluate(P, Q)
            return float(vals.sum()), float((vals * vals).sum())

        return _mean_sd(_map_blocks(d, n, seed, stream, per_block), n)

    coeffs = steiner.inversion_coeffs(d, lambda_grid)
    grid = coeffs.lambda_grid
    weights = coeffs.matrix.T @ g[1:d]      # (m,)

    def per_block(X: np.ndarray):
        P, Q, a, b, da = _split_parts(cone, X)
        mask = eta.evaluate(P, Q)
        C = ((da[:, None] <= grid[None, :] + ANGLE_SLACK)
             & (da[:, None] > POSITIVE_ANGLE_TOL)
             & mask[:, None]).astype(float)
        scale = np.maximum(1.0, np.sqrt(a + b))
        in_cone = np.sqrt(b) <= MEMBERSHIP_RTOL * scale
        vals = C @ weights + in_cone.astype(float) * mask
        return float(vals.sum()), float((vals * vals).sum())

    return _mean_sd(_map_blocks(d, n, seed, stream, per_block), n)
