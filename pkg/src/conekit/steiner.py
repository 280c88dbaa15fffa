"""Coefficient quadrature for the conic Steiner identities.

Two coefficient families drive the identities this package checks: the
moment coefficients I_k(f) that expand Gaussian expectations of
f(||projection||^2, ||complement||^2) over the face-degree decomposition,
and the parallel-set coefficients g_k(lambda) giving the Gaussian mass that
angular parallel sets add to each degree.  Both are computed by adaptive
quadrature against closed-form constants, never by Monte Carlo, so they can
serve as the deterministic side of the identity checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .cones import ANGLE_SLACK, BiconicSet, Cone
from .reporting import CheckReport

# Gaussian tail truncation: radius where the integrand bound must drop below
# this before the quadrature stops integrating.
TAIL_BOUND = 1e-18
# Absolute/relative tolerances for the adaptive quadrature panels.
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
# Inversion grids with condition numbers above this are rejected.
MAX_CONDITION = 1e8


class SteinerError(ValueError):
    """Invalid coefficient request or ill-conditioned inversion grid."""


def omega_const(m: int) -> float:
    """Total surface measure of the unit sphere in R^m: 2 pi^{m/2}/Gamma(m/2)."""
    if m <= 0:
        raise SteinerError(f"sphere dimension must be >= 1, got {m}")
    return math.exp(math.log(2.0) + 0.5 * m * math.log(math.pi)
                    - math.lgamma(0.5 * m))


# ---------------------------------------------------------------------------
# Tagged functions of (a, b) = (||projection||^2, ||complement||^2)


@dataclass(frozen=True)
class TaggedFunction:
    """Nonnegative function of two nonnegative reals with a growth tag.

    ``poly_degree`` bounds the growth (|f| <= C (1+a+b)^poly_degree), which
    fixes the Gaussian tail truncation; ``breakpoint_angle`` marks the
    discontinuity of indicator tags so the quadrature can split panels there.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    poly_degree: float
    breakpoint_angle: float | None = None


def _as_value(a, b, values) -> np.ndarray:
    shape = np.broadcast(np.asarray(a), np.asarray(b)).shape
    return np.broadcast_to(np.asarray(values, dtype=float), shape).copy()


def f_one() -> TaggedFunction:
    return TaggedFunction("one", lambda a, b: _as_value(a, b, 1.0), 0.0)


def f_norm_sq_cone() -> TaggedFunction:
    return TaggedFunction("norm_sq_c",
                          lambda a, b: _as_value(a, b, np.asarray(a, float)),
                          1.0)


def f_norm_sq_polar() -> TaggedFunction:
    return TaggedFunction("norm_sq_polar",
                          lambda a, b: _as_value(a, b, np.asarray(b, float)),
                          1.0)


def f_moment(m: int, n: int) -> TaggedFunction:
    if m < 0 or n < 0:
        raise SteinerError("moment exponents must be nonnegative")

    def fn(a, b, _m=m, _n=n):
        av = np.asarray(a, dtype=float)
        bv = np.asarray(b, dtype=float)
        return _as_value(a, b, av ** _m * bv ** _n)

    return TaggedFunction(f"moment:{m},{n}", fn, float(m + n))


def f_steiner_indicator(lam: float) -> TaggedFunction:
    """Indicator of the angular parallel set at angle lam.

    Evaluates 1{atan2(sqrt(b), sqrt(a)) <= lam + slack}, i.e. the
    parallel-set condition on the angular distance; equivalently
    b <= a tan^2(lam).  The estimators use the identical expression so the
    quadrature and Monte Carlo sides test the same set.
    """
    if not (0.0 <= lam < math.pi / 2):
        raise SteinerError(f"indicator angle must lie in [0, pi/2), got {lam}")

    def fn(a, b, _lam=lam):
        av = np.asarray(a, dtype=float)
        bv = np.asarray(b, dtype=float)
        da = np.arctan2(np.sqrt(bv), np.sqrt(av))
        # the origin sits at angular distance pi/2 by convention
        da = np.where((av == 0.0) & (bv == 0.0), 0.5 * math.pi, da)
        return _as_value(a, b, (da <= _lam + ANGLE_SLACK).astype(float))

    return TaggedFunction(f"steiner_indicator:{lam:.12g}", fn, 0.0,
                          breakpoint_angle=float(lam))


def parse_f_tag(tag: str) -> TaggedFunction:
    s = tag.strip()
    if s == "one":
        return f_one()
    if s == "norm_sq_c":
        return f_norm_sq_cone()
    if s == "norm_sq_polar":
        return f_norm_sq_polar()
    if s.startswith("moment:"):
        try:
            m_str, n_str = s.split(":", 1)[1].split(",")
            return f_moment(int(m_str), int(n_str))
        except ValueError as exc:
            raise SteinerError(f"malformed moment tag {tag!r}") from exc
    if s.startswith("steiner_indicator:"):
        try:
            return f_steiner_indicator(float(s.split(":", 1)[1]))
        except ValueError as exc:
            raise SteinerError(f"malformed indicator tag {tag!r}") from exc
    raise SteinerError(f"unknown f tag {tag!r}")


def _check_growth(f: TaggedFunction) -> None:
    """Cheap probe that the declared polynomial growth bound is plausible."""
    grid = np.array([0.0, 1.0, 10.0, 100.0])
    A, B = np.meshgrid(grid, grid)
    vals = np.asarray(f.fn(A.ravel(), B.ravel()), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise SteinerError(f"f tag {f.name!r}: non-finite value on probe grid")
    bound = 1e6 * (1.0 + A.ravel() + B.ravel()) ** max(f.poly_degree, 0.0)
    if np.any(np.abs(vals) > bound):
        raise SteinerError(
            f"f tag {f.name!r}: growth bound violated during evaluation")


def _tail_radius(d: int, deg: float) -> float:
    r = 8.0
    while (1.0 + r * r) ** max(deg, 0.0) * math.exp(-0.5 * r * r) \
            * r ** (d - 1) > TAIL_BOUND:
        r += 0.5
    return r


# ---------------------------------------------------------------------------
# g_k(lambda): parallel-set mass coefficients


def g_coeff(d: int, k: int, lam: float) -> float:
    """Parallel-set coefficient for degree k in ambient dimension d.

    (omega_k omega_{d-k} / omega_d) * integral_0^lam cos^{k-1} sin^{d-k-1};
    k = d returns 1 identically.  Accepts lam in [0, pi/2] (the closed right
    endpoint only for limit checks; parallel-set membership itself stays
    strict).
    """
    if d < 2:
        raise SteinerError(f"ambient dimension must be >= 2, got {d}")
    if not 1 <= k <= d:
        raise SteinerError(
            f"degree k={k} outside [1, {d}] (the k=0 term is invisible to "
            "parallel sets)")
    if not (0.0 <= lam <= math.pi / 2):
        raise SteinerError(f"lambda must lie in [0, pi/2], got {lam}")
    if k == d:
        return 1.0
    if lam == 0.0:
        return 0.0
    pref = math.exp(math.log(omega_const(k)) + math.log(omega_const(d - k))
                    - math.log(omega_const(d)))

    def integrand(phi: float) -> float:
        return math.cos(phi) ** (k - 1) * math.sin(phi) ** (d - k - 1)

    val, _ = integrate.quad(integrand, 0.0, lam,
                            epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return pref * val


# ---------------------------------------------------------------------------
# I_k(f): moment coefficients


def I_coeff(f: TaggedFunction, d: int, k: int) -> float:
    """Moment coefficient of degree k for a tagged function.

    For 1 <= k <= d-1 integrates
      (omega_k omega_{d-k} / (2 pi)^{d/2}) *
        iint f(r^2, s^2) e^{-(r^2+s^2)/2} r^{k-1} s^{d-k-1} ds dr
    in polar coordinates (outer angle, inner radius) with Gaussian tail
    truncation set by the growth tag; k = 0 and k = d use the corresponding
    single integrals with f(0, s^2) / f(r^2, 0).
    """
    if d < 2:
        raise SteinerError(f"ambient dimension must be >= 2, got {d}")
    if not 0 <= k <= d:
        raise SteinerError(f"degree k={k} outside [0, {d}]")
    _check_growth(f)
    R = _tail_radius(d, f.poly_degree)

    if k in (0, d):
        pref = omega_const(d) / (2.0 * math.pi) ** (0.5 * d)

        def integrand(t: float) -> float:
            ab = (0.0, t * t) if k == 0 else (t * t, 0.0)
            return (float(f.fn(*ab)) * math.exp(-0.5 * t * t)
                    * t ** (d - 1))

        val, _ = integrate.quad(integrand, 0.0, R,
                                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                limit=200)
        return pref * val

    pref = math.exp(math.log(omega_const(k)) + math.log(omega_const(d - k))
                    - 0.5 * d * math.log(2.0 * math.pi))

    def inner(phi: float) -> float:
        c2, s2 = math.cos(phi) ** 2, math.sin(phi) ** 2

        def radial(rho: float) -> float:
            rr = rho * rho
            return (float(f.fn(rr * c2, rr * s2)) * math.exp(-0.5 * rr)
                    * rho ** (d - 1))

        val, _ = integrate.quad(radial, 0.0, R,
                                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                limit=200)
        return val * math.cos(phi) ** (k - 1) * math.sin(phi) ** (d - k - 1)

    points = None
    if f.breakpoint_angle is not None and 0.0 < f.breakpoint_angle < math.pi / 2:
        points = [f.breakpoint_angle]
    val, _ = integrate.quad(inner, 0.0, math.pi / 2,
                            epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                            limit=200, points=points)
    return pref * val


def I_vector(f: TaggedFunction, d: int) -> np.ndarray:
    """All moment coefficients I_0..I_d for a tagged function."""
    return np.array([I_coeff(f, d, k) for k in range(d + 1)])


# ---------------------------------------------------------------------------
# Inversion of the parallel-mass system


def default_lambda_grid(d: int) -> np.ndarray:
    """d-1 Chebyshev points mapped to [0.1, 1.0], ascending."""
    if d < 2:
        raise SteinerError(f"ambient dimension must be >= 2, got {d}")
    m = d - 1
    i = np.arange(1, m + 1)
    nodes = np.cos((2 * i - 1) * math.pi / (2 * m))
    return np.sort(0.55 + 0.45 * nodes)


@dataclass(frozen=True)
class InversionCoeffs:
    """Pseudoinverse of the parallel-mass coefficient matrix on a grid."""

    d: int
    lambda_grid: np.ndarray      # (m,)
    g_matrix: np.ndarray         # (m, d-1): g_k(lambda_j), k = 1..d-1
    matrix: np.ndarray           # (d-1, m): recovers degrees from masses
    cond: float


def inversion_coeffs(d: int, lambda_grid: Sequence[float] | None = None
                     ) -> InversionCoeffs:
    """Coefficients recovering degrees 1..d-1 from parallel masses on a grid."""
    grid = default_lambda_grid(d) if lambda_grid is None \
        else np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size < d - 1:
        raise SteinerError(
            f"lambda grid needs >= {d - 1} values, got shape {grid.shape}")
    if np.unique(grid).size != grid.size:
        raise SteinerError("lambda grid values must be distinct")
    if np.any(grid <= 0.0) or np.any(grid > 1.0):
        raise SteinerError("lambda grid values must lie in (0, 1]")
    G = np.array([[g_coeff(d, k, lam) for k in range(1, d)] for lam in grid])
    cond = float(np.linalg.cond(G))
    if cond > MAX_CONDITION:
        raise SteinerError(
            f"parallel-mass system condition number {cond:.3e} exceeds 1e8; "
            "choose a better-spread lambda grid")
    A = np.linalg.pinv(G)
    return InversionCoeffs(d=d, lambda_grid=grid, g_matrix=G, matrix=A,
                           cond=cond)


@dataclass(frozen=True)
class SteinerTable:
    """Coefficient tables on a lambda grid, plus the inversion matrix."""

    d: int
    lambda_grid: np.ndarray          # (m,)
    g: np.ndarray                    # (m, d-1), g_d == 1 implicit
    inversion: np.ndarray            # (d-1, m)
    cond: float
    f_tag: str | None = None
    I: np.ndarray | None = None      # (d+1,) when an f tag was supplied


def build_steiner_table(d: int, lambda_grid: Sequence[float] | None = None,
                        f: TaggedFunction | None = None) -> SteinerTable:
    coeffs = inversion_coeffs(d, lambda_grid)
    I = I_vector(f, d) if f is not None else None
    return SteinerTable(d=d, lambda_grid=coeffs.lambda_grid,
                        g=coeffs.g_matrix, inversion=coeffs.matrix,
                        cond=coeffs.cond,
                        f_tag=f.name if f is not None else None, I=I)


# ---------------------------------------------------------------------------
# Identity checks (Monte Carlo vs coefficient quadrature)


def master_steiner_check(cone: Cone, f: TaggedFunction, eta: BiconicSet,
                         n: int, seed: int,
                         lambda_grid: Sequence[float] | None = None
                         ) -> CheckReport:
    """Gaussian-moment identity check: functional mean vs degree expansion.

    LHS estimates the functional mean directly (stream A); RHS combines the
    quadrature coefficients with degree masses estimated on an independent
    stream B — per-face counting for cones with a polyhedral skeleton, the
    parallel-mass inversion plus extreme-degree masses otherwise.
    """
    from . import measures  # deferred: measures imports this module's coefficients

    lhs = measures.phi_f_mc(cone, f, eta, n, seed, stream=measures.STREAM_A)
    rhs = measures.steiner_rhs_mc(cone, f, eta, n, seed,
                                  stream=measures.STREAM_B,
                                  lambda_grid=lambda_grid)
    err = math.hypot(lhs.stderr, rhs.stderr)
    details = (f"cone={_describe(cone)}; f={f.name}; eta={eta.label}; "
               f"n={n}; seed={seed}")
    return CheckReport.from_mc("master-steiner", lhs.value, rhs.value, err,
                               details=details)


def local_steiner_check(cone: Cone, lam: float, eta: BiconicSet,
                        n: int, seed: int,
                        lambda_grid: Sequence[float] | None = None
                        ) -> CheckReport:
    """Parallel-mass identity check at one angle: direct mass vs expansion."""
    from . import measures

    if not (0.0 <= lam < math.pi / 2):
        raise SteinerError(f"lambda must lie in [0, pi/2), got {lam}")
    lhs = measures.local_parallel_mass(cone, lam, eta, n, seed,
                                       stream=measures.STREAM_A)
    rhs = measures.local_rhs_mc(cone, lam, eta, n, seed,
                                stream=measures.STREAM_B,
                                lambda_grid=lambda_grid)
    err = math.hypot(lhs.stderr, rhs.stderr)
    details = (f"cone={_describe(cone)}; lambda={lam:g}; eta={eta.label}; "
               f"n={n}; seed={seed}")
    return CheckReport.from_mc("local-steiner", lhs.value, rhs.value, err,
                               details=details)


def _describe(cone: Cone) -> str:
    from .cones import describe

    return describe(cone)
