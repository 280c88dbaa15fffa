"""Closed convex cones in R^d and biconic index sets.

Cones come in four variants: polyhedral cones given by generators (V-form),
linear subspaces given by an orthonormal basis, circular cones given by an
axis and a half-angle, and a dual-view wrapper for polar cones of polyhedral
cones.  All values are immutable after construction and safe to share across
workers.  Membership and angular queries live in :mod:`conekit.projection`
because they are projection applications; this module owns construction,
duality, text parsing, and hashing.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np

# Relative tolerance for membership/degeneracy decisions: scaled by max(1, |x|)
# so tests near the origin stay meaningful.
MEMBERSHIP_RTOL = 1e-9
# Generators whose unit vectors differ by less than this are duplicates
# (||u - v|| ~ angle for small angles, and 1e-9 rad is below cos resolution).
DUPLICATE_TOL = 1e-9
# Orthonormality defect allowed for subspace bases.
ORTHO_TOL = 1e-10
# Absolute slack for angular comparisons (d_a <= lambda decisions); absorbs
# floating-point roundoff that keeps interior points from reading d_a == 0.
ANGLE_SLACK = 1e-12
# Norms below this are treated as the zero vector when normalizing atoms.
DEGENERATE_NORM = 1e-12


class ConeError(ValueError):
    """Invalid cone construction or unsupported cone query."""


class BiconicError(ValueError):
    """Biconic predicate could not be evaluated."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ConeError(f"non-finite entries in {what}")


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    """Conic hull of finitely many unit generators (rows of ``generators``)."""

    generators: np.ndarray  # (n, d), unit rows, deduplicated
    orthogonal: bool = False  # rows mutually orthogonal: projection clamps

    @property
    def dim(self) -> int:
        return int(self.generators.shape[1])

    @property
    def n_generators(self) -> int:
        return int(self.generators.shape[0])


@dataclass(frozen=True, eq=False)
class SubspaceCone:
    """Linear subspace spanned by the orthonormal rows of ``basis``.

    ``basis`` may have zero rows, representing the trivial cone {o}; that
    value only arises as the dual of the full space and is rejected by the
    angular operations.
    """

    basis: np.ndarray  # (k, d) orthonormal rows, k >= 0

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    @property
    def k(self) -> int:
        return int(self.basis.shape[0])


@dataclass(frozen=True, eq=False)
class CircularCone:
    """Cone of vectors within angle ``half_angle`` of ``axis``."""

    axis: np.ndarray  # unit (d,)
    half_angle: float  # strictly inside (0, pi/2)

    @property
    def dim(self) -> int:
        return int(self.axis.shape[0])


@dataclass(frozen=True, eq=False)
class DualCone:
    """Polar cone of a polyhedral cone, kept in dual view.

    Queries are routed through the Moreau decomposition of the base cone, so
    no generator representation of the polar is ever computed.
    """

    base: PolyhedralCone

    @property
    def dim(self) -> int:
        return self.base.dim


Cone = Union[PolyhedralCone, SubspaceCone, CircularCone, DualCone]


def ambient_dim(cone: Cone) -> int:
    return cone.dim


def positive_dimension(cone: Cone) -> bool:
    """True iff the cone is not the trivial cone {o}."""
    return not (isinstance(cone, SubspaceCone) and cone.k == 0)


# ---------------------------------------------------------------------------
# Constructors


def rays(generators: Sequence[Sequence[float]] | np.ndarray,
         orthogonal: bool | None = None) -> PolyhedralCone:
    """Polyhedral cone from generator rows; normalizes and deduplicates.

    Args:
        generators: (n, d) array-like of nonzero vectors, d >= 2.
        orthogonal: force or forbid the orthogonal fast path; autodetected
            when None.
    """
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    _check_finite(G, "generators")
    if G.ndim != 2 or G.shape[0] < 1 or G.shape[1] < 2:
        raise ConeError(f"generator matrix must be (n>=1, d>=2), got {G.shape}")
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms < DEGENERATE_NORM):
        raise ConeError("zero generator vector")
    U = G / norms[:, None]
    keep: list[int] = []
    for i in range(U.shape[0]):
        if all(np.linalg.norm(U[i] - U[j]) >= DUPLICATE_TOL for j in keep):
            keep.append(i)
    U = U[keep]
    gram_ok = bool(np.all(np.abs(U @ U.T - np.eye(U.shape[0])) <= ORTHO_TOL))
    if orthogonal is None:
        orthogonal = gram_ok
    elif orthogonal and not gram_ok:
        raise ConeError("generators are not pairwise orthogonal; cannot force "
                        "the orthogonal fast path")
    return PolyhedralCone(generators=_readonly(U), orthogonal=bool(orthogonal))


def orthant(d: int) -> PolyhedralCone:
    """Nonnegative orthant of R^d."""
    if d < 2:
        raise ConeError(f"ambient dimension must be >= 2, got {d}")
    return PolyhedralCone(generators=_readonly(np.eye(d)), orthogonal=True)


def subspace(d: int, k: int, basis: np.ndarray | None = None) -> SubspaceCone:
    """Linear subspace of R^d; canonical span{e_1..e_k} unless a basis is given."""
    if d < 2:
        raise ConeError(f"ambient dimension must be >= 2, got {d}")
    if not 0 <= k <= d:
        raise ConeError(f"subspace dimension k={k} outside [0, {d}]")
    if basis is None:
        B = np.eye(d)[:k]
    else:
        B = np.atleast_2d(np.asarray(basis, dtype=float))
        _check_finite(B, "basis")
        if B.shape != (k, d):
            raise ConeError(f"basis must be ({k}, {d}), got {B.shape}")
        if k > 0 and np.max(np.abs(B @ B.T - np.eye(k))) > ORTHO_TOL:
            raise ConeError("basis rows are not orthonormal within 1e-10")
    return SubspaceCone(basis=_readonly(B.reshape(k, d)))


def circular(d: int, alpha: float, axis: np.ndarray | None = None) -> CircularCone:
    """Circular cone with the given half-angle, axis e_1 by default."""
    if d < 2:
        raise ConeError(f"ambient dimension must be >= 2, got {d}")
    if not (math.isfinite(alpha) and 0.0 < alpha < math.pi / 2):
        raise ConeError(f"half-angle must lie strictly inside (0, pi/2), got {alpha}")
    if axis is None:
        a = np.zeros(d)
        a[0] = 1.0
    else:
        a = np.asarray(axis, dtype=float).reshape(d)
        _check_finite(a, "axis")
        nrm = np.linalg.norm(a)
        if nrm < DEGENERATE_NORM:
            raise ConeError("zero axis vector")
        a = a / nrm
    return CircularCone(axis=_readonly(a), half_angle=float(alpha))


def _givens(d: int, i: int, j: int, theta: float) -> np.ndarray:
    """Rotation by theta in the (i, j) coordinate plane, 1-based axes."""
    if not (1 <= i <= d and 1 <= j <= d and i != j):
        raise ConeError(f"rotation plane ({i},{j}) invalid for d={d}")
    if not math.isfinite(theta):
        raise ConeError("non-finite rotation angle")
    R = np.eye(d)
    c, s = math.cos(theta), math.sin(theta)
    a, b = i - 1, j - 1
    R[a, a] = c
    R[b, b] = c
    R[a, b] = -s
    R[b, a] = s
    return R


def rotated(base: Cone, i: int, j: int, theta: float) -> Cone:
    """Rotate a cone by theta radians in the (i, j) coordinate plane (1-based).

    Rotation commutes with polarity, so a DualCone rotates by rotating its
    base cone.
    """
    d = base.dim
    R = _givens(d, i, j, theta)
    if isinstance(base, PolyhedralCone):
        return PolyhedralCone(generators=_readonly(base.generators @ R.T),
                              orthogonal=base.orthogonal)
    if isinstance(base, SubspaceCone):
        return SubspaceCone(basis=_readonly(base.basis @ R.T))
    if isinstance(base, CircularCone):
        return CircularCone(axis=_readonly(R @ base.axis),
                            half_angle=base.half_angle)
    if isinstance(base, DualCone):
        return DualCone(base=rotated(base.base, i, j, theta))
    raise ConeError(f"unknown cone variant {type(base).__name__}")


def dual(cone: Cone) -> Cone:
    """Polar cone.  Subspace and circular duals are explicit; polyhedral duals
    stay wrapped so queries route through the Moreau decomposition."""
    if isinstance(cone, PolyhedralCone):
        return DualCone(base=cone)
    if isinstance(cone, DualCone):
        return cone.base
    if isinstance(cone, SubspaceCone):
        d, k = cone.dim, cone.k
        if k == 0:
            return SubspaceCone(basis=_readonly(np.eye(d)))
        if k == d:
            return SubspaceCone(basis=_readonly(np.zeros((0, d))))
        # Orthogonal complement via the full QR of the basis columns.
        q, _ = np.linalg.qr(cone.basis.T, mode="complete")
        return SubspaceCone(basis=_readonly(q[:, k:].T))
    if isinstance(cone, CircularCone):
        return CircularCone(axis=_readonly(-cone.axis),
                            half_angle=math.pi / 2 - cone.half_angle)
    raise ConeError(f"unknown cone variant {type(cone).__name__}")


def is_full_space(cone: Cone) -> bool:
    """True iff the cone is all of R^d (checked via +-basis membership)."""
    from . import projection  # deferred: projection imports this module

    if isinstance(cone, SubspaceCone):
        return cone.k == cone.dim
    if isinstance(cone, CircularCone):
        return False  # half-angle < pi/2 strictly
    d = cone.dim
    eye = np.eye(d)
    test = np.vstack([eye, -eye])
    P = projection.project_batch(cone, test)
    return bool(np.all(np.linalg.norm(P - test, axis=1) <= MEMBERSHIP_RTOL))


# ---------------------------------------------------------------------------
# Hashing and canonical description


def _variant_payload(cone: Cone) -> tuple[str, list[bytes]]:
    if isinstance(cone, PolyhedralCone):
        return "polyhedral", [np.int64(cone.generators.shape).tobytes(),
                              cone.generators.tobytes()]
    if isinstance(cone, SubspaceCone):
        return "subspace", [np.int64(cone.basis.shape).tobytes(),
                            cone.basis.tobytes()]
    if isinstance(cone, CircularCone):
        return "circular", [cone.axis.tobytes(),
                            np.float64(cone.half_angle).tobytes()]
    if isinstance(cone, DualCone):
        tag, payload = _variant_payload(cone.base)
        return "dual-of-" + tag, payload
    raise ConeError(f"unknown cone variant {type(cone).__name__}")


def cone_hash(cone: Cone) -> str:
    """Deterministic sha256 hash of the cone's canonical byte description."""
    tag, payload = _variant_payload(cone)
    h = hashlib.sha256()
    h.update(tag.encode())
    for chunk in payload:
        h.update(chunk)
    return h.hexdigest()


def describe(cone: Cone) -> str:
    """Short human-readable description for reports and manifests."""
    if isinstance(cone, PolyhedralCone):
        extra = ", orthogonal" if cone.orthogonal else ""
        return f"polyhedral(d={cone.dim}, n={cone.n_generators}{extra})"
    if isinstance(cone, SubspaceCone):
        return f"subspace(d={cone.dim}, k={cone.k})"
    if isinstance(cone, CircularCone):
        return f"circular(d={cone.dim}, alpha={cone.half_angle:.6g})"
    if isinstance(cone, DualCone):
        return f"dual({describe(cone.base)})"
    return type(cone).__name__


# ---------------------------------------------------------------------------
# Biconic sets


@dataclass(frozen=True, eq=False)
class BiconicSet:
    """Indicator on pairs (x, y) invariant under positive scaling of each part.

    kind is one of "all", "cap_product", "custom".  Cap products realize the
    product of closed cones over two spherical caps; the origin belongs to
    every closed cone, so an ``o`` part is always accepted.  Custom predicates
    receive batched unit rows (zero rows for ``o`` parts) and must be
    scaling-invariant; exceptions they raise are wrapped in BiconicError.
    """

    kind: str
    center_u: np.ndarray | None = None
    theta_u: float = math.pi
    center_v: np.ndarray | None = None
    theta_v: float = math.pi
    predicate: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    label: str = "all"

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Vectorized membership for pair rows; accepts non-unit inputs."""
        X = np.atleast_2d(np.asarray(x, dtype=float))
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.kind == "all":
            return np.ones(X.shape[0], dtype=bool)
        nx = np.linalg.norm(X, axis=1)
        ny = np.linalg.norm(Y, axis=1)
        x_zero = nx <= DEGENERATE_NORM
        y_zero = ny <= DEGENERATE_NORM
        U = np.where(x_zero[:, None], 0.0, X / np.where(x_zero, 1.0, nx)[:, None])
        V = np.where(y_zero[:, None], 0.0, Y / np.where(y_zero, 1.0, ny)[:, None])
        if self.kind == "cap_product":
            cu = math.cos(self.theta_u) if self.theta_u < math.pi else -1.0
            cv = math.cos(self.theta_v) if self.theta_v < math.pi else -1.0
            ok_u = x_zero | (U @ self.center_u >= cu - 1e-15)
            ok_v = y_zero | (V @ self.center_v >= cv - 1e-15)
            return ok_u & ok_v
        if self.kind == "custom":
            try:
                out = np.asarray(self.predicate(U, V), dtype=bool)
            except Exception as exc:  # noqa: BLE001 - contract: wrap and rethrow
                raise BiconicError(
                    f"custom biconic predicate failed ({exc}); predicates must "
                    "accept zero rows for pairs containing o") from exc
            return out.reshape(X.shape[0])
        raise BiconicError(f"unknown biconic kind {self.kind!r}")


def biconic_all() -> BiconicSet:
    return BiconicSet(kind="all", label="all")


def cap_product(center_u: np.ndarray, theta_u: float,
                center_v: np.ndarray, theta_v: float) -> BiconicSet:
    """Product of the cones over two spherical caps (center, angular radius)."""
    cu = np.asarray(center_u, dtype=float).ravel()
    cv = np.asarray(center_v, dtype=float).ravel()
    _check_finite(cu, "cap center"), _check_finite(cv, "cap center")
    for c in (cu, cv):
        if np.linalg.norm(c) < DEGENERATE_NORM:
            raise BiconicError("cap center must be nonzero")
    if not (0.0 < theta_u <= math.pi and 0.0 < theta_v <= math.pi):
        raise BiconicError("cap angles must lie in (0, pi]")
    label = (f"cap_product(theta_u={theta_u:.6g}, theta_v={theta_v:.6g})")
    return BiconicSet(kind="cap_product",
                      center_u=_readonly(cu / np.linalg.norm(cu)),
                      theta_u=float(theta_u),
                      center_v=_readonly(cv / np.linalg.norm(cv)),
                      theta_v=float(theta_v),
                      label=label)


def custom_biconic(predicate: Callable[[np.ndarray, np.ndarray], np.ndarray],
                   label: str = "custom") -> BiconicSet:
    return BiconicSet(kind="custom", predicate=predicate, label=label)


# ---------------------------------------------------------------------------
# Text formats.  File format: line 1 `d=<int> kind=<...>`; kind-specific lines
# follow (`k=<int>`, `alpha=<float>`, one generator per line, or
# `plane=<i>,<j> theta=<float> base=<path>`).  Inline grammar:
#   orthant:d | subspace:d,k | circular:d,alpha | rays:path |
#   rotated:<base>,i,j,theta        (base parsed recursively, from the right)


class ConeParseError(ConeError):
    """Malformed cone spec; message carries line diagnostics."""


def _parse_kv(tokens: Iterable[str], line_no: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConeParseError(f"line {line_no}: expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def parse_cone_text(text: str, base_dir: Path | None = None) -> Cone:
    lines: list[tuple[int, str]] = []
    for idx, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append((idx, stripped))
    if not lines:
        raise ConeParseError("empty cone file")
    first_no, first = lines[0]
    head = _parse_kv(first.split(), first_no)
    if "d" not in head or "kind" not in head:
        raise ConeParseError(f"line {first_no}: first line must set d= and kind=")
    try:
        d = int(head["d"])
    except ValueError as exc:
        raise ConeParseError(f"line {first_no}: bad d={head['d']!r}") from exc
    kind = head["kind"]
    body = lines[1:]

    if kind == "orthant":
        if body:
            raise ConeParseError(f"line {body[0][0]}: orthant takes no body lines")
        return orthant(d)

    if kind == "subspace":
        if not body:
            raise ConeParseError("subspace requires a k=<int> line")
        kv = _parse_kv(body[0][1].split(), body[0][0])
        if "k" not in kv:
            raise ConeParseError(f"line {body[0][0]}: expected k=<int>")
        k = int(kv["k"])
        rows = body[1:]
        if rows and len(rows) != k:
            raise ConeParseError(
                f"line {rows[0][0]}: subspace basis needs exactly k={k} rows, "
                f"got {len(rows)}")
        basis = None
        if rows:
            # File rows are spanning vectors; orthonormalize before handing
            # them to the strict constructor.
            raw = _read_vector_rows(rows, d)
            q, r = np.linalg.qr(raw.T)
            if k > 0 and np.min(np.abs(np.diag(r))) < 1e-12:
                raise ConeParseError(
                    f"line {rows[0][0]}: basis rows are linearly dependent")
            basis = q.T
        return subspace(d, k, basis)

    if kind == "circular":
        if not body:
            raise ConeParseError("circular requires an alpha=<float> line")
        kv = _parse_kv(body[0][1].split(), body[0][0])
        if "alpha" not in kv:
            raise ConeParseError(f"line {body[0][0]}: expected alpha=<float>")
        alpha = float(kv["alpha"])
        rows = body[1:]
        if len(rows) > 1:
            raise ConeParseError(f"line {rows[1][0]}: at most one axis row")
        axis = _read_vector_rows(rows, d)[0] if rows else None
        return circular(d, alpha, axis)

    if kind == "rays":
        if not body:
            raise ConeParseError("rays requires at least one generator row")
        return rays(_read_vector_rows(body, d))

    if kind == "rotated":
        if not body:
            raise ConeParseError("rotated requires a plane=/theta=/base= line")
        kv = _parse_kv(body[0][1].split(), body[0][0])
        for key in ("plane", "theta", "base"):
            if key not in kv:
                raise ConeParseError(f"line {body[0][0]}: missing {key}=")
        try:
            i_str, j_str = kv["plane"].split(",")
            i, j = int(i_str), int(j_str)
            theta = float(kv["theta"])
        except ValueError as exc:
            raise ConeParseError(f"line {body[0][0]}: bad plane/theta") from exc
        base_path = Path(kv["base"])
        if not base_path.is_absolute():
            base_path = (base_dir or Path.cwd()) / base_path
        base = parse_cone_file(base_path)
        if base.dim != d:
            raise ConeParseError(
                f"base cone dimension {base.dim} does not match d={d}")
        return rotated(base, i, j, theta)

    raise ConeParseError(f"line {first_no}: unknown kind {kind!r}")


def _read_vector_rows(rows: list[tuple[int, str]], d: int) -> np.ndarray:
    out = []
    for line_no, line in rows:
        parts = line.split()
        try:
            vec = [float(p) for p in parts]
        except ValueError as exc:
            raise ConeParseError(f"line {line_no}: non-numeric entry") from exc
        if len(vec) != d:
            raise ConeParseError(
                f"line {line_no}: expected {d} components, got {len(vec)}")
        out.append(vec)
    return np.asarray(out, dtype=float)


def parse_cone_file(path: str | Path) -> Cone:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConeParseError(f"cannot read cone file {path}: {exc}") from exc
    return parse_cone_text(text, base_dir=path.parent)


def parse_cone_spec(spec: str | Path, base_dir: Path | None = None) -> Cone:
    """Inline grammar or a path to a cone file.

    Inline forms: ``orthant:d``, ``subspace:d,k``, ``circular:d,alpha``,
    ``rays:<path>``, ``rotated:<base>,<i>,<j>,<theta>`` where ``<base>`` is
    itself an inline spec (parsed from the right, so bases may contain
    commas).
    """
    if isinstance(spec, Path):
        return parse_cone_file(spec)
    s = spec.strip()
    inline_kinds = {"orthant", "subspace", "circular", "rays", "dual", "rotated"}
    if ":" not in s or s.split(":", 1)[0].strip().lower() not in inline_kinds:
        path = Path(s)
        if not path.is_absolute():
            path = (base_dir or Path.cwd()) / path
        return parse_cone_file(path)
    kind, args = s.split(":", 1)
    kind = kind.strip().lower()
    try:
        if kind == "orthant":
            return orthant(int(args))
        if kind == "subspace":
            d_str, k_str = args.split(",")
            return subspace(int(d_str), int(k_str))
        if kind == "circular":
            d_str, a_str = args.split(",")
            return circular(int(d_str), float(a_str))
        if kind == "rays":
            path = Path(args)
            if not path.is_absolute():
                path = (base_dir or Path.cwd()) / path
            return parse_cone_file(path)
        if kind == "dual":
            return dual(parse_cone_spec(args, base_dir=base_dir))
        if kind == "rotated":
            head, theta_str = args.rsplit(",", 1)
            head, j_str = head.rsplit(",", 1)
            base_spec, i_str = head.rsplit(",", 1)
            base = parse_cone_spec(base_spec, base_dir=base_dir)
            return rotated(base, int(i_str), int(j_str), float(theta_str))
    except (ValueError, ConeError) as exc:
        if isinstance(exc, ConeParseError):
            raise
        raise ConeParseError(f"malformed cone spec {s!r}: {exc}") from exc
    raise ConeParseError(f"unknown cone kind {kind!r} in spec {s!r}")


def make_cone(spec: str | Path) -> Cone:
    """Build a cone from an inline spec string or a cone file path."""
    return parse_cone_spec(spec)
