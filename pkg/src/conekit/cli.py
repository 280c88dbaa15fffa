"""Command-line front end: experiments composed from the library modules.

Every run writes its tabular result (CSV by default, JSON with
``--format json``) plus a manifest JSON sidecar holding the full
configuration, package version, and cone hashes, so any output can be
reproduced from its manifest alone.  All floating-point output is rendered
at 12 significant digits; reruns with the same configuration are
byte-identical regardless of worker count.

Exit codes: 0 all checks passed (or nothing to check), 1 a check failed,
2 configuration/parse error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cones import (BiconicError, BiconicSet, ConeError, ConeParseError,
                    ambient_dim, biconic_all, cap_product, cone_hash,
                    parse_cone_spec, rotated)
from .measures import (STREAM_A, STREAM_B, EmpiricalConicMeasure,
                       EstimationError, intrinsic_volumes_mc)
from .metrics import (AngularHausdorffOptions, MetricError, angular_hausdorff,
                      dbl_distance, holder_experiment)
from .projection import ProjectionError, stability_scan
from .reporting import fmt12
from .steiner import (SteinerError, g_coeff, I_coeff, local_steiner_check,
                      master_steiner_check, parse_f_tag)
from .measures import gaussian_sample

COMMANDS = ("intrinsic-volumes", "steiner-check", "local-steiner-check",
            "holder-curve", "projection-bounds", "steiner-table", "distance")


@dataclass
class ExperimentConfig:
    """Everything a run needs; serialized verbatim into the manifest."""

    command: str
    cone: str | None = None
    cone2: str | None = None
    measure: str | None = None
    measure2: str | None = None
    d: int | None = None
    n: int = 100000
    seed: int = 0
    lambdas: list[float] = field(default_factory=list)
    f: str | None = None
    eta: str = "all"
    plane: tuple[int, int] = (1, 2)
    thetas: list[float] = field(default_factory=list)
    theta: float | None = None
    k: list[int] = field(default_factory=lambda: [1])
    out: str | None = None
    format: str = "csv"
    certify: bool = False
    pitch: float = 1e-3

    def manifest_dict(self) -> dict:
        return {
            "command": self.command,
            "cone": self.cone, "cone2": self.cone2,
            "measure": self.measure, "measure2": self.measure2,
            "d": self.d, "n": self.n, "seed": self.seed,
            "lambdas": self.lambdas, "f": self.f, "eta": self.eta,
            "plane": list(self.plane), "thetas": self.thetas,
            "theta": self.theta, "k": self.k,
            "out": self.out, "format": self.format,
            "certify": self.certify, "pitch": self.pitch,
        }


def parse_eta_tag(tag: str) -> BiconicSet:
    """Inline grammar: ``all`` or ``cap_product:<c>,<angle>,<c>,<angle>``.

    A center ``<c>`` is ``e<i>``/``-e<i>`` for a coordinate direction or
    ``x``-separated floats (e.g. ``1x0x0``); an angle is a float or ``pi``.
    """
    s = tag.strip()
    if s == "all":
        return biconic_all()
    if s.startswith("cap_product:"):
        parts = s.split(":", 1)[1].split(",")
        if len(parts) != 4:
            raise BiconicError(
                f"cap_product needs center,angle,center,angle — got {tag!r}")

        def center(spec: str) -> np.ndarray:
            spec = spec.strip()
            sign = 1.0
            if spec.startswith("-"):
                sign, spec = -1.0, spec[1:]
            if spec.startswith("e") and spec[1:].isdigit():
                idx = int(spec[1:])
                if idx < 1:
                    raise BiconicError(f"coordinate index must be >= 1: {spec}")
                v = np.zeros(max(idx, 1))
                v[idx - 1] = sign
                return v
            try:
                return sign * np.array([float(t) for t in spec.split("x")])
            except ValueError as exc:
                raise BiconicError(f"malformed cap center {spec!r}") from exc

        def angle(spec: str) -> float:
            spec = spec.strip()
            if spec == "pi":
                return math.pi
            try:
                return float(spec)
            except ValueError as exc:
                raise BiconicError(f"malformed cap angle {spec!r}") from exc

        return cap_product(center(parts[0]), angle(parts[1]),
                           center(parts[2]), angle(parts[3]))
    raise BiconicError(f"unknown eta tag {tag!r}")


def _pad_center(eta: BiconicSet, d: int) -> BiconicSet:
    """cap centers given as e<i> carry no dimension; pad them to d."""
    if eta.kind != "cap_product":
        return eta
    cu, cv = eta.center_u, eta.center_v
    if cu.shape[0] == d and cv.shape[0] == d:
        return eta
    if cu.shape[0] > d or cv.shape[0] > d:
        raise BiconicError(
            f"cap center dimension exceeds the cone's ambient dimension {d}")
    pu = np.zeros(d)
    pu[:cu.shape[0]] = cu
    pv = np.zeros(d)
    pv[:cv.shape[0]] = cv
    return cap_product(pu, eta.theta_u, pv, eta.theta_v)


# ---------------------------------------------------------------------------
# Output plumbing


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        return float(fmt12(float(x)))
    if isinstance(x, (int, np.integer)):
        return int(x)
    return x


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return fmt12(float(x))
    return str(x)


def _write_output(cfg: ExperimentConfig, columns: list[str],
                  rows: list[dict], cone_hashes: dict) -> Path:
    out = Path(cfg.out or f"{cfg.command}.{cfg.format}")
    if cfg.format == "csv":
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row[c]) for c in columns])
    else:
        payload = [{c: _jsonable(r[c]) for c in columns} for r in rows]
        with open(out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    manifest = {
        "package": "conekit",
        "version": f"conekit-{__version__}",
        "command": cfg.command,
        "config": cfg.manifest_dict(),
        "cone_hashes": cone_hashes,
        "streams": {"cone-A": STREAM_A, "cone-B": STREAM_B},
        "output": out.name,
        "columns": columns,
    }
    with open(str(out) + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


# ---------------------------------------------------------------------------
# Command implementations (each returns (columns, rows, hashes, n_failed))


def _cmd_intrinsic_volumes(cfg: ExperimentConfig):
    cone = parse_cone_spec(cfg.cone)
    est = intrinsic_volumes_mc(cone, cfg.n, cfg.seed)
    rows = [{"k": k, "value": est.values[k], "stderr": est.stderr[k],
             "count": int(est.counts[k])}
            for k in range(est.values.shape[0])]
    return (["k", "value", "stderr", "count"], rows,
            {"cone": cone_hash(cone)}, 0)


def _check_row(report) -> dict:
    row = report.row()
    return {"name": row["name"], "lhs": row["lhs"], "rhs": row["rhs"],
            "stderr_combined": row["stderr_combined"],
            "sigmas": row["sigmas"], "pass": row["pass"],
            "details": row["details"]}


_CHECK_COLUMNS = ["name", "lhs", "rhs", "stderr_combined", "sigmas", "pass",
                  "details"]


def _cmd_steiner_check(cfg: ExperimentConfig):
    cone = parse_cone_spec(cfg.cone)
    f = parse_f_tag(cfg.f or "one")
    eta = _pad_center(parse_eta_tag(cfg.eta), ambient_dim(cone))
    grid = cfg.lambdas or None
    rep = master_steiner_check(cone, f, eta, cfg.n, cfg.seed,
                               lambda_grid=grid)
    rows = [_check_row(rep)]
    return (_CHECK_COLUMNS, rows, {"cone": cone_hash(cone)},
            0 if rep.passed else 1)


def _cmd_local_steiner_check(cfg: ExperimentConfig):
    cone = parse_cone_spec(cfg.cone)
    eta = _pad_center(parse_eta_tag(cfg.eta), ambient_dim(cone))
    lams = cfg.lambdas or [0.5]
    rows = []
    failed = 0
    for lam in lams:
        rep = local_steiner_check(cone, lam, eta, cfg.n, cfg.seed)
        rows.append(_check_row(rep))
        failed += 0 if rep.passed else 1
    return _CHECK_COLUMNS, rows, {"cone": cone_hash(cone)}, failed


def _cmd_holder_curve(cfg: ExperimentConfig):
    cone = parse_cone_spec(cfg.cone)
    thetas = cfg.thetas or [0.4, 0.2, 0.1, 0.05]
    result = holder_experiment(cone, cfg.plane, thetas, cfg.k, cfg.n,
                               cfg.seed)
    rows = [{"theta": r["theta"], "k": r["k"], "dbl": r["dbl"],
             "dbl_over_sqrt_theta": r["dbl_over_sqrt_theta"],
             "N": r["n"], "seed": r["seed"]} for r in result["rows"]]
    failed = 0
    for k, s in result["summary"].items():
        ok = (s["ratio_spread"] <= 10.0
              and s["monotonicity_inversions"] <= 1
              and s["coupling_bound_ok"])
        print(f"k={k}: ratio_spread={fmt12(s['ratio_spread'])} "
              f"inversions={s['monotonicity_inversions']} "
              f"bound_ok={s['coupling_bound_ok']} -> "
              f"{'pass' if ok else 'FAIL'}")
        failed += 0 if ok else 1
    if cfg.certify and ambient_dim(cone) <= 3:
        opts = AngularHausdorffOptions(certify=True, pitch=cfg.pitch)
        i, j = cfg.plane
        for theta in sorted(thetas):
            rep = angular_hausdorff(cone, rotated(cone, i, j, theta), opts)
            bracket_ok = (rep.value <= theta + 1e-9
                          and theta <= rep.value + rep.gap + 1e-9)
            print(f"theta={fmt12(theta)}: certified delta_a in "
                  f"[{fmt12(rep.value)}, {fmt12(rep.value + rep.gap)}] "
                  f"{'pass' if bracket_ok else 'FAIL'}")
            failed += 0 if bracket_ok else 1
    return (["theta", "k", "dbl", "dbl_over_sqrt_theta", "N", "seed"], rows,
            {"cone": cone_hash(cone)}, failed)


def _cmd_projection_bounds(cfg: ExperimentConfig):
    cone = parse_cone_spec(cfg.cone)
    theta = cfg.theta if cfg.theta is not None else 0.2
    i, j = cfg.plane
    other = rotated(cone, i, j, theta)
    X = gaussian_sample(ambient_dim(cone), cfg.n, cfg.seed)
    scan = stability_scan(cone, other, X, theta)
    row = {"theta": theta, **scan}
    cols = ["theta", "n", "euclidean_violations", "euclidean_worst_margin",
            "angular_checked", "angular_skipped", "angular_violations",
            "angular_worst_margin"]
    failed = int(scan["euclidean_violations"] > 0
                 or scan["angular_violations"] > 0)
    return (cols, [row],
            {"cone": cone_hash(cone), "cone2": cone_hash(other)}, failed)


def _cmd_steiner_table(cfg: ExperimentConfig):
    if cfg.d is None:
        raise SteinerError("steiner-table requires --d")
    d = cfg.d
    rows = []
    for lam in cfg.lambdas:
        for k in range(1, d + 1):
            rows.append({"d": d, "k": k, "lambda_or_ftag": fmt12(lam),
                         "value": g_coeff(d, k, lam)})
    for tag in (cfg.f.split(";") if cfg.f else []):
        f = parse_f_tag(tag)
        for k in range(0, d + 1):
            rows.append({"d": d, "k": k, "lambda_or_ftag": f.name,
                         "value": I_coeff(f, d, k)})
    if not rows:
        raise SteinerError(
            "steiner-table needs --lambdas and/or --f to know what to emit")
    return ["d", "k", "lambda_or_ftag", "value"], rows, {}, 0


def _cmd_distance(cfg: ExperimentConfig):
    if cfg.cone and cfg.cone2:
        C = parse_cone_spec(cfg.cone)
        D = parse_cone_spec(cfg.cone2)
        opts = AngularHausdorffOptions(certify=cfg.certify, pitch=cfg.pitch)
        rep = angular_hausdorff(C, D, opts)
        hashes = {"cone": cone_hash(C), "cone2": cone_hash(D)}
        kind = "angular-hausdorff"
    elif cfg.measure and cfg.measure2:
        mu = EmpiricalConicMeasure.load(cfg.measure)
        nu = EmpiricalConicMeasure.load(cfg.measure2)
        rep = dbl_distance(mu, nu)
        hashes = {"measure": mu.cone_spec_hash, "measure2": nu.cone_spec_hash}
        kind = "bounded-lipschitz"
    else:
        raise ConeError("distance needs either --cone/--cone2 or "
                        "--measure/--measure2")
    row = {"kind": kind, "value": rep.value, "method": rep.method,
           "gap": rep.gap, "iterations": rep.iterations}
    return ["kind", "value", "method", "gap", "iterations"], [row], hashes, 0


_IMPLS = {
    "intrinsic-volumes": _cmd_intrinsic_volumes,
    "steiner-check": _cmd_steiner_check,
    "local-steiner-check": _cmd_local_steiner_check,
    "holder-curve": _cmd_holder_curve,
    "projection-bounds": _cmd_projection_bounds,
    "steiner-table": _cmd_steiner_table,
    "distance": _cmd_distance,
}


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; writes output + manifest, returns exit code."""
    try:
        columns, rows, hashes, failed = _IMPLS[config.command](config)
        out = _write_output(config, columns, rows, hashes)
    except (ConeParseError, ConeError, BiconicError, SteinerError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, ProjectionError, MetricError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out} ({len(rows)} rows) + manifest")
    if failed:
        print(f"{failed} check(s) FAILED", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _plane(text: str) -> tuple[int, int]:
    parts = _ints(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("plane must be i,j")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conekit",
        description="Cone projections, boundary measures, and distances")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cone=True):
        if cone:
            p.add_argument("--cone", required=True,
                           help="inline spec (orthant:3, subspace:4,2, "
                                "circular:3,0.7, rays:path, rotated:...) "
                                "or a cone file path")
        p.add_argument("--n", type=int, default=100000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("intrinsic-volumes",
                       help="Gaussian face-degree histogram of a cone")
    common(p)

    p = sub.add_parser("steiner-check",
                       help="moment identity: functional mean vs expansion")
    common(p)
    p.add_argument("--f", default="one", help="f tag (one, norm_sq_c, "
                   "norm_sq_polar, moment:m,n, steiner_indicator:lam)")
    p.add_argument("--eta", default="all",
                   help="all or cap_product:c,angle,c,angle")
    p.add_argument("--lambdas", type=_floats, default=[],
                   help="inversion grid override (circular cones)")

    p = sub.add_parser("local-steiner-check",
                       help="parallel-mass identity at given angles")
    common(p)
    p.add_argument("--lambdas", type=_floats, default=[0.5])
    p.add_argument("--eta", default="all")

    p = sub.add_parser("holder-curve",
                       help="measure distance under small cone rotations")
    common(p)
    p.add_argument("--plane", type=_plane, default=(1, 2))
    p.add_argument("--thetas", type=_floats, default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--k", type=_ints, default=[1])
    p.add_argument("--certify", action="store_true")
    p.add_argument("--pitch", type=float, default=1e-3)

    p = sub.add_parser("projection-bounds",
                       help="projection stability bounds on a rotation pair")
    common(p)
    p.add_argument("--plane", type=_plane, default=(1, 2))
    p.add_argument("--theta", type=float, default=0.2)

    p = sub.add_parser("steiner-table",
                       help="coefficient tables by quadrature")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--lambdas", type=_floats, default=[])
    p.add_argument("--f", default=None,
                   help="semicolon-separated f tags for moment coefficients")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("distance",
                       help="angular distance of cones or bounded-Lipschitz "
                            "distance of saved measures")
    p.add_argument("--cone", default=None)
    p.add_argument("--cone2", default=None)
    p.add_argument("--measure", default=None)
    p.add_argument("--measure2", default=None)
    p.add_argument("--certify", action="store_true")
    p.add_argument("--pitch", type=float, default=1e-3)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(command=args.command)
    for name in ("cone", "cone2", "measure", "measure2", "d", "n", "seed",
                 "lambdas", "f", "eta", "plane", "thetas", "theta", "k",
                 "out", "format", "certify", "pitch"):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    return cfg


def config_from_manifest(path: str | Path) -> ExperimentConfig:
    """Rebuild a runnable configuration from a manifest sidecar."""
    with open(path) as fh:
        manifest = json.load(fh)
    raw = manifest["config"]
    cfg = ExperimentConfig(command=raw["command"])
    for name, value in raw.items():
        if name == "plane" and value is not None:
            cfg.plane = (int(value[0]), int(value[1]))
        elif value is not None and hasattr(cfg, name):
            setattr(cfg, name, value)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(config_from_args(args))
    except Exception as exc:      # noqa: BLE001 — last-resort barrier
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
