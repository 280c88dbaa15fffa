"""Shared result records for estimators and identity checks."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    n: int

    def __iter__(self):
        # allows `est, err = phi_f_mc(...)` style unpacking
        yield self.value
        yield self.stderr


@dataclass(frozen=True)
class CheckReport:
    """Two-sided identity check; MC checks pass at the 4-sigma convention.

    For deterministic checks stderr_combined is 0 and the absolute tolerance
    used is recorded in details.
    """

    name: str
    lhs: float
    rhs: float
    stderr_combined: float
    sigmas: float
    passed: bool
    details: str = ""

    @staticmethod
    def from_mc(name: str, lhs: float, rhs: float, stderr_combined: float,
                details: str = "", n_sigmas: float = 4.0) -> "CheckReport":
        diff = abs(lhs - rhs)
        # both sides of an identity can be exact counts (stderr 0) yet
        # differ by accumulation roundoff from the O(d) flops that built
        # them; anything under a few dozen ulps is equality
        if diff <= 64.0 * math.ulp(max(1.0, abs(lhs), abs(rhs))):
            sigmas = 0.0
        elif stderr_combined > 0:
            sigmas = diff / stderr_combined
        else:
            sigmas = math.inf
        return CheckReport(name=name, lhs=float(lhs), rhs=float(rhs),
                           stderr_combined=float(stderr_combined),
                           sigmas=float(sigmas),
                           passed=bool(sigmas <= n_sigmas),
                           details=details)

    def row(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "stderr_combined": self.stderr_combined,
            "sigmas": self.sigmas,
            "pass": self.passed,
            "details": self.details,
        }


@dataclass(frozen=True)
class DistanceReport:
    """Distance value plus provenance (which tier/solver produced it)."""

    value: float
    method: str
    iterations: int = 0
    gap: float = 0.0
    certificate: dict | None = None


def fmt12(x: float) -> str:
    """Deterministic 12-significant-digit rendering used by all writers."""
    return f"{float(x):.12g}"
