"""Pass/fail record shared by every verification check."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class VerificationReport:
    check_name: str
    passed: bool
    max_deviation: float
    tolerance: float
    witnesses: tuple = ()

    @classmethod
    def from_deviation(cls, name, deviation, tolerance, witness=None):
        deviation = float(deviation)
        passed = deviation <= tolerance
        witnesses = (witness,) if (witness is not None and not passed) else ()
        return cls(name, passed, deviation, float(tolerance), witnesses)

    @classmethod
    def merge(cls, name, reports, tolerance=None):
        """Combine partial reports by maximum deviation."""
        reports = list(reports)
        tol = tolerance if tolerance is not None else max(r.tolerance for r in reports)
        dev = max((r.max_deviation for r in reports), default=0.0)
        wit = tuple(w for r in reports for w in r.witnesses)
        return cls(name, all(r.passed for r in reports), dev, tol, wit)

    def as_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "max_deviation": float(self.max_deviation),
            "tolerance": float(self.tolerance),
        }
