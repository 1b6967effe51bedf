"""Pass/fail reports shared by the inequality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckEntry:
    label: str
    observed: float
    bound: float
    ratio: float
    passed: bool
    vacuous: bool = False


def make_entry(label: str, observed: float, bound: float, tol: float, zero_tol: float = 1e-12):
    """Compare ``observed <= bound * (1 + tol)``.

    A zero bound with a (numerically) zero observation is a vacuous pass; its
    ratio is reported as NaN.
    """
    observed = float(observed)
    bound = float(bound)
    if bound <= zero_tol:
        ok = abs(observed) <= zero_tol
        return CheckEntry(label, observed, bound, math.nan if ok else math.inf, ok, vacuous=ok)
    ratio = observed / bound
    return CheckEntry(label, observed, bound, ratio, ratio <= 1.0 + tol)


@dataclass
class CheckReport:
    name: str
    tol: float
    entries: list = field(default_factory=list)

    def add(self, label, observed, bound, zero_tol: float = 1e-12) -> CheckEntry:
        e = make_entry(label, observed, bound, self.tol, zero_tol)
        self.entries.append(e)
        return e

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_ratio(self) -> float:
        rs = [e.ratio for e in self.entries if not e.vacuous]
        return max(rs) if rs else math.nan

    def __bool__(self):
        return self.passed

    def summary(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return f"{self.name}: {verdict} ({len(self.entries)} entries, max ratio {self.max_ratio:.6g})"
