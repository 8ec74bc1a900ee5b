"""Experiment records and log-log rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Row:
    knob: float
    error: float
    stderr: float
    M: int = 0


@dataclass(frozen=True)
class Check:
    """One bound-conformance record: ``actual <= bound`` is the pass condition."""

    label: str
    actual: float
    bound: float
    hard: bool = False

    @property
    def satisfied(self) -> bool:
        return bool(self.actual <= self.bound)


@dataclass
class ExperimentReport:
    name: str
    knob_name: str
    rows: list = field(default_factory=list)
    slope: float = math.nan
    slope_ci: tuple = (math.nan, math.nan)
    checks: list = field(default_factory=list)
    runtime_s: float = 0.0
    notes: str = ""

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.knob)

    @property
    def passed(self) -> bool:
        return all(c.satisfied for c in self.checks)

    @property
    def hard_failures(self) -> list:
        return [c for c in self.checks if c.hard and not c.satisfied]

    def summary(self) -> str:
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        if not math.isnan(self.slope):
            lo, hi = self.slope_ci
            lines.append(f"  slope {self.slope:.3f}  (95% CI {lo:.3f} .. {hi:.3f})")
        for c in self.checks:
            flag = "ok " if c.satisfied else "BAD"
            lines.append(f"  {flag} {c.label}: {c.actual:.6g} <= {c.bound:.6g}")
        if self.notes:
            lines.append(f"  note: {self.notes}")
        return "\n".join(lines)


def fit_rate(rows) -> tuple[float, tuple[float, float]]:
    """Weighted least-squares slope of log(error) against log(knob).

    Each point is weighted by ``(error / stderr)^2``, the inverse variance of
    ``log(error)`` to first order.  Rows with zero stderr fall back to an
    unweighted fit.  The 95% interval uses the weighted covariance,
    inflated by the reduced chi-square when the scatter exceeds the
    stated stderrs.  Rows with non-positive error are dropped.
    """
    pts = [r for r in rows if r.error > 0 and r.knob > 0]
    if len(pts) < 2:
        return math.nan, (math.nan, math.nan)
    x = np.log([r.knob for r in pts])
    y = np.log([r.error for r in pts])
    se = np.array([r.stderr for r in pts], dtype=float)
    have_se = np.all(se > 0) and np.all(np.isfinite(se))
    w = (np.array([r.error for r in pts]) / se) ** 2 if have_se else np.ones_like(x)

    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    slope = float(beta[1])
    n = len(pts)
    if n <= 2:
        if not have_se:
            return slope, (-math.inf, math.inf)
        half = 1.96 * math.sqrt(cov[1, 1])
        return slope, (slope - half, slope + half)
    resid = y - X @ beta
    chi2 = float(np.sum(w * resid**2)) / (n - 2)
    scale = max(chi2, 1.0) if have_se else chi2
    half = float(stats.t.ppf(0.975, n - 2)) * math.sqrt(cov[1, 1] * scale)
    return slope, (slope - half, slope + half)
