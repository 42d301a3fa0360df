"""Performance measures with Monte Carlo standard errors.

Proportions (coverage, rejection, convergence) are reported on the percent
scale with MCSEs in percentage points. Every measure except convergence is
computed over converged rows only, and ``n_used`` records the denominator.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientData, InvalidParameter
from .records import EstimatesRecord, PerformanceEstimate

log = logging.getLogger(__name__)

MEASURES = (
    "convergence_pct", "bias", "mean", "empse", "rel_precision", "mse",
    "avg_modse", "rel_err_modse", "coverage", "be_coverage", "rejection_pct",
)
APPROXIMATE_MEASURES = frozenset({"rel_precision", "avg_modse", "rel_err_modse"})
# measure -> estimate columns it cannot do without
PREREQUISITES = {
    "convergence_pct": (),
    "bias": ("theta_hat",),
    "mean": ("theta_hat",),
    "empse": ("theta_hat",),
    "rel_precision": ("theta_hat",),
    "mse": ("theta_hat",),
    "avg_modse": ("se_hat",),
    "rel_err_modse": ("theta_hat", "se_hat"),
    "coverage": ("ci_low", "ci_high"),
    "be_coverage": ("theta_hat", "ci_low", "ci_high"),
    "rejection_pct": ("p_value",),
}
NEEDS_TRUTH = frozenset({"bias", "mse", "coverage"})


def _sum_sq_dev(x: np.ndarray) -> float:
    # constant input must give exactly 0, whatever rounding the mean picks up
    if x.size == 0 or np.ptp(x) == 0:
        return 0.0
    return float(np.sum((x - x.mean()) ** 2))


def bias(theta_hat, theta: float) -> tuple[float, float]:
    x = np.asarray(theta_hat, dtype=np.float64)
    n = x.size
    return float(x.mean() - theta), math.sqrt(_sum_sq_dev(x) / (n * (n - 1)))


def mean(theta_hat) -> tuple[float, float]:
    return bias(theta_hat, 0.0)


def empse(theta_hat) -> tuple[float, float]:
    x = np.asarray(theta_hat, dtype=np.float64)
    n = x.size
    est = math.sqrt(_sum_sq_dev(x) / (n - 1))
    return est, est / math.sqrt(2 * (n - 1))


def mse(theta_hat, theta: float) -> tuple[float, float]:
    x = np.asarray(theta_hat, dtype=np.float64)
    n = x.size
    sq = (x - theta) ** 2
    est = float(sq.mean())
    return est, math.sqrt(_sum_sq_dev(sq) / (n * (n - 1)))


def _var_of_var(se_hat) -> tuple[float, float, int]:
    v = np.asarray(se_hat, dtype=np.float64) ** 2
    n = v.size
    return float(v.mean()), _sum_sq_dev(v) / (n - 1), n


def avg_modse(se_hat) -> tuple[float, float]:
    mean_var, var_var, n = _var_of_var(se_hat)
    est = math.sqrt(mean_var)
    if var_var == 0.0:
        return est, 0.0
    return est, math.sqrt(var_var / (4 * n * est**2))


def rel_err_modse(theta_hat, se_hat) -> tuple[float, float]:
    emp, _ = empse(theta_hat)
    if emp == 0.0:
        raise InvalidParameter("relative error in ModSE is undefined when EmpSE is 0")
    mean_var, var_var, n = _var_of_var(se_hat)
    mod = math.sqrt(mean_var)
    ratio = mod / emp
    first = 0.0 if var_var == 0.0 else var_var / (4 * n * mod**4)
    return 100 * (ratio - 1), 100 * ratio * math.sqrt(first + 1 / (2 * (n - 1)))


def rel_precision(theta_hat, theta_hat_ref) -> tuple[float, float]:
    """Relative % increase in precision of a method versus a reference method.

    Both arrays must be paired by repetition.
    """
    b = np.asarray(theta_hat, dtype=np.float64)
    a = np.asarray(theta_hat_ref, dtype=np.float64)
    n = b.size
    emp_a, _ = empse(a)
    emp_b, _ = empse(b)
    if emp_b == 0.0:
        raise InvalidParameter("relative precision is undefined when EmpSE is 0")
    ratio_sq = (emp_a / emp_b) ** 2
    if emp_a == 0.0:
        corr = 0.0
    else:
        corr = float(np.corrcoef(a, b)[0, 1])
    one_minus = max(0.0, 1 - corr**2)
    return 100 * (ratio_sq - 1), 200 * ratio_sq * math.sqrt(one_minus / (n - 1))


def proportion_pct(indicator) -> tuple[float, float]:
    x = np.asarray(indicator, dtype=bool)
    n = x.size
    p = float(x.mean())
    return 100 * p, 100 * math.sqrt(p * (1 - p) / n)


def covers(ci_low, ci_high, value) -> np.ndarray:
    """Boundary hits count as covered."""
    return (np.asarray(ci_low) <= value) & (value <= np.asarray(ci_high))


def coverage(ci_low, ci_high, theta: float) -> tuple[float, float]:
    return proportion_pct(covers(ci_low, ci_high, theta))


def be_coverage(theta_hat, ci_low, ci_high) -> tuple[float, float]:
    return coverage(ci_low, ci_high, float(np.mean(theta_hat)))


def rejection_pct(p_values, alpha: float) -> tuple[float, float]:
    return proportion_pct(np.asarray(p_values) <= alpha)


@dataclass
class _Cell:
    rows: list[EstimatesRecord]

    def converged(self, *fields: str) -> list[EstimatesRecord]:
        return [r for r in self.rows if r.converged and all(getattr(r, f) is not None for f in fields)]


def _ordered_unique(values: Iterable) -> list:
    return list(dict.fromkeys(values))


def group_cells(records: Sequence[EstimatesRecord]):
    cells: dict[tuple[str, str, str], _Cell] = {}
    for r in records:
        cells.setdefault((r.dgm_id, r.method_id, r.estimand_id), _Cell([])).rows.append(r)
    return cells


def summarize(
    records: Sequence[EstimatesRecord],
    true_theta: Mapping[tuple[str, str], float] | None = None,
    alpha: float = 0.05,
    measures: Sequence[str] = MEASURES,
    comparator: str | None = None,
    available: set[str] | None = None,
) -> list[PerformanceEstimate]:
    """Estimate each requested measure for every (dgm, method, estimand) cell.

    ``true_theta`` maps (dgm_id, estimand_id) to the true value. Measures whose
    prerequisites are missing (no truth, absent columns, fewer than two usable
    rows) are skipped with a warning.
    """
    unknown = [m for m in measures if m not in MEASURES]
    if unknown:
        raise InvalidParameter(f"unknown measures {unknown}")
    true_theta = dict(true_theta or {})
    cells = group_cells(records)
    dgms = _ordered_unique(r.dgm_id for r in records)
    methods = _ordered_unique(r.method_id for r in records)
    estimands = _ordered_unique(r.estimand_id for r in records)
    out: list[PerformanceEstimate] = []

    for measure in measures:
        needs = PREREQUISITES[measure]
        if available is not None and any(col not in available for col in needs):
            log.warning("skipping %s: estimates lack column(s) %s", measure, ", ".join(needs))
            continue
        if measure == "rel_precision" and comparator is None:
            log.warning("skipping rel_precision: no comparator method given")
            continue
        for dgm in dgms:
            for estimand in estimands:
                theta = true_theta.get((dgm, estimand))
                if measure in NEEDS_TRUTH and theta is None:
                    log.warning("skipping %s for dgm %s: true value unknown", measure, dgm)
                    continue
                for method in methods:
                    cell = cells.get((dgm, method, estimand))
                    if cell is None:
                        continue
                    pe = _one(measure, cell, cells, dgm, method, estimand, theta, alpha, comparator)
                    if pe is not None:
                        out.append(pe)
    return out


def _one(measure, cell, cells, dgm, method, estimand, theta, alpha, comparator):
    def make(value, n, comp=None):
        est, se = value
        return PerformanceEstimate(dgm, method, estimand, measure, est, se, n, comp,
                                   measure in APPROXIMATE_MEASURES)

    if measure == "convergence_pct":
        n = len(cell.rows)
        return make(proportion_pct([r.converged for r in cell.rows]), n)

    if measure == "rel_precision":
        if method == comparator:
            n = len(cell.converged("theta_hat"))
            return PerformanceEstimate(dgm, method, estimand, measure, 0.0, None, n, comparator, True)
        ref = cells.get((dgm, comparator, estimand))
        if ref is None:
            log.warning("skipping rel_precision for dgm %s: comparator %s absent", dgm, comparator)
            return None
        mine = {r.repetition: r.theta_hat for r in cell.converged("theta_hat")}
        theirs = {r.repetition: r.theta_hat for r in ref.converged("theta_hat")}
        paired = sorted(set(mine) & set(theirs))
        if len(paired) < 2:
            log.warning("skipping rel_precision for %s/%s: fewer than 2 paired rows", dgm, method)
            return None
        try:
            value = rel_precision([mine[i] for i in paired], [theirs[i] for i in paired])
        except InvalidParameter as exc:
            log.warning("skipping rel_precision for %s/%s: %s", dgm, method, exc)
            return None
        return make(value, len(paired), comparator)

    rows = cell.converged(*PREREQUISITES[measure])
    n = len(rows)
    if n < 2:
        log.warning("skipping %s for %s/%s: only %d usable rows", measure, dgm, method, n)
        return None
    th = np.array([r.theta_hat for r in rows]) if "theta_hat" in PREREQUISITES[measure] else None
    se = np.array([r.se_hat for r in rows]) if "se_hat" in PREREQUISITES[measure] else None
    if measure == "bias":
        return make(bias(th, theta), n)
    if measure == "mean":
        return make(mean(th), n)
    if measure == "empse":
        return make(empse(th), n)
    if measure == "mse":
        return make(mse(th, theta), n)
    if measure == "avg_modse":
        return make(avg_modse(se), n)
    if measure == "rel_err_modse":
        try:
            return make(rel_err_modse(th, se), n)
        except InvalidParameter as exc:
            log.warning("skipping rel_err_modse for %s/%s: %s", dgm, method, exc)
            return None
    lo = np.array([r.ci_low for r in rows]) if measure in ("coverage", "be_coverage") else None
    hi = np.array([r.ci_high for r in rows]) if lo is not None else None
    if measure == "coverage":
        return make(coverage(lo, hi, theta), n)
    if measure == "be_coverage":
        return make(be_coverage(th, lo, hi), n)
    if measure == "rejection_pct":
        return make(rejection_pct([r.p_value for r in rows], alpha), n)
    raise InvalidParameter(measure)


def conditional_coverage(records: Sequence[EstimatesRecord], theta: float, groups: int = 3) -> list[dict]:
    """Coverage within equal-size bins of ascending model SE, plus overall.

    ``records`` should hold a single (dgm, method, estimand) cell. Ties in
    se_hat are broken by repetition index. Returns dicts with keys
    ``group`` ("all" or 1..groups, 1 = smallest SEs), ``n``, ``coverage`` and
    ``mcse`` (percent scale).
    """
    if groups < 1:
        raise InvalidParameter("groups must be positive")
    rows = [r for r in records if r.converged and r.ci_low is not None and r.ci_high is not None]
    if len(rows) < max(groups, 2):
        raise InsufficientData(f"{len(rows)} usable rows for {groups} groups")
    rows.sort(key=lambda r: (r.se_hat, r.repetition))
    cov = covers([r.ci_low for r in rows], [r.ci_high for r in rows], theta)
    est, se = proportion_pct(cov)
    out = [{"group": "all", "n": len(rows), "coverage": est, "mcse": se}]
    for k, part in enumerate(np.array_split(cov, groups), start=1):
        est, se = proportion_pct(part)
        out.append({"group": k, "n": int(part.size), "coverage": est, "mcse": se})
    return out


def required_nsim(kind: str, expected: float | None = None, target_mcse: float = 0.5,
                  var_theta: float | None = None) -> int:
    """Repetitions needed to bring a Monte Carlo SE down to ``target_mcse``.

    ``coverage_or_power``: ``expected`` and ``target_mcse`` in percent.
    ``bias``: needs ``var_theta``, the anticipated variance of the estimator.
    """
    if not target_mcse or target_mcse <= 0:
        raise InvalidParameter("target_mcse must be positive")
    if kind == "coverage_or_power":
        if expected is None or not 0 < expected < 100:
            raise InvalidParameter("expected coverage/power must lie strictly between 0 and 100")
        raw = expected * (100 - expected) / target_mcse**2
    elif kind == "bias":
        if var_theta is None or var_theta <= 0:
            raise InvalidParameter("var_theta must be positive for the bias calculation")
        raw = var_theta / target_mcse**2
    else:
        raise InvalidParameter(f"unknown kind {kind!r}")
    # absorb floating-point noise such as 1600.0000000000002
    return max(1, math.ceil(raw * (1 - 1e-12)))


def coverage_under_bias(bias_over_se: float, alpha: float = 0.05) -> float:
    """Coverage of a correct-width normal interval when the estimator is biased."""
    if not 0 < alpha < 1:
        raise InvalidParameter("alpha must lie in (0, 1)")
    z = float(stats.norm.ppf(1 - alpha / 2))
    b = abs(bias_over_se)
    return float(stats.norm.cdf(b + z) - stats.norm.cdf(b - z))


def missingness_report(records: Sequence[EstimatesRecord]) -> dict[tuple[str, str], Counter]:
    """Per (dgm, method): number of repetitions converged and failed by error code."""
    per_rep: dict[tuple[str, str], dict[int, str]] = {}
    for r in records:
        reps = per_rep.setdefault((r.dgm_id, r.method_id), {})
        code = "converged" if r.converged else r.error_code
        if reps.get(r.repetition, "converged") == "converged":
            reps[r.repetition] = code
    out = {}
    for key, reps in per_rep.items():
        counts = Counter({"converged": 0, "nonconvergence": 0, "separation": 0, "no_events": 0, "numeric": 0})
        counts.update(reps.values())
        out[key] = counts
    return out
