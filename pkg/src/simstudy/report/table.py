"""Performance tables with MCSE-governed rounding."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from ..records import PerformanceEstimate
from .svg import sidecar_csv

DEFAULT_DECIMALS = 3
MAX_DECIMALS = 6
PERCENT_MEASURES = frozenset({"convergence_pct", "coverage", "be_coverage", "rejection_pct",
                              "rel_precision", "rel_err_modse"})
LABELS = {
    "convergence_pct": "Convergence",
    "bias": "Bias",
    "mean": "Mean",
    "empse": "Empirical SE",
    "rel_precision": "Relative precision gain",
    "mse": "MSE",
    "avg_modse": "Model SE",
    "rel_err_modse": "Relative error in Model SE",
    "coverage": "Coverage",
    "be_coverage": "Bias-eliminated coverage",
    "rejection_pct": "Rejection",
}


def decimals_for(mcse: float | None) -> int:
    """Number of decimals such that the last printed digit's unit is <= mcse.

    Uses the fewest such decimals. A missing or zero MCSE falls back to 3.
    """
    if mcse is None or not math.isfinite(mcse) or mcse <= 0:
        return DEFAULT_DECIMALS
    d = max(0, math.ceil(-math.log10(mcse)))
    while d < MAX_DECIMALS and 10.0**-d > mcse:
        d += 1
    while d > 0 and 10.0 ** -(d - 1) <= mcse:
        d -= 1
    return min(d, MAX_DECIMALS)


def format_cell(estimate: float, mcse: float | None, percent: bool = False) -> tuple[str, str, int]:
    """Return (estimate text, parenthesized MCSE text, decimals)."""
    d = decimals_for(mcse)
    est = f"{estimate:.{d}f}"
    if est.startswith("-") and float(est) == 0:
        est = est[1:]
    if percent:
        est += "%"
    if mcse is None:
        se = "(--)"
    elif mcse == 0:
        se = f"({0:.{d}f})"
    elif mcse < 0.0005:
        se = "(<0.001)"
    else:
        se = f"({mcse:.{d}f})"
    return est, se, d


def render_table(
    perf: Sequence[PerformanceEstimate],
    dgm_labels: Mapping[str, str] | None = None,
    measures: Sequence[str] | None = None,
) -> tuple[str, str]:
    """Plain-text table (measures stacked, DGMs as rows, methods side by side) plus CSV sidecar."""
    dgm_labels = dict(dgm_labels or {})
    measures = list(measures or dict.fromkeys(p.measure for p in perf))
    dgms = list(dict.fromkeys(p.dgm_id for p in perf))
    methods = list(dict.fromkeys(p.method_id for p in perf))
    estimands = list(dict.fromkeys(p.estimand_id for p in perf))
    index = {(p.measure, p.dgm_id, p.method_id, p.estimand_id): p for p in perf}

    header = ["Performance measure", "DGM"] + (["Estimand"] if len(estimands) > 1 else []) + methods
    body: list[list[str]] = []
    side: list[dict] = []
    any_approx = False
    for measure in measures:
        first = True
        for dgm in dgms:
            for estimand in estimands:
                cells = []
                present = False
                for method in methods:
                    p = index.get((measure, dgm, method, estimand))
                    if p is None:
                        cells.append("")
                        continue
                    present = True
                    any_approx |= p.approximate
                    est, se, d = format_cell(p.estimate, p.mcse, measure in PERCENT_MEASURES)
                    cells.append(f"{est} {se}")
                    side.append({
                        "measure": measure, "dgm_id": dgm, "dgm_label": dgm_labels.get(dgm, dgm),
                        "estimand_id": estimand, "method_id": method, "estimate_text": est, "mcse_text": se,
                        "decimals": d, "estimate": p.estimate, "mcse": "" if p.mcse is None else p.mcse,
                        "n_used": p.n_used,
                    })
                if not present:
                    continue
                label = LABELS.get(measure, measure) + ("*" if measure in {"rel_precision", "avg_modse",
                                                                            "rel_err_modse"} else "")
                row = [label if first else "", dgm_labels.get(dgm, dgm)]
                if len(estimands) > 1:
                    row.append(estimand)
                body.append(row + cells)
                first = False

    widths = [max(len(r[c]) for r in [header] + body) for c in range(len(header))]
    n_left = 3 if len(estimands) > 1 else 2

    def fmt(row):
        parts = [row[c].ljust(widths[c]) if c < n_left else row[c].rjust(widths[c]) for c in range(len(row))]
        return "  ".join(parts).rstrip()

    rule = "-" * len(fmt(header))
    lines = [fmt(header), rule]
    prev_measure_row = None
    for row in body:
        if row[0] and prev_measure_row is not None:
            lines.append(rule)
        lines.append(fmt(row))
        prev_measure_row = row
    lines.append(rule)
    lines.append("Monte Carlo SEs in parentheses.")
    if any_approx:
        lines.append("* Monte Carlo SEs are approximate.")
    return "\n".join(lines) + "\n", sidecar_csv(side)
