"""Glue between engine, performance estimation and reporting, plus the two
built-in example studies."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

from .config import StudyConfig, validate
from .engine import StudyResult, run_study, truth_from_manifest
from .perf import conditional_coverage, missingness_report, summarize
from .records import PerformanceEstimate, write_performance, write_text
from .report import (
    render_diff_vs_mean, render_lollipop, render_nested_loop, render_scatter_matrix, render_strip,
    format_cell, render_table, render_zip_plot,
)
from .report.svg import sidecar_csv

log = logging.getLogger(__name__)

WORKED_EXAMPLE_SEED = 72789
TABLE_MEASURES = ["bias", "coverage", "be_coverage", "empse", "rel_precision", "avg_modse", "rel_err_modse"]


def survival_example_config(seed: int = WORKED_EXAMPLE_SEED, n_sim: int = 1600, censor_time: float = 3.0,
                            n_obs: int = 500) -> StudyConfig:
    """Exponential, Weibull and Cox fits under exponential and Weibull baselines."""
    return validate({
        "name": "survival_worked_example",
        "aims": "Effect of misspecifying the baseline hazard on the log hazard ratio estimate.",
        "seed": seed,
        "n_sim": n_sim,
        "dgm": {
            "mechanism": "survival",
            "base": {"n_obs": n_obs, "lambda": 0.1, "theta": -0.5, "allocation_p": 0.5,
                     "censor_time": censor_time},
            "grid": {"design": "full_factorial", "factors": [{"name": "gamma", "levels": [1, 1.5]}]},
        },
        "methods": [
            {"id": "exponential", "kind": "exponential_ph"},
            {"id": "weibull", "kind": "weibull_ph"},
            {"id": "cox", "kind": "cox_ph"},
        ],
        "estimands": [{"id": "theta", "true_value": "theta"}],
        "targets": {"theta0": 0.0, "alpha": 0.05},
        "measures": TABLE_MEASURES,
        "comparator": "weibull",
        "output": {"figures": ["zip", "lollipop", "strip", "scatter_matrix", "diff_vs_mean"]},
    })


def conditional_coverage_config(seed: int = WORKED_EXAMPLE_SEED, n_sim: int = 30000) -> StudyConfig:
    """t-based 95% intervals for a normal mean, n_obs = 30."""
    return validate({
        "name": "conditional_coverage",
        "aims": "Coverage of t intervals overall and by tertile of the model SE.",
        "seed": seed,
        "n_sim": n_sim,
        "dgm": {"mechanism": "normal", "base": {"n_obs": 30, "mu": 0.0, "sigma": 1.0}},
        "methods": [{"id": "t_interval", "kind": "normal_mean_t"}],
        "estimands": [{"id": "mu", "true_value": "mu"}],
        "targets": {"theta0": 0.0, "alpha": 0.05},
        "measures": ["coverage", "bias", "empse", "avg_modse"],
    })


def dgm_labels(manifest: Mapping) -> dict[str, str]:
    out = {}
    for dgm_id, info in manifest.get("dgms", {}).items():
        factors = info.get("factors") or {}
        out[dgm_id] = ", ".join(f"{k}={v}" for k, v in factors.items()) or dgm_id
    return out


def dgm_factors(manifest: Mapping) -> dict[str, dict]:
    return {d: dict(info.get("factors") or {}) for d, info in manifest.get("dgms", {}).items()}


def analyze(records, truth: Mapping[tuple[str, str], float], cfg: StudyConfig | None = None,
            alpha: float | None = None, measures: Sequence[str] | None = None, comparator: str | None = None,
            available: set[str] | None = None) -> list[PerformanceEstimate]:
    if cfg is not None:
        alpha = cfg.targets.alpha if alpha is None else alpha
        measures = cfg.measures if measures is None else measures
        comparator = cfg.comparator if comparator is None else comparator
    kwargs = {}
    if measures is not None:
        kwargs["measures"] = measures
    return summarize(records, truth, 0.05 if alpha is None else alpha, comparator=comparator,
                     available=available, **kwargs)


def write_analysis(out_dir, perf, labels=None, measures=None, records=None) -> None:
    out = Path(out_dir)
    write_performance(out, perf)
    text, side = render_table(perf, labels, measures)
    write_text(out / "table.txt", text)
    write_text(out / "table.csv", side)
    if records is not None:
        rows = [
            {"dgm_id": d, "method_id": m, **dict(counts)}
            for (d, m), counts in missingness_report(records).items()
        ]
        write_text(out / "missingness.csv", sidecar_csv(rows))


def write_figures(out_dir, kinds, records, perf, truth: Mapping[tuple[str, str], float], manifest: Mapping,
                  alpha: float = 0.05, comparator: str | None = None, factor_order=None, measure=None,
                  zoom: bool = False) -> list[Path]:
    fig_dir = Path(out_dir) / "figures"
    labels = dgm_labels(manifest)
    written = []
    estimand = next(iter(dict.fromkeys(r.estimand_id for r in records)), None)
    theta_by_dgm = {d: v for (d, e), v in truth.items() if e == estimand}
    methods = list(dict.fromkeys(r.method_id for r in records))
    for kind in kinds:
        if kind == "zip":
            figs = {"zip": render_zip_plot(records, theta_by_dgm, alpha, zoom=zoom)}
        elif kind == "lollipop":
            figs = {"lollipop": render_lollipop(perf, alpha=alpha, dgm_labels=labels)}
        elif kind == "strip":
            figs = {"strip": render_strip(records)}
        elif kind == "scatter_matrix":
            if len(methods) < 2:
                log.warning("skipping scatter matrix: fewer than two methods")
                continue
            figs = {f"scatter_matrix_dgm{d}": render_scatter_matrix(records, d)
                    for d in dict.fromkeys(r.dgm_id for r in records)}
        elif kind == "diff_vs_mean":
            comp = comparator or (methods[0] if methods else None)
            if len(methods) < 2:
                log.warning("skipping difference-vs-mean plot: fewer than two methods")
                continue
            figs = {"diff_vs_mean": render_diff_vs_mean(records, comp)}
        elif kind == "nested_loop":
            factors = dgm_factors(manifest)
            order = list(factor_order or next(iter(factors.values()), {}).keys())
            chosen = measure or (perf[0].measure if perf else "bias")
            figs = {f"nested_loop_{chosen}": render_nested_loop(perf, factors, order, chosen)}
        else:
            raise ValueError(f"unknown figure kind {kind}")
        for stem, fig in figs.items():
            fig.write(fig_dir / stem)
            written.append(fig_dir / f"{stem}.svg")
    return written


def run_pipeline(cfg: StudyConfig, out_dir, threads: int = 1, analyze_results: bool | None = None) -> tuple[
        StudyResult, list[PerformanceEstimate]]:
    result = run_study(cfg, out_dir, threads=threads)
    do_analyze = cfg.output.analyze if analyze_results is None else analyze_results
    perf: list[PerformanceEstimate] = []
    if do_analyze:
        truth = truth_from_manifest(result.manifest)
        perf = analyze(result.estimates, truth, cfg)
        write_analysis(out_dir, perf, dgm_labels(result.manifest), cfg.measures, result.estimates)
        if cfg.output.figures:
            write_figures(out_dir, cfg.output.figures, result.estimates, perf, truth, result.manifest,
                          cfg.targets.alpha, cfg.comparator)
    return result, perf


def conditional_coverage_table(result: StudyResult, groups: int = 3) -> list[dict]:
    truth = truth_from_manifest(result.manifest)
    records = [r for r in result.estimates if r.dgm_id == "1"]
    estimand = records[0].estimand_id
    return conditional_coverage(records, truth[("1", estimand)], groups)


def render_conditional_table(rows: list[dict]) -> str:
    names = {"all": "All observations"}
    n_groups = len(rows) - 1
    if n_groups == 3:
        names.update({1: "Conditional: ModSE in lowest third", 2: "Conditional: ModSE in middle third",
                      3: "Conditional: ModSE in highest third"})
    lines = []
    for r in rows:
        label = names.get(r["group"], f"Conditional: ModSE group {r['group']} of {n_groups}")
        est, se, _ = format_cell(r["coverage"], r["mcse"], percent=True)
        lines.append(f"{label:<38} {r['n']:>7}  {est} {se}")
    header = f"{'Approach':<38} {'n_sim':>7}  Coverage (MCSE)"
    return "\n".join([header, "-" * len(header)] + lines) + "\n"
