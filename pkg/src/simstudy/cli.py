"""Command-line front end.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import apply_overrides, load_config
from .engine import continue_study, load_study, rerun_repetition, truth_from_manifest
from .errors import IoError, SimStudyError
from .perf import MEASURES, required_nsim
from .pipeline import (
    analyze, conditional_coverage_config, conditional_coverage_table, dgm_labels, render_conditional_table,
    run_pipeline, survival_example_config, write_analysis, write_figures,
)
from .records import estimates_to_csv, read_estimates, read_json, write_text
from .report.svg import sidecar_csv

log = logging.getLogger("simstudy")

OUT_ENV = "SIMSTUDY_OUT"
FIGURE_KINDS = ["zip", "lollipop", "nested_loop", "strip", "scatter_matrix", "diff_vs_mean"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "results")


def _add_overrides(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--n-sim", type=int, dest="n_sim")
    p.add_argument("--censor-time", type=float, dest="censor_time")
    p.add_argument("--streams", choices=["per_dgm", "per_chunk"])
    p.add_argument("--chunk-size", type=int, dest="chunk_size")
    p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simstudy", description="Monte Carlo simulation-study harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a study from a JSON/TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--no-analyze", action="store_true")
    _add_overrides(p)

    p = sub.add_parser("analyze", help="performance measures from an estimates CSV")
    p.add_argument("estimates")
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--theta", action="append", default=[],
                   help="true value: VALUE for every DGM or DGM_ID=VALUE (repeatable)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--measures", nargs="+", choices=MEASURES)
    p.add_argument("--comparator")

    p = sub.add_parser("plot", help="render figures for a run directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--kind", nargs="+", choices=FIGURE_KINDS, required=True)
    p.add_argument("--zoom", action="store_true", help="zip plot: top 20%% of ranks only")
    p.add_argument("--factors", help="nested-loop factor order, comma separated")
    p.add_argument("--measure", choices=MEASURES, help="nested-loop measure")
    p.add_argument("--comparator")

    p = sub.add_parser("nsim", help="repetitions needed for a target Monte Carlo SE")
    p.add_argument("--kind", choices=["coverage", "power", "bias"], required=True)
    p.add_argument("--expected", type=float, help="expected coverage/power in percent")
    p.add_argument("--mcse", type=float, required=True)
    p.add_argument("--var", type=float, dest="var_theta", help="anticipated Var(theta_hat), bias kind")

    p = sub.add_parser("rerun", help="re-run one repetition from its stored state")
    p.add_argument("--dir", required=True)
    p.add_argument("--dgm", required=True)
    p.add_argument("--rep", type=int, required=True)
    p.add_argument("--export", help="write the regenerated dataset to this CSV")

    p = sub.add_parser("continue", help="append repetitions from the stored end state")
    p.add_argument("--dir", required=True)
    p.add_argument("--extra", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("example", help="run one of the built-in example studies")
    p.add_argument("which", choices=["survival", "conditional-coverage"])
    p.add_argument("--out", default=None)
    _add_overrides(p)
    return parser


def _parse_theta(items, dgms):
    truth = {}
    for item in items:
        if "=" in item:
            dgm, value = item.split("=", 1)
            truth[dgm] = float(value)
        else:
            for d in dgms:
                truth[d] = float(item)
    return truth


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.seed, args.n_sim, args.censor_time, args.streams, args.chunk_size)
    out = args.out or cfg.output.dir or _default_out()
    log.info("running %s: %d repetitions", cfg.name, cfg.n_sim)
    result, _ = run_pipeline(cfg, out, threads=args.threads, analyze_results=False if args.no_analyze else None)
    log.info("wrote %d estimate rows to %s", len(result.estimates), out)
    return 0


def cmd_analyze(args) -> int:
    path = Path(args.estimates)
    records, columns = read_estimates(path)
    out = Path(args.out) if args.out else path.parent
    manifest_path = Path(args.manifest) if args.manifest else path.parent / "manifest.json"
    manifest = read_json(manifest_path) if manifest_path.exists() else {}
    cfg = None
    cfg_path = Path(args.config) if args.config else path.parent / "config.json"
    if cfg_path.exists():
        cfg = load_config(cfg_path)
    truth = truth_from_manifest(manifest)
    dgms = list(dict.fromkeys(r.dgm_id for r in records))
    estimands = list(dict.fromkeys(r.estimand_id for r in records))
    for dgm, value in _parse_theta(args.theta, dgms).items():
        for e in estimands:
            truth[(dgm, e)] = value
    perf = analyze(records, truth, cfg, args.alpha, args.measures, args.comparator, available=columns)
    measures = args.measures or (cfg.measures if cfg else None)
    write_analysis(out, perf, dgm_labels(manifest), measures, records)
    log.info("wrote %d performance rows to %s", len(perf), out / "performance.csv")
    return 0


def cmd_plot(args) -> int:
    cfg, records, _, manifest = load_study(args.dir)
    truth = truth_from_manifest(manifest)
    perf_path = Path(args.dir) / "performance.csv"
    if perf_path.exists():
        from .records import read_performance

        perf = read_performance(perf_path)
    else:
        perf = analyze(records, truth, cfg)
    order = args.factors.split(",") if args.factors else None
    written = write_figures(args.dir, args.kind, records, perf, truth, manifest, cfg.targets.alpha,
                            args.comparator or cfg.comparator, order, args.measure, args.zoom)
    for w in written:
        log.info("wrote %s", w)
    return 0


def cmd_nsim(args) -> int:
    if args.kind == "bias":
        n = required_nsim("bias", target_mcse=args.mcse, var_theta=args.var_theta)
    else:
        n = required_nsim("coverage_or_power", args.expected, args.mcse)
    print(n)
    return 0


def cmd_rerun(args) -> int:
    cfg, _, states, _ = load_study(args.dir)
    data, rows = rerun_repetition(cfg, states, args.dgm, args.rep)
    if args.export:
        write_text(args.export, data.to_csv())
    sys.stdout.write(estimates_to_csv(rows))
    log.info("dataset sha256 %s", data.digest())
    return 0


def cmd_continue(args) -> int:
    cfg, estimates, states, _ = load_study(args.dir)
    result = continue_study(cfg, states, args.extra, estimates, out_dir=args.dir, threads=args.threads)
    if cfg.output.analyze:
        truth = truth_from_manifest(result.manifest)
        perf = analyze(result.estimates, truth, result.config)
        write_analysis(args.dir, perf, dgm_labels(result.manifest), result.config.measures, result.estimates)
    log.info("study now has %d repetitions per DGM", result.config.n_sim)
    return 0


def cmd_example(args) -> int:
    out = Path(args.out or _default_out())
    if args.which == "survival":
        cfg = survival_example_config()
    else:
        cfg = conditional_coverage_config()
    cfg = apply_overrides(cfg, args.seed, args.n_sim, args.censor_time, args.streams, args.chunk_size)
    log.info("running example %s: %d repetitions", args.which, cfg.n_sim)
    result, _ = run_pipeline(cfg, out, threads=args.threads)
    if args.which == "conditional-coverage":
        rows = conditional_coverage_table(result)
        text = render_conditional_table(rows)
        write_text(out / "conditional_coverage.txt", text)
        write_text(out / "conditional_coverage.csv", sidecar_csv(rows))
        sys.stdout.write(text)
    else:
        sys.stdout.write((out / "table.txt").read_text(encoding="utf-8"))
    return 0


COMMANDS = {
    "run": cmd_run, "analyze": cmd_analyze, "plot": cmd_plot, "nsim": cmd_nsim, "rerun": cmd_rerun,
    "continue": cmd_continue, "example": cmd_example,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimStudyError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
