"""Study orchestration: repetition loop, state capture, failure trapping,
re-runs, continuation and estimation of true values by simulation."""

from __future__ import annotations

import csv
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import StudyConfig, _spec_from, dgm_params, stream_for, truth_stream, validate
from .dgm import generate, with_params
from .errors import CannotContinue, FitError, InvalidParameter, IoError, UnknownRepetition
from .estimators import METHODS
from .records import (
    EstimatesRecord, read_estimates, read_json, read_states, write_estimates, write_json, write_states,
    write_text,
)
from .rng import GENERATOR_FAMILY, STATE_FORMAT_TAG, Generator, StatesRecord, capture_state, init_generator, restore_state

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class StudyResult:
    config: StudyConfig
    estimates: list[EstimatesRecord]
    states: list[StatesRecord]
    manifest: dict
    digests: dict[tuple[str, int], str] = field(default_factory=dict)


def load_source(cfg: StudyConfig) -> tuple[float, ...] | None:
    if cfg.dgm.mechanism != "resample":
        return None
    try:
        with open(cfg.dgm.source, encoding="utf-8", newline="") as fh:
            values = tuple(float(row["y"]) for row in csv.DictReader(fh))
    except (OSError, KeyError, ValueError) as exc:
        raise IoError(f"cannot read resampling source {cfg.dgm.source}: {exc}") from exc
    return values


def _specs(cfg: StudyConfig):
    source = load_source(cfg)
    return [(dgm_id, _spec_from(cfg, params, source)) for dgm_id, _, params in dgm_params(cfg)]


def apply_methods(cfg: StudyConfig, dgm_id: str, repetition: int, data) -> list[EstimatesRecord]:
    """Apply every method to one dataset. Failures become rows, never exceptions."""
    faults = {(f.dgm_id, f.repetition, f.method_id): f.error_code for f in cfg.fault_injection}
    alpha, theta0 = cfg.targets.alpha, cfg.targets.theta0
    rows = []
    for m in cfg.methods:
        estimand = cfg.method_estimand(m)
        kwargs = {}
        if m.grad_tol is not None:
            kwargs["grad_tol"] = m.grad_tol
        if m.max_iter is not None:
            kwargs["max_iter"] = m.max_iter
        try:
            code = faults.get((dgm_id, repetition, m.id))
            if code is not None:
                raise FitError(code, "injected failure")
            e = METHODS[m.kind](data, alpha, theta0, **kwargs)
        except FitError as exc:
            rows.append(_missing(dgm_id, repetition, m.id, estimand, exc.code))
            continue
        except Exception as exc:  # noqa: BLE001 - a failing method must not stop the run
            log.debug("method %s failed on %s/%d: %s", m.id, dgm_id, repetition, exc)
            rows.append(_missing(dgm_id, repetition, m.id, estimand, "numeric"))
            continue
        rows.append(EstimatesRecord(
            dgm_id, repetition, m.id, estimand, e.theta_hat, e.se_hat, e.df, e.ci_low, e.ci_high,
            e.p_value, True, "none",
        ))
    return rows


def _missing(dgm_id, repetition, method_id, estimand, code) -> EstimatesRecord:
    return EstimatesRecord(dgm_id, repetition, method_id, estimand, None, None, None, None, None, None, False, code)


def _export_wanted(cfg: StudyConfig, repetition: int) -> bool:
    flag = cfg.output.export_datasets
    if isinstance(flag, bool):
        return flag
    return repetition in flag


def _run_block(cfg_data: dict, dgm_index: int, first: int, last: int, start_state: str | None,
               export_dir: str | None):
    """Run repetitions first..last (inclusive) of one DGM.

    Each repetition uses the stream that serves it; a generator is carried over
    from the previous repetition only while the stream stays the same.
    """
    cfg = validate(cfg_data)
    dgm_id, spec = _specs(cfg)[dgm_index]
    g: Generator | None = restore_state(start_state) if start_state else None
    rows, states, digests = [], [], {}
    for i in range(first, last + 1):
        stream = stream_for(cfg, dgm_index, i)
        if g is None or g.stream_id != stream:
            g = init_generator(cfg.seed, stream)
        states.append(capture_state(g, dgm_id, i))
        data = generate(g, spec)
        digests[(dgm_id, i)] = data.digest()
        if export_dir and _export_wanted(cfg, i):
            write_text(Path(export_dir) / f"dgm{dgm_id}_rep{i}.csv", data.to_csv())
        rows.extend(apply_methods(cfg, dgm_id, i, data))
    return rows, states, (g.state.hex() if g is not None else None), digests


def _blocks(cfg: StudyConfig, n_dgms: int, first: int, last: int, end_states: dict[int, str | None]):
    out = []
    for k in range(n_dgms):
        if cfg.streams.policy == "per_dgm" or first > last:
            out.append((k, first, last, end_states.get(k)))
            continue
        size = cfg.streams.chunk_size
        i = first
        start = end_states.get(k)
        while i <= last:
            chunk_end = min(last, ((i - 1) // size + 1) * size)
            out.append((k, i, chunk_end, start))
            start = None
            i = chunk_end + 1
    return out


def _execute(cfg: StudyConfig, first: int, last: int, end_states: dict[int, str | None], out_dir=None,
             threads: int = 1):
    specs = _specs(cfg)
    blocks = _blocks(cfg, len(specs), first, last, end_states)
    export_dir = str(Path(out_dir) / "datasets") if out_dir is not None and cfg.output.export_datasets else None
    cfg_data = cfg.model_dump(mode="json")
    args = [(cfg_data, k, a, b, s, export_dir) for k, a, b, s in blocks]
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_block, *zip(*args)))
    else:
        results = [_run_block(*a) for a in args]

    rows: dict[int, list] = {k: [] for k in range(len(specs))}
    states: dict[int, list] = {k: [] for k in range(len(specs))}
    ends: dict[int, str | None] = dict(end_states)
    digests = {}
    for (k, _, _, _), (r, s, end, d) in zip(blocks, results):
        rows[k].extend(r)
        states[k].extend(s)
        if end is not None:
            ends[k] = end
        digests.update(d)
    return specs, rows, states, ends, digests


def _manifest(cfg: StudyConfig, specs, wall: float, truth: dict | None = None) -> dict:
    params = {dgm_id: {"factors": f, "params": p} for dgm_id, f, p in dgm_params(cfg)}
    streams = {}
    for k, (dgm_id, _) in enumerate(specs):
        ids = sorted({stream_for(cfg, k, i) for i in range(1, cfg.n_sim + 1)})
        streams[dgm_id] = ids
    return {
        "name": cfg.name,
        "seed": cfg.seed,
        "n_sim": cfg.n_sim,
        "config_digest": cfg.digest(),
        "stream_policy": cfg.streams.policy,
        "stream_map": streams,
        "generator": {"family": GENERATOR_FAMILY, "state_format": STATE_FORMAT_TAG},
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_seconds": round(wall, 3),
        "dgms": params,
        "true_theta": truth or {},
    }


def run_study(cfg: StudyConfig, out_dir=None, threads: int = 1) -> StudyResult:
    """Run every DGM for repetitions 1..n_sim and (optionally) write the outputs."""
    t0 = time.perf_counter()
    specs, rows, states, ends, digests = _execute(cfg, 1, cfg.n_sim, {}, out_dir, threads)
    estimates, state_rows = _assemble(cfg, specs, rows, states, ends)
    truth = resolve_truth(cfg)
    result = StudyResult(cfg, estimates, state_rows,
                         _manifest(cfg, specs, time.perf_counter() - t0, _truth_json(truth)), digests)
    if out_dir is not None:
        write_study(result, out_dir)
    return result


def _assemble(cfg, specs, rows, states, ends):
    estimates, state_rows = [], []
    for k, (dgm_id, _) in enumerate(specs):
        estimates.extend(rows[k])
        state_rows.extend(states[k])
        state_rows.append(StatesRecord(dgm_id, cfg.n_sim + 1, ends[k]))
    return estimates, state_rows


def write_study(result: StudyResult, out_dir) -> None:
    out = Path(out_dir)
    write_estimates(out / "estimates.csv", result.estimates)
    write_states(out / "states.csv", result.states)
    write_json(out / "manifest.json", result.manifest)
    write_json(out / "config.json", result.config.model_dump(mode="json"))


def load_study(out_dir):
    """Read back (config, estimates, states, manifest) from a run directory."""
    out = Path(out_dir)
    cfg = validate(read_json(out / "config.json"))
    estimates, _ = read_estimates(out / "estimates.csv")
    states = read_states(out / "states.csv")
    manifest = read_json(out / "manifest.json")
    return cfg, estimates, states, manifest


def _dgm_index(cfg: StudyConfig, dgm_id: str) -> int:
    ids = [d for d, _, _ in dgm_params(cfg)]
    if dgm_id not in ids:
        raise UnknownRepetition(f"unknown DGM {dgm_id}")
    return ids.index(dgm_id)


def rerun_repetition(cfg: StudyConfig, states, dgm_id: str, repetition: int):
    """Regenerate one repetition's dataset from its stored start state and refit."""
    dgm_id = str(dgm_id)
    k = _dgm_index(cfg, dgm_id)
    match = [s for s in states if s.dgm_id == dgm_id and s.repetition == repetition]
    if not match or repetition < 1:
        raise UnknownRepetition(f"no stored state for DGM {dgm_id}, repetition {repetition}")
    g = restore_state(match[0])
    spec = _specs(cfg)[k][1]
    data = generate(g, spec)
    return data, apply_methods(cfg, dgm_id, repetition, data)


def continue_study(cfg: StudyConfig, states, extra: int, estimates=None, out_dir=None,
                   threads: int = 1) -> StudyResult:
    """Append ``extra`` repetitions per DGM starting from the stored end states.

    The returned result (and files, if ``out_dir`` is given) equal a single
    run with ``n_sim + extra`` repetitions.
    """
    if extra < 0:
        raise InvalidParameter("extra must be non-negative")
    specs = _specs(cfg)
    ends: dict[int, str] = {}
    for k, (dgm_id, _) in enumerate(specs):
        end = [s for s in states if s.dgm_id == dgm_id and s.repetition == cfg.n_sim + 1]
        if not end:
            raise CannotContinue(f"no end state for DGM {dgm_id}")
        ends[k] = end[0].state_hex
    estimates = list(estimates or [])
    if extra == 0:
        truth = resolve_truth(cfg)
        result = StudyResult(cfg, estimates, list(states), _manifest(cfg, specs, 0.0, _truth_json(truth)))
        if out_dir is not None:
            write_study(result, out_dir)
        return result

    t0 = time.perf_counter()
    new_cfg = validate({**cfg.model_dump(mode="json"), "n_sim": cfg.n_sim + extra})
    _, rows, new_states, new_ends, digests = _execute(new_cfg, cfg.n_sim + 1, cfg.n_sim + extra, ends,
                                                       out_dir, threads)
    old_rows = {k: [r for r in estimates if r.dgm_id == dgm_id] for k, (dgm_id, _) in enumerate(specs)}
    old_states = {
        k: [s for s in states if s.dgm_id == dgm_id and s.repetition <= cfg.n_sim]
        for k, (dgm_id, _) in enumerate(specs)
    }
    merged_rows = {k: old_rows[k] + rows[k] for k in rows}
    merged_states = {k: old_states[k] + new_states[k] for k in new_states}
    est, st = _assemble(new_cfg, specs, merged_rows, merged_states, new_ends)
    truth = resolve_truth(new_cfg)
    result = StudyResult(new_cfg, est, st, _manifest(new_cfg, specs, time.perf_counter() - t0, _truth_json(truth)),
                         digests)
    result.manifest["continued_from_n_sim"] = cfg.n_sim
    if out_dir is not None:
        write_study(result, out_dir)
    return result


def estimate_true_theta(cfg: StudyConfig, dgm_id: str, big_n: int, stream: int | None = None,
                        method_id: str | None = None) -> float:
    """Value of the estimand on one very large dataset from a dedicated stream."""
    if big_n is None or big_n < 1:
        raise InvalidParameter("big_n must be a positive integer")
    k = _dgm_index(cfg, str(dgm_id))
    stream = truth_stream(k) if stream is None else stream
    main = {stream_for(cfg, j, i) for j in range(len(dgm_params(cfg))) for i in _stream_probe(cfg)}
    if stream in main:
        raise InvalidParameter(f"stream {stream} is used by the main run")
    spec = with_params(_specs(cfg)[k][1], n_obs=int(big_n))
    method = next((m for m in cfg.methods if m.id == method_id), cfg.methods[0]) if method_id else cfg.methods[0]
    data = generate(init_generator(cfg.seed, stream), spec)
    e = METHODS[method.kind](data, cfg.targets.alpha, cfg.targets.theta0)
    return e.theta_hat


def _stream_probe(cfg: StudyConfig):
    if cfg.streams.policy == "per_dgm":
        return [1]
    return range(1, cfg.n_sim + 1, cfg.streams.chunk_size)


def resolve_truth(cfg: StudyConfig) -> dict[tuple[str, str], tuple[float, dict]]:
    """True estimand value per (dgm_id, estimand_id), with provenance."""
    out = {}
    for k, (dgm_id, _, params) in enumerate(dgm_params(cfg)):
        for e in cfg.estimands:
            tv = e.true_value
            if isinstance(tv, (int, float)):
                out[(dgm_id, e.id)] = (float(tv), {"source": "config"})
            elif tv == "estimate_by_simulation":
                value = estimate_true_theta(cfg, dgm_id, e.big_n, truth_stream(k), e.truth_method)
                out[(dgm_id, e.id)] = (value, {"source": "simulation", "big_n": e.big_n,
                                               "stream": truth_stream(k)})
            elif tv in params or (tv == "lambda" and "lam" in params):
                out[(dgm_id, e.id)] = (float(params[tv]), {"source": f"dgm parameter {tv}"})
            else:
                log.warning("no true value for estimand %s in DGM %s", e.id, dgm_id)
    return out


def _truth_json(truth) -> dict:
    return {
        dgm: {est: {"value": v, **meta} for (d, est), (v, meta) in truth.items() if d == dgm}
        for dgm in dict.fromkeys(d for d, _ in truth)
    }


def truth_from_manifest(manifest: dict) -> dict[tuple[str, str], float]:
    return {
        (dgm, est): float(info["value"])
        for dgm, per in manifest.get("true_theta", {}).items()
        for est, info in per.items()
        if info.get("value") is not None and math.isfinite(float(info["value"]))
    }
