"""Row types and their CSV/JSON serializations."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .dgm import fmt_float
from .errors import IoError
from .rng import StatesRecord

log = logging.getLogger(__name__)

ESTIMATES_HEADER = [
    "dgm_id", "repetition", "method_id", "estimand_id", "theta_hat", "se_hat", "df",
    "ci_low", "ci_high", "p_value", "converged", "error_code",
]
STATES_HEADER = ["dgm_id", "repetition", "state_hex"]
PERFORMANCE_HEADER = [
    "dgm_id", "method_id", "estimand_id", "measure", "estimate", "mcse", "n_used", "comparator",
]


@dataclass(frozen=True)
class EstimatesRecord:
    dgm_id: str
    repetition: int
    method_id: str
    estimand_id: str
    theta_hat: float | None
    se_hat: float | None
    df: float | None
    ci_low: float | None
    ci_high: float | None
    p_value: float | None
    converged: bool
    error_code: str = "none"


@dataclass(frozen=True)
class PerformanceEstimate:
    dgm_id: str
    method_id: str
    estimand_id: str
    measure: str
    estimate: float
    mcse: float | None
    n_used: int
    comparator: str | None = None
    approximate: bool = False


def _num(x) -> str:
    if x is None:
        return ""
    return fmt_float(x)


def _parse_num(text: str | None) -> float | None:
    if text is None:
        return None
    text = text.strip()
    if text == "" or text.upper() in {"NA", "NAN", "."}:
        return None
    return float(text)


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in {"1", "true", "t", "yes"}


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_text(path: Path) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def estimates_to_csv(records) -> str:
    rows = (
        [
            r.dgm_id, r.repetition, r.method_id, r.estimand_id, _num(r.theta_hat), _num(r.se_hat),
            _num(r.df), _num(r.ci_low), _num(r.ci_high), _num(r.p_value),
            "1" if r.converged else "0", r.error_code,
        ]
        for r in records
    )
    return _csv_text(ESTIMATES_HEADER, rows)


def write_estimates(path, records) -> None:
    _write_text(Path(path), estimates_to_csv(records))


def parse_estimates(text: str) -> tuple[list[EstimatesRecord], set[str]]:
    """Parse an estimates CSV; returns records and the set of columns present.

    Only ``theta_hat`` is mandatory. Missing identifier columns default to a
    single DGM/method/estimand; repetitions default to row order within a cell.
    """
    reader = csv.DictReader(io.StringIO(text))
    columns = set(reader.fieldnames or [])
    if "theta_hat" not in columns:
        raise IoError("estimates file needs at least a theta_hat column")
    out = []
    counters: dict[tuple, int] = {}
    for row in reader:
        dgm = row.get("dgm_id") or "1"
        method = row.get("method_id") or "method"
        estimand = row.get("estimand_id") or "theta"
        key = (dgm, method, estimand)
        counters[key] = counters.get(key, 0) + 1
        rep = int(row["repetition"]) if row.get("repetition") else counters[key]
        theta = _parse_num(row.get("theta_hat"))
        if "converged" in columns:
            converged = _parse_bool(row["converged"])
        else:
            converged = theta is not None
        code = row.get("error_code") or ("none" if converged else "numeric")
        out.append(EstimatesRecord(
            dgm, rep, method, estimand, theta, _parse_num(row.get("se_hat")),
            _parse_num(row.get("df")), _parse_num(row.get("ci_low")), _parse_num(row.get("ci_high")),
            _parse_num(row.get("p_value")), converged, code,
        ))
    return out, columns


def read_estimates(path) -> tuple[list[EstimatesRecord], set[str]]:
    return parse_estimates(_read_text(Path(path)))


def states_to_csv(records) -> str:
    return _csv_text(STATES_HEADER, ([r.dgm_id, r.repetition, r.state_hex] for r in records))


def write_states(path, records) -> None:
    _write_text(Path(path), states_to_csv(records))


def read_states(path) -> list[StatesRecord]:
    reader = csv.DictReader(io.StringIO(_read_text(Path(path))))
    if reader.fieldnames != STATES_HEADER:
        raise IoError(f"states file header must be {','.join(STATES_HEADER)}")
    return [StatesRecord(r["dgm_id"], int(r["repetition"]), r["state_hex"]) for r in reader]


def performance_to_csv(perf) -> str:
    rows = (
        [p.dgm_id, p.method_id, p.estimand_id, p.measure, _num(p.estimate), _num(p.mcse),
         p.n_used, p.comparator or ""]
        for p in perf
    )
    return _csv_text(PERFORMANCE_HEADER, rows)


def performance_to_json(perf) -> str:
    def clean(p):
        d = asdict(p)
        for k in ("estimate", "mcse"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None
        return d

    return json.dumps([clean(p) for p in perf], indent=2) + "\n"


def write_performance(directory, perf) -> None:
    directory = Path(directory)
    _write_text(directory / "performance.csv", performance_to_csv(perf))
    _write_text(directory / "performance.json", performance_to_json(perf))


def read_performance(path) -> list[PerformanceEstimate]:
    from .perf import APPROXIMATE_MEASURES

    reader = csv.DictReader(io.StringIO(_read_text(Path(path))))
    return [
        PerformanceEstimate(
            r["dgm_id"], r["method_id"], r["estimand_id"], r["measure"], float(r["estimate"]),
            _parse_num(r["mcse"]), int(r["n_used"]), r["comparator"] or None,
            r["measure"] in APPROXIMATE_MEASURES,
        )
        for r in reader
    ]


def write_json(path, obj) -> None:
    _write_text(Path(path), json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(_read_text(Path(path)))
    except json.JSONDecodeError as exc:
        raise IoError(f"{path} is not valid JSON: {exc}") from exc


def write_text(path, text: str) -> None:
    _write_text(Path(path), text)
