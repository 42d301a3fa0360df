"""Study configuration: aims, data-generating mechanism, estimands, methods and measures.

A config file is JSON or TOML and mirrors :class:`StudyConfig`; unknown keys
are rejected.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dgm import FactorGrid, build_spec, expand_grid
from .errors import ConfigError, IoError
from .perf import MEASURES

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

MAX_SEED = (1 << 64) - 1
TRUTH_STREAM_BASE = 1 << 63
CHUNK_STREAM_SHIFT = 32


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Factor(_Strict):
    name: str
    levels: list[Any] = Field(min_length=1)


class Grid(_Strict):
    design: Literal["full_factorial", "one_at_a_time", "explicit_list"] = "full_factorial"
    factors: list[Factor] = Field(default_factory=list)
    base_case: list[int] | None = None
    points: list[dict[str, Any]] | None = None

    def to_factor_grid(self) -> FactorGrid:
        return FactorGrid(
            [(f.name, list(f.levels)) for f in self.factors], self.design, self.base_case, self.points,
        )


class Dgm(_Strict):
    mechanism: Literal["survival", "normal", "resample"]
    base: dict[str, Any] = Field(default_factory=dict)
    grid: Grid = Field(default_factory=Grid)
    source: str | None = None  # CSV with a `y` column, for resampling


class Method(_Strict):
    id: str
    kind: Literal["exponential_ph", "weibull_ph", "cox_ph", "normal_mean_t"]
    estimand: str | None = None
    grad_tol: float | None = Field(default=None, gt=0)
    max_iter: int | None = Field(default=None, ge=1)


class Estimand(_Strict):
    id: str = "theta"
    # a number, the name of a DGM parameter, or "estimate_by_simulation"
    true_value: Union[float, str] = "theta"
    big_n: int = Field(default=1_000_000, ge=1)
    truth_method: str | None = None


class Targets(_Strict):
    theta0: float = 0.0
    alpha: float = Field(default=0.05, gt=0, lt=1)


class Streams(_Strict):
    policy: Literal["per_dgm", "per_chunk"] = "per_dgm"
    chunk_size: int | None = Field(default=None, ge=1)


class Output(_Strict):
    dir: str | None = None
    export_datasets: Union[bool, list[int]] = False
    analyze: bool = True
    figures: list[Literal["zip", "lollipop", "nested_loop", "strip", "scatter_matrix", "diff_vs_mean"]] = Field(
        default_factory=list
    )


class Fault(_Strict):
    """Forces a method failure; a testing hook."""

    dgm_id: str
    repetition: int
    method_id: str
    error_code: Literal["nonconvergence", "separation", "no_events", "numeric"] = "numeric"


class StudyConfig(_Strict):
    name: str = "study"
    aims: str = ""
    seed: int = Field(ge=0, le=MAX_SEED)
    n_sim: int = Field(ge=1)
    dgm: Dgm
    methods: list[Method] = Field(min_length=1)
    estimands: list[Estimand] = Field(default_factory=lambda: [Estimand()])
    targets: Targets = Field(default_factory=Targets)
    measures: list[str] = Field(default_factory=lambda: list(MEASURES))
    comparator: str | None = None
    streams: Streams = Field(default_factory=Streams)
    output: Output = Field(default_factory=Output)
    fault_injection: list[Fault] = Field(default_factory=list)

    @field_validator("measures")
    @classmethod
    def _known_measures(cls, v):
        bad = [m for m in v if m not in MEASURES]
        if bad:
            raise ValueError(f"unknown measures {bad}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        ids = [m.id for m in self.methods]
        if len(set(ids)) != len(ids):
            raise ValueError("method identifiers must be unique")
        est_ids = [e.id for e in self.estimands]
        if len(set(est_ids)) != len(est_ids) or not est_ids:
            raise ValueError("estimand identifiers must be unique and non-empty")
        for m in self.methods:
            if m.estimand is not None and m.estimand not in est_ids:
                raise ValueError(f"method {m.id} targets unknown estimand {m.estimand}")
            if self.dgm.mechanism == "survival" and m.kind == "normal_mean_t":
                raise ValueError(f"method {m.id} ({m.kind}) cannot analyse survival data")
            if self.dgm.mechanism != "survival" and m.kind != "normal_mean_t":
                raise ValueError(f"method {m.id} ({m.kind}) needs survival data")
        if "rel_precision" in self.measures and self.comparator is None:
            if "measures" in self.model_fields_set:
                raise ValueError("rel_precision needs a comparator method")
            self.measures = [m for m in self.measures if m != "rel_precision"]
        if self.comparator is not None and self.comparator not in ids:
            raise ValueError(f"comparator {self.comparator} is not a method id")
        if self.streams.policy == "per_chunk" and self.streams.chunk_size is None:
            raise ValueError("per_chunk stream policy needs chunk_size")
        if self.dgm.mechanism == "resample" and self.dgm.source is None:
            raise ValueError("resample mechanism needs a source file")
        for e in self.estimands:
            if e.truth_method is not None and e.truth_method not in ids:
                raise ValueError(f"truth_method {e.truth_method} is not a method id")
        return self

    def method_estimand(self, method: Method) -> str:
        return method.estimand or self.estimands[0].id

    def digest(self) -> str:
        payload = self.model_dump(mode="json", exclude={"output"})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def validate(data: dict) -> StudyConfig:
    try:
        cfg = StudyConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    dgm_params(cfg)  # surfaces bad DGM parameters early
    return cfg


def load_config(path) -> StudyConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    cfg = validate(data)
    if cfg.dgm.source is not None and not Path(cfg.dgm.source).is_absolute():
        cfg.dgm.source = str((path.parent / cfg.dgm.source).resolve())
    return cfg


def apply_overrides(cfg: StudyConfig, seed=None, n_sim=None, censor_time=None, streams=None,
                    chunk_size=None) -> StudyConfig:
    data = cfg.model_dump(mode="json")
    if seed is not None:
        data["seed"] = seed
    if n_sim is not None:
        data["n_sim"] = n_sim
    if censor_time is not None:
        if cfg.dgm.mechanism != "survival":
            raise ConfigError("censor_time applies only to survival mechanisms")
        data["dgm"]["base"]["censor_time"] = censor_time
    if streams is not None:
        data["streams"]["policy"] = streams
    if chunk_size is not None:
        data["streams"]["chunk_size"] = chunk_size
    return validate(data)


def dgm_params(cfg: StudyConfig) -> list[tuple[str, dict[str, Any], dict[str, Any]]]:
    """Concrete DGMs as (dgm_id, factor values, full parameter mapping).

    DGM ids are 1-based positions in the expanded grid.
    """
    points = expand_grid(cfg.dgm.grid.to_factor_grid())
    if not points:
        points = [{}]
    out = []
    for k, point in enumerate(points, start=1):
        params = {**cfg.dgm.base, **point}
        try:
            _spec_from(cfg, params, source=())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"DGM {k}: {exc}") from exc
        out.append((str(k), dict(point), params))
    return out


def _spec_from(cfg: StudyConfig, params: dict[str, Any], source=None):
    if cfg.dgm.mechanism == "resample":
        return build_spec("resample", {"n_obs": params.get("n_obs", 1)}, source=source or (0.0,))
    return build_spec(cfg.dgm.mechanism, params)


def stream_for(cfg: StudyConfig, dgm_index: int, repetition: int) -> int:
    """Stream id serving ``repetition`` (1-based) of the DGM at 0-based ``dgm_index``."""
    if cfg.streams.policy == "per_dgm":
        return dgm_index
    chunk = (repetition - 1) // cfg.streams.chunk_size
    return (dgm_index << CHUNK_STREAM_SHIFT) | chunk


def truth_stream(dgm_index: int) -> int:
    return TRUTH_STREAM_BASE + dgm_index
