"""Data-generating mechanisms and factor-grid expansion."""

from __future__ import annotations

import hashlib
import io
import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, EmptySource, InvalidParameter, MissingBaseCase
from .rng import Generator


def fmt_float(x: float) -> str:
    """Round-trip float text used by every CSV the harness writes."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SurvivalDgmSpec:
    n_obs: int
    lam: float
    gamma: float
    theta: float
    allocation_p: float = 0.5
    censor_time: float | None = None

    def __post_init__(self):
        if int(self.n_obs) != self.n_obs or self.n_obs < 1:
            raise InvalidParameter(f"n_obs must be a positive integer, got {self.n_obs}")
        if not self.lam > 0:
            raise InvalidParameter(f"lambda must be positive, got {self.lam}")
        if not self.gamma > 0:
            raise InvalidParameter(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.allocation_p < 1:
            raise InvalidParameter(f"allocation_p must lie in (0, 1), got {self.allocation_p}")
        if self.censor_time is not None and not self.censor_time > 0:
            raise InvalidParameter(f"censor_time must be positive or None, got {self.censor_time}")


@dataclass(frozen=True)
class NormalDgmSpec:
    n_obs: int
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if int(self.n_obs) != self.n_obs or self.n_obs < 1:
            raise InvalidParameter(f"n_obs must be a positive integer, got {self.n_obs}")
        if not self.sigma > 0:
            raise InvalidParameter(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class ResampleDgmSpec:
    n_obs: int
    source: tuple[float, ...]

    def __post_init__(self):
        if int(self.n_obs) != self.n_obs or self.n_obs < 1:
            raise InvalidParameter(f"n_obs must be a positive integer, got {self.n_obs}")


@dataclass
class SurvivalDataset:
    x: np.ndarray
    time: np.ndarray
    event: np.ndarray

    def __len__(self):
        return len(self.time)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,x,time,event\n")
        for i, (x, t, d) in enumerate(zip(self.x, self.time, self.event), start=1):
            buf.write(f"{i},{int(x)},{fmt_float(t)},{int(d)}\n")
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


@dataclass
class NumericDataset:
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,y\n")
        for i, y in enumerate(self.y, start=1):
            buf.write(f"{i},{fmt_float(y)}\n")
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def generate_survival(g: Generator, spec: SurvivalDgmSpec) -> SurvivalDataset:
    """Proportional-hazards data with Weibull baseline hazard lam*gamma*t**(gamma-1).

    Each subject consumes exactly two uniforms, in the order (allocation, time).
    Latent event times are discarded after censoring.
    """
    u = g.uniform(2 * spec.n_obs).reshape(spec.n_obs, 2)
    x = (u[:, 0] < spec.allocation_p).astype(np.int64)
    rate = spec.lam * np.exp(x * spec.theta)
    latent = (-np.log(u[:, 1]) / rate) ** (1.0 / spec.gamma)
    if spec.censor_time is None:
        return SurvivalDataset(x, latent, np.ones(spec.n_obs, dtype=np.int64))
    event = (latent <= spec.censor_time).astype(np.int64)
    time = np.minimum(latent, spec.censor_time)
    return SurvivalDataset(x, time, event)


def generate_normal(g: Generator, spec: NormalDgmSpec) -> NumericDataset:
    return NumericDataset(g.normal(spec.mu, spec.sigma, size=spec.n_obs))


def resample(g: Generator, source, n_obs: int) -> NumericDataset:
    """Draw ``n_obs`` rows uniformly with replacement, one uniform per row."""
    values = np.asarray(source.y if isinstance(source, NumericDataset) else source, dtype=np.float64)
    if values.size == 0:
        raise EmptySource("cannot resample from an empty source")
    if n_obs < 1:
        raise InvalidParameter(f"n_obs must be positive, got {n_obs}")
    idx = np.floor(g.uniform(n_obs) * values.size).astype(np.int64)
    return NumericDataset(values[idx])


def generate(g: Generator, spec):
    if isinstance(spec, SurvivalDgmSpec):
        return generate_survival(g, spec)
    if isinstance(spec, NormalDgmSpec):
        return generate_normal(g, spec)
    if isinstance(spec, ResampleDgmSpec):
        return resample(g, spec.source, spec.n_obs)
    raise ConfigError(f"unknown DGM spec type {type(spec).__name__}")


DESIGNS = ("full_factorial", "one_at_a_time", "explicit_list")


@dataclass
class FactorGrid:
    factors: list[tuple[str, list[Any]]] = field(default_factory=list)
    design: str = "full_factorial"
    base_case: Sequence[int] | None = None
    points: list[dict[str, Any]] | None = None

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        names = [name for name, _ in self.factors]
        if len(set(names)) != len(names):
            raise ConfigError("factor names must be unique")
        for name, levels in self.factors:
            if not levels:
                raise ConfigError(f"factor {name!r} has no levels")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.factors]


def expand_grid(grid: FactorGrid) -> list[dict[str, Any]]:
    """Expand a factor grid into an ordered list of factor-value assignments.

    Full factorial puts the last factor in the innermost loop. One-at-a-time
    starts with the base case and then moves each factor through its other
    levels in turn.
    """
    names = grid.names
    if grid.design == "full_factorial":
        level_lists = [levels for _, levels in grid.factors]
        return [dict(zip(names, combo)) for combo in itertools.product(*level_lists)]

    if grid.design == "one_at_a_time":
        if grid.base_case is None:
            raise MissingBaseCase("one_at_a_time design needs a base_case")
        if len(grid.base_case) != len(grid.factors):
            raise ConfigError("base_case needs one level index per factor")
        base = {}
        for (name, levels), j in zip(grid.factors, grid.base_case):
            if not 0 <= j < len(levels):
                raise ConfigError(f"base_case index {j} out of range for factor {name!r}")
            base[name] = levels[j]
        out = [dict(base)]
        for (name, levels), j in zip(grid.factors, grid.base_case):
            for k, level in enumerate(levels):
                if k != j:
                    out.append({**base, name: level})
        return out

    if not grid.points:
        raise ConfigError("explicit_list design needs a non-empty list of points")
    out = []
    for point in grid.points:
        unknown = set(point) - set(names) if names else set()
        if unknown:
            raise ConfigError(f"explicit point uses undeclared factors {sorted(unknown)}")
        out.append(dict(point))
    return out


_SURVIVAL_ALIASES = {"lambda": "lam"}


def build_spec(mechanism: str, params: dict[str, Any], source=None):
    """Turn a mechanism name plus parameter mapping into a concrete spec."""
    params = {_SURVIVAL_ALIASES.get(k, k): v for k, v in params.items()}
    try:
        if mechanism == "survival":
            ct = params.get("censor_time")
            if isinstance(ct, str) and ct.lower() == "none":
                params["censor_time"] = None
            return SurvivalDgmSpec(**params)
        if mechanism == "normal":
            return NormalDgmSpec(**params)
        if mechanism == "resample":
            if source is None:
                raise ConfigError("resample mechanism needs a source dataset")
            return ResampleDgmSpec(n_obs=params["n_obs"], source=tuple(source))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {mechanism} mechanism: {exc}") from exc
    raise ConfigError(f"unknown mechanism {mechanism!r}")


def with_params(spec, **changes):
    return replace(spec, **{_SURVIVAL_ALIASES.get(k, k): v for k, v in changes.items()})
