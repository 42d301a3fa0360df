"""Reproducible random-number streams.

Every stream is a Philox4x64-10 counter-based generator keyed by the pair
``(seed, stream_id)``. Distinct stream ids give distinct keys, so streams
never share a state. The position inside a stream is just the number of
64-bit words consumed so far, which makes the state tiny and trivially
serializable: the k-th draw is a pure function of (seed, stream_id, k).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, InvalidState

STATE_FORMAT_TAG = 0x01
GENERATOR_FAMILY = "philox4x64-10"
_MASK64 = (1 << 64) - 1
_STATE_RE = re.compile(r"^[0-9a-f]{50}$")
_WORDS_PER_BLOCK = 4


@dataclass(frozen=True)
class StatesRecord:
    dgm_id: str
    repetition: int
    state_hex: str


class Generator:
    """A single random-number stream.

    Owned by one worker at a time; never share an instance between threads.
    """

    def __init__(self, seed: int, stream_id: int = 0, draws_made: int = 0):
        if not 0 <= seed <= _MASK64:
            raise InvalidParameter(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= stream_id <= _MASK64:
            raise InvalidParameter(f"stream_id must be a 64-bit unsigned integer, got {stream_id}")
        if not 0 <= draws_made <= _MASK64:
            raise InvalidParameter(f"draw counter out of range: {draws_made}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.draws_made = 0
        self._bits = np.random.Philox(key=[self.seed, self.stream_id])
        self._skip(int(draws_made))

    def _skip(self, n: int) -> None:
        blocks, rest = divmod(n, _WORDS_PER_BLOCK)
        if blocks:
            self._bits.advance(blocks)
        if rest:
            self._bits.random_raw(rest)
        self.draws_made += n

    def copy(self) -> "Generator":
        return Generator(self.seed, self.stream_id, self.draws_made)

    @property
    def state(self) -> bytes:
        return (
            bytes([STATE_FORMAT_TAG])
            + self.seed.to_bytes(8, "big")
            + self.stream_id.to_bytes(8, "big")
            + self.draws_made.to_bytes(8, "big")
        )

    def raw(self, n: int) -> np.ndarray:
        out = self._bits.random_raw(n)
        self.draws_made += n
        return out

    def uniform(self, size: int | None = None):
        """Uniform draws on the open interval (0, 1).

        Uses the top 52 bits of each word, offset by half a unit, so the
        result is never 0 or 1 and both ``1 - u`` and ``u - 0.5`` are exact.
        """
        n = 1 if size is None else int(size)
        words = self.raw(n)
        u = ((words >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52
        return float(u[0]) if size is None else u

    def bernoulli(self, p: float, size: int | None = None):
        if not 0.0 <= p <= 1.0:
            raise InvalidParameter(f"p must lie in [0, 1], got {p}")
        u = self.uniform(size)
        if size is None:
            return int(u < p)
        return (u < p).astype(np.int64)

    def normal(self, mu: float = 0.0, sigma: float = 1.0, size: int | None = None):
        if not sigma > 0.0:
            raise InvalidParameter(f"sigma must be positive, got {sigma}")
        u = self.uniform(size)
        z = normal_quantile(np.asarray(u, dtype=np.float64))
        out = mu + sigma * z
        return float(out) if size is None else out


def init_generator(seed: int, stream_id: int = 0) -> Generator:
    return Generator(seed, stream_id)


def capture_state(g: Generator, dgm_id: str = "", repetition: int = 0) -> StatesRecord:
    return StatesRecord(str(dgm_id), int(repetition), g.state.hex())


def restore_state(record: StatesRecord | str) -> Generator:
    state_hex = record.state_hex if isinstance(record, StatesRecord) else record
    if not isinstance(state_hex, str) or not _STATE_RE.match(state_hex):
        raise InvalidState(f"malformed state: {state_hex!r}")
    raw = bytes.fromhex(state_hex)
    if raw[0] != STATE_FORMAT_TAG:
        raise InvalidState(f"unknown state format tag {raw[0]:#04x}")
    seed = int.from_bytes(raw[1:9], "big")
    stream_id = int.from_bytes(raw[9:17], "big")
    draws = int.from_bytes(raw[17:25], "big")
    return Generator(seed, stream_id, draws)


def draw_uniform(g: Generator) -> float:
    return g.uniform()


def draw_bernoulli(g: Generator, p: float) -> int:
    return g.bernoulli(p)


def draw_normal(g: Generator, mu: float, sigma: float) -> float:
    return g.normal(mu, sigma)


# Wichura (1988), algorithm AS 241 PPND16; relative accuracy about 1e-16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coef, x):
    acc = np.zeros_like(x) + coef[-1]
    for c in coef[-2::-1]:
        acc = acc * x + c
    return acc


def normal_quantile(p):
    """Standard normal quantile for p in (0, 1), vectorized.

    Symmetric by construction: ``normal_quantile(1 - p) == -normal_quantile(p)``
    whenever ``1 - p`` is exact.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise InvalidParameter("normal_quantile needs 0 < p < 1")
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    if np.any(tail):
        qt = q[tail]
        r = np.where(qt < 0.0, p[tail], 0.5 - qt)
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        val[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(qt < 0.0, -val, val)
    return out if out.ndim else float(out)
