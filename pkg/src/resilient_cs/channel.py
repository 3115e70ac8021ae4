"""Measurement-loss layer: binary keep/lose masks applied to measurements.

Unlike dropout the layer stays active at inference. A mask entry of 1 keeps
the measurement, 0 marks it lost (zeroed). Masks come from a
:class:`ChannelSpec`: i.i.d. Bernoulli losses or a two-state burst chain,
with either a fixed loss rate or a rate drawn uniformly from a range.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError
from .tensor import Tensor, mul_mask

# Stream ids for :func:`stream`; keep values stable, they define the
# random sequences behind checkpoints and reports.
STREAM_INIT = 1
STREAM_PATCHES = 2
STREAM_SHUFFLE = 3
STREAM_MASK = 5
STREAM_EVAL = 6
STREAM_DIAG = 7

MAX_RATE = 0.5


def stream(seed: int, stream_id: int, *index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream id, draw index...).

    Each key gets its own Philox stream, so draws never depend on how many
    numbers other consumers took before.
    """
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream_id), *map(int, index)])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class Mask:
    values: np.ndarray
    nominal_rate: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.size and v.max() > 1:
            raise ConfigurationError("mask entries must be 0 or 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def realized_rate(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.count_nonzero(self.values == 0) / self.values.size)


@dataclass(frozen=True)
class ChannelSpec:
    """Loss model plus rate regime.

    ``lo == hi`` is the fixed regime; ``lo < hi`` draws the rate uniformly.
    """

    model: str = "bernoulli"
    lo: float = 0.0
    hi: float = 0.0
    burst_mean_len: float = 1.0
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.model not in ("bernoulli", "burst"):
            errors.append(f"model must be 'bernoulli' or 'burst', got {self.model!r}")
        if not (0.0 <= self.lo <= MAX_RATE and 0.0 <= self.hi <= MAX_RATE):
            errors.append(f"rates must lie in [0, {MAX_RATE}], got lo={self.lo}, hi={self.hi}")
        if self.lo > self.hi:
            errors.append(f"rate range is reversed: lo={self.lo} > hi={self.hi}")
        if self.burst_mean_len < 1:
            errors.append(f"burst_mean_len must be >= 1, got {self.burst_mean_len}")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @classmethod
    def fixed(cls, r: float, **kw) -> "ChannelSpec":
        return cls(lo=r, hi=r, **kw)

    @classmethod
    def uniform_range(cls, lo: float, hi: float, **kw) -> "ChannelSpec":
        return cls(lo=lo, hi=hi, **kw)

    @property
    def is_fixed(self) -> bool:
        return self.lo == self.hi

    def regime(self) -> str:
        """Short text form, parseable by :meth:`parse_regime`."""
        core = f"fixed({self.lo:g})" if self.is_fixed else f"uniform({self.lo:g},{self.hi:g})"
        if self.model == "burst":
            return f"burst[{self.burst_mean_len:g}]:{core}"
        return core

    @classmethod
    def parse_regime(cls, text: str, seed: int = 0) -> "ChannelSpec":
        m = re.fullmatch(
            r"\s*(?:burst\[(?P<len>[^\]]+)\]:)?\s*(?:(?:fixed\((?P<r>[^)]+)\))|(?:uniform\((?P<lo>[^,]+),(?P<hi>[^)]+)\)))\s*",
            text,
        )
        if not m:
            raise ConfigurationError(f"cannot parse channel regime {text!r}")
        kw = {"seed": seed}
        if m["len"]:
            kw.update(model="burst", burst_mean_len=float(m["len"]))
        if m["r"] is not None:
            return cls.fixed(float(m["r"]), **kw)
        return cls.uniform_range(float(m["lo"]), float(m["hi"]), **kw)


def draw_rate(spec: ChannelSpec, rng: np.random.Generator) -> float:
    if spec.is_fixed:
        return spec.lo
    return float(rng.uniform(spec.lo, spec.hi))


def draw_mask_bernoulli(shape, r: float, rng: np.random.Generator) -> Mask:
    if not 0.0 <= r <= 1.0:
        raise ConfigurationError(f"loss rate must be in [0, 1], got {r}")
    keep = rng.random(shape) >= r
    return Mask(keep.astype(np.uint8), r)


def burst_transitions(r: float, burst_mean_len: float) -> tuple[float, float]:
    """(P(kept -> lost), P(lost -> kept)) giving stationary loss fraction ``r``."""
    if not 0.0 <= r <= MAX_RATE:
        raise ConfigurationError(f"burst loss rate must be in [0, {MAX_RATE}], got {r}")
    if burst_mean_len < 1:
        raise ConfigurationError(f"burst_mean_len must be >= 1, got {burst_mean_len}")
    p_exit = 1.0 / burst_mean_len
    if r == 0:
        return 0.0, p_exit
    gap_mean = burst_mean_len * (1.0 - r) / r
    if gap_mean < 1:
        raise ConfigurationError(
            f"rate {r} with mean burst {burst_mean_len} needs mean gap {gap_mean:.3g} < 1"
        )
    return 1.0 / gap_mean, p_exit


def draw_mask_burst(shape, r: float, burst_mean_len: float, rng: np.random.Generator) -> Mask:
    """Gilbert-style chain over the flattened (row-major) measurement order.

    Burst and gap lengths are geometric with means ``burst_mean_len`` and
    ``burst_mean_len * (1 - r) / r``; the start state is drawn from the
    stationary distribution.
    """
    p_enter, p_exit = burst_transitions(r, burst_mean_len)
    n = int(np.prod(shape))
    start_lost = rng.random() < r
    u = rng.random(n)
    keep = _kernels.gilbert_chain(u, p_enter, p_exit, start_lost)
    return Mask(keep.reshape(shape), r)


def draw_mask(spec: ChannelSpec, shape, rng: np.random.Generator, rate: float | None = None) -> Mask:
    r = draw_rate(spec, rng) if rate is None else rate
    if spec.model == "burst":
        return draw_mask_burst(shape, r, spec.burst_mean_len, rng)
    return draw_mask_bernoulli(shape, r, rng)


def apply(mask: Mask, measurements: Tensor) -> Tensor:
    """Zero the lost measurements; differentiable, mask held constant."""
    return mul_mask(measurements, mask)


def run_lengths(values: np.ndarray, symbol: int = 0) -> np.ndarray:
    """Lengths of maximal runs of ``symbol`` in a flattened array."""
    v = (np.asarray(values).ravel() == symbol).astype(np.int8)
    edges = np.diff(np.concatenate(([0], v, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return ends - starts
