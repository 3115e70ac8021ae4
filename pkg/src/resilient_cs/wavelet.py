"""Orthonormal 2-D Haar analysis and synthesis.

For every 2x2 block [[a, b], [c, d]]::

    ll = (a + b + c + d) / 2     lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2     hh = (a - b - c + d) / 2

``hl`` is the horizontal detail (difference across columns), ``lh`` the
vertical one. Internally the bands are stacked on a new axis in the order
(ll, lh, hl, hh); :class:`SubbandSet` is the named view of that stack.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor, as_tensor, linear_op, select, stack

BANDS = ("ll", "lh", "hl", "hh")


def _analysis(x: np.ndarray) -> np.ndarray:
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return np.stack(
        [(a + b + c + d) / 2, (a + b - c - d) / 2, (a - b + c - d) / 2, (a - b - c + d) / 2],
        axis=-3,
    )


def _synthesis(s: np.ndarray) -> np.ndarray:
    ll, lh, hl, hh = (s[..., i, :, :] for i in range(4))
    *lead, h, w = ll.shape
    out = np.empty((*lead, 2 * h, 2 * w))
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2
    out[..., 0::2, 1::2] = (ll + lh - hl - hh) / 2
    out[..., 1::2, 0::2] = (ll - lh + hl - hh) / 2
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2
    return out


def haar_analysis(x: Tensor) -> Tensor:
    """(..., H, W) -> (..., 4, H/2, W/2). Its adjoint is :func:`haar_synthesis`."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise DimensionError(f"dwt2 needs at least 2 dimensions, got shape {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"dwt2 needs even height and width, got {h}x{w}; pad first")
    return linear_op(x, _analysis, _synthesis, "haar_analysis")


def haar_synthesis(s: Tensor) -> Tensor:
    """(..., 4, h, w) -> (..., 2h, 2w)."""
    s = as_tensor(s)
    if s.data.ndim < 3 or s.shape[-3] != 4:
        raise DimensionError(f"idwt2 needs a (..., 4, h, w) band stack, got {s.shape}")
    return linear_op(s, _synthesis, _analysis, "haar_synthesis")


@dataclass
class SubbandSet:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor
    level: int = 1

    def __post_init__(self):
        shapes = {as_tensor(getattr(self, b)).shape for b in BANDS}
        if len(shapes) != 1:
            raise DimensionError(f"subbands must share one shape, got {sorted(shapes)}")
        if self.level < 1:
            raise ContractError(f"level must be positive, got {self.level}")

    @property
    def shape(self) -> tuple[int, ...]:
        return as_tensor(self.ll).shape

    def bands(self) -> list[Tensor]:
        return [as_tensor(getattr(self, b)) for b in BANDS]

    def stacked(self) -> Tensor:
        return stack(self.bands(), axis=-3)

    def energy(self) -> float:
        return float(sum(np.sum(t.data ** 2) for t in self.bands()))

    @classmethod
    def from_stacked(cls, s: Tensor, level: int = 1) -> "SubbandSet":
        return cls(*(select(s, i, axis=s.data.ndim - 3) for i in range(4)), level=level)


def dwt2(image) -> SubbandSet:
    """Single-level Haar analysis of an (..., H, W) image."""
    return SubbandSet.from_stacked(haar_analysis(image))


def idwt2(sub: SubbandSet) -> Tensor:
    shapes = {t.shape for t in sub.bands()}
    if len(shapes) != 1:
        raise DimensionError(f"subbands must share one shape, got {sorted(shapes)}")
    return haar_synthesis(sub.stacked())


def dwt2_multi(image, levels: int) -> list[SubbandSet]:
    """Haar pyramid; entry k holds the level-(k+1) bands.

    Only the deepest ``ll`` is a retained band: shallower ``ll`` entries are
    the intermediates that get re-decomposed.
    """
    image = as_tensor(image)
    if levels < 1:
        raise ContractError(f"levels must be >= 1, got {levels}")
    h, w = image.shape[-2:]
    step = 2 ** levels
    if h % step or w % step:
        raise DimensionError(f"{h}x{w} image is not divisible by 2**{levels} = {step}")
    out = []
    cur = image
    for lv in range(1, levels + 1):
        sub = dwt2(cur)
        sub.level = lv
        out.append(sub)
        cur = sub.ll
    return out


def idwt2_multi(pyramid: list[SubbandSet]) -> Tensor:
    if not pyramid:
        raise ContractError("empty wavelet pyramid")
    cur = idwt2(pyramid[-1])
    for sub in reversed(pyramid[:-1]):
        cur = idwt2(SubbandSet(cur, sub.lh, sub.hl, sub.hh, level=sub.level))
    return cur
