"""Learned per-subband block sensing and the three-phase reconstruction.

Pipeline for a batch of images (B, H, W)::

    haar_analysis -> per-subband blocks -> phi_s (sense)
      -> loss mask -> G_s (P1, linear) -> haar_synthesis      = recon_p1
      -> + conv stack(recon_p1)                               = recon_p2
      -> + idwt_multi(per-level conv stacks(dwt_multi(p2)))   = recon_p3

Loss is applied after sensing and before P1, at training and test time.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import STREAM_INIT, ChannelSpec, Mask, apply, draw_mask, draw_rate, stream
from .errors import ConfigurationError, DimensionError, ParseError
from .tensor import (
    ParamSet,
    Tensor,
    add,
    as_tensor,
    concat,
    conv2d,
    from_blocks,
    linear,
    relu,
    reshape,
    select,
    split,
    stack,
    to_blocks,
)
from .wavelet import SubbandSet, dwt2_multi, haar_analysis, haar_synthesis, idwt2_multi

BANDS = ("ll", "lh", "hl", "hh")
PHASES = ("P1", "P2", "P3")


def measurement_count(block_side: int, subrate: float) -> int:
    """M_s = max(1, round-half-up(subrate * B^2))."""
    n = block_side * block_side
    return max(1, int(np.floor(subrate * n + 0.5)))


@dataclass(frozen=True)
class Geometry:
    block: int = 16
    levels: int = 2
    p2_layers: int = 5
    p2_channels: int = 32
    p3_layers: int = 3
    p3_channels: int = 32
    kernel: int = 3

    def __post_init__(self):
        errors = []
        if self.block < 1:
            errors.append(f"block must be positive, got {self.block}")
        if self.levels < 1:
            errors.append(f"levels must be >= 1, got {self.levels}")
        if self.p2_layers < 1 or self.p3_layers < 1:
            errors.append("conv stacks need at least one layer")
        if self.p2_channels < 1 or self.p3_channels < 1:
            errors.append("conv stacks need at least one channel")
        if self.kernel % 2 == 0:
            errors.append(f"kernel size must be odd, got {self.kernel}")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def tile(self) -> int:
        """Image sides must be multiples of this."""
        return int(np.lcm(2 * self.block, 2 ** self.levels))


class SamplingOperator:
    """Per-subband sensing matrices phi_s (no bias, no activation)."""

    def __init__(self, block: int, subrate: float, params: ParamSet):
        self.block = block
        self.subrate = subrate
        self.params = params

    @classmethod
    def init(cls, block: int, subrate: float, rng: np.random.Generator) -> "SamplingOperator":
        if not 0.0 < subrate <= 1.0:
            raise ConfigurationError(f"subrate must be in (0, 1], got {subrate}")
        n = block * block
        m = measurement_count(block, subrate)
        if m > n:
            raise ConfigurationError(f"subrate {subrate} gives {m} measurements for {n}-pixel blocks")
        params = ParamSet()
        for s in BANDS:
            params.add(f"phi.{s}", rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, n)))
        return cls(block, subrate, params)

    @property
    def n(self) -> int:
        return self.block * self.block

    @property
    def m(self) -> int:
        return self.params["phi.ll"].shape[0]

    def phi(self, band: str) -> Tensor:
        return self.params[f"phi.{band}"]


def _conv_stack(params: ParamSet, prefix: str, cin: int, cout: int, layers: int, width: int,
                k: int, rng: np.random.Generator) -> None:
    chans = [cin] + [width] * (layers - 1) + [cout]
    for i in range(layers):
        fan_in = chans[i] * k * k
        std = np.sqrt(2.0 / fan_in)
        if i == layers - 1:
            std *= 0.1
        params.add(f"{prefix}.w{i}", rng.normal(0.0, std, size=(chans[i + 1], chans[i], k, k)))
        params.add(f"{prefix}.b{i}", np.zeros(chans[i + 1]))


def _run_stack(params: ParamSet, prefix: str, layers: int, x: Tensor) -> Tensor:
    for i in range(layers):
        x = conv2d(x, params[f"{prefix}.w{i}"], params[f"{prefix}.b{i}"])
        if i < layers - 1:
            x = relu(x)
    return x


class ReconModel:
    """P1 linear decoders G_s, P2 image-domain and P3 wavelet-domain residual stacks."""

    def __init__(self, geometry: Geometry, m: int, params: ParamSet, active_phase: str = "P3"):
        self.geometry = geometry
        self.m = m
        self.params = params
        self.active_phase = active_phase

    @classmethod
    def init(cls, geometry: Geometry, sampler: SamplingOperator, rng: np.random.Generator) -> "ReconModel":
        params = ParamSet()
        for s in BANDS:
            params.add(f"g.{s}", sampler.phi(s).data.T.copy())
        g = geometry
        _conv_stack(params, "p2", 1, 1, g.p2_layers, g.p2_channels, g.kernel, rng)
        for lv in range(1, g.levels + 1):
            nb = 4 if lv == g.levels else 3
            _conv_stack(params, f"p3.l{lv}", nb, nb, g.p3_layers, g.p3_channels, g.kernel, rng)
        return cls(geometry, sampler.m, params)

    def g(self, band: str) -> Tensor:
        return self.params[f"g.{band}"]

    def phase_prefixes(self, phase: str) -> tuple[str, ...]:
        """Parameter groups trained in ``phase`` (cumulative)."""
        return {"P1": ("g.",), "P2": ("g.", "p2."), "P3": ("g.", "p2.", "p3.")}[phase]


@dataclass
class PipelineOutput:
    recon_p1: Tensor
    recon_p2: Tensor | None
    recon_p3: Tensor | None
    measurements_sent: Tensor
    measurements_received: Tensor
    mask_used: Mask

    def recon(self, phase: str) -> Tensor:
        return {"P1": self.recon_p1, "P2": self.recon_p2, "P3": self.recon_p3}[phase]


def _batched(image) -> tuple[Tensor, bool]:
    t = as_tensor(image)
    if t.data.ndim == 2:
        return reshape(t, (1, *t.shape)), True
    if t.data.ndim != 3:
        raise DimensionError(f"expected an (H, W) image or (B, H, W) batch, got {t.shape}")
    return t, False


def sense(sampler: SamplingOperator, sub) -> Tensor:
    """Block measurements for every subband: (B, 4, n_blocks, M).

    ``sub`` is a :class:`SubbandSet` or a (B, 4, h, w) band stack.
    """
    stacked = sub.stacked() if isinstance(sub, SubbandSet) else as_tensor(sub)
    if stacked.data.ndim == 3:
        stacked = reshape(stacked, (1, *stacked.shape))
    h, w = stacked.shape[-2:]
    if h % sampler.block or w % sampler.block:
        raise DimensionError(f"{h}x{w} subbands do not tile into {sampler.block}x{sampler.block} blocks")
    ys = [linear(sampler.phi(s), to_blocks(select(stacked, i, axis=1), sampler.block))
          for i, s in enumerate(BANDS)]
    return stack(ys, axis=1)


def reconstruct_p1(model: ReconModel, received: Tensor, h: int, w: int) -> Tensor:
    """Per-block G_s @ y, blocks reassembled into a (B, 4, h, w) band stack."""
    received = as_tensor(received)
    if received.shape[-1] != model.m:
        raise DimensionError(f"measurements have length {received.shape[-1]}, decoder expects {model.m}")
    block = model.geometry.block
    bands = [from_blocks(linear(model.g(s), select(received, i, axis=1)), block, h, w)
             for i, s in enumerate(BANDS)]
    return stack(bands, axis=1)


def enhance_p2(model: ReconModel, p1_image: Tensor) -> Tensor:
    """Residual conv stack on a (B, H, W) image batch."""
    p1_image = as_tensor(p1_image)
    b, h, w = p1_image.shape
    x = reshape(p1_image, (b, 1, h, w))
    corr = _run_stack(model.params, "p2", model.geometry.p2_layers, x)
    return add(p1_image, reshape(corr, (b, h, w)))


def enhance_p3(model: ReconModel, p2_image: Tensor) -> Tensor:
    """Residual correction computed per pyramid level in the Haar domain."""
    p2_image = as_tensor(p2_image)
    g = model.geometry
    pyramid = dwt2_multi(p2_image, g.levels)
    corrections = []
    for lv, sub in enumerate(pyramid, start=1):
        deepest = lv == g.levels
        bands = sub.bands() if deepest else sub.bands()[1:]
        x = stack(bands, axis=1)
        y = _run_stack(model.params, f"p3.l{lv}", g.p3_layers, x)
        parts = [reshape(p, p.shape[:1] + p.shape[2:]) for p in split(y, [1] * len(bands), axis=1)]
        if deepest:
            corrections.append(SubbandSet(*parts, level=lv))
        else:
            # the shallower ll slot is overwritten by the reconstruction below
            corrections.append(SubbandSet(Tensor(np.zeros(parts[0].shape)), *parts, level=lv))
    return add(p2_image, idwt2_multi(corrections))


def forward_pipeline(
    sampler: SamplingOperator,
    model: ReconModel,
    channel,
    image,
    rng: np.random.Generator | None = None,
    upto: str = "P3",
    mask: Mask | None = None,
) -> PipelineOutput:
    """Run sense -> lose -> P1 -> P2 -> P3 on an image or image batch.

    ``channel`` is a :class:`ChannelSpec` or a plain loss rate (Bernoulli).
    One rate is drawn per call; every batch item gets its own mask. Pass
    ``mask`` to hold the loss pattern fixed.
    """
    x, single = _batched(image)
    b, hh, ww = x.shape
    tile = model.geometry.tile
    if hh % tile or ww % tile:
        raise DimensionError(f"{hh}x{ww} image must be a multiple of {tile} on each side; pad first")
    coeffs = haar_analysis(x)
    y = sense(sampler, coeffs)
    if mask is None:
        if rng is None:
            raise ConfigurationError("forward_pipeline needs an rng when no mask is given")
        mask = draw_batch_mask(channel, y.shape, rng)
    received = apply(mask, y)
    p1 = haar_synthesis(reconstruct_p1(model, received, hh // 2, ww // 2))
    p2 = enhance_p2(model, p1) if upto in ("P2", "P3") else None
    p3 = enhance_p3(model, p2) if upto == "P3" else None
    if single:
        p1, p2, p3 = (None if t is None else reshape(t, t.shape[1:]) for t in (p1, p2, p3))
    return PipelineOutput(p1, p2, p3, y, received, mask)


def draw_batch_mask(channel, shape, rng: np.random.Generator) -> Mask:
    """One rate per call, an independent mask per batch item."""
    if not isinstance(channel, ChannelSpec):
        rate = float(channel)
        if rate >= 1.0:
            return Mask(np.zeros(shape, dtype=np.uint8), rate)
        if rate <= 0.0:
            return Mask(np.ones(shape, dtype=np.uint8), 0.0)
        keep = rng.random(shape) >= rate
        return Mask(keep.astype(np.uint8), rate)
    rate = draw_rate(channel, rng)
    if channel.model == "bernoulli":
        return draw_mask(channel, shape, rng, rate=rate)
    items = [draw_mask(channel, shape[1:], rng, rate=rate).values for _ in range(shape[0])]
    return Mask(np.stack(items), rate)


def init_model(geometry: Geometry, subrate: float, seed: int) -> tuple[SamplingOperator, ReconModel]:
    rng = stream(seed, STREAM_INIT)
    sampler = SamplingOperator.init(geometry.block, subrate, rng)
    model = ReconModel.init(geometry, sampler, rng)
    return sampler, model


# -- checkpoint file -----------------------------------------------------------

CKPT_MAGIC = b"RCSCKPT\n"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    geometry: Geometry
    subrate: float
    channel: ChannelSpec
    tensors: dict[str, np.ndarray]
    active_phase: str = "P3"
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_models(cls, sampler: SamplingOperator, model: ReconModel, channel: ChannelSpec,
                    meta: dict | None = None) -> "Checkpoint":
        tensors = {**sampler.params.snapshot(), **model.params.snapshot()}
        return cls(model.geometry, sampler.subrate, channel, tensors, model.active_phase, meta or {})

    def build(self) -> tuple[SamplingOperator, ReconModel]:
        sampler, model = init_model(self.geometry, self.subrate, 0)
        sampler.params.load({k: v for k, v in self.tensors.items() if k.startswith("phi.")})
        model.params.load({k: v for k, v in self.tensors.items() if not k.startswith("phi.")})
        model.active_phase = self.active_phase
        return sampler, model

    def save(self, path) -> None:
        entries, blobs, offset = [], [], 0
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f8")
            raw = arr.tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
        header = {
            "format_version": CKPT_VERSION,
            "geometry": asdict(self.geometry),
            "subrate": self.subrate,
            "channel": asdict(self.channel),
            "active_phase": self.active_phase,
            "meta": self.meta,
            "tensors": entries,
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as f:
            f.write(CKPT_MAGIC)
            f.write(struct.pack("<Q", len(hbytes)))
            f.write(hbytes)
            for raw in blobs:
                f.write(raw)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        if not raw.startswith(CKPT_MAGIC):
            raise ParseError("not a checkpoint file (bad magic)", 0)
        pos = len(CKPT_MAGIC)
        if len(raw) < pos + 8:
            raise ParseError("truncated checkpoint header length", pos)
        (hlen,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        try:
            header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"corrupt checkpoint header: {exc}", pos) from exc
        if header.get("format_version") != CKPT_VERSION:
            raise ParseError(f"unsupported checkpoint version {header.get('format_version')}", pos)
        base = pos + hlen
        tensors = {}
        for e in header["tensors"]:
            start = base + e["offset"]
            if start + e["nbytes"] > len(raw):
                raise ParseError(f"tensor {e['name']} runs past end of file", start)
            arr = np.frombuffer(raw, dtype="<f8", count=e["nbytes"] // 8, offset=start)
            tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
        return cls(
            Geometry(**header["geometry"]),
            header["subrate"],
            ChannelSpec(**header["channel"]),
            tensors,
            header["active_phase"],
            header.get("meta", {}),
        )
