"""Adam training of the sensing + reconstruction pipeline.

Phases run P1 -> P2 -> P3. Each phase minimizes image-domain MSE of its
own output and fine-tunes everything trained before it, sensing matrices
included. The loss channel is live in every phase.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import STREAM_MASK, STREAM_PATCHES, STREAM_SHUFFLE, ChannelSpec, stream
from .errors import ConfigurationError, NumericalError
from .model import PHASES, Geometry, ReconModel, SamplingOperator, draw_batch_mask, forward_pipeline, init_model
from .tensor import ParamSet, Tape, backward, mse

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], state: AdamState, lr: float | None = None) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name} at step {state.t}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = params[name]
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainConfig:
    subrate: float = 0.1
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    patches: int = 2000
    patch_side: int = 32
    batch_size: int = 16
    epochs: tuple[int, int, int] = (100, 60, 60)
    lr: tuple[float, float, float] = (1e-3, 1e-3, 1e-3)
    lr_decay_fraction: float = 0.2
    seed: int = 0

    def validate(self, geometry: Geometry) -> None:
        errors = []
        if not 0.0 < self.subrate <= 1.0:
            errors.append(f"subrate must be in (0, 1], got {self.subrate}")
        if self.patch_side % geometry.tile:
            errors.append(f"patch_side {self.patch_side} must be a multiple of {geometry.tile}")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if len(self.epochs) != 3 or min(self.epochs) < 0:
            errors.append(f"epochs must be three non-negative counts, got {self.epochs}")
        if errors:
            raise ConfigurationError("; ".join(errors))


@dataclass
class PhaseReport:
    phase: str
    losses: list[float] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)


@dataclass
class TrainingReport:
    phases: list[PhaseReport] = field(default_factory=list)
    param_norms: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def loss_csv(self) -> str:
        lines = ["phase,epoch,loss"]
        for ph in self.phases:
            lines += [f"{ph.phase},{i + 1},{loss:.10g}" for i, loss in enumerate(ph.losses)]
        return "\n".join(lines) + "\n"

    def text(self) -> str:
        lines = ["# training report", "[config]"]
        lines += [f"{k} = {v}" for k, v in self.config.items()]
        lines.append("[final]")
        for ph in self.phases:
            last = f"{ph.losses[-1]:.6g}" if ph.losses else "n/a"
            lines.append(f"{ph.phase}: epochs={len(ph.losses)} final_loss={last}")
        lines.append("[param_norms]")
        lines += [f"{k} = {v:.6g}" for k, v in sorted(self.param_norms.items())]
        return "\n".join(lines) + "\n"


def extract_patches(images, side: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``side`` x ``side`` crops, values in [0, 1], shape (count, side, side)."""
    usable = []
    for i, im in enumerate(images):
        im = np.asarray(im)
        if im.shape[0] < side or im.shape[1] < side:
            log.warning("skipping image %d of size %s: smaller than %d-pixel patches", i, im.shape, side)
            continue
        usable.append(im / 255.0 if im.dtype == np.uint8 else np.asarray(im, dtype=np.float64))
    if count == 0:
        return np.zeros((0, side, side))
    if not usable:
        raise ConfigurationError(f"no image is at least {side}x{side}")
    out = np.empty((count, side, side))
    which = rng.integers(0, len(usable), size=count)
    for k, j in enumerate(which):
        im = usable[j]
        r = rng.integers(0, im.shape[0] - side + 1)
        c = rng.integers(0, im.shape[1] - side + 1)
        out[k] = im[r:r + side, c:c + side]
    return out


def _trainable(sampler: SamplingOperator, model: ReconModel, phase: str) -> ParamSet:
    ps = ParamSet()
    ps._params.update(sampler.params._params)
    ps._params.update(model.params.subset(model.phase_prefixes(phase))._params)
    return ps


def train_phase(
    phase: str,
    model: ReconModel,
    sampler: SamplingOperator,
    config: TrainConfig,
    dataset: np.ndarray,
    epochs: int | None = None,
) -> PhaseReport:
    """Minimize MSE of the ``phase`` output against the clean patches."""
    if len(dataset) == 0:
        raise ConfigurationError("training dataset is empty")
    pidx = PHASES.index(phase)
    epochs = config.epochs[pidx] if epochs is None else epochs
    params = _trainable(sampler, model, phase)
    state = AdamState(lr=config.lr[pidx])
    report = PhaseReport(phase)
    decay_from = int(np.ceil(epochs * (1.0 - config.lr_decay_fraction)))
    n = len(dataset)
    first_loss = None
    for epoch in range(epochs):
        order = stream(config.seed, STREAM_SHUFFLE, pidx, epoch).permutation(n)
        lr = state.lr * (0.1 if epoch >= decay_from else 1.0)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            batch = dataset[order[start:start + config.batch_size]]
            mask_rng = stream(config.seed, STREAM_MASK, pidx, epoch, bi)
            with Tape() as tape:
                out = forward_pipeline(sampler, model, config.channel, batch,
                                       mask=_batch_mask(sampler, config.channel, batch, mask_rng),
                                       upto=phase)
                loss = mse(out.recon(phase), batch)
            report.rates.append(out.mask_used.nominal_rate)
            grads = backward(tape, loss)
            missing = {k: np.zeros_like(params[k].data) for k in params if k not in grads}
            adam_step(params, {**missing, **grads}, state, lr=lr)
            total += float(loss.data) * len(batch)
        mean_loss = total / n
        if not np.isfinite(mean_loss):
            raise NumericalError(f"{phase}: non-finite training loss at epoch {epoch + 1}")
        if first_loss is None:
            first_loss = mean_loss
        elif mean_loss > 1e3 * first_loss:
            raise NumericalError(
                f"{phase}: training diverged at epoch {epoch + 1} (loss {mean_loss:.4g}, initial {first_loss:.4g})"
            )
        report.losses.append(mean_loss)
        log.info("%s epoch %d/%d loss %.6g", phase, epoch + 1, epochs, mean_loss)
    model.active_phase = phase
    return report


def _batch_mask(sampler, channel, batch, rng):
    b, h, w = batch.shape
    nblocks = (h // 2 // sampler.block) * (w // 2 // sampler.block)
    return draw_batch_mask(channel, (b, 4, nblocks, sampler.m), rng)


def run_schedule(
    geometry: Geometry,
    config: TrainConfig,
    images,
    phases: tuple[str, ...] = PHASES,
) -> tuple[SamplingOperator, ReconModel, TrainingReport]:
    """Initialize from ``config.seed`` and train the listed phases in order."""
    config.validate(geometry)
    dataset = extract_patches(images, config.patch_side, config.patches, stream(config.seed, STREAM_PATCHES))
    sampler, model = init_model(geometry, config.subrate, config.seed)
    report = TrainingReport(config={
        "subrate": config.subrate,
        "channel": config.channel.regime(),
        "patches": config.patches,
        "patch_side": config.patch_side,
        "batch_size": config.batch_size,
        "epochs": ",".join(map(str, config.epochs)),
        "lr": ",".join(f"{x:g}" for x in config.lr),
        "seed": config.seed,
    })
    for phase in phases:
        report.phases.append(train_phase(phase, model, sampler, config, dataset))
    for name, t in {**sampler.params._params, **model.params._params}.items():
        report.param_norms[name] = float(np.linalg.norm(t.data))
    return sampler, model, report
