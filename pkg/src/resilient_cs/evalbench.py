"""PSNR benchmarking over test drop rates, phases and trained models."""
from __future__ import annotations

import csv
import io
import logging
import statistics
from dataclasses import dataclass, field

import numpy as np

from .channel import STREAM_EVAL, ChannelSpec, draw_mask, stream
from .errors import DimensionError
from .imageio import crop, pad_image
from .model import PHASES, Mask, ReconModel, SamplingOperator, forward_pipeline

log = logging.getLogger(__name__)

PSNR_CAP = 99.0
CSV_HEADER = ["model", "train_regime", "subrate", "test_drop", "phase",
              "psnr_mean_db", "psnr_std_db", "trials"]
ERROR_MARK = "error"


def psnr(reference, test) -> float:
    """PSNR in dB for images on a [0, 1] scale; zero error gives ``PSNR_CAP``."""
    a = np.asarray(getattr(reference, "data", reference), dtype=np.float64)
    b = np.asarray(getattr(test, "data", test), dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shapes {a.shape} and {b.shape} differ")
    err = float(np.mean((a - b) ** 2))
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / err))


@dataclass
class PhaseStats:
    mean: float
    std: float
    trials: int
    per_trial: list[float] = field(default_factory=list)


def _trial_mask(shape, rate, burst_mean_len, rng) -> np.ndarray:
    if rate <= 0.0:
        return np.ones(shape, dtype=np.uint8)
    if rate >= 1.0:
        return np.zeros(shape, dtype=np.uint8)
    if burst_mean_len is None:
        spec = ChannelSpec()
    else:
        spec = ChannelSpec(model="burst", burst_mean_len=burst_mean_len)
    return draw_mask(spec, shape, rng, rate=rate).values


def evaluate(
    sampler: SamplingOperator,
    model: ReconModel,
    test_images,
    test_drop_rate: float,
    trials: int = 10,
    seed: int = 0,
    phases: tuple[str, ...] = PHASES,
    burst_mean_len: float | None = None,
) -> dict[str, PhaseStats]:
    """Mean/std over mask trials of the image-averaged PSNR, per phase.

    Trial ``t`` on image ``i`` uses a fresh mask from the stream keyed by
    (seed, i, t), so results do not depend on the trial count or order.
    Images are mirror-padded for the pipeline and cropped back before PSNR;
    reconstructions are clipped to [0, 1].
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    geom = model.geometry
    upto = max(phases, key=PHASES.index)
    scores = {ph: np.zeros((trials, len(test_images))) for ph in phases}
    for i, img in enumerate(test_images):
        ref = np.asarray(img, dtype=np.float64)
        try:
            padded, size = pad_image(ref, geom.block, geom.levels)
        except Exception as exc:
            raise type(exc)(f"test image {i}: {exc}") from exc
        h, w = padded.shape
        nblocks = (h // 2 // geom.block) * (w // 2 // geom.block)
        shape = (4, nblocks, sampler.m)
        masks = np.stack([_trial_mask(shape, test_drop_rate, burst_mean_len, stream(seed, STREAM_EVAL, i, t))
                          for t in range(trials)])
        batch = np.broadcast_to(padded, (trials, h, w))
        out = forward_pipeline(sampler, model, test_drop_rate, batch, mask=Mask(masks, test_drop_rate), upto=upto)
        for ph in phases:
            rec = np.clip(crop(out.recon(ph).data, size), 0.0, 1.0)
            for t in range(trials):
                scores[ph][t, i] = psnr(ref, rec[t])
    result = {}
    for ph in phases:
        per_trial = [float(v) for v in scores[ph].mean(axis=1)]
        result[ph] = PhaseStats(statistics.fmean(per_trial), statistics.pstdev(per_trial), trials, per_trial)
    return result


@dataclass
class Cell:
    model: str
    train_regime: str
    subrate: float
    test_drop: float
    phase: str
    mean: float | None
    std: float | None
    trials: int
    error: str | None = None


@dataclass
class ReportTable:
    cells: list[Cell] = field(default_factory=list)

    def get(self, model: str, test_drop: float, phase: str) -> Cell:
        for c in self.cells:
            if c.model == model and c.phase == phase and abs(c.test_drop - test_drop) < 1e-12:
                return c
        raise KeyError((model, test_drop, phase))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in self.cells:
            if c.error is None:
                mean, std = f"{c.mean:.4f}", f"{c.std:.4f}"
            else:
                mean = std = ERROR_MARK
            w.writerow([c.model, c.train_regime, f"{c.subrate:g}", f"{c.test_drop:g}", c.phase,
                        mean, std, c.trials])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ReportTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {rows[:1]}")
        cells = []
        for r in rows[1:]:
            err = r[5] == ERROR_MARK
            cells.append(Cell(r[0], r[1], float(r[2]), float(r[3]), r[4],
                              None if err else float(r[5]), None if err else float(r[6]),
                              int(r[7]), ERROR_MARK if err else None))
        return cls(cells)


@dataclass
class TrainedModel:
    """A model entry for :func:`run_grid`."""

    model_id: str
    sampler: SamplingOperator
    model: ReconModel
    channel: ChannelSpec


def run_grid(
    models: list[TrainedModel],
    test_images,
    test_rates=(0.0, 0.1, 0.2, 0.3),
    subrates=None,
    trials: int = 10,
    seed: int = 0,
    phases: tuple[str, ...] = PHASES,
) -> ReportTable:
    """Evaluate every model at every test rate; failures become error cells."""
    table = ReportTable()
    for entry in models:
        if subrates is not None and not any(abs(entry.sampler.subrate - s) < 1e-12 for s in subrates):
            continue
        regime = entry.channel.regime()
        for rate in test_rates:
            try:
                stats = evaluate(entry.sampler, entry.model, test_images, rate, trials, seed, phases)
            except Exception as exc:  # recorded in the table, never dropped
                log.error("cell %s @ %g failed: %s", entry.model_id, rate, exc)
                for ph in phases:
                    table.cells.append(Cell(entry.model_id, regime, entry.sampler.subrate, rate, ph,
                                            None, None, trials, str(exc)))
                continue
            for ph in phases:
                s = stats[ph]
                table.cells.append(Cell(entry.model_id, regime, entry.sampler.subrate, rate, ph,
                                        s.mean, s.std, s.trials))
    return table
