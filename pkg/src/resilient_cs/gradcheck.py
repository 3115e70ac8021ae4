"""Central finite-difference checks of tape gradients."""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .tensor import ParamSet, Tape, Tensor, backward, relu_probe


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    checked: int = 0
    skipped_kinks: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def _patterns_equal(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: ParamSet,
    eps: float = 1e-5,
    samples: int = 32,
    seed: int = 0,
) -> GradCheckResult:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` takes no arguments and builds a scalar loss from the current
    values in ``params``. Up to ``samples`` coordinates per parameter are
    probed (all of them if the parameter is smaller). Coordinates whose
    perturbation flips any ReLU activation are skipped, because the
    difference quotient straddles a kink there.
    """
    if not 0 < eps <= 1e-2:
        raise ConfigurationError(f"eps must be in (0, 1e-2], got {eps}")
    with Tape() as tape, relu_probe() as base_pattern:
        loss = fn()
    backward(tape, loss)
    analytic = {k: params[k].grad.copy() for k in params}
    rng = np.random.default_rng(seed)
    result = GradCheckResult(0.0)

    def probe(name, flat_idx, delta):
        t = params[name]
        old = t.data.flat[flat_idx]
        t.data.flat[flat_idx] = old + delta
        try:
            with relu_probe() as pattern:
                value = float(fn().data)
        finally:
            t.data.flat[flat_idx] = old
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss probing {name}[{flat_idx}] with step {delta:+g}")
        return value, pattern

    for name in params:
        size = params[name].size
        idx = np.arange(size) if size <= samples else rng.choice(size, samples, replace=False)
        worst = 0.0
        for i in idx:
            fp, pat_p = probe(name, int(i), eps)
            fm, pat_m = probe(name, int(i), -eps)
            if not (_patterns_equal(pat_p, base_pattern) and _patterns_equal(pat_m, base_pattern)):
                result.skipped_kinks += 1
                continue
            numeric = (fp - fm) / (2 * eps)
            a = analytic[name].flat[int(i)]
            err = abs(a - numeric) / max(abs(a), 1e-8)
            worst = max(worst, err)
            result.checked += 1
        result.per_param[name] = worst
        result.max_rel_error = max(result.max_rel_error, worst)
    return result


def _away_from_zero(rng, shape, margin):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * (margin + np.abs(x)), x)


def operator_suite(seed: int = 0, eps: float = 1e-5) -> dict[str, GradCheckResult]:
    """Check every registered operator on small random tensors (<= 64 elements)."""
    from . import tensor as T
    from .wavelet import haar_analysis, haar_synthesis

    rng = np.random.default_rng(seed)
    results = {}

    def run(name, inputs, build):
        ps = ParamSet({k: Tensor(v) for k, v in inputs.items()})
        out_shape = build(ps).shape
        target = rng.normal(size=out_shape)
        results[name] = finite_diff_check(lambda: T.mse(build(ps), target), ps, eps, seed=seed)

    mask = (rng.random((4, 6)) > 0.3).astype(float)
    run("linear", {"W": rng.normal(size=(3, 5)), "x": rng.normal(size=(2, 5)), "b": rng.normal(size=3)},
        lambda p: T.linear(p["W"], p["x"], p["b"]))
    run("linear_nobias", {"W": rng.normal(size=(4, 6)), "x": rng.normal(size=6)},
        lambda p: T.linear(p["W"], p["x"]))
    run("conv2d", {"x": rng.normal(size=(2, 2, 4, 4)), "k": rng.normal(size=(3, 2, 3, 3)), "b": rng.normal(size=3)},
        lambda p: T.conv2d(p["x"], p["k"], p["b"]))
    run("relu", {"x": _away_from_zero(rng, (6, 8), 10 * eps)}, lambda p: T.relu(p["x"]))
    run("mul_mask", {"x": rng.normal(size=(4, 6))}, lambda p: T.mul_mask(p["x"], mask))
    run("add", {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(3, 4))}, lambda p: T.add(p["a"], p["b"]))
    run("mse", {"x": rng.normal(size=(5, 5))}, lambda p: p["x"])
    run("reshape", {"x": rng.normal(size=(4, 6))}, lambda p: T.reshape(p["x"], (2, 12)))
    run("select_stack", {"x": rng.normal(size=(3, 4, 2))},
        lambda p: T.stack([T.select(p["x"], 2, 1), T.select(p["x"], 0, 1)], axis=0))
    run("concat_split", {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(2, 2))},
        lambda p: T.concat(T.split(T.concat([p["a"], p["b"]], 1), [4, 1], 1)[::-1], 1))
    run("blocks", {"x": rng.normal(size=(2, 4, 8))},
        lambda p: T.from_blocks(T.to_blocks(p["x"], 2), 2, 4, 8))
    run("to_blocks", {"x": rng.normal(size=(2, 4, 8))}, lambda p: T.to_blocks(p["x"], 2))
    run("haar_analysis", {"x": rng.normal(size=(6, 8))}, lambda p: haar_analysis(p["x"]))
    run("haar_synthesis", {"s": rng.normal(size=(4, 2, 4))}, lambda p: haar_synthesis(p["s"]))
    return results


def pipeline_check(geometry, subrate: float = 0.25, side: int | None = None, seed: int = 0,
                   eps: float = 1e-5, rate: float = 0.1) -> GradCheckResult:
    """Finite-difference check over every parameter of the P1 -> P3 pipeline.

    The loss mask is drawn once and held fixed across probes.
    """
    from .model import draw_batch_mask, forward_pipeline, init_model
    from .tensor import mse

    side = side or geometry.tile
    sampler, model = init_model(geometry, subrate, seed)
    rng = np.random.default_rng(seed)
    image = rng.random((1, side, side))
    nblocks = (side // 2 // geometry.block) ** 2
    mask = draw_batch_mask(rate, (1, 4, nblocks, sampler.m), rng)
    ps = ParamSet()
    ps._params.update(sampler.params._params)
    ps._params.update(model.params._params)

    def loss():
        out = forward_pipeline(sampler, model, rate, image, mask=mask)
        return mse(out.recon_p3, image)

    return finite_diff_check(loss, ps, eps, seed=seed)
