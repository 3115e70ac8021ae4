"""Compare the compiled kernels against the numpy/Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on both backends and one full P3 training step with each
backend active, then checks that both backends return identical arrays.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from resilient_cs._kernels import _pykernels

try:
    from resilient_cs._kernels import _ckernels
except ImportError:
    _ckernels = None

STEP = """
import numpy as np
from resilient_cs.model import Geometry, init_model, forward_pipeline
from resilient_cs.channel import Mask
from resilient_cs.tensor import Tape, backward, mse
g = Geometry(block=16, p2_layers=5, p2_channels=32, p3_layers=3, p3_channels=32)
s, m = init_model(g, 0.1, 0)
x = np.random.default_rng(0).uniform(size=(16, 32, 32))
mask = Mask(np.ones((16, 4, 1, s.m)), 0.0)
def step():
    with Tape() as t:
        out = forward_pipeline(s, m, 0.0, x, mask=mask, upto="P3")
        loss = mse(out.recon_p3, x)
    backward(t, loss)
"""


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _pipeline_step(pure: bool, repeat: int) -> float:
    env = dict(os.environ, RESILIENT_CS_PURE="1" if pure else "0")
    code = STEP + f"\nimport timeit\nprint(min(timeit.repeat(step, number=1, repeat={repeat})))"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, 32, 34, 34))
    cols = _pykernels.im2col(x, 3)
    u = rng.random(1_000_000)
    cases = [
        ("im2col 16x32x34x34 k=3", lambda m: m.im2col(x, 3)),
        ("col2im 16x32x34x34 k=3", lambda m: m.col2im(cols, 16, 32, 34, 34, 3)),
        ("gilbert_chain n=1e6", lambda m: m.gilbert_chain(u, 0.0139, 0.125, False)),
    ]
    print(f"{'kernel':28s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for name, fn in cases:
        tp = _time(lambda: fn(_pykernels), args.repeat) * 1e3
        tc = _time(lambda: fn(_ckernels), args.repeat) * 1e3
        same = np.array_equal(fn(_pykernels), fn(_ckernels))
        print(f"{name:28s} {tp:10.2f} {tc:10.2f} {tp / tc:7.1f}x  {same}")

    tp = _pipeline_step(True, args.repeat) * 1e3
    tc = _pipeline_step(False, args.repeat) * 1e3
    print(f"{'P3 train step, batch 16':28s} {tp:10.2f} {tc:10.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
