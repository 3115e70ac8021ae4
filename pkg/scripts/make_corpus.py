"""Regenerate the bundled starter corpus from scikit-image sample images.

Development helper only; the package reads the committed PGM files.
Run: python scripts/make_corpus.py
"""
from pathlib import Path

import numpy as np
from skimage import color, data, transform

from resilient_cs.imageio import synthetic_image, write_pgm

ROOT = Path(__file__).resolve().parents[1] / "src" / "resilient_cs" / "data"

TRAIN = ["camera", "coins", "moon", "brick", "grass", "gravel", "chelsea", "cell", "page", "hubble_deep_field"]
TEST = ["astronaut", "coffee", "rocket", "clock", "immunohistochemistry"]


def _gray_square(name, side):
    im = getattr(data, name)()
    if im.ndim == 3:
        im = color.rgb2gray(im[..., :3])
    im = np.asarray(im, dtype=np.float64)
    if im.max() > 1.0:
        im = im / 255.0
    h, w = im.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    im = im[top:top + s, left:left + s]
    return np.clip(transform.resize(im, (side, side), anti_aliasing=True), 0.0, 1.0)


def main():
    for sub, names, side in (("train", TRAIN, 128), ("test", TEST, 64)):
        out = ROOT / sub
        out.mkdir(parents=True, exist_ok=True)
        for name in names:
            write_pgm(_gray_square(name, side), out / f"{name}.pgm")
    synth = ROOT / "synthetic"
    synth.mkdir(parents=True, exist_ok=True)
    for i in range(4):
        write_pgm(synthetic_image(96, seed=i), synth / f"synth{i}.pgm")


if __name__ == "__main__":
    main()
