"""Grayscale PGM files, padding to the pipeline's tile size, bundled corpus."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError

_WS = b" \t\n\r\v\f"


@dataclass
class ImageFile:
    width: int
    height: int
    pixels: np.ndarray  # uint8, (height, width)
    path: str = ""

    def normalized(self) -> np.ndarray:
        return self.pixels.astype(np.float64) / 255.0


def _header_tokens(raw: bytes, count: int) -> tuple[list[tuple[bytes, int]], int]:
    """Read ``count`` header tokens as (token, offset) pairs, skipping comments.

    Also returns the offset just past the single whitespace byte that ends
    the last token, where the raster starts.
    """
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < count:
        while pos < n and (raw[pos] in _WS or raw[pos] == ord("#")):
            if raw[pos] == ord("#"):
                while pos < n and raw[pos] not in b"\n\r":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise ParseError("truncated PGM header", pos)
        start = pos
        while pos < n and raw[pos] not in _WS and raw[pos] != ord("#"):
            pos += 1
        tokens.append((raw[start:pos], start))
    if pos >= n or raw[pos] not in _WS:
        raise ParseError("missing whitespace after PGM header", pos)
    return tokens, pos + 1


def _int_token(tok: bytes, offset: int, what: str) -> int:
    if not tok.isdigit():
        raise ParseError(f"bad {what} {tok!r}", offset)
    return int(tok)


def parse_pgm(raw: bytes, path: str = "") -> ImageFile:
    if raw[:2] not in (b"P2", b"P5") or (len(raw) > 2 and raw[2] not in _WS and raw[2] != ord("#")):
        raise ParseError(f"bad magic {raw[:2]!r}, expected P2 or P5", 0)
    binary = raw[:2] == b"P5"
    tokens, body = _header_tokens(raw[2:], 3)
    (w_tok, w_off), (h_tok, h_off), (m_tok, m_off) = tokens
    body += 2
    width = _int_token(w_tok, w_off + 2, "width")
    height = _int_token(h_tok, h_off + 2, "height")
    maxval = _int_token(m_tok, m_off + 2, "maxval")
    if width < 1 or height < 1:
        raise ParseError(f"image size must be positive, got {width}x{height}", w_off + 2)
    if not 0 < maxval <= 255:
        raise ParseError(f"maxval {maxval} not in 1..255", m_off + 2)
    count = width * height
    if binary:
        if len(raw) - body < count:
            raise ParseError(f"truncated raster: need {count} samples, have {len(raw) - body}", len(raw))
        samples = np.frombuffer(raw, dtype=np.uint8, count=count, offset=body).astype(np.int64)
        bad = np.flatnonzero(samples > maxval)
        if bad.size:
            raise ParseError(f"sample {samples[bad[0]]} exceeds maxval {maxval}", body + int(bad[0]))
    else:
        samples = np.empty(count, dtype=np.int64)
        pos = body
        text = raw
        for i in range(count):
            while pos < len(text) and (text[pos] in _WS or text[pos] == ord("#")):
                if text[pos] == ord("#"):
                    while pos < len(text) and text[pos] not in b"\n\r":
                        pos += 1
                else:
                    pos += 1
            if pos >= len(text):
                raise ParseError(f"truncated raster: got {i} of {count} samples", pos)
            start = pos
            while pos < len(text) and text[pos] not in _WS:
                pos += 1
            v = _int_token(text[start:pos], start, "sample")
            if v > maxval:
                raise ParseError(f"sample {v} exceeds maxval {maxval}", start)
            samples[i] = v
    if maxval != 255:
        samples = np.floor(samples * 255.0 / maxval + 0.5).astype(np.int64)
    return ImageFile(width, height, samples.astype(np.uint8).reshape(height, width), str(path))


def read_pgm(path) -> ImageFile:
    return parse_pgm(Path(path).read_bytes(), str(path))


def quantize(image) -> np.ndarray:
    """[0, 1] floats to 8-bit samples, round half up."""
    a = np.asarray(getattr(image, "data", image), dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"expected a 2-D image, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min(initial=0.0) < 0.0 or a.max(initial=0.0) > 1.0:
        raise ContractError("image values must be finite and within [0, 1]")
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def write_pgm(image, path) -> None:
    """Write a binary (P5) PGM."""
    q = quantize(image)
    h, w = q.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def pad_image(image, block: int, levels: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Mirror-pad bottom/right up to the next multiple of lcm(2*block, 2**levels).

    Returns the padded image and the original (height, width) for cropping.
    """
    a = np.asarray(getattr(image, "data", image), dtype=np.float64)
    h, w = a.shape
    tile = int(np.lcm(2 * block, 2 ** levels))
    ph = -h % tile
    pw = -w % tile
    if ph == 0 and pw == 0:
        return a, (h, w)
    return np.pad(a, ((0, ph), (0, pw)), mode="symmetric"), (h, w)


def crop(image, size: tuple[int, int]) -> np.ndarray:
    a = np.asarray(getattr(image, "data", image))
    return a[..., : size[0], : size[1]]


def synthetic_image(side: int, seed: int = 0) -> np.ndarray:
    """Smooth shapes over a gradient background, values in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] / side
    a, b = rng.uniform(-0.3, 0.3, size=2)
    img = 0.45 + a * (xx - 0.5) + b * (yy - 0.5)
    for _ in range(6):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        r = rng.uniform(0.05, 0.25)
        level = rng.uniform(-0.35, 0.35)
        if rng.random() < 0.5:
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            inside = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < r * 0.7)
        img = np.where(inside, img + level, img)
    img += 0.04 * np.sin(2 * np.pi * rng.uniform(2, 6) * xx) * np.cos(2 * np.pi * rng.uniform(2, 6) * yy)
    return np.clip(img, 0.0, 1.0)


def load_dir(directory) -> list[ImageFile]:
    """All ``*.pgm`` files in a directory, sorted by name."""
    files = sorted(Path(directory).glob("*.pgm"))
    return [read_pgm(p) for p in files]


def corpus_dir(name: str) -> Path:
    """Path of a bundled corpus: ``train``, ``test`` or ``synthetic``."""
    return Path(str(resources.files("resilient_cs") / "data" / name))
