"""Search boxes and reproducible random streams.

Every random draw in the package comes from a stream keyed by
``(seed, tag, block)``. Work is cut into fixed-size blocks before it is
handed to workers, so results never depend on how many workers ran.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import zlib

import numpy as np
from scipy.stats import qmc

BLOCK = 1024


def stream(seed: int, tag: str, block: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, block)``."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode()), int(block)])


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("empty box: every hi must exceed lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, m: int, side: float = 1.0, center=None) -> "Box":
        c = np.zeros(m) if center is None else np.asarray(center, dtype=float)
        return cls(c - 0.5 * side, c + 0.5 * side)

    @classmethod
    def around(cls, points, inflate: float = 3.0) -> "Box":
        """Bounding box of ``points`` scaled ``inflate`` times about its center.

        Flat directions get the largest extent so the box is never empty.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        width = hi - lo
        wmax = width.max()
        if wmax == 0.0:
            wmax = 1.0
        width = np.where(width > 0.0, width, wmax)
        center = 0.5 * (lo + hi)
        return cls(center - 0.5 * inflate * width, center + 0.5 * inflate * width)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        pad = slack * self.diameter
        return np.all((x >= self.lo - pad) & (x <= self.hi + pad), axis=-1)

    def uniform(self, n: int, seed: int, tag: str) -> np.ndarray:
        """``n`` uniform points, drawn block by block."""
        out = np.empty((n, self.dim))
        for b, start in enumerate(range(0, n, BLOCK)):
            stop = min(n, start + BLOCK)
            out[start:stop] = stream(seed, tag, b).uniform(self.lo, self.hi, size=(stop - start, self.dim))
        return out

    def halton(self, n: int, seed: int, tag: str = "halton") -> np.ndarray:
        """Scrambled Halton points, a low-discrepancy start set."""
        eng = qmc.Halton(d=self.dim, scramble=True, seed=stream(seed, tag))
        return qmc.scale(eng.random(n), self.lo, self.hi)

    def to_json(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def map_blocks(fn, n: int, workers: int = 1, block: int = BLOCK):
    """Apply ``fn(start, stop)`` over fixed blocks of ``range(n)``; results in block order."""
    spans = [(s, min(n, s + block)) for s in range(0, n, block)]
    if workers <= 1 or len(spans) <= 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda ab: fn(*ab), spans))
