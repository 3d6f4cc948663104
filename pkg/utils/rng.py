"""
Reproducible random streams.

A stream is identified by (master seed, module tag, index) and realized as
numpy's Philox4x64-10 counter-based generator keyed with the two 64-bit
words [seed, (tag << 48) | index], counter starting at zero. Any language
with a Philox4x64-10 implementation reproduces the same raw bits.
Normal variates use the Marsaglia polar method on pairs of doubles
u = 2 * U[0,1) - 1, rejecting pairs with s = u1^2 + u2^2 outside (0, 1).
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np

MODULE_TAGS: Dict[str, int] = {
    "ssa": 1,
    "langevin": 2,
    "wright_fisher": 3,
    "compare": 4,
    "geometry": 5,
}

_MASK64 = (1 << 64) - 1
_INDEX_BITS = 48
UNIFORM_BUFFER = 4096


@dataclass(frozen=True)
class StreamId:
    """Identifier of one independent random stream."""
    seed: int
    tag: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        return make_stream(self.seed, self.tag, self.index)


def tag_of(module: str) -> int:
    return MODULE_TAGS[module]


def make_stream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Generator for the stream (seed, tag, index)."""
    if not 0 <= index < (1 << _INDEX_BITS):
        raise ValueError(f"stream index {index} out of range")
    if not 0 <= tag < (1 << 16):
        raise ValueError(f"module tag {tag} out of range")
    key = np.array([seed & _MASK64, (tag << _INDEX_BITS) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_for(seed: int, module: str, index: int = 0) -> np.random.Generator:
    return make_stream(seed, tag_of(module), index)


def polar_normals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals by the polar method, drawn pair-wise in batches."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        pairs = max(8, int(need * 0.64) + 8)
        u = 2.0 * rng.random((pairs, 2)) - 1.0
        s = np.sum(u * u, axis=1)
        keep = (s > 0.0) & (s < 1.0)
        u = u[keep]
        s = s[keep]
        z = (u * np.sqrt(-2.0 * np.log(s) / s)[:, None]).ravel()
        take = min(need, z.size)
        out[filled:filled + take] = z[:take]
        filled += take
    return out


def normal_array(rng: np.random.Generator, shape) -> np.ndarray:
    size = int(np.prod(shape))
    return polar_normals(rng, size).reshape(shape)


class UniformBuffer:
    """Uniform doubles on [0, 1) served from fixed-size refills."""

    def __init__(self, rng: np.random.Generator, size: int = UNIFORM_BUFFER):
        self.rng = rng
        self.size = size

    def take(self) -> np.ndarray:
        return self.rng.random(self.size)
