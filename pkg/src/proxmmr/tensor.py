"""Dense float64 matrices and deterministic random number generation.

Every numeric value in the package is a 2-D, C-contiguous (row-major)
float64 numpy array; ``as_matrix`` is the single coercion point. The
``Rng`` class wraps the published PCG64 generator and layers an explicit
Box-Muller transform on top of its uniform stream, so an identical seed
reproduces every draw bit-exactly and alternate implementations can match
the stream by implementing PCG64 + Box-Muller.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError

# Public alias: the universal numeric carrier is a 2-D float64 ndarray.
Tensor = np.ndarray

_MASK64 = (1 << 64) - 1


def as_matrix(x) -> Tensor:
    """Coerce ``x`` to a 2-D, row-major float64 array.

    1-D input becomes a column vector; scalars become 1x1.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected at most 2 dimensions, got {arr.ndim}")
    return np.ascontiguousarray(arr)


def zeros(rows: int, cols: int) -> Tensor:
    return np.zeros((rows, cols))


def ones(rows: int, cols: int) -> Tensor:
    return np.ones((rows, cols))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape} x {b.shape}"
        )
    return a @ b


def transpose(a: Tensor) -> Tensor:
    return np.ascontiguousarray(a.T)


class Rng:
    """Seedable deterministic generator (PCG64 bit stream).

    Gaussian draws use the Box-Muller transform over the raw uniform
    stream rather than the library's ziggurat sampler, so the normal
    stream is portable across implementations of PCG64.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, index: int) -> "Rng":
        """Derive an independent generator by seed-splitting (seed XOR index)."""
        return Rng(self.seed ^ (int(index) & _MASK64))

    def random(self, shape=(1, 1)) -> Tensor:
        """Uniform draws on [0, 1)."""
        return self._gen.random(shape)

    def uniform(self, lo: float, hi: float, shape=(1, 1)) -> Tensor:
        if lo > hi:
            raise DomainError(f"uniform requires lo <= hi, got ({lo}, {hi})")
        return lo + (hi - lo) * self._gen.random(shape)

    def normal(self, mean: float, std: float, shape=(1, 1)) -> Tensor:
        if std < 0:
            raise DomainError(f"normal requires std >= 0, got {std}")
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = self._gen.random(m)
        u2 = self._gen.random(m)
        # 1 - u1 lies in (0, 1], keeping the log finite.
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (mean + std * z).reshape(shape)

    def integers(self, lo: int, hi: int, shape=(1, 1)) -> np.ndarray:
        """Integer draws on [lo, hi)."""
        if lo >= hi:
            raise DomainError(f"integers requires lo < hi, got ({lo}, {hi})")
        return self._gen.integers(lo, hi, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
