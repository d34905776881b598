"""Kernel functions and a row-granular LRU cache over the training Gram matrix.

The cache never holds more than ``capacity`` rows, so memory stays at
``capacity * (p + n)`` floats no matter how large the training set is.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, InputError

LINEAR = "linear"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice. ``scale`` is the Gaussian width s in exp(-|x-y|^2 / (2 s^2))."""

    kind: str = GAUSSIAN
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (LINEAR, GAUSSIAN):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == GAUSSIAN and not (np.isfinite(self.scale) and self.scale > 0):
            raise ConfigurationError(f"gaussian scale must be > 0, got {self.scale}")

    @classmethod
    def linear(cls):
        return cls(LINEAR, 1.0)

    @classmethod
    def gaussian(cls, scale=1.0):
        return cls(GAUSSIAN, float(scale))


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size == 0:
        raise InputError(f"kernel arguments must share a dimension >= 1, got {x.size} and {y.size}")
    if spec.kind == LINEAR:
        return float(np.dot(x, y))
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.scale**2)))


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Dense block k(A[r], B[c]). Callers are responsible for keeping blocks small."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == LINEAR:
        return A @ B.T
    sq = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * spec.scale**2))


def kernel_row(spec: KernelSpec, X: np.ndarray, x: np.ndarray) -> np.ndarray:
    """k(x, X[j]) for every row of X, computed without the norm-expansion trick
    so that the diagonal is exact and rows are bitwise reproducible."""
    if spec.kind == LINEAR:
        return X @ x
    diff = X - x
    return np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * spec.scale**2))


class GramCache:
    """LRU cache of full Gram rows for a fixed training matrix ``X``.

    Attributes
    ----------
    kernel_evals : int
        Number of kernel evaluations performed so far (one per row entry on
        each miss).
    hits, misses : int
        Cache statistics.
    peak_rows : int
        Largest number of rows held at any time.
    """

    def __init__(self, spec: KernelSpec, X, capacity: int = 64):
        self.spec = spec
        self.X = np.ascontiguousarray(X, dtype=float)
        if self.X.ndim != 2:
            raise InputError("training matrix must be 2-D")
        self._rows = OrderedDict()
        self._capacity = 1
        self.capacity = capacity
        self.kernel_evals = 0
        self.hits = 0
        self.misses = 0
        self.peak_rows = 0

    def __len__(self):
        return len(self._rows)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def capacity(self):
        return self._capacity

    @capacity.setter
    def capacity(self, value):
        value = int(value)
        if value < 1:
            raise ConfigurationError("cache capacity must be >= 1 row")
        self._capacity = value
        while len(self._rows) > value:
            self._rows.popitem(last=False)

    def row(self, i: int) -> np.ndarray:
        i = int(i)
        if not 0 <= i < self.n_samples:
            raise InputError(f"sample index {i} out of range [0, {self.n_samples})")
        row = self._rows.get(i)
        if row is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return row
        self.misses += 1
        row = kernel_row(self.spec, self.X, self.X[i])
        row.setflags(write=False)
        self.kernel_evals += self.n_samples
        self._rows[i] = row
        if len(self._rows) > self._capacity:
            self._rows.popitem(last=False)
        self.peak_rows = max(self.peak_rows, len(self._rows))
        return row

    def uncached_rows(self, indices) -> np.ndarray:
        """Rows for ``indices`` computed as one block and not stored.

        Counted as misses, so ``kernel_evals == misses * n_samples`` always holds.
        """
        indices = np.asarray(indices, dtype=int)
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_samples):
            raise InputError("sample index out of range")
        self.misses += indices.size
        self.kernel_evals += indices.size * self.n_samples
        return kernel_matrix(self.spec, self.X[indices], self.X)

    def __contains__(self, i):
        return int(i) in self._rows


def gram_row(cache: GramCache, i: int) -> np.ndarray:
    return cache.row(i)
