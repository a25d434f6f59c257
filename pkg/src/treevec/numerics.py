"""Dense linear algebra and optimization kernel.

Thin layer over numpy/scipy with explicit dimension checks, plus Adam and
a seeded Gaussian sampler. Everything here is deterministic given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


def _as2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}")
    return a + b


def scale(alpha: float, a) -> np.ndarray:
    return float(alpha) * np.asarray(a, dtype=float)


def transpose(a) -> np.ndarray:
    return _as2d(a).T


def dot(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dot needs equal-length vectors, got {a.shape}, {b.shape}")
    return float(a @ b)


def norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def cholesky_solve(a, b) -> np.ndarray:
    """Solve A S = B for symmetric positive definite A."""
    a = _as2d(a)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"A must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"B rows {b.shape} do not match A {a.shape}")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not positive definite") from exc
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - alias in new scipy
        raise ValueError("matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, b)


def sym_eig_topk(c, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of a symmetric matrix, eigenvalues descending.

    Returns ``(values, vectors)`` with vectors as columns.
    """
    c = _as2d(c)
    if c.shape[0] != c.shape[1]:
        raise DimensionError(f"matrix must be square, got {c.shape}")
    if k < 0 or k > c.shape[0]:
        raise DimensionError(f"k={k} out of range for {c.shape}")
    if k == 0:
        return np.empty(0), np.empty((c.shape[0], 0))
    values, vectors = np.linalg.eigh(c)
    order = np.argsort(values)[::-1][:k]
    return values[order], vectors[:, order]


def op_norm(a) -> float:
    """Largest singular value."""
    a = _as2d(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


@dataclass
class AdamState:
    """Per-parameter Adam accumulators keyed like the parameter mapping."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: Mapping) -> dict:
    """One bias-corrected Adam update, in place on ``params``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for key in sorted(params):
        g = grads[key]
        p = params[key]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key}")
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
    return params


class Rng:
    """Seeded random stream; identical seed gives an identical stream."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.default_rng(self.seed)

    def gauss(self, dim) -> np.ndarray:
        """Standard normal draws; ``dim`` is an int or a shape tuple."""
        return self._gen.standard_normal(dim)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def shuffle(self, seq: list) -> None:
        self._gen.shuffle(seq)

    def random(self) -> float:
        return float(self._gen.random())


def gauss(rng: Rng, dim: int) -> np.ndarray:
    """Vector of i.i.d. standard normal entries."""
    return rng.gauss(dim)
