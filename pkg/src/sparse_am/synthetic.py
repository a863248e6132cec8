"""Synthetic additive data with a known support, for tests and experiments."""

from __future__ import annotations

import numpy as np

from .design_matrix import BlockIndex, Dataset

__all__ = ["TRUE_SUPPORT", "signal", "make_additive_data"]

# two nonlinear mains and one interaction between them
TRUE_SUPPORT = frozenset({BlockIndex(0), BlockIndex(1), BlockIndex(0, 1)})


def signal(X) -> np.ndarray:
    x0, x1 = X[:, 0], X[:, 1]
    return np.sin(2.0 * x0) + (x1 ** 2 - 1.0) + 0.8 * x0 * x1


def make_additive_data(n: int, p: int, seed: int = 0, snr: float = 5.0) -> Dataset:
    """``y = f(x0, x1) + noise`` with covariates uniform on [-2, 2].

    The noise variance is ``var(f) / snr`` where ``var(f)`` is the sample
    variance of the signal.
    """
    if p < 2:
        raise ValueError("need p >= 2")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n, p))
    f = signal(X)
    sigma = np.sqrt(f.var() / snr)
    y = f + sigma * rng.normal(size=n)
    names = tuple(f"x{j}" for j in range(p))
    return Dataset(X, y, names, tuple(str(i) for i in range(n)))
