"""Prediction, error metrics and the exports used to inspect fitted models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .block_cd import AdditiveModel
from .design_matrix import BlockIndex, DataError

__all__ = [
    "QuintileMatrix",
    "predict",
    "component",
    "rmse",
    "mae",
    "quintile_confusion",
    "quintile_labels",
    "sparsity_pattern",
    "sparsity_coordinates",
    "partial_dependence",
    "support_ordering",
    "effective_covariates",
]


def _standardized(model: AdditiveModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be a 2-d array")
    if X.shape[1] != model.n_features:
        raise DataError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    if model.standardizer is None:
        return X
    return model.standardizer.transform(X)


def component(model: AdditiveModel, block: BlockIndex, Z) -> np.ndarray:
    """Fitted component of ``block`` at standardized inputs ``Z``."""
    spec = model.specs[block]
    if not spec.knots:
        raise ValueError(f"block {block.label()} carries no spline metadata")
    return spec.design(Z) @ model.coefficients[block]


def predict(model: AdditiveModel, X_new) -> np.ndarray:
    """Predictions in response units for raw (unstandardized) covariates.

    Inputs are standardized with the training parameters and clamped to the
    training knot range of each block before the basis is evaluated.
    """
    Z = _standardized(model, X_new)
    out = np.full(Z.shape[0], model.intercept)
    for idx in sorted(model.support):
        out += component(model, idx, Z)
    return out


def _check_pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _check_pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(y, yhat) -> float:
    y, yhat = _check_pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


@dataclass(frozen=True)
class QuintileMatrix:
    counts: np.ndarray
    row_fractions: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for a in range(5):
            for b in range(5):
                rows.append((a + 1, b + 1, int(self.counts[a, b]), float(self.row_fractions[a, b])))
        return pd.DataFrame(rows, columns=["actual_quintile", "predicted_quintile",
                                           "count", "row_fraction"])


def quintile_labels(values) -> np.ndarray:
    """Quintile (0..4) of each entry; values on a boundary go to the lower one."""
    v = np.asarray(values, dtype=float).ravel()
    cuts = np.percentile(v, [20, 40, 60, 80])
    return np.searchsorted(cuts, v, side="left")


def quintile_confusion(actual, predicted) -> QuintileMatrix:
    """Joint quintile membership of actual and predicted values.

    Boundaries are the empirical 20/40/60/80th percentiles computed
    separately for each vector.
    """
    a, p = _check_pair(actual, predicted)
    counts = np.zeros((5, 5), dtype=np.int64)
    np.add.at(counts, (quintile_labels(a), quintile_labels(p)), 1)
    totals = counts.sum(axis=1, keepdims=True)
    fractions = np.divide(counts, totals, out=np.zeros((5, 5)), where=totals > 0)
    return QuintileMatrix(counts, fractions)


def _support_of(model_or_support) -> frozenset[BlockIndex]:
    if isinstance(model_or_support, AdditiveModel):
        return model_or_support.support
    return frozenset(model_or_support)


def sparsity_pattern(model, p: int | None = None) -> np.ndarray:
    """Symmetric 0/1 matrix: mains on the diagonal, pairs off it."""
    support = _support_of(model)
    if p is None:
        if not isinstance(model, AdditiveModel):
            raise ValueError("p is required when passing a bare support")
        p = model.n_features
    out = np.zeros((p, p), dtype=np.int8)
    for idx in support:
        if idx.is_interaction:
            out[idx.j, idx.k] = out[idx.k, idx.j] = 1
        else:
            out[idx.j, idx.j] = 1
    return out


def sparsity_coordinates(model) -> pd.DataFrame:
    """Upper-triangle coordinate list of the sparsity pattern."""
    rows = sorted((idx.j, idx.k if idx.is_interaction else idx.j) for idx in _support_of(model))
    frame = pd.DataFrame(rows, columns=["row", "col"])
    return frame.astype({"row": int, "col": int})


def partial_dependence(model: AdditiveModel, block: BlockIndex, grid_size: int = 50) -> pd.DataFrame:
    """Fitted component on a regular grid over the training range.

    Covariate columns are reported in original units.  Mains give
    ``grid_size`` rows; interactions give a ``grid_size x grid_size``
    lattice with the first covariate varying slowest.
    """
    if block not in model.support:
        raise ValueError(f"block {block.label(model.feature_names)} is not in the model support")
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    spec = model.specs[block]
    axes = [np.linspace(lo, hi, grid_size) for lo, hi in spec.ranges()]
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = [m.ravel() for m in mesh]
    Z = np.zeros((cols[0].size, model.n_features))
    for c, values in zip(block.covariates, cols):
        Z[:, c] = values
    f = component(model, block, Z)
    X = model.standardizer.inverse(Z) if model.standardizer is not None else Z
    names = model.feature_names or tuple(f"x{j}" for j in range(model.n_features))
    data = {names[c]: X[:, c] for c in block.covariates}
    data["f"] = f
    return pd.DataFrame(data)


def support_ordering(grid, l: int = 0) -> list[int]:
    """Main effects in order of entry along the lambda2 path at row ``l``.

    Mains entering at a larger ``lambda2`` come first; ties are broken by
    covariate index.
    """
    entry: dict[int, int] = {}
    for m in range(len(grid.lambda2_values)):
        model = grid.node_models.get((l, m))
        if model is None:
            continue
        for j in model.mains:
            entry.setdefault(j, m)
    return sorted(entry, key=lambda j: (entry[j], j))


def effective_covariates(model) -> int:
    """Number of distinct covariates used by any selected block."""
    return len({c for idx in _support_of(model) for c in idx.covariates})
