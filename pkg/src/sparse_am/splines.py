"""Penalized B-spline bases for main effects and tensor-product interactions.

A main effect of covariate ``j`` is represented as ``B_j @ beta_j`` where
``B_j`` holds clamped B-spline basis functions evaluated at the data and the
roughness of ``beta_j`` is measured by a second-order difference penalty
``beta_j.T @ D.T @ D @ beta_j``.  Interactions use the row-wise Kronecker
product of two marginal bases together with a Kronecker-sum penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.interpolate import BSpline

__all__ = [
    "SplineConfig",
    "SplineBasis",
    "InteractionBasis",
    "DegenerateCovariateError",
    "make_knots",
    "bspline_basis",
    "difference_penalty",
    "tensor_basis",
    "interaction_penalty",
    "spline_basis",
    "interaction_basis",
]

KNOT_PLACEMENTS = ("quantile", "uniform")


class DegenerateCovariateError(ValueError):
    """Raised when a covariate has too few distinct values to place knots."""


@dataclass(frozen=True)
class SplineConfig:
    """Spline settings shared by every block of a model.

    ``n_knots_main`` and ``n_knots_interaction_per_axis`` count interior
    knots; the number of basis functions per axis is ``n_knots + degree + 1``.
    """

    degree: int = 3
    n_knots_main: int = 10
    n_knots_interaction_per_axis: int = 5
    knot_placement: str = "quantile"

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.n_knots_main < self.degree + 1:
            raise ValueError(
                f"n_knots_main={self.n_knots_main} must be >= degree + 1 = {self.degree + 1}"
            )
        if self.n_knots_interaction_per_axis < self.degree + 1:
            raise ValueError(
                "n_knots_interaction_per_axis="
                f"{self.n_knots_interaction_per_axis} must be >= degree + 1 = {self.degree + 1}"
            )
        if self.knot_placement not in KNOT_PLACEMENTS:
            raise ValueError(
                f"knot_placement must be one of {KNOT_PLACEMENTS}, got {self.knot_placement!r}"
            )


@dataclass(frozen=True)
class SplineBasis:
    """Univariate B-spline design matrix with its difference penalty."""

    basis_matrix: np.ndarray
    knots: np.ndarray
    degree: int
    diff_matrix: np.ndarray
    penalty_matrix: np.ndarray = field(repr=False)

    @property
    def n_basis(self) -> int:
        return self.basis_matrix.shape[1]


@dataclass(frozen=True)
class InteractionBasis:
    """Tensor-product design matrix and Kronecker-sum penalty for a pair."""

    basis_matrix: np.ndarray
    penalty_matrix: np.ndarray = field(repr=False)
    axis_dims: tuple[int, int]


def make_knots(values, config: SplineConfig, n_interior: int | None = None) -> np.ndarray:
    """Full clamped knot vector for ``values``.

    Interior knots sit at equally spaced positions of the range
    (``"uniform"``) or at equally spaced empirical quantiles
    (``"quantile"``); with ``n`` interior knots the quantile levels are
    ``1/(n+1), ..., n/(n+1)``.  Boundary knots are repeated ``degree + 1``
    times.  Interior knots that coincide with each other or with the
    boundary are dropped, so the returned basis may be smaller than
    requested for heavily tied covariates.

    Parameters
    ----------
    values : array-like
        Training values of one covariate.
    config : SplineConfig
    n_interior : int, optional
        Interior knot count; defaults to ``config.n_knots_main``.

    Returns
    -------
    np.ndarray
        Non-decreasing knot vector of length ``n_unique_interior + 2 * (degree + 1)``.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot place knots on an empty covariate")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariate contains non-finite values")
    if n_interior is None:
        n_interior = config.n_knots_main
    lo, hi = float(x.min()), float(x.max())
    if np.unique(x).size < 2:
        raise DegenerateCovariateError("degenerate covariate: fewer than 2 distinct values")

    levels = np.arange(1, n_interior + 1) / (n_interior + 1)
    if config.knot_placement == "uniform":
        interior = lo + levels * (hi - lo)
    else:
        interior = np.quantile(x, levels)
    interior = np.unique(interior)
    interior = interior[(interior > lo) & (interior < hi)]

    k = config.degree
    return np.concatenate([np.full(k + 1, lo), interior, np.full(k + 1, hi)])


def bspline_basis(values, knots, degree: int) -> np.ndarray:
    """Evaluate every B-spline of ``degree`` on ``knots`` at ``values``.

    Values outside ``[knots[0], knots[-1]]`` are clamped to the boundary.
    Returns a dense ``(n, len(knots) - degree - 1)`` array.
    """
    t = np.asarray(knots, dtype=float)
    x = np.clip(np.asarray(values, dtype=float).ravel(), t[0], t[-1])
    n_basis = t.size - degree - 1
    if n_basis < 1:
        raise ValueError("knot vector too short for the requested degree")
    if x.size == 0:
        return np.zeros((0, n_basis))
    return BSpline.design_matrix(x, t, degree, extrapolate=False).toarray()


def difference_penalty(n_basis: int, order: int = 2) -> np.ndarray:
    """Banded finite-difference matrix of shape ``(n_basis - order, n_basis)``.

    Row ``l`` holds ``(-1)**i * C(order, i)`` at column ``l + i``, i.e.
    ``[1, -2, 1]`` for second differences and ``[1, -1]`` for first.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if n_basis <= order:
        raise ValueError(f"need more than {order} basis functions, got {n_basis}")
    stencil = np.array([(-1) ** i * comb(order, i) for i in range(order + 1)], dtype=float)
    D = np.zeros((n_basis - order, n_basis))
    for row in range(n_basis - order):
        D[row, row:row + order + 1] = stencil
    return D


def tensor_basis(Bj, Bk) -> np.ndarray:
    """Row-wise Kronecker product: row ``i`` is ``kron(Bj[i], Bk[i])``."""
    Bj = np.asarray(Bj, dtype=float)
    Bk = np.asarray(Bk, dtype=float)
    if Bj.shape[0] != Bk.shape[0]:
        raise ValueError(f"row-count mismatch: {Bj.shape[0]} vs {Bk.shape[0]}")
    n = Bj.shape[0]
    return (Bj[:, :, None] * Bk[:, None, :]).reshape(n, Bj.shape[1] * Bk.shape[1])


def interaction_penalty(Dj, Dk) -> np.ndarray:
    """Kronecker-sum penalty ``(Dj'Dj) (x) I_L + I_K (x) (Dk'Dk)``."""
    Dj = np.asarray(Dj, dtype=float)
    Dk = np.asarray(Dk, dtype=float)
    K, L = Dj.shape[1], Dk.shape[1]
    return np.kron(Dj.T @ Dj, np.eye(L)) + np.kron(np.eye(K), Dk.T @ Dk)


def _difference_matrix(n_basis: int) -> np.ndarray:
    # tiny bases (degree 0/1 with few knots) cannot carry second differences
    if n_basis > 2:
        return difference_penalty(n_basis, 2)
    if n_basis == 2:
        return difference_penalty(n_basis, 1)
    return np.zeros((0, n_basis))


def spline_basis(values, config: SplineConfig, n_interior: int | None = None,
                 knots=None) -> SplineBasis:
    """Build a :class:`SplineBasis` for one covariate.

    ``knots`` may be supplied to evaluate an existing basis on new data.
    """
    if knots is None:
        knots = make_knots(values, config, n_interior)
    knots = np.asarray(knots, dtype=float)
    B = bspline_basis(values, knots, config.degree)
    D = _difference_matrix(B.shape[1])
    return SplineBasis(B, knots, config.degree, D, D.T @ D)


def interaction_basis(basis_j: SplineBasis, basis_k: SplineBasis) -> InteractionBasis:
    R = tensor_basis(basis_j.basis_matrix, basis_k.basis_matrix)
    S = interaction_penalty(basis_j.diff_matrix, basis_k.diff_matrix)
    return InteractionBasis(R, S, (basis_j.n_basis, basis_k.n_basis))
