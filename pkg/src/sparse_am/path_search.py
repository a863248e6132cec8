"""Warm-started regularization paths over a 2-d (lambda1, lambda2) grid.

The first column (largest ``lambda1``) is traced from the empty model
downwards in ``lambda2``; every other node ``(l, m)`` is warm-started from
``(l - 1, m)``.  Nodes that share ``l`` are independent and may be fit
concurrently.
"""

from __future__ import annotations

import logging
import math
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .block_cd import (
    AdditiveModel,
    ConvergenceWarning,
    FactorCache,
    FitOptions,
    PenaltyParams,
    compute_lambda2_max,
    fit,
    init_state,
    scan_gains,
)
from .design_matrix import Blocks, Dataset
from .evaluation import mae, predict, rmse

__all__ = [
    "PathGrid",
    "NodeMetrics",
    "grid_shape",
    "build_grid",
    "fit_path",
    "select_model",
    "node_objective",
]

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA1_RANGE = (1e-4, 10.0)
LAMBDA2_DECADES = 4


@dataclass
class NodeMetrics:
    lambda1: float
    lambda2: float
    n_main: int
    n_interaction: int
    train_rmse: float
    val_rmse: float = float("nan")
    val_mae: float = float("nan")
    objective: float = float("nan")
    converged: bool = True

    @property
    def support_size(self) -> int:
        return self.n_main + self.n_interaction


@dataclass
class PathGrid:
    """Tuning grid with its fitted models.

    Both sequences are strictly decreasing; ``node_models[(l, m)]`` is the
    model fit at ``(lambda1_values[l], lambda2_values[m])``.
    """

    lambda1_values: np.ndarray
    lambda2_values: np.ndarray
    alpha: float = 1.0
    lambda2_max: float = float("nan")
    node_models: dict[tuple[int, int], AdditiveModel] = field(default_factory=dict)
    node_metrics: dict[tuple[int, int], NodeMetrics] = field(default_factory=dict)
    failures: dict[tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self):
        self.lambda1_values = np.asarray(self.lambda1_values, dtype=float)
        self.lambda2_values = np.asarray(self.lambda2_values, dtype=float)
        for name, v in (("lambda1", self.lambda1_values), ("lambda2", self.lambda2_values)):
            if v.ndim != 1 or v.size < 1:
                raise ValueError(f"{name} grid must be a non-empty vector")
            if np.any(np.diff(v) >= 0):
                raise ValueError(f"{name} grid must be strictly decreasing")
            if np.any(v < 0):
                raise ValueError(f"{name} grid must be non-negative")
        self._lock = threading.Lock()

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.lambda1_values), len(self.lambda2_values)

    def params(self, l: int, m: int) -> PenaltyParams:
        return PenaltyParams(float(self.lambda1_values[l]), float(self.lambda2_values[m]),
                             self.alpha)

    def record(self, l, m, model=None, metrics=None, failure=None):
        with self._lock:
            if model is not None:
                self.node_models[(l, m)] = model
            if metrics is not None:
                self.node_metrics[(l, m)] = metrics
            if failure is not None:
                self.failures[(l, m)] = failure

    def nodes(self) -> list[tuple[int, int]]:
        return sorted(self.node_models)


def grid_shape(budget: int = 1000, L: int = 20) -> tuple[int, int]:
    """Split a node budget into ``L`` lambda1 values and ``budget // L`` lambda2 values."""
    if L < 1 or budget < L:
        raise ValueError("need 1 <= L <= budget")
    return L, budget // L


def build_grid(blocks: Blocks, y_centered, L: int = 20, M: int = 50,
               lambda1_range=DEFAULT_LAMBDA1_RANGE, alpha: float = 1.0, *,
               budget: int | None = None, cache: FactorCache | None = None,
               options: FitOptions | None = None) -> PathGrid:
    """Log-spaced grid anchored at ``lambda2_max`` for the largest ``lambda1``.

    ``lambda2`` runs from ``lambda2_max`` down four decades; ``lambda1``
    spans ``lambda1_range`` from its upper end.
    """
    if L < 1 or M < 1:
        raise ValueError("L and M must be >= 1")
    if budget is not None and L * M > budget:
        raise ValueError(f"grid {L}x{M} exceeds the budget of {budget} nodes")
    lo, hi = (float(v) for v in lambda1_range)
    if not 0 < lo <= hi:
        raise ValueError("lambda1_range must satisfy 0 < min <= max")
    if L > 1 and lo == hi:
        raise ValueError("lambda1_range must be non-degenerate when L > 1")
    lambda1 = np.geomspace(hi, lo, L)
    jitter = (options or FitOptions()).ridge_jitter
    l2max = compute_lambda2_max(blocks, y_centered, lambda1[0], alpha, cache, jitter)
    # a zero response still needs a valid decreasing grid
    top = l2max if l2max > 0 else np.finfo(float).tiny * 1e10
    lambda2 = np.geomspace(top, top * 10.0 ** -LAMBDA2_DECADES, M)
    return PathGrid(lambda1, lambda2, alpha, l2max)


def node_objective(blocks: Blocks, y_centered, model, params: PenaltyParams) -> float:
    """Objective of ``model``'s coefficients at ``params``."""
    from .block_cd import objective

    coefs = model.coefficients if isinstance(model, AdditiveModel) else model
    return objective(blocks, y_centered, coefs, params)


def _metrics(blocks, y, model: AdditiveModel, params, validation) -> NodeMetrics:
    r = np.asarray(y, dtype=float).copy()
    for idx, c in model.coefficients.items():
        r -= blocks.apply(idx, c)
    out = NodeMetrics(params.lambda1, params.lambda2, model.n_main, model.n_interaction,
                      float(np.sqrt(np.mean(r ** 2))), objective=model.objective,
                      converged=model.converged)
    if validation is not None and model.specs_complete:
        yhat = predict(model, validation.X)
        out.val_rmse = rmse(validation.y, yhat)
        out.val_mae = mae(validation.y, yhat)
    return out


def _fit_node(grid, blocks, y, l, m, warm, options, cache, validation, enlarge):
    params = grid.params(l, m)
    try:
        state = init_state(blocks, y, warm, cache=cache)
        if enlarge:
            gains = scan_gains(state, blocks, params, options)
            n_add = max(1, math.ceil(options.admit_fraction * max(len(state.active_set), 1)))
            ranked = sorted(gains, key=lambda b: (-gains[b], b.sort_key()))
            state.active_set = sorted(set(state.active_set) | set(ranked[:n_add]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = fit(blocks, y, params, options, cache=cache, state=state)
        grid.record(l, m, model, _metrics(blocks, y, model, params, validation))
        return model
    except Exception as exc:  # keep the rest of the grid alive
        logger.warning("node (%d, %d) failed: %s", l, m, exc)
        grid.record(l, m, failure=f"{type(exc).__name__}: {exc}")
        return None


def fit_path(grid: PathGrid, blocks: Blocks, y_centered, options: FitOptions | None = None,
             *, validation: Dataset | None = None, threads: int = 1,
             cache: FactorCache | None = None, progress=None) -> PathGrid:
    """Fill every node of ``grid`` in place and return it.

    ``validation`` (raw covariates, response in original units) adds
    validation RMSE and MAE to each node's metrics.  Failed nodes are
    recorded in ``grid.failures``; their successors fall back to the
    nearest available warm start.
    """
    options = options or FitOptions()
    y = np.asarray(y_centered, dtype=float)
    if cache is None and options.use_cache:
        cache = FactorCache()
    L, M = grid.shape

    warm = None
    for m in range(M):
        model = _fit_node(grid, blocks, y, 0, m, warm, options, cache, validation,
                          enlarge=m > 0)
        if model is not None:
            warm = model
        if progress:
            progress(0, m)

    def lateral(l, m):
        w = grid.node_models.get((l - 1, m))
        if w is None:
            w = grid.node_models.get((l, m - 1)) if m > 0 else None
        _fit_node(grid, blocks, y, l, m, w, options, cache, validation, enlarge=False)
        if progress:
            progress(l, m)

    # one lambda1 column at a time keeps the factor cache warm
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for l in range(1, L):
                list(pool.map(lambda m: lateral(l, m), range(M)))
    else:
        for l in range(1, L):
            for m in range(M):
                lateral(l, m)
    return grid


def select_model(grid: PathGrid, validation: Dataset | None = None, criterion: str = "rmse",
                 max_support: int | None = None) -> tuple[int, int, AdditiveModel]:
    """Validation-best node.

    ``validation`` holds raw covariates; when omitted the metrics stored by
    :func:`fit_path` are used.  Ties (relative 1e-12) go to the smaller
    support, then to the larger ``lambda2``, then to the larger ``lambda1``.
    """
    if criterion not in ("rmse", "mae"):
        raise ValueError("criterion must be 'rmse' or 'mae'")
    scored = []
    for (l, m), model in grid.node_models.items():
        size = len(model.support)
        if max_support is not None and size > max_support:
            continue
        if validation is not None:
            yhat = predict(model, validation.X)
            value = rmse(validation.y, yhat) if criterion == "rmse" else mae(validation.y, yhat)
        else:
            metrics = grid.node_metrics.get((l, m))
            value = getattr(metrics, f"val_{criterion}", float("nan"))
        if np.isfinite(value):
            scored.append((value, size, m, l))
    if not scored:
        raise ValueError("no fitted nodes to select from")
    best = min(s[0] for s in scored)
    tied = [s for s in scored if s[0] <= best + 1e-12 * max(abs(best), 1e-300)]
    value, size, m, l = min(tied, key=lambda s: (s[1], s[2], s[3]))
    return l, m, grid.node_models[(l, m)]
