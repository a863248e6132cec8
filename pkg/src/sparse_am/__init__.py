"""Sparse additive models with pairwise interactions and L0 block selection."""

from .block_cd import AdditiveModel, FitOptions, PenaltyParams, compute_lambda2_max, fit
from .design_matrix import (
    BlockIndex,
    BlockSet,
    Dataset,
    build_blocks,
    load_csv,
    split,
    standardize,
)
from .evaluation import mae, predict, rmse
from .hierarchy import check_strong_hierarchy, fit_hierarchy_path
from .model_io import load_model, save_model
from .path_search import PathGrid, build_grid, fit_path, select_model
from .splines import SplineConfig

__version__ = "0.1.0"

__all__ = [
    "AdditiveModel",
    "BlockIndex",
    "BlockSet",
    "Dataset",
    "FitOptions",
    "PathGrid",
    "PenaltyParams",
    "SplineConfig",
    "build_blocks",
    "build_grid",
    "check_strong_hierarchy",
    "compute_lambda2_max",
    "fit",
    "fit_hierarchy_path",
    "fit_path",
    "load_csv",
    "load_model",
    "mae",
    "predict",
    "rmse",
    "save_model",
    "select_model",
    "split",
    "standardize",
]
