"""Data ingestion, standardization, splitting and block construction.

Blocks are the unit of selection: one per covariate (main effect) and one
per requested covariate pair (interaction).  Every block basis is centered
with its training column means so that the fitted components are
identified against the intercept.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import total_ordering
from pathlib import Path

import numpy as np
import pandas as pd

from .splines import (
    DegenerateCovariateError,
    SplineConfig,
    bspline_basis,
    interaction_penalty,
    make_knots,
    tensor_basis,
    _difference_matrix,
)

__all__ = [
    "DataError",
    "Dataset",
    "LoadReport",
    "Standardizer",
    "BlockIndex",
    "BlockSpec",
    "Block",
    "Blocks",
    "DenseBlocks",
    "BlockSet",
    "load_csv",
    "standardize",
    "split",
    "build_blocks",
    "all_pairs",
]


class DataError(ValueError):
    """Input data cannot be used as given."""


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    row_ids: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("X must be two-dimensional")
        if X.shape[0] != y.shape[0] or X.shape[0] != len(self.row_ids):
            raise DataError("X, y and row_ids disagree on the number of rows")
        if X.shape[1] != len(self.feature_names):
            raise DataError("X and feature_names disagree on the number of columns")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one row and one column")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.X[rows], self.y[rows], self.feature_names,
                       tuple(self.row_ids[i] for i in rows))

    def with_X(self, X) -> "Dataset":
        return Dataset(X, self.y, self.feature_names, self.row_ids)


@dataclass
class LoadReport:
    n_rows_read: int = 0
    rows_dropped: int = 0
    columns_excluded: list[str] = field(default_factory=list)
    cells_imputed: dict[str, int] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"rows read: {self.n_rows_read}",
            f"rows dropped (missing response): {self.rows_dropped}",
            f"columns excluded: {', '.join(self.columns_excluded) or '(none)'}",
            f"cells imputed: {sum(self.cells_imputed.values())}",
        ]
        for name, count in self.cells_imputed.items():
            lines.append(f"  {name}: {count}")
        return "\n".join(lines) + "\n"


def load_csv(path, response_column: str, exclude_columns: Iterable[str] = (),
             id_column: str | None = None) -> tuple[Dataset, LoadReport]:
    """Read a UTF-8 CSV with a header row into a :class:`Dataset`.

    Empty cells and ``NA`` count as missing.  Rows with a missing response
    are dropped; missing covariate cells are replaced by the column mean of
    the remaining rows and counted in the returned report.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, encoding="utf-8", na_values=["", "NA"],
                            keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError,
            pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc

    if response_column not in frame.columns:
        raise DataError(f"response column {response_column!r} not found in {path}")
    exclude = [c for c in exclude_columns]
    report = LoadReport(n_rows_read=len(frame))
    report.columns_excluded = [c for c in exclude if c in frame.columns]

    keep = frame[response_column].notna().to_numpy()
    report.rows_dropped = int((~keep).sum())
    frame = frame.loc[keep].reset_index(drop=True)

    if id_column is not None:
        if id_column not in frame.columns:
            raise DataError(f"id column {id_column!r} not found in {path}")
        row_ids = frame[id_column].astype(str).tolist()
    else:
        row_ids = [str(i) for i in range(len(frame))]

    drop = set(exclude) | {response_column}
    if id_column is not None:
        drop.add(id_column)
    features = [c for c in frame.columns if c not in drop]
    if not features:
        raise DataError("no covariate columns left after exclusions")

    try:
        y = pd.to_numeric(frame[response_column], errors="raise").to_numpy(float)
        X = frame[features].apply(pd.to_numeric, errors="raise").to_numpy(float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric data in {path}: {exc}") from exc

    for col, name in enumerate(features):
        missing = ~np.isfinite(X[:, col])
        if missing.all():
            raise DataError(f"column {name!r} has no observed values")
        if missing.any():
            X[missing, col] = X[~missing, col].mean()
            report.cells_imputed[name] = int(missing.sum())

    return Dataset(X, y, tuple(features), tuple(row_ids)), report


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stdevs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "stdevs", np.asarray(self.stdevs, dtype=float))
        if np.any(self.stdevs <= 0):
            raise ValueError("standard deviations must be strictly positive")

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.means.size:
            raise DataError(f"expected {self.means.size} columns, got {X.shape[-1]}")
        return (X - self.means) / self.stdevs

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.stdevs + self.means


def standardize(train: Dataset) -> tuple[Standardizer, Dataset]:
    """Center every column and scale it to unit sample standard deviation."""
    means = train.X.mean(axis=0)
    if train.n < 2:
        raise DataError("need at least two rows to standardize")
    sd = train.X.std(axis=0, ddof=1)
    for name, s in zip(train.feature_names, sd):
        if not s > 0:
            raise DataError(f"column {name!r} has zero variance")
    scaler = Standardizer(means, sd)
    return scaler, train.with_X(scaler.transform(train.X))


def split(data: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0
          ) -> tuple[Dataset, Dataset, Dataset]:
    """Random train/validation/test partition.

    Sizes are ``round(f * n)`` for the first two parts; the test part takes
    the remainder.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    n = data.n
    n_train = int(round(fr[0] * n))
    n_val = int(round(fr[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"n={n} is too small for non-empty splits {tuple(fractions)}")
    perm = np.random.default_rng(seed).permutation(n)
    return (data.subset(perm[:n_train]),
            data.subset(perm[n_train:n_train + n_val]),
            data.subset(perm[n_train + n_val:]))


# ---------------------------------------------------------------------------
# Block indexing
# ---------------------------------------------------------------------------


@total_ordering
@dataclass(frozen=True)
class BlockIndex:
    """A main effect ``(j,)`` or an interaction ``(j, k)`` with ``j < k``.

    Sorting follows the canonical order: all mains by ``j``, then all pairs
    lexicographically.
    """

    j: int
    k: int | None = None

    def __post_init__(self):
        if self.j < 0 or (self.k is not None and self.k <= self.j):
            raise ValueError(f"invalid block index ({self.j}, {self.k})")

    @classmethod
    def main(cls, j: int) -> "BlockIndex":
        return cls(int(j))

    @classmethod
    def pair(cls, j: int, k: int) -> "BlockIndex":
        j, k = int(j), int(k)
        return cls(min(j, k), max(j, k))

    @property
    def is_interaction(self) -> bool:
        return self.k is not None

    @property
    def covariates(self) -> tuple[int, ...]:
        return (self.j,) if self.k is None else (self.j, self.k)

    def sort_key(self):
        return (0, self.j, -1) if self.k is None else (1, self.j, self.k)

    def __lt__(self, other):
        if not isinstance(other, BlockIndex):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def id(self, p: int) -> int:
        """Canonical integer id among ``p`` mains and ``p(p-1)/2`` pairs."""
        if self.k is None:
            return self.j
        j, k = self.j, self.k
        return p + j * (2 * p - j - 1) // 2 + (k - j - 1)

    @classmethod
    def from_id(cls, i: int, p: int) -> "BlockIndex":
        if i < p:
            return cls(i)
        rest = i - p
        for j in range(p - 1):
            width = p - 1 - j
            if rest < width:
                return cls(j, j + 1 + rest)
            rest -= width
        raise ValueError(f"id {i} out of range for p={p}")

    def label(self, names=None) -> str:
        if names is None:
            return f"x{self.j}" if self.k is None else f"x{self.j}:x{self.k}"
        if self.k is None:
            return str(names[self.j])
        return f"{names[self.j]}:{names[self.k]}"


def all_pairs(p: int) -> list[tuple[int, int]]:
    return [(j, k) for j in range(p) for k in range(j + 1, p)]


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSpec:
    """Everything needed to evaluate a block basis on new standardized data."""

    index: BlockIndex
    knots: tuple[np.ndarray, ...]
    degree: int
    col_means: np.ndarray | None

    @property
    def centered(self) -> bool:
        return self.col_means is not None

    def raw_design(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        bases = [bspline_basis(Z[:, c], t, self.degree)
                 for c, t in zip(self.index.covariates, self.knots)]
        return bases[0] if len(bases) == 1 else tensor_basis(*bases)

    def design(self, Z) -> np.ndarray:
        """Centered design matrix for standardized covariates ``Z`` (n x p)."""
        B = self.raw_design(Z)
        if self.col_means is not None:
            B = B - self.col_means
        return B

    def ranges(self) -> list[tuple[float, float]]:
        return [(float(t[0]), float(t[-1])) for t in self.knots]


@dataclass(frozen=True)
class Block:
    """A materialized block: design matrix, penalty and Gram matrix."""

    spec: BlockSpec
    basis: np.ndarray
    penalty: np.ndarray
    gram: np.ndarray

    @property
    def index(self) -> BlockIndex:
        return self.spec.index

    @property
    def is_interaction(self) -> bool:
        return self.spec.index.is_interaction

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def from_arrays(cls, basis, penalty=None, index: BlockIndex | None = None,
                    center: bool = False) -> "Block":
        """Wrap explicit matrices; used for synthetic problems and tests."""
        B = np.asarray(basis, dtype=float)
        means = None
        if center:
            means = B.mean(axis=0)
            B = B - means
        if penalty is None:
            penalty = np.zeros((B.shape[1], B.shape[1]))
        if index is None:
            index = BlockIndex(0)
        spec = BlockSpec(index, (), 0, means)
        return cls(spec, B, np.asarray(penalty, dtype=float), B.T @ B)


class Blocks(Mapping):
    """Read-only mapping ``BlockIndex -> Block`` used by the solvers.

    Subclasses may override the accessors to avoid materializing designs.
    """

    n: int
    intercept: float = 0.0
    standardizer: Standardizer | None = None
    feature_names: tuple[str, ...] | None = None
    n_features: int | None = None

    @property
    def indices(self) -> list[BlockIndex]:
        return sorted(self.keys())

    def design(self, idx: BlockIndex) -> np.ndarray:
        return self[idx].basis

    def gram(self, idx: BlockIndex) -> np.ndarray:
        return self[idx].gram

    def penalty(self, idx: BlockIndex) -> np.ndarray:
        return self[idx].penalty

    def spec(self, idx: BlockIndex) -> BlockSpec:
        return self[idx].spec

    def dim(self, idx: BlockIndex) -> int:
        return self.gram(idx).shape[0]

    def apply(self, idx: BlockIndex, coef) -> np.ndarray:
        """``B_b @ coef``."""
        return self.design(idx) @ coef

    def apply_transpose(self, idx: BlockIndex, r) -> np.ndarray:
        """``B_b.T @ r``."""
        return self.design(idx).T @ r

    def cross_products(self, r, indices=None) -> dict[BlockIndex, np.ndarray]:
        """``B_b.T @ r`` for every requested block."""
        r = np.asarray(r, dtype=float)
        if indices is None:
            indices = self.indices
        return {idx: self.design(idx).T @ r for idx in indices}


class DenseBlocks(Blocks):
    """Blocks held fully in memory, e.g. built from explicit arrays."""

    def __init__(self, blocks: Mapping[BlockIndex, Block] | Iterable[Block],
                 intercept: float = 0.0):
        if isinstance(blocks, Mapping):
            items = dict(blocks)
        else:
            items = {b.index: b for b in blocks}
        if not items:
            raise ValueError("need at least one block")
        ns = {b.basis.shape[0] for b in items.values()}
        if len(ns) != 1:
            raise ValueError("all blocks must have the same number of rows")
        self._blocks = {idx: items[idx] for idx in sorted(items)}
        self.n = ns.pop()
        self.intercept = float(intercept)
        self.n_features = 1 + max(max(i.covariates) for i in self._blocks)

    def __getitem__(self, idx):
        return self._blocks[idx]

    def __iter__(self):
        return iter(self._blocks)

    def __len__(self):
        return len(self._blocks)

    @property
    def indices(self):
        return list(self._blocks)


class BlockSet(Blocks):
    """All spline blocks of a training set, with interactions built lazily.

    Main-effect designs and the per-axis marginal bases of interactions are
    kept in memory.  Interaction designs (``n x K*L``) are materialized on
    first access and held in a least-recently-used cache bounded by
    ``cache_bytes``; their Gram matrices are small and kept permanently.
    """

    def __init__(self, Z, config: SplineConfig, pairs=None, *,
                 standardizer: Standardizer | None = None,
                 feature_names=None, intercept: float = 0.0,
                 cache_bytes: int = 1 << 30):
        Z = np.asarray(Z, dtype=float)
        self.Z = Z
        self.n, self.n_features = Z.shape
        self.config = config
        self.standardizer = standardizer
        self.feature_names = (tuple(feature_names) if feature_names is not None
                              else tuple(f"x{j}" for j in range(self.n_features)))
        self.intercept = float(intercept)
        self.cache_bytes = int(cache_bytes)

        p = self.n_features
        if pairs is None:
            pairs = all_pairs(p)
        pair_idx = sorted({BlockIndex.pair(j, k) for j, k in pairs})
        for b in pair_idx:
            if b.k >= p:
                raise ValueError(f"pair {b.covariates} out of range for p={p}")

        self._main: dict[BlockIndex, Block] = {}
        for j in range(p):
            idx = BlockIndex(j)
            try:
                knots = make_knots(Z[:, j], config, config.n_knots_main)
            except DegenerateCovariateError as exc:
                raise DegenerateCovariateError(f"block {idx.label(self.feature_names)}: {exc}") from exc
            raw = bspline_basis(Z[:, j], knots, config.degree)
            means = raw.mean(axis=0)
            B = raw - means
            D = _difference_matrix(B.shape[1])
            spec = BlockSpec(idx, (knots,), config.degree, means)
            self._main[idx] = Block(spec, B, D.T @ D, B.T @ B)

        axes = sorted({c for b in pair_idx for c in b.covariates})
        self._axis_knots: dict[int, np.ndarray] = {}
        self._axis_raw: dict[int, np.ndarray] = {}
        self._axis_D: dict[int, np.ndarray] = {}
        for c in axes:
            try:
                knots = make_knots(Z[:, c], config, config.n_knots_interaction_per_axis)
            except DegenerateCovariateError as exc:
                raise DegenerateCovariateError(f"interaction axis {self.feature_names[c]}: {exc}") from exc
            self._axis_knots[c] = knots
            self._axis_raw[c] = bspline_basis(Z[:, c], knots, config.degree)
            self._axis_D[c] = _difference_matrix(self._axis_raw[c].shape[1])

        self._pairs = pair_idx
        self._pair_set = set(pair_idx)
        self._indices = sorted(self._main) + pair_idx
        self._pair_means: dict[BlockIndex, np.ndarray] = {}
        self._pair_gram: dict[BlockIndex, np.ndarray] = {}
        self._pair_penalty: dict[tuple[int, int], np.ndarray] = {}
        self._lru: OrderedDict[BlockIndex, Block] = OrderedDict()
        self._lru_bytes = 0
        self._lock = threading.Lock()
        self._key_locks: dict[BlockIndex, threading.Lock] = {}

        # concatenated axis bases, used for batched cross products
        self._axis_order = axes
        offsets = [0]
        for c in axes:
            offsets.append(offsets[-1] + self._axis_raw[c].shape[1])
        self._axis_offset = {c: offsets[i] for i, c in enumerate(axes)}
        self._axis_end = offsets[-1]
        self._axis_all = (np.hstack([self._axis_raw[c] for c in axes])
                          if axes else np.zeros((self.n, 0)))
        self._partners: dict[int, list[int]] = {}
        for b in pair_idx:
            self._partners.setdefault(b.j, []).append(b.k)

    # -- Mapping interface -------------------------------------------------

    def __getitem__(self, idx: BlockIndex) -> Block:
        if idx in self._main:
            return self._main[idx]
        if idx not in self._pair_set:
            raise KeyError(idx)
        return self._interaction(idx)

    def __iter__(self):
        return iter(self._indices)

    def __len__(self):
        return len(self._indices)

    def __contains__(self, idx):
        return idx in self._main or idx in self._pair_set

    @property
    def indices(self) -> list[BlockIndex]:
        return list(self._indices)

    @property
    def pairs(self) -> list[BlockIndex]:
        return list(self._pairs)

    # -- accessors ---------------------------------------------------------

    def design(self, idx):
        return self[idx].basis

    def penalty(self, idx):
        if idx in self._main:
            return self._main[idx].penalty
        key = idx.covariates
        with self._lock:
            S = self._pair_penalty.get(key)
        if S is None:
            S = interaction_penalty(self._axis_D[idx.j], self._axis_D[idx.k])
            with self._lock:
                self._pair_penalty[key] = S
        return S

    def pair_means(self, idx) -> np.ndarray:
        with self._lock:
            m = self._pair_means.get(idx)
        if m is None:
            m = (self._axis_raw[idx.j].T @ self._axis_raw[idx.k] / self.n).ravel()
            with self._lock:
                self._pair_means[idx] = m
        return m

    def gram(self, idx):
        if idx in self._main:
            return self._main[idx].gram
        with self._lock:
            G = self._pair_gram.get(idx)
        if G is None:
            G = self._interaction(idx).gram
        return G

    def spec(self, idx):
        if idx in self._main:
            return self._main[idx].spec
        if idx not in self._pair_set:
            raise KeyError(idx)
        return BlockSpec(idx, (self._axis_knots[idx.j], self._axis_knots[idx.k]),
                         self.config.degree, self.pair_means(idx))

    def dim(self, idx):
        if idx in self._main:
            return self._main[idx].dim
        return self._axis_raw[idx.j].shape[1] * self._axis_raw[idx.k].shape[1]

    def _cached(self, idx):
        with self._lock:
            return self._lru.get(idx)

    # Interaction products go through the two axis bases, so CD cycles over
    # more interactions than the LRU holds do not rebuild tensor designs.
    def apply(self, idx, coef):
        if idx in self._main:
            return self._main[idx].basis @ coef
        block = self._cached(idx)
        if block is not None:
            return block.basis @ coef
        Bj, Bk = self._axis_raw[idx.j], self._axis_raw[idx.k]
        C = np.asarray(coef, dtype=float).reshape(Bj.shape[1], Bk.shape[1])
        return np.einsum("ik,ik->i", Bj @ C, Bk) - self.pair_means(idx) @ coef

    def apply_transpose(self, idx, r):
        if idx in self._main:
            return self._main[idx].basis.T @ r
        block = self._cached(idx)
        if block is not None:
            return block.basis.T @ r
        Bj, Bk = self._axis_raw[idx.j], self._axis_raw[idx.k]
        r = np.asarray(r, dtype=float)
        return ((Bj * r[:, None]).T @ Bk).ravel() - self.pair_means(idx) * r.sum()

    def _key_lock(self, idx) -> threading.Lock:
        with self._lock:
            lock = self._key_locks.get(idx)
            if lock is None:
                lock = self._key_locks[idx] = threading.Lock()
            return lock

    def _interaction(self, idx: BlockIndex) -> Block:
        with self._lock:
            block = self._lru.get(idx)
            if block is not None:
                self._lru.move_to_end(idx)
                return block
        with self._key_lock(idx):
            with self._lock:
                block = self._lru.get(idx)
                if block is not None:
                    self._lru.move_to_end(idx)
                    return block
            means = self.pair_means(idx)
            B = tensor_basis(self._axis_raw[idx.j], self._axis_raw[idx.k]) - means
            with self._lock:
                G = self._pair_gram.get(idx)
            if G is None:
                G = B.T @ B
            block = Block(self.spec(idx), B, self.penalty(idx), G)
            with self._lock:
                self._pair_gram.setdefault(idx, G)
                self._lru[idx] = block
                self._lru_bytes += B.nbytes
                while self._lru_bytes > self.cache_bytes and len(self._lru) > 1:
                    _, old = self._lru.popitem(last=False)
                    self._lru_bytes -= old.basis.nbytes
            return block

    @property
    def cached_interactions(self) -> int:
        with self._lock:
            return len(self._lru)

    def cross_products(self, r, indices=None):
        r = np.asarray(r, dtype=float)
        rsum = r.sum()
        wanted = self._indices if indices is None else list(indices)
        out: dict[BlockIndex, np.ndarray] = {}
        pairs_by_j: dict[int, list[BlockIndex]] = {}
        for idx in wanted:
            if idx in self._main:
                out[idx] = self._main[idx].basis.T @ r
            elif idx in self._pair_set:
                pairs_by_j.setdefault(idx.j, []).append(idx)
            else:
                raise KeyError(idx)
        for j, group in pairs_by_j.items():
            W = (self._axis_raw[j] * r[:, None]).T
            ks = [b.k for b in group]
            lo = min(self._axis_offset[k] for k in ks)
            hi = max(self._axis_offset[k] + self._axis_raw[k].shape[1] for k in ks)
            P = W @ self._axis_all[:, lo:hi]
            for b in group:
                off = self._axis_offset[b.k] - lo
                L = self._axis_raw[b.k].shape[1]
                out[b] = P[:, off:off + L].ravel() - self.pair_means(b) * rsum
        return {idx: out[idx] for idx in wanted}


def build_blocks(train: Dataset, config: SplineConfig | None = None, pairs=None, *,
                 standardizer: Standardizer | None = None,
                 cache_bytes: int = 1 << 30) -> BlockSet:
    """Spline blocks for a standardized training set.

    ``pairs`` defaults to every ``j < k``; pass an empty list for a
    main-effects-only model.  The block set's ``intercept`` is the training
    mean of the response.
    """
    config = config or SplineConfig()
    return BlockSet(train.X, config, pairs, standardizer=standardizer,
                    feature_names=train.feature_names, intercept=float(train.y.mean()),
                    cache_bytes=cache_bytes)
