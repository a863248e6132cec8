"""L0-penalized block coordinate descent for sparse additive models.

The objective over blocks ``b`` (mains and interactions) is::

    (1/n) ||y - sum_b B_b c_b||^2 + lambda1 * sum_b c_b' S_b c_b
        + lambda2 * (#nonzero mains + alpha * #nonzero interactions)

Each block update is solved exactly: the ridge minimizer of the smooth part
is compared against zero and the cheaper of the two is kept.  Cycles run
over an active set that grows when blocks outside it violate their
optimality conditions.
"""

from __future__ import annotations

import logging
import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .design_matrix import Block, BlockIndex, Blocks, BlockSpec, Standardizer

__all__ = [
    "PenaltyParams",
    "FitOptions",
    "AdditiveModel",
    "FitState",
    "FactorCache",
    "DegenerateBlockError",
    "ConvergenceWarning",
    "block_objective",
    "ridge_block_solve",
    "block_threshold",
    "cd_cycle",
    "optimality_scan",
    "scan_gains",
    "fit",
    "compute_lambda2_max",
    "objective",
    "init_state",
    "solve_support",
    "model_from_state",
]

logger = logging.getLogger(__name__)

# ties between the zero and the ridge branch are resolved towards zero
TIE_TOL = 1e-12


class DegenerateBlockError(np.linalg.LinAlgError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PenaltyParams:
    lambda1: float
    lambda2: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.lambda1 >= 0:
            raise ValueError("lambda1 must be >= 0")
        if not self.lambda2 >= 0:
            raise ValueError("lambda2 must be >= 0")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")

    def l0_cost(self, idx: BlockIndex) -> float:
        return self.lambda2 * (self.alpha if idx.is_interaction else 1.0)


@dataclass(frozen=True)
class FitOptions:
    """Solver settings.

    ``admit_fraction`` sizes each active-set expansion relative to the
    current active set; ``max_joint_dim`` bounds the size of the joint
    ridge refit used to pin down the final fixed point.  By default it
    shrinks with ``n`` so that one refit costs about ``2e10`` flops.
    """

    tol: float = 1e-5
    max_cycles: int = 100
    max_active_set_rounds: int = 50
    ridge_jitter: float = 1e-8
    admit_fraction: float = 0.05
    max_joint_dim: int | None = None
    use_cache: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_cycles < 1 or self.max_active_set_rounds < 0:
            raise ValueError("cycle and round limits must be positive")
        if self.ridge_jitter < 0:
            raise ValueError("ridge_jitter must be >= 0")

    def joint_dim_limit(self, n: int) -> int:
        if self.max_joint_dim is not None:
            return self.max_joint_dim
        return int(min(4000, max(200, math.sqrt(2e10 / max(n, 1)))))


@dataclass(frozen=True)
class AdditiveModel:
    """A fitted sparse additive model.

    ``coefficients`` holds the nonzero blocks only, each with the spec
    needed to rebuild its basis on new data.
    """

    intercept: float
    coefficients: dict[BlockIndex, np.ndarray]
    params: PenaltyParams
    specs: dict[BlockIndex, BlockSpec]
    n_features: int
    standardizer: Standardizer | None = None
    feature_names: tuple[str, ...] | None = None
    converged: bool = True
    objective: float = float("nan")
    info: dict = field(default_factory=dict, compare=False)

    @property
    def support(self) -> frozenset[BlockIndex]:
        return frozenset(b for b, c in self.coefficients.items() if np.linalg.norm(c) > 0)

    @property
    def specs_complete(self) -> bool:
        """True when every block carries the spline metadata needed to predict."""
        return all(len(s.knots) == len(s.index.covariates) for s in self.specs.values())

    @property
    def mains(self) -> list[int]:
        return sorted(b.j for b in self.support if not b.is_interaction)

    @property
    def interactions(self) -> list[tuple[int, int]]:
        return sorted((b.j, b.k) for b in self.support if b.is_interaction)

    @property
    def n_main(self) -> int:
        return len(self.mains)

    @property
    def n_interaction(self) -> int:
        return len(self.interactions)


class _LRUStore:
    """Byte-bounded LRU map with per-key serialized construction."""

    def __init__(self, max_bytes: int, sizeof):
        self.max_bytes = int(max_bytes)
        self._sizeof = sizeof
        self._store: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()
        self._key_locks: dict = {}
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._store)

    def get_or_build(self, key, build):
        with self._lock:
            hit = self._store.get(key)
            if hit is not None:
                self._store.move_to_end(key)
                self.hits += 1
                return hit
            lock = self._key_locks.setdefault(key, threading.Lock())
        with lock:
            with self._lock:
                hit = self._store.get(key)
                if hit is not None:
                    self.hits += 1
                    return hit
            value = build()
            with self._lock:
                self.misses += 1
                self._store[key] = value
                self._bytes += self._sizeof(value)
                while self._bytes > self.max_bytes and len(self._store) > 1:
                    old_key, old = self._store.popitem(last=False)
                    self._bytes -= self._sizeof(old)
                    self._key_locks.pop(old_key, None)
            return value


def _factor_bytes(value) -> int:
    (cho, _), A = value
    return cho.nbytes + A.nbytes


class FactorCache:
    """Thread-safe caches tied to one set of blocks.

    ``factors`` maps ``(block, lambda1, jitter)`` to the Cholesky factor of
    the block's ridge system; ``cross`` holds cross-Gram matrices
    ``B_a' B_b`` used by joint refits.  Both are least-recently-used and
    byte-bounded.  Construction of a missing entry is serialized per key.
    With ``enabled=False`` nothing is stored.
    """

    def __init__(self, max_bytes: int = 512 << 20, enabled: bool = True,
                 cross_bytes: int = 256 << 20):
        self.enabled = enabled
        self.factors = _LRUStore(max_bytes, _factor_bytes)
        self.cross = _LRUStore(cross_bytes, lambda a: a.nbytes)

    def __len__(self):
        return len(self.factors)

    @property
    def hits(self) -> int:
        return self.factors.hits

    @property
    def misses(self) -> int:
        return self.factors.misses

    def get_or_build(self, key, build):
        if not self.enabled:
            return build()
        return self.factors.get_or_build(key, build)

    def cross_gram(self, blocks, a, b) -> np.ndarray:
        build = lambda: blocks.design(a).T @ blocks.design(b)  # noqa: E731
        if not self.enabled:
            return build()
        return self.cross.get_or_build((a, b), build)


# ---------------------------------------------------------------------------
# single-block operations
# ---------------------------------------------------------------------------


def _as_blocks_accessors(block: Block):
    return block.gram, block.penalty, block.spec


def _ridge_system(gram, penalty, spec, n, lambda1, jitter):
    """Return ``(cho_factor, A)`` with ``A = G + n*lambda1*S``.

    Centered blocks have the all-ones coefficient direction in the null
    space of both ``G`` and ``S``; a rank-one term on that direction makes
    the system definite without changing the solution for right-hand sides
    of the form ``B' r``.
    """
    A = gram + (n * lambda1) * penalty
    K = A.shape[0]
    scale = float(np.mean(np.diag(A))) if K else 1.0
    if not scale > 0:
        scale = 1.0
    M = A.copy()
    if spec is not None and spec.centered:
        M += (scale / K) * np.ones((K, K))
    if lambda1 == 0 or not np.any(penalty):
        M[np.diag_indices(K)] += jitter * scale
    try:
        return linalg.cho_factor(M, lower=True, check_finite=False), A
    except linalg.LinAlgError:
        pass
    M[np.diag_indices(K)] += max(jitter, 1e-8) * scale
    try:
        return linalg.cho_factor(M, lower=True, check_finite=False), A
    except linalg.LinAlgError as exc:
        label = spec.index.label() if spec is not None else "?"
        raise DegenerateBlockError(f"degenerate block {label}") from exc


def _factor(blocks_or_block, idx, lambda1, cache, jitter, n):
    if isinstance(blocks_or_block, Block):
        gram, pen, spec = _as_blocks_accessors(blocks_or_block)
        build = lambda: _ridge_system(gram, pen, spec, n, lambda1, jitter)  # noqa: E731
    else:
        bs = blocks_or_block
        build = lambda: _ridge_system(bs.gram(idx), bs.penalty(idx), bs.spec(idx),  # noqa: E731
                                      n, lambda1, jitter)
    if cache is None:
        return build()
    return cache.get_or_build((idx, float(lambda1), float(jitter)), build)


def _gain(b, beta, A, n) -> float:
    # psi(r; 0) - smooth part of psi(r; beta)
    return float(2.0 * (b @ beta) - beta @ (A @ beta)) / n


def block_objective(r, block: Block, coef, params: PenaltyParams, is_interaction=None) -> float:
    """``(1/n)||r - B c||^2 + lambda1 c'Sc + l0 cost`` for one block."""
    r = np.asarray(r, dtype=float)
    coef = np.asarray(coef, dtype=float)
    n = r.shape[0]
    if is_interaction is None:
        is_interaction = block.is_interaction
    resid = r - block.basis @ coef
    val = resid @ resid / n + params.lambda1 * (coef @ block.penalty @ coef)
    if np.any(coef != 0):
        val += params.lambda2 * (params.alpha if is_interaction else 1.0)
    return float(val)


def ridge_block_solve(r, block: Block, lambda1: float, cache: FactorCache | None = None,
                      jitter: float = 1e-8) -> np.ndarray:
    """``(B'B + n*lambda1*S)^{-1} B'r`` via a cached Cholesky factorization."""
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    cho, _ = _factor(block, block.index, lambda1, cache, jitter, n)
    return linalg.cho_solve(cho, block.basis.T @ r, check_finite=False)


def _threshold_from_cross(b, cho, A, n, cost, psi0):
    beta = linalg.cho_solve(cho, b, check_finite=False)
    gain = _gain(b, beta, A, n)
    if gain - cost <= TIE_TOL * max(1.0, psi0):
        return None, gain
    return beta, gain


def block_threshold(r, block: Block, params: PenaltyParams, is_interaction=None,
                    cache: FactorCache | None = None, jitter: float = 1e-8) -> np.ndarray:
    """Exact minimizer of the single-block objective.

    Returns the ridge solution when it beats the zero block by more than the
    L0 cost, and zeros otherwise (including ties).
    """
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    if is_interaction is None:
        is_interaction = block.is_interaction
    cost = params.lambda2 * (params.alpha if is_interaction else 1.0)
    cho, A = _factor(block, block.index, params.lambda1, cache, jitter, n)
    beta, _ = _threshold_from_cross(block.basis.T @ r, cho, A, n, cost, r @ r / n)
    return np.zeros(block.dim) if beta is None else beta


# ---------------------------------------------------------------------------
# full-model state
# ---------------------------------------------------------------------------


@dataclass
class FitState:
    residual: np.ndarray
    coefs: dict[BlockIndex, np.ndarray]
    active_set: list[BlockIndex]
    cache: FactorCache | None
    objective_trace: list[float] = field(default_factory=list)
    n_cycles: int = 0

    @property
    def support(self) -> list[BlockIndex]:
        return sorted(b for b, c in self.coefs.items() if np.any(c != 0))


def objective(blocks: Blocks, y_centered, coefs, params: PenaltyParams) -> float:
    """Full penalized objective, with the residual recomputed from scratch."""
    y = np.asarray(y_centered, dtype=float)
    r = y.copy()
    for idx, c in coefs.items():
        if np.any(c != 0):
            r -= blocks.apply(idx, c)
    return _objective_from_residual(blocks, r, coefs, params)


def _objective_from_residual(blocks, r, coefs, params) -> float:
    n = r.shape[0]
    val = r @ r / n
    for idx, c in coefs.items():
        if np.any(c != 0):
            val += params.lambda1 * (c @ blocks.penalty(idx) @ c) + params.l0_cost(idx)
    return float(val)


def init_state(blocks: Blocks, y_centered, warm_start=None, active_set=None,
               cache: FactorCache | None = None) -> FitState:
    """Build a state from an optional warm start (a model or a coefficient map)."""
    y = np.asarray(y_centered, dtype=float)
    coefs: dict[BlockIndex, np.ndarray] = {}
    if warm_start is not None:
        source = warm_start.coefficients if isinstance(warm_start, AdditiveModel) else warm_start
        for idx, c in source.items():
            c = np.asarray(c, dtype=float)
            if idx in blocks and c.shape == (blocks.dim(idx),) and np.any(c != 0):
                coefs[idx] = c.copy()
    r = y.copy()
    for idx, c in coefs.items():
        r -= blocks.apply(idx, c)
    active = set(coefs)
    if active_set is not None:
        active |= {idx for idx in active_set if idx in blocks}
    return FitState(r, coefs, sorted(active), cache)


def cd_cycle(state: FitState, blocks: Blocks, params: PenaltyParams,
             options: FitOptions | None = None) -> float:
    """One sweep over the active set in canonical order (mains first).

    Updates ``state`` in place, appends the new objective to its trace and
    returns the largest change of any coefficient entry.
    """
    options = options or FitOptions()
    n = blocks.n
    r = state.residual
    psi_scale = None
    max_delta = 0.0
    for idx in state.active_set:
        old = state.coefs.get(idx)
        b = blocks.apply_transpose(idx, r)
        if old is not None:
            b = b + blocks.gram(idx) @ old
        cho, A = _factor(blocks, idx, params.lambda1, state.cache, options.ridge_jitter, n)
        if psi_scale is None:
            psi_scale = r @ r / n
        new, _ = _threshold_from_cross(b, cho, A, n, params.l0_cost(idx), psi_scale)
        if new is None:
            if old is not None:
                r += blocks.apply(idx, old)
                del state.coefs[idx]
                max_delta = max(max_delta, float(np.max(np.abs(old))))
            continue
        delta = new if old is None else new - old
        step = float(np.max(np.abs(delta)))
        if step > 0:
            r -= blocks.apply(idx, delta)
            state.coefs[idx] = new
        max_delta = max(max_delta, step)
    state.n_cycles += 1
    state.objective_trace.append(_objective_from_residual(blocks, r, state.coefs, params))
    return max_delta


def scan_gains(state: FitState, blocks: Blocks, params: PenaltyParams,
               options: FitOptions | None = None, candidates=None) -> dict[BlockIndex, float]:
    """Objective decrease available from each out-of-set block.

    Returns ``{block: decrease}`` for every candidate whose thresholded
    update is nonzero, i.e. whose ridge gain exceeds its L0 cost.
    """
    options = options or FitOptions()
    n = blocks.n
    r = state.residual
    active = set(state.active_set)
    if candidates is None:
        candidates = [idx for idx in blocks.indices if idx not in active]
    psi0 = r @ r / n
    if not candidates or psi0 == 0:
        return {}
    cross = blocks.cross_products(r, candidates)
    out = {}
    for idx in candidates:
        cho, A = _factor(blocks, idx, params.lambda1, state.cache, options.ridge_jitter, n)
        beta, gain = _threshold_from_cross(cross[idx], cho, A, n, params.l0_cost(idx), psi0)
        if beta is not None:
            out[idx] = gain - params.l0_cost(idx)
    return out


def optimality_scan(state: FitState, blocks: Blocks, params: PenaltyParams,
                    options: FitOptions | None = None) -> set[BlockIndex]:
    """Blocks outside the active set whose block update would be nonzero."""
    return set(scan_gains(state, blocks, params, options))


def compute_lambda2_max(blocks: Blocks, y_centered, lambda1: float, alpha: float = 1.0,
                        cache: FactorCache | None = None, jitter: float = 1e-8) -> float:
    """Smallest ``lambda2`` at which a fit started from zero stays empty."""
    y = np.asarray(y_centered, dtype=float)
    n = blocks.n
    cross = blocks.cross_products(y)
    best = 0.0
    for idx, b in cross.items():
        cho, A = _factor(blocks, idx, lambda1, cache, jitter, n)
        beta = linalg.cho_solve(cho, b, check_finite=False)
        g = _gain(b, beta, A, n) / (alpha if idx.is_interaction else 1.0)
        best = max(best, g)
    return best


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _stacked_system(blocks: Blocks, y, support, lambda1: float, cache=None):
    """Normal equations of the smooth objective restricted to ``support``."""
    dims = [blocks.dim(i) for i in support]
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    n = blocks.n
    total = int(offsets[-1])
    H = np.empty((total, total))
    for i, a in enumerate(support):
        si = slice(offsets[i], offsets[i + 1])
        H[si, si] = blocks.gram(a)
        for jj in range(i + 1, len(support)):
            b = support[jj]
            sj = slice(offsets[jj], offsets[jj + 1])
            G = (cache.cross_gram(blocks, a, b) if cache is not None
                 else blocks.design(a).T @ blocks.design(b))
            H[si, sj] = G
            H[sj, si] = G.T
    scale = float(np.mean(np.diag(H))) or 1.0
    for i, idx in enumerate(support):
        sl = slice(offsets[i], offsets[i + 1])
        H[sl, sl] += (n * lambda1) * blocks.penalty(idx)
        if blocks.spec(idx).centered:
            H[sl, sl] += (scale / dims[i]) * np.ones((dims[i], dims[i]))
    cross = blocks.cross_products(y, support)
    rhs = np.concatenate([cross[i] for i in support])
    return H, rhs, offsets, scale


def _refined_solve(H, rhs, scale):
    # mains and interactions sharing a covariate overlap in their unpenalized
    # directions, so H is often singular; a jittered factorization followed by
    # iterative refinement converges to an exact solution since rhs lies in
    # the range of H
    total = H.shape[0]
    eps = 1e-10 * scale
    H[np.diag_indices(total)] += eps
    try:
        cho = linalg.cho_factor(H, lower=True, check_finite=False)
    finally:
        H[np.diag_indices(total)] -= eps
    x = linalg.cho_solve(cho, rhs, check_finite=False)
    res_norm = np.inf
    for _ in range(20):
        res = rhs - H @ x
        nrm = np.linalg.norm(res)
        if not nrm < 0.5 * res_norm:
            break
        res_norm = nrm
        x += linalg.cho_solve(cho, res, check_finite=False)
    return x


def solve_support(blocks: Blocks, y_centered, support, lambda1: float) -> dict[BlockIndex, np.ndarray]:
    """Joint minimizer of the smooth objective over a fixed set of blocks.

    Solves ``min (1/n)||y - sum B_b c_b||^2 + lambda1 sum c_b' S_b c_b``
    with every block outside ``support`` held at zero.
    """
    support = sorted(support)
    if not support:
        return {}
    y = np.asarray(y_centered, dtype=float)
    H, rhs, offsets, scale = _stacked_system(blocks, y, support, lambda1)
    try:
        x = _refined_solve(H, rhs, scale)
    except linalg.LinAlgError:
        x = linalg.lstsq(H, rhs, check_finite=False)[0]
    return {idx: x[offsets[i]:offsets[i + 1]].copy() for i, idx in enumerate(support)}


def _joint_refit(state: FitState, blocks: Blocks, y, params: PenaltyParams,
                 options: FitOptions) -> bool:
    """Solve the ridge problem jointly over the current support.

    Keeps the support fixed, so the L0 term is unchanged and the smooth part
    can only decrease.  Returns True when the refit was accepted.
    """
    support = state.support
    if not support or sum(blocks.dim(i) for i in support) > options.joint_dim_limit(blocks.n):
        return False
    H, rhs, offsets, scale = _stacked_system(blocks, y, support, params.lambda1, state.cache)
    try:
        x = _refined_solve(H, rhs, scale)
    except linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(x)):
        return False
    new = {idx: x[offsets[i]:offsets[i + 1]].copy() for i, idx in enumerate(support)}
    r_new = state.residual.copy()
    for idx in support:
        r_new -= blocks.apply(idx, new[idx] - state.coefs[idx])
    val = _objective_from_residual(blocks, r_new, new, params)
    current = state.objective_trace[-1]
    if val > current + 1e-13 * max(1.0, abs(current)):
        return False
    for idx in support:
        state.coefs[idx] = new[idx]
    state.residual[:] = r_new
    state.objective_trace.append(val)
    return True


def _converge_active(state, blocks, y, params, options, final=False) -> bool:
    """Cycle over the active set until the objective settles.

    CD crawls along flat valleys shared by overlapping blocks (a main effect
    and the interactions containing its covariate).  A joint solve on the
    support jumps to the floor of the valley: it is used when the support
    has been stable for a few cycles and, with ``final``, to pin the exact
    fixed point before returning.
    """
    prev = state.objective_trace[-1]
    refits = 0
    last_refit = None
    stable = 0
    for _ in range(options.max_cycles):
        before = state.support
        delta = cd_cycle(state, blocks, params, options)
        cur = state.objective_trace[-1]
        scale = max(1.0, max((float(np.max(np.abs(c))) for c in state.coefs.values()),
                             default=0.0))
        if delta <= 1e-11 * scale:
            return True
        small = abs(prev - cur) <= options.tol * max(abs(prev), 1e-300)
        support = state.support
        stable = stable + 1 if support == before else 0
        if final:
            want = (stable > 0 or small) and (support != last_refit or small)
        else:
            want = stable >= 5 and support != last_refit and not small
        if want and refits < 20 and _joint_refit(state, blocks, y, params, options):
            refits += 1
            last_refit = support
            stable = 0
            prev = state.objective_trace[-1]
            continue
        if small:
            return True
        prev = cur
    return False


def fit(blocks: Blocks, y_centered, params: PenaltyParams, options: FitOptions | None = None,
        warm_start=None, *, active_set=None, cache: FactorCache | None = None,
        state: FitState | None = None) -> AdditiveModel:
    """Fit the L0-penalized additive model at one ``(lambda1, lambda2)``.

    Alternates block CD on the active set with optimality scans outside it,
    admitting the strongest violators each round.  If the round or cycle
    limits are hit the best model so far is returned with
    ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    options = options or FitOptions()
    y = np.asarray(y_centered, dtype=float)
    if y.shape != (blocks.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({blocks.n},)")
    if cache is None and options.use_cache:
        cache = FactorCache()
    if state is None:
        state = init_state(blocks, y, warm_start, active_set, cache)
    state.objective_trace.append(_objective_from_residual(blocks, state.residual,
                                                          state.coefs, params))
    converged = True
    polished = False
    rounds = 0
    while True:
        if state.active_set:
            converged = _converge_active(state, blocks, y, params, options) and converged
        gains = scan_gains(state, blocks, params, options)
        if not gains and state.support and not polished:
            converged = _converge_active(state, blocks, y, params, options, final=True) and converged
            polished = True
            gains = scan_gains(state, blocks, params, options)
        if not gains:
            break
        polished = False
        if rounds >= options.max_active_set_rounds:
            converged = False
            break
        n_admit = max(1, math.ceil(options.admit_fraction * len(state.active_set)))
        ranked = sorted(gains, key=lambda b: (-gains[b], b.sort_key()))
        state.active_set = sorted(set(state.active_set) | set(ranked[:n_admit]))
        rounds += 1

    if not converged:
        warnings.warn(f"block CD did not converge at {params}", ConvergenceWarning,
                      stacklevel=2)
    return model_from_state(state, blocks, params, converged=converged,
                            info={"rounds": rounds, "cycles": state.n_cycles,
                                  "objective_trace": list(state.objective_trace),
                                  "active_set": list(state.active_set)})


def model_from_state(state: FitState, blocks: Blocks, params: PenaltyParams, *,
                     converged=True, info=None) -> AdditiveModel:
    coefs = {idx: state.coefs[idx].copy() for idx in state.support}
    return AdditiveModel(
        intercept=float(getattr(blocks, "intercept", 0.0)),
        coefficients=coefs,
        params=params,
        specs={idx: blocks.spec(idx) for idx in coefs},
        n_features=int(blocks.n_features),
        standardizer=getattr(blocks, "standardizer", None),
        feature_names=getattr(blocks, "feature_names", None),
        converged=converged,
        objective=state.objective_trace[-1] if state.objective_trace else float("nan"),
        info=info or {},
    )
