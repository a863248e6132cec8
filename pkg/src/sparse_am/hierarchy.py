"""Strong-hierarchy models by relax-and-round.

The search is restricted to the blocks seen anywhere on an L0 path (closed
under parents).  On that set the big-M relaxation::

    min  g(beta, theta) + lambda2 * (sum_j z_j + alpha * sum_jk z_jk)
    s.t. ||beta_j|| <= M z_j,  ||theta_jk|| <= M z_jk,
         z_jk <= z_j,  z_jk <= z_k,  0 <= z <= 1

is solved with ``z`` eliminated: at the optimum ``z_jk = ||theta_jk|| / M``
and ``z_j = max(||beta_j|| / M, max_k z_jk)``, which leaves a convex
problem in the coefficients with a max-of-norms penalty per main effect.
Thresholding ``z`` at ``tau`` then gives a hierarchical support, which is
refit without the L0 term.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .block_cd import (
    AdditiveModel,
    ConvergenceWarning,
    PenaltyParams,
    objective,
    solve_support,
)
from .design_matrix import BlockIndex, Blocks, Dataset
from .evaluation import effective_covariates, mae, predict, rmse

__all__ = [
    "RestrictedProblem",
    "RelaxationSolution",
    "HierarchyResult",
    "DEFAULT_TAUS",
    "collect_support_union",
    "reference_fit",
    "choose_bigM",
    "solve_relaxation",
    "round_solution",
    "polish",
    "check_strong_hierarchy",
    "fit_hierarchy_path",
]

logger = logging.getLogger(__name__)

DEFAULT_TAUS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class RestrictedProblem:
    M_set: frozenset[int]
    I_set: frozenset[tuple[int, int]]
    bigM: float
    params: PenaltyParams

    def __post_init__(self):
        object.__setattr__(self, "M_set", frozenset(int(j) for j in self.M_set))
        object.__setattr__(self, "I_set", frozenset((min(a, b), max(a, b)) for a, b in self.I_set))
        if not self.bigM > 0:
            raise ValueError("bigM must be positive")
        for j, k in self.I_set:
            if j not in self.M_set or k not in self.M_set:
                raise ValueError(f"interaction ({j}, {k}) lacks a parent in M_set")

    @property
    def blocks(self) -> list[BlockIndex]:
        return ([BlockIndex(j) for j in sorted(self.M_set)]
                + [BlockIndex(j, k) for j, k in sorted(self.I_set)])


@dataclass
class RelaxationSolution:
    z_main: dict[int, float]
    z_int: dict[tuple[int, int], float]
    coefficients: dict[BlockIndex, np.ndarray]
    objective: float
    converged: bool = True
    iterations: int = 0


@dataclass
class HierarchyResult:
    model: AdditiveModel
    tau: float
    lambda2: float
    rows: list[dict] = field(default_factory=list)
    relaxations: dict[float, RelaxationSolution] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# supports
# ---------------------------------------------------------------------------


def _close(mains, pairs):
    mains = set(mains)
    for j, k in pairs:
        mains.update((j, k))
    return frozenset(mains), frozenset(pairs)


def collect_support_union(grid) -> tuple[frozenset[int], frozenset[tuple[int, int]]]:
    """Union of all supports on the path, closed under parents."""
    mains, pairs = set(), set()
    for model in grid.node_models.values():
        mains.update(model.mains)
        pairs.update(model.interactions)
    return _close(mains, pairs)


def check_strong_hierarchy(model_or_support) -> bool:
    """True iff every selected interaction has both parents selected."""
    if isinstance(model_or_support, AdditiveModel):
        support = model_or_support.support
    elif isinstance(model_or_support, tuple) and len(model_or_support) == 2 and \
            not isinstance(model_or_support[0], BlockIndex):
        mains, pairs = model_or_support
        support = {BlockIndex(j) for j in mains} | {BlockIndex.pair(j, k) for j, k in pairs}
    else:
        support = set(model_or_support)
    mains = {b.j for b in support if not b.is_interaction}
    return all(b.j in mains and b.k in mains for b in support if b.is_interaction)


def reference_fit(blocks: Blocks, y_centered, M_set, I_set, lambda1: float):
    """Ridge fit on the whole restricted set, without any sparsity term."""
    support = [BlockIndex(j) for j in sorted(M_set)] + [BlockIndex(j, k) for j, k in sorted(I_set)]
    return solve_support(blocks, y_centered, support, lambda1)


def choose_bigM(reference, floor: float = 1.0) -> float:
    """Twice the largest block norm of the reference fit, at least ``floor``."""
    coefs = reference.coefficients if isinstance(reference, AdditiveModel) else reference
    largest = max((float(np.linalg.norm(c)) for c in coefs.values()), default=0.0)
    return max(floor, 2.0 * largest)


# ---------------------------------------------------------------------------
# relaxation
# ---------------------------------------------------------------------------


def _cap_levels(norms, c):
    """Prox of ``c * max(norms)`` on a vector of non-negative norms."""
    if c <= 0:
        return norms.copy()
    total = norms.sum()
    if total <= c:
        return np.zeros_like(norms)
    # water level eta with sum((norms - eta)_+) = c
    s = np.sort(norms)[::-1]
    csum = np.cumsum(s)
    ks = np.arange(1, s.size + 1)
    eta_all = (csum - c) / ks
    valid = s - eta_all > 0
    k = ks[valid][-1]
    eta = eta_all[k - 1]
    return np.minimum(norms, eta)


class _Layout:
    """Index bookkeeping for the consensus copies used by the solver."""

    def __init__(self, blocks: Blocks, problem: RestrictedProblem):
        self.order = problem.blocks
        self.pos = {b: i for i, b in enumerate(self.order)}
        dims = [blocks.dim(b) for b in self.order]
        self.dims = dims
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        self.D = int(self.offsets[-1])

        src, seg_owner = [], []
        self.main_groups = []  # (segment ids) per main, own segment first
        children = {j: [] for j in sorted(problem.M_set)}
        for j, k in sorted(problem.I_set):
            children[j].append(BlockIndex(j, k))
            children[k].append(BlockIndex(j, k))
        n_seg = 0
        for j in sorted(problem.M_set):
            members = [BlockIndex(j)] + children[j]
            ids = []
            for b in members:
                i = self.pos[b]
                src.append(np.arange(self.offsets[i], self.offsets[i + 1]))
                seg_owner.append(i)
                ids.append(n_seg)
                n_seg += 1
            self.main_groups.append(np.array(ids))
        self.int_segments = []
        for b in self.order:
            if b.is_interaction:
                i = self.pos[b]
                src.append(np.arange(self.offsets[i], self.offsets[i + 1]))
                seg_owner.append(i)
                self.int_segments.append(n_seg)
                n_seg += 1
        self.int_segments = np.array(self.int_segments, dtype=int)
        lengths = [len(s) for s in src]
        self.seg_start = np.concatenate([[0], np.cumsum(lengths)]).astype(int)
        self.src = np.concatenate(src) if src else np.zeros(0, dtype=int)
        self.seg_id = np.repeat(np.arange(n_seg), lengths)
        self.n_seg = n_seg
        self.counts = np.bincount(self.src, minlength=self.D).astype(float)

    def seg_norms(self, v):
        if v.size == 0:
            return np.zeros(0)
        return np.sqrt(np.add.reduceat(v * v, self.seg_start[:-1]))

    def gather(self, x):
        return x[self.src]

    def scatter(self, v):
        return np.bincount(self.src, weights=v, minlength=self.D)


def _relaxed_penalty(coefs, problem: RestrictedProblem):
    z_main, z_int = _z_from_norms(coefs, problem)
    lam = problem.params
    return lam.lambda2 * (sum(z_main.values()) + lam.alpha * sum(z_int.values())), z_main, z_int


def _z_from_norms(coefs, problem):
    M = problem.bigM
    z_int = {}
    for j, k in sorted(problem.I_set):
        c = coefs.get(BlockIndex(j, k))
        z_int[(j, k)] = min(1.0, float(np.linalg.norm(c)) / M) if c is not None else 0.0
    z_main = {}
    for j in sorted(problem.M_set):
        c = coefs.get(BlockIndex(j))
        z = min(1.0, float(np.linalg.norm(c)) / M) if c is not None else 0.0
        for (a, b), zz in z_int.items():
            if a == j or b == j:
                z = max(z, zz)
        z_main[j] = z
    return z_main, z_int


def solve_relaxation(problem: RestrictedProblem, blocks: Blocks, y_centered, tol: float = 1e-6,
                     max_iter: int = 20000, rho: float | None = None) -> RelaxationSolution:
    """Solve the big-M relaxation on the restricted block set.

    Uses ADMM on consensus copies: each main effect owns a copy of its own
    coefficients and of all its child interactions (carrying the max-of-norms
    term), and each interaction owns one more copy (carrying its own norm
    term).  The coefficient step is a single cached Cholesky solve.  Stops
    when primal and dual residuals fall below ``tol`` relative to the
    iterate scale.
    """
    y = np.asarray(y_centered, dtype=float)
    n = blocks.n
    lam = problem.params
    order = problem.blocks
    if not order:
        return RelaxationSolution({}, {}, {}, float(y @ y / n))
    lay = _Layout(blocks, problem)
    Bs = np.hstack([blocks.design(b) for b in order])
    Q = (2.0 / n) * (Bs.T @ Bs)
    q = (2.0 / n) * (Bs.T @ y)
    scale = float(np.mean(np.diag(Q))) or 1.0
    for i, b in enumerate(order):
        sl = slice(lay.offsets[i], lay.offsets[i + 1])
        Q[sl, sl] += 2.0 * lam.lambda1 * blocks.penalty(b)
        # the all-ones direction of a centered block is invisible to g; pin it
        if blocks.spec(b).centered:
            Q[sl, sl] += (scale / lay.dims[i]) * np.ones((lay.dims[i], lay.dims[i]))
    M = problem.bigM
    rho = float(rho) if rho is not None else scale

    def factor(r):
        K = Q.copy()
        K[np.diag_indices(lay.D)] += r * lay.counts
        return linalg.cho_factor(K, lower=True, check_finite=False)

    def prox(a, r):
        c = lam.lambda2 / (M * r)
        norms = lay.seg_norms(a)
        new = norms.copy()
        for ids in lay.main_groups:
            new[ids] = _cap_levels(norms[ids], c)
        if lay.int_segments.size:
            t = norms[lay.int_segments]
            new[lay.int_segments] = np.maximum(t - lam.alpha * c, 0.0)
        new = np.minimum(new, M)
        factor_ = np.divide(new, norms, out=np.zeros_like(norms), where=norms > 0)
        return a * factor_[lay.seg_id]

    cho = factor(rho)
    x = linalg.cho_solve(cho, q, check_finite=False)
    v = prox(lay.gather(x), rho)
    u = np.zeros_like(v)
    m_copies = v.size
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x = linalg.cho_solve(cho, q + rho * lay.scatter(v - u), check_finite=False)
        Ex = lay.gather(x)
        v_new = prox(Ex + u, rho)
        u += Ex - v_new
        r_pri = np.linalg.norm(Ex - v_new)
        r_dual = rho * np.linalg.norm(lay.scatter(v_new - v))
        v = v_new
        eps_pri = np.sqrt(m_copies) * 1e-12 + tol * max(np.linalg.norm(Ex), np.linalg.norm(v), 1e-12)
        eps_dual = np.sqrt(lay.D) * 1e-12 + tol * max(rho * np.linalg.norm(lay.scatter(u)), 1e-12)
        if r_pri <= eps_pri and r_dual <= eps_dual:
            converged = True
            break
        # residual balancing
        if it % 25 == 0:
            if r_pri > 10 * r_dual * (eps_pri / eps_dual):
                rho *= 2.0
                u /= 2.0
                cho = factor(rho)
            elif r_dual > 10 * r_pri * (eps_dual / eps_pri):
                rho /= 2.0
                u *= 2.0
                cho = factor(rho)
    if not converged:
        warnings.warn(f"relaxation did not converge in {max_iter} iterations", ConvergenceWarning,
                      stacklevel=2)

    coefs = {}
    for i, b in enumerate(order):
        c = x[lay.offsets[i]:lay.offsets[i + 1]].copy()
        norm = np.linalg.norm(c)
        if norm > M:
            c *= M / norm
        coefs[b] = c
    penalty, z_main, z_int = _relaxed_penalty(coefs, problem)
    smooth = objective(blocks, y, coefs, PenaltyParams(lam.lambda1, 0.0, lam.alpha))
    return RelaxationSolution(z_main, z_int, coefs, smooth + penalty, converged, it)


def relaxed_objective(blocks: Blocks, y_centered, coefs, problem: RestrictedProblem) -> float:
    """Relaxation objective at ``coefs`` with the smallest feasible ``z``."""
    lam = problem.params
    penalty, _, _ = _relaxed_penalty(coefs, problem)
    return objective(blocks, y_centered, coefs, PenaltyParams(lam.lambda1, 0.0, lam.alpha)) + penalty


# ---------------------------------------------------------------------------
# rounding and polishing
# ---------------------------------------------------------------------------


def round_solution(relaxed: RelaxationSolution, tau: float
                   ) -> tuple[frozenset[int], frozenset[tuple[int, int]]]:
    """Keep blocks with ``z > tau``.

    Interactions whose parents were not kept are dropped as well, so the
    result is hierarchical even for inputs that violate ``z_jk <= z_j``.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    mains = frozenset(j for j, z in relaxed.z_main.items() if z > tau)
    pairs = frozenset(p for p, z in relaxed.z_int.items()
                      if z > tau and p[0] in mains and p[1] in mains)
    return mains, pairs


def polish(support, blocks: Blocks, y_centered, lambda1: float,
           params: PenaltyParams | None = None) -> AdditiveModel:
    """Refit the smooth objective on a fixed hierarchical support.

    Blocks whose refit norm falls below 1e-10 are kept in the coefficient
    map and listed in ``info['tiny_blocks']``.
    """
    mains, pairs = support
    if not check_strong_hierarchy((mains, pairs)):
        raise ValueError("support violates strong hierarchy")
    idx = [BlockIndex(j) for j in sorted(mains)] + [BlockIndex.pair(j, k) for j, k in sorted(pairs)]
    coefs = solve_support(blocks, y_centered, idx, lambda1)
    params = params or PenaltyParams(lambda1, 0.0)
    tiny = [b for b, c in coefs.items() if np.linalg.norm(c) < 1e-10]
    return AdditiveModel(
        intercept=float(getattr(blocks, "intercept", 0.0)),
        coefficients=coefs,
        params=params,
        specs={b: blocks.spec(b) for b in coefs},
        n_features=int(blocks.n_features),
        standardizer=getattr(blocks, "standardizer", None),
        feature_names=getattr(blocks, "feature_names", None),
        converged=True,
        objective=objective(blocks, y_centered, coefs, params),
        info={"tiny_blocks": tiny},
    )


def fit_hierarchy_path(grid, blocks: Blocks, y_centered, validation: Dataset,
                       tau_values=DEFAULT_TAUS, *, lambda2_values=None, criterion: str = "rmse",
                       threads: int = 1, tol: float = 1e-6) -> HierarchyResult:
    """Relax, round and polish on the L0 path's support union.

    ``lambda1`` (and by default ``lambda2``) are taken from the
    validation-best node of ``grid``.  Each ``tau`` yields one polished
    model; the validation-best one is returned (ties go to the smaller
    support, then the larger ``tau``).
    """
    from .path_search import select_model

    if criterion not in ("rmse", "mae"):
        raise ValueError("criterion must be 'rmse' or 'mae'")
    taus = sorted(float(t) for t in tau_values)
    if not taus:
        raise ValueError("tau_values is empty")
    l, m, _ = select_model(grid, validation, criterion)
    lambda1 = float(grid.lambda1_values[l])
    if lambda2_values is None:
        lambda2_values = [float(grid.lambda2_values[m])]
    M_set, I_set = collect_support_union(grid)
    ref = reference_fit(blocks, y_centered, M_set, I_set, lambda1)
    bigM = choose_bigM(ref)

    result_rows, candidates, relaxations = [], [], {}
    for lam2 in lambda2_values:
        params = PenaltyParams(lambda1, float(lam2), grid.alpha)
        problem = RestrictedProblem(M_set, I_set, bigM, params)
        relaxed = solve_relaxation(problem, blocks, y_centered, tol=tol)
        relaxations[float(lam2)] = relaxed

        def run(tau, relaxed=relaxed, params=params):
            support = round_solution(relaxed, tau)
            model = polish(support, blocks, y_centered, lambda1, params)
            yhat = predict(model, validation.X)
            return tau, model, rmse(validation.y, yhat), mae(validation.y, yhat)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(run, taus))
        else:
            outs = [run(t) for t in taus]
        for tau, model, v_rmse, v_mae in outs:
            result_rows.append({
                "tau": tau, "lambda2": float(lam2), "n_main": model.n_main,
                "n_interaction": model.n_interaction,
                "n_effective_covariates": effective_covariates(model),
                "val_rmse": v_rmse, "val_mae": v_mae,
            })
            score = v_rmse if criterion == "rmse" else v_mae
            candidates.append((score, len(model.support), -tau, float(lam2), model))

    best = min(s[0] for s in candidates)
    tied = [c for c in candidates if c[0] <= best + 1e-12 * max(abs(best), 1e-300)]
    score, _, neg_tau, lam2, model = min(tied, key=lambda c: (c[1], c[2], -c[3]))
    if not check_strong_hierarchy(model):
        raise RuntimeError("polished model lost a parent main effect")
    return HierarchyResult(model, -neg_tau, lam2, result_rows, relaxations)
