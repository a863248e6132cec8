import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import joint_ridge, tiny_hierarchy_instance, tiny_problem
from sparse_am.block_cd import AdditiveModel, ConvergenceWarning, PenaltyParams, objective
from sparse_am.design_matrix import BlockIndex, build_blocks, standardize
from sparse_am.hierarchy import (
    RelaxationSolution,
    RestrictedProblem,
    check_strong_hierarchy,
    choose_bigM,
    collect_support_union,
    fit_hierarchy_path,
    polish,
    reference_fit,
    relaxed_objective,
    round_solution,
    solve_relaxation,
)
from sparse_am.path_search import PathGrid, build_grid, fit_path
from sparse_am.synthetic import make_additive_data

# z-grid brute force (tests/oracles.py: z_grid_relaxation) on
# tiny_hierarchy_instance(0) with lambda1=0.01, lambda2=0.1*mean(y^2),
# bigM from choose_bigM(reference_fit(...)).  Step 0.05 lattice, then a
# 0.005 lattice within 0.06 of the coarse optimum.
FROZEN_COARSE = 2.0603643068020565
FROZEN_FINE = 2.0500801165816904
FROZEN_BIGM = 5.472251927695473


def grid_with(supports):
    g = PathGrid(np.array([1.0]), np.geomspace(1, 0.1, max(len(supports), 1)))
    for m, sup in enumerate(supports):
        coefs = {b: np.ones(1) for b in sup}
        g.node_models[(0, m)] = AdditiveModel(0.0, coefs, g.params(0, m), {}, 5)
    return g


def tiny_setup(seed=0, lam1=0.01, frac=0.1):
    blocks, y = tiny_hierarchy_instance(seed)
    ref = reference_fit(blocks, y, {0, 1}, {(0, 1)}, lam1)
    M = choose_bigM(ref)
    lam2 = frac * float(y @ y / len(y))
    return blocks, y, RestrictedProblem({0, 1}, {(0, 1)}, M, PenaltyParams(lam1, lam2)), ref


class TestUnion:
    def test_empty(self):
        assert collect_support_union(grid_with([[], []])) == (frozenset(), frozenset())

    def test_closure(self):
        g = grid_with([[BlockIndex(1)], [BlockIndex(1, 2)]])
        assert collect_support_union(g) == ({1, 2}, {(1, 2)})

    @given(st.lists(st.lists(st.sampled_from([BlockIndex(j) for j in range(4)]
                                             + [BlockIndex(j, k) for j, k in itertools.combinations(range(4), 2)]),
                             max_size=5), min_size=1, max_size=4))
    def test_loop_oracle(self, supports):
        mains, pairs = set(), set()
        for sup in supports:
            for b in sup:
                if b.is_interaction:
                    pairs.add((b.j, b.k))
                    mains.update((b.j, b.k))
                else:
                    mains.add(b.j)
        assert collect_support_union(grid_with(supports)) == (mains, pairs)


class TestBigM:
    def test_floor(self):
        assert choose_bigM({BlockIndex(0): np.zeros(3)}) == 1.0

    def test_factor_two(self):
        assert choose_bigM({BlockIndex(0): np.array([3.5, 0]), BlockIndex(1): np.ones(2)}) == 7.0

    def test_reference_feasible(self):
        blocks, y, prob, ref = tiny_setup(3)
        assert all(np.linalg.norm(c) <= prob.bigM for c in ref.values())


class TestProblem:
    def test_closure_enforced(self):
        with pytest.raises(ValueError, match="parent"):
            RestrictedProblem({0}, {(0, 1)}, 1.0, PenaltyParams(0, 0))

    def test_bigM_positive(self):
        with pytest.raises(ValueError):
            RestrictedProblem({0}, set(), 0.0, PenaltyParams(0, 0))


class TestRelaxation:
    def test_frozen_oracle(self):
        blocks, y, prob, _ = tiny_setup(0)
        assert prob.bigM == pytest.approx(FROZEN_BIGM, rel=1e-12)
        sol = solve_relaxation(prob, blocks, y)
        assert sol.converged
        assert sol.objective <= FROZEN_COARSE * 1.005
        assert abs(sol.objective - FROZEN_FINE) <= 0.005 * FROZEN_FINE

    def test_zero_lambda2_is_ridge(self):
        blocks, y, prob, ref = tiny_setup(1)
        prob = RestrictedProblem(prob.M_set, prob.I_set, prob.bigM, PenaltyParams(0.01, 0.0))
        sol = solve_relaxation(prob, blocks, y, tol=1e-9)
        _, smooth = joint_ridge(blocks, y, list(ref), 0.01)
        assert sol.objective == pytest.approx(smooth, rel=1e-6)
        for b, c in ref.items():
            np.testing.assert_allclose(sol.coefficients[b], c, atol=1e-5 * max(1, np.linalg.norm(c)))

    def test_huge_lambda2(self):
        blocks, y, prob, _ = tiny_setup(2)
        prob = RestrictedProblem(prob.M_set, prob.I_set, prob.bigM, PenaltyParams(0.01, 1e6))
        sol = solve_relaxation(prob, blocks, y)
        assert max(sol.z_main.values()) < 1e-6 and max(sol.z_int.values()) < 1e-6
        assert sol.objective == pytest.approx(y @ y / len(y), rel=1e-6)

    def test_empty_problem(self):
        blocks, y, prob, _ = tiny_setup(2)
        sol = solve_relaxation(RestrictedProblem(set(), set(), 1.0, prob.params), blocks, y)
        assert sol.objective == pytest.approx(y @ y / len(y)) and sol.coefficients == {}

    @given(st.integers(0, 10_000), st.floats(0.001, 0.5))
    def test_invariants_and_lower_bound(self, seed, frac):
        blocks, y, prob, _ = tiny_setup(seed, frac=frac)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            sol = solve_relaxation(prob, blocks, y)
        M = prob.bigM
        for j, z in sol.z_main.items():
            assert -1e-12 <= z <= 1 + 1e-12
            assert np.linalg.norm(sol.coefficients[BlockIndex(j)]) <= M * z + 1e-9
        for (j, k), z in sol.z_int.items():
            assert -1e-12 <= z <= min(sol.z_main[j], sol.z_main[k]) + 1e-9
            assert np.linalg.norm(sol.coefficients[BlockIndex(j, k)]) <= M * z + 1e-9
        assert sol.objective == pytest.approx(relaxed_objective(blocks, y, sol.coefficients, prob), rel=1e-12)
        # any integral hierarchical support with feasible ridge norms is an upper bound
        lam = prob.params
        for sup in [(), (0,), (1,), (0, 1), (0, 1, "i")]:
            idx = [BlockIndex(j) for j in sup if j != "i"] + ([BlockIndex(0, 1)] if "i" in sup else [])
            coefs, smooth = joint_ridge(blocks, y, idx, lam.lambda1)
            if any(np.linalg.norm(c) > M for c in coefs.values()):
                continue
            cost = lam.lambda2 * sum(lam.alpha if b.is_interaction else 1 for b in idx)
            assert sol.objective <= smooth + cost + 1e-6 * max(1, smooth)


class TestRounding:
    def sol(self, z0, z1, z01):
        return RelaxationSolution({1: z0, 2: z1}, {(1, 2): z01}, {}, 0.0)

    def test_examples(self):
        assert round_solution(self.sol(0.8, 0.8, 0.6), 0.5) == ({1, 2}, {(1, 2)})
        assert round_solution(self.sol(0.8, 0.8, 0.6), 0.7) == ({1, 2}, set())

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1])
    def test_tau_range(self, tau):
        with pytest.raises(ValueError):
            round_solution(self.sol(1, 1, 1), tau)

    @given(st.integers(0, 10**6), st.floats(0.01, 0.99))
    def test_hierarchy_property(self, seed, tau):
        rng = np.random.default_rng(seed)
        p = 5
        zm = {j: float(rng.uniform()) for j in range(p)}
        zi = {(j, k): float(rng.uniform(0, min(zm[j], zm[k])))
              for j, k in itertools.combinations(range(p), 2)}
        sup = round_solution(RelaxationSolution(zm, zi, {}, 0.0), tau)
        assert check_strong_hierarchy(sup)

    @given(st.integers(0, 10**6), st.floats(0.01, 0.98), st.floats(0.0, 0.5))
    def test_monotone(self, seed, tau, dt):
        rng = np.random.default_rng(seed)
        zm = {j: float(rng.uniform()) for j in range(4)}
        zi = {pr: float(rng.uniform()) for pr in itertools.combinations(range(4), 2)}
        sol = RelaxationSolution(zm, zi, {}, 0.0)
        hi = min(tau + dt, 0.99)
        a, b = round_solution(sol, tau), round_solution(sol, hi)
        assert b[0] <= a[0] and b[1] <= a[1]


class TestPolish:
    def test_empty(self):
        blocks, y = tiny_problem(0)
        m = polish((set(), set()), blocks, y, 0.01)
        assert m.support == frozenset() and m.intercept == 0.0

    def test_least_squares_oracle(self):
        blocks, y = tiny_hierarchy_instance(4, n=60)
        m = polish(({0, 1}, {(0, 1)}), blocks, y, 0.0)
        B = np.hstack([blocks.design(b) for b in sorted(blocks.indices)])
        x = np.linalg.lstsq(B, y, rcond=None)[0]
        got = np.concatenate([m.coefficients[b] for b in sorted(blocks.indices)])
        np.testing.assert_allclose(got, x, atol=1e-6)

    def test_rejects_non_hierarchical(self):
        blocks, y = tiny_problem(0)
        with pytest.raises(ValueError):
            polish(({0}, {(0, 1)}), blocks, y, 0.01)

    def test_descent_over_rounded(self):
        blocks, y, prob, _ = tiny_setup(5)
        sol = solve_relaxation(prob, blocks, y)
        sup = round_solution(sol, 0.1)
        m = polish(sup, blocks, y, prob.params.lambda1)
        keep = {b: sol.coefficients[b] for b in m.coefficients}
        p0 = PenaltyParams(prob.params.lambda1, 0.0)
        assert objective(blocks, y, m.coefficients, p0) <= objective(blocks, y, keep, p0) + 1e-12


class TestCheck:
    def test_examples(self):
        assert not check_strong_hierarchy(({1}, {(1, 2)}))
        assert check_strong_hierarchy(({1, 2}, {(1, 2)}))
        assert check_strong_hierarchy(({3}, set()))
        assert check_strong_hierarchy([BlockIndex(0)])
        assert not check_strong_hierarchy([BlockIndex(0), BlockIndex(0, 1)])


@pytest.fixture(scope="module")
def path_problem():
    data = make_additive_data(400, 4, seed=11)
    val = make_additive_data(200, 4, seed=12)
    scaler, z = standardize(data)
    blocks = build_blocks(z, standardizer=scaler)
    y = z.y - z.y.mean()
    g = build_grid(blocks, y, L=2, M=6, lambda1_range=(1e-3, 0.1))
    fit_path(g, blocks, y, validation=val)
    return g, blocks, y, val


class TestHierarchyPath:
    def test_single_tau(self, path_problem):
        g, blocks, y, val = path_problem
        res = fit_hierarchy_path(g, blocks, y, val, [0.5])
        assert res.tau == 0.5 and len(res.rows) == 1
        assert check_strong_hierarchy(res.model)

    def test_all_taus_hierarchical_and_monotone(self, path_problem):
        g, blocks, y, val = path_problem
        res = fit_hierarchy_path(g, blocks, y, val)
        assert check_strong_hierarchy(res.model)
        sizes = [r["n_main"] + r["n_interaction"] for r in sorted(res.rows, key=lambda r: r["tau"])]
        assert sizes == sorted(sizes, reverse=True)
        relaxed = next(iter(res.relaxations.values()))
        prev = None
        for tau in sorted(r["tau"] for r in res.rows):
            sup = round_solution(relaxed, tau)
            assert check_strong_hierarchy(sup)
            if prev is not None:
                assert sup[0] <= prev[0] and sup[1] <= prev[1]
            prev = sup

    def test_tau_near_one_empty(self, path_problem):
        g, blocks, y, val = path_problem
        res = fit_hierarchy_path(g, blocks, y, val, [0.999999])
        assert res.model.support == frozenset()


@pytest.mark.slow
def test_planted_hierarchy_recovery():
    # truth: mains {0, 1} plus (0, 1); recovery must be exact, no extra blocks
    from sparse_am.design_matrix import split
    from sparse_am.synthetic import TRUE_SUPPORT

    exact = 0
    for seed in range(20):
        data = make_additive_data(2000, 10, seed=seed, snr=5.0)
        train, val, _ = split(data, (0.8, 0.1, 0.1), seed=seed)
        scaler, z = standardize(train)
        blocks = build_blocks(z, standardizer=scaler)
        y = z.y - z.y.mean()
        g = fit_path(build_grid(blocks, y, L=4, M=12), blocks, y, validation=val)
        res = fit_hierarchy_path(g, blocks, y, val)
        exact += res.model.support == TRUE_SUPPORT
    assert exact >= 16, f"exact recovery on {exact}/20 seeds"
