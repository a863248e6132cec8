import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparse_am.block_cd import AdditiveModel, PenaltyParams, fit
from sparse_am.design_matrix import BlockIndex, DataError, Dataset, build_blocks, standardize
from sparse_am.evaluation import (
    effective_covariates,
    mae,
    partial_dependence,
    predict,
    quintile_confusion,
    quintile_labels,
    rmse,
    sparsity_coordinates,
    sparsity_pattern,
    support_ordering,
)
from sparse_am.path_search import PathGrid, build_grid, fit_path


def fitted(f, p=3, n=300, seed=0, lam2=0.01):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, p))
    y = f(X) + 0.1 * rng.normal(size=n)
    scaler, z = standardize(Dataset(X, y, tuple(f"x{j}" for j in range(p)), tuple(map(str, range(n)))))
    blocks = build_blocks(z, standardizer=scaler)
    yc = z.y - z.y.mean()
    return fit(blocks, yc, PenaltyParams(1e-3, lam2)), blocks, yc, X


def support_model(support, p=4):
    return AdditiveModel(0.0, {b: np.ones(1) for b in support}, PenaltyParams(0, 0), {}, p)


class TestMetrics:
    def test_perfect(self):
        assert rmse([1, 2], [1, 2]) == 0 and mae([1, 2], [1, 2]) == 0

    def test_constant_error(self):
        y = np.arange(5.0)
        assert rmse(y, y - 2.5) == pytest.approx(2.5) and mae(y, y + 2.5) == pytest.approx(2.5)

    def test_hand_example(self):
        assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5), rel=1e-15)
        assert mae([0, 0], [3, 4]) == 3.5

    def test_errors(self):
        with pytest.raises(ValueError):
            rmse([1, 2], [1])
        with pytest.raises(ValueError):
            mae([], [])


class TestPredict:
    def test_empty_model(self):
        m = AdditiveModel(4.2, {}, PenaltyParams(0, 0), {}, 3)
        np.testing.assert_array_equal(predict(m, np.zeros((5, 3))), np.full(5, 4.2))

    def test_matches_in_sample_fit(self):
        model, blocks, yc, X = fitted(lambda X: np.sin(2 * X[:, 0]), lam2=1e-4)
        inner = sum(blocks.design(b) @ c for b, c in model.coefficients.items())
        np.testing.assert_allclose(predict(model, X), model.intercept + inner, atol=1e-8)

    def test_clamping(self):
        model, *_ , X = fitted(lambda X: X[:, 0] ** 2)
        lo, hi = X.min(axis=0), X.max(axis=0)
        far = np.vstack([lo - 10, hi + 10])
        np.testing.assert_allclose(predict(model, far), predict(model, np.vstack([lo, hi])), atol=1e-12)

    def test_column_mismatch(self):
        model, *_ = fitted(lambda X: X[:, 0])
        with pytest.raises(DataError):
            predict(model, np.zeros((2, 5)))

    def test_pure(self):
        model, *_ , X = fitted(lambda X: X[:, 1])
        assert np.array_equal(predict(model, X), predict(model, X))


class TestQuintiles:
    def test_identity_diagonal(self):
        q = quintile_confusion(np.arange(20.0), np.arange(20.0))
        assert np.array_equal(q.counts, np.diag(np.full(5, 4)))
        np.testing.assert_array_equal(q.row_fractions, np.eye(5))

    def test_negation_antidiagonal(self):
        a = np.random.default_rng(0).permutation(50).astype(float)
        q = quintile_confusion(a, -a)
        assert np.array_equal(q.counts, np.fliplr(np.diag(np.full(5, 10))))

    def test_hand_tabulated(self):
        actual = np.arange(1.0, 11.0)
        predicted = np.array([1, 3, 2, 5, 4, 7, 6, 9, 8, 10], dtype=float)
        expected = np.array([[1, 1, 0, 0, 0],
                             [1, 0, 1, 0, 0],
                             [0, 1, 0, 1, 0],
                             [0, 0, 1, 0, 1],
                             [0, 0, 0, 1, 1]])
        assert np.array_equal(quintile_confusion(actual, predicted).counts, expected)

    def test_ties_go_low(self):
        labels = quintile_labels([1, 1, 1, 1, 1, 2, 2, 2, 2, 2])
        assert labels.tolist() == [0] * 5 + [2] * 5

    @given(arrays(float, st.integers(1, 80), elements=st.floats(-1e6, 1e6)),
           st.integers(0, 1000))
    def test_invariants(self, a, seed):
        p = np.random.default_rng(seed).permutation(a)
        q = quintile_confusion(a, p)
        assert q.counts.sum() == a.size
        rows = q.row_fractions.sum(axis=1)
        assert np.all((np.abs(rows - 1) < 1e-9) | (rows == 0))
        self_q = quintile_confusion(a, a)
        assert np.array_equal(self_q.counts, np.diag(np.diag(self_q.counts)))
        frame = q.to_frame()
        assert len(frame) == 25 and frame["count"].sum() == a.size


class TestSparsity:
    def test_empty(self):
        assert not sparsity_pattern(support_model([])).any()

    def test_example(self):
        S = sparsity_pattern(support_model([BlockIndex(1), BlockIndex(1, 2)]))
        assert {tuple(ix) for ix in np.argwhere(S)} == {(1, 1), (1, 2), (2, 1)}
        coords = sparsity_coordinates(support_model([BlockIndex(1), BlockIndex(1, 2)]))
        assert coords.values.tolist() == [[1, 1], [1, 2]]
        assert list(coords.columns) == ["row", "col"]

    @given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5))))
    def test_symmetric_and_effective(self, cells):
        support = {BlockIndex(j) if j == k else BlockIndex.pair(j, k) for j, k in cells}
        m = support_model(support, p=6)
        S = sparsity_pattern(m)
        assert np.array_equal(S, S.T)
        eff = effective_covariates(m)
        assert eff <= 6
        assert eff >= max((len(b.covariates) for b in support), default=0)


class TestEffective:
    def test_examples(self):
        assert effective_covariates(support_model([BlockIndex(1), BlockIndex(2, 3)])) == 3
        assert effective_covariates(support_model([])) == 0

    def test_paper_shaped_support(self):
        mains = [BlockIndex(j) for j in range(16)]
        pairs = [BlockIndex(0, k) for k in range(16, 160)] + [BlockIndex(1, k) for k in range(16, 46)]
        assert (len(mains), len(pairs)) == (16, 174)
        assert effective_covariates(support_model(mains + pairs, p=295)) == 160


class TestPartialDependence:
    def test_linear_truth_monotone(self):
        model, *_ = fitted(lambda X: 2.0 * X[:, 0], lam2=0.05)
        assert BlockIndex(0) in model.support
        pd_ = partial_dependence(model, BlockIndex(0), 25)
        assert list(pd_.columns) == ["x0", "f"]
        assert np.all(np.diff(pd_["f"]) > 0)
        assert np.all(np.diff(pd_["x0"]) > 0)

    def test_grid_size_two(self):
        model, *_ , X = fitted(lambda X: X[:, 0] ** 2, lam2=0.05)
        pd_ = partial_dependence(model, BlockIndex(0), 2)
        assert len(pd_) == 2
        np.testing.assert_allclose(pd_["x0"], [X[:, 0].min(), X[:, 0].max()], atol=1e-12)

    def test_interaction_lattice(self):
        model, *_ = fitted(lambda X: 2 * X[:, 0] * X[:, 1], lam2=0.01)
        pair = next(b for b in model.support if b.is_interaction)
        pd_ = partial_dependence(model, pair, 4)
        assert len(pd_) == 16 and pd_.shape[1] == 3

    def test_not_in_support(self):
        model, *_ = fitted(lambda X: X[:, 0], lam2=0.05)
        with pytest.raises(ValueError, match="not in the model support"):
            partial_dependence(model, BlockIndex(2), 5)


class TestSupportOrdering:
    def test_single_node(self):
        g = PathGrid(np.array([1.0]), np.array([1.0]))
        g.node_models[(0, 0)] = support_model([BlockIndex(3), BlockIndex(1), BlockIndex(1, 3)])
        assert support_ordering(g) == [1, 3]

    def test_empty(self):
        assert support_ordering(PathGrid(np.array([1.0]), np.array([1.0]))) == []

    def test_two_signal_path(self):
        rng = np.random.default_rng(5)
        n, p = 300, 3
        X = rng.uniform(-2, 2, size=(n, p))
        y = 3 * np.sin(X[:, 2]) + 0.8 * np.cos(2 * X[:, 1]) + 0.1 * rng.normal(size=n)
        scaler, z = standardize(Dataset(X, y, ("a", "b", "c"), tuple(map(str, range(n)))))
        blocks = build_blocks(z, standardizer=scaler, pairs=[])
        yc = z.y - z.y.mean()
        g = fit_path(build_grid(blocks, yc, L=1, M=12, lambda1_range=(1e-3, 1e-3)), blocks, yc)
        assert support_ordering(g)[:2] == [2, 1]
