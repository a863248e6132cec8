import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparse_am.block_cd import PenaltyParams, fit
from sparse_am.design_matrix import build_blocks, standardize
from sparse_am.evaluation import predict
from sparse_am.model_io import (
    GRID_SUMMARY_COLUMNS,
    ChecksumError,
    VersionError,
    load_archive,
    load_grid_summary,
    load_model,
    load_path,
    save_grid_summary,
    save_model,
    save_path,
)
from sparse_am.path_search import PathGrid, build_grid, fit_path
from sparse_am.synthetic import make_additive_data


@pytest.fixture(scope="module")
def trained():
    data = make_additive_data(300, 4, seed=1)
    scaler, z = standardize(data)
    blocks = build_blocks(z, standardizer=scaler)
    y = z.y - z.y.mean()
    model = fit(blocks, y, PenaltyParams(1e-3, 1e-3))
    return model, blocks, y, data


def test_round_trip_predictions(trained, tmp_path):
    model, *_ , data = trained
    path = tmp_path / "m.json"
    save_model(model, path, seed=7, data_sha256="abc")
    loaded, prov = load_archive(path)
    X = np.random.default_rng(0).uniform(-3, 3, size=(100, 4))
    assert np.array_equal(predict(model, X), predict(loaded, X))
    assert np.array_equal(predict(model, data.X), predict(loaded, data.X))
    assert loaded.support == model.support and loaded.params == model.params
    assert loaded.feature_names == model.feature_names
    assert prov["seed"] == 7 and prov["data_sha256"] == "abc"


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=14, max_size=14),
       st.floats(-1e300, 1e300))
def test_hex_floats_exact(tmp_path_factory, coefs, intercept):
    data = make_additive_data(50, 2, seed=0)
    scaler, z = standardize(data)
    blocks = build_blocks(z, standardizer=scaler, pairs=[])
    from sparse_am.block_cd import AdditiveModel
    from sparse_am.design_matrix import BlockIndex

    c = np.array(coefs)
    if not np.any(c):
        c[0] = 1.0
    b = BlockIndex(0)
    m = AdditiveModel(intercept, {b: c}, PenaltyParams(0.1, 0.2), {b: blocks.spec(b)}, 2, scaler,
                      ("x0", "x1"))
    path = tmp_path_factory.mktemp("hx") / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert back.intercept == intercept
    assert np.array_equal(back.coefficients[b], c)
    assert np.array_equal(back.specs[b].col_means, blocks.spec(b).col_means)


def test_truncated(trained, tmp_path):
    path = tmp_path / "m.json"
    save_model(trained[0], path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ChecksumError):
        load_model(path)


def test_tampered(trained, tmp_path):
    path = tmp_path / "m.json"
    save_model(trained[0], path)
    doc = json.loads(path.read_text())
    doc["payload"]["intercept"] = (1.5).hex()
    path.write_text(json.dumps(doc))
    with pytest.raises(ChecksumError):
        load_model(path)


def test_future_version(trained, tmp_path):
    path = tmp_path / "m.json"
    save_model(trained[0], path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 2
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionError, match="format_version"):
        load_model(path)


def test_deterministic_bytes(trained, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(trained[0], a, seed=1)
    save_model(trained[0], b, seed=1)
    assert a.read_bytes() == b.read_bytes()
    assert load_archive(a)[1]["created"] == "2023-11-14T22:13:20Z"


def test_no_timestamp_without_epoch(trained, tmp_path, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    save_model(trained[0], tmp_path / "m.json")
    assert load_archive(tmp_path / "m.json")[1]["created"] is None


class TestGridSummary:
    def test_empty(self, tmp_path):
        save_grid_summary(PathGrid(np.array([1.0]), np.array([1.0])), tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text() == ",".join(GRID_SUMMARY_COLUMNS) + "\n"

    def test_two_by_two_round_trip(self, trained, tmp_path):
        _, blocks, y, _ = trained
        val = make_additive_data(100, 4, seed=2)
        g = fit_path(build_grid(blocks, y, 2, 2, (0.01, 1.0)), blocks, y, validation=val)
        save_grid_summary(g, tmp_path / "s.csv")
        frame = load_grid_summary(tmp_path / "s.csv")
        assert len(frame) == 4 and tuple(frame.columns) == GRID_SUMMARY_COLUMNS
        for row, key in zip(frame.itertuples(index=False), sorted(g.node_metrics)):
            met = g.node_metrics[key]
            assert row.lambda1 == met.lambda1 and row.lambda2 == met.lambda2
            assert (row.n_main, row.n_interaction) == (met.n_main, met.n_interaction)
            assert row.train_rmse == met.train_rmse and row.val_rmse == met.val_rmse
            assert row.val_mae == met.val_mae

        save_path(g, tmp_path / "p.json")
        back = load_path(tmp_path / "p.json")
        assert np.array_equal(back.lambda1_values, g.lambda1_values)
        for key, model in g.node_models.items():
            assert back.node_models[key].support == model.support
            assert back.node_metrics[key].val_rmse == g.node_metrics[key].val_rmse


def test_unreadable(tmp_path):
    from sparse_am.model_io import ArchiveError

    with pytest.raises(ArchiveError):
        load_model(tmp_path / "missing.json")
    (tmp_path / "other.json").write_text("{\"format\": \"x\"}")
    with pytest.raises(ArchiveError):
        load_model(tmp_path / "other.json")
