"""Model archives and path exports.

A model archive is a JSON document::

    {"format": "sparse-am-model", "format_version": 1,
     "checksum": "<sha256 of the canonical payload>", "payload": {...}}

Every float in the payload is written with :meth:`float.hex`, so a
save/load round trip reproduces the model bit for bit.  The canonical
payload encoding is ``json.dumps(payload, sort_keys=True,
separators=(",", ":"))``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
import pandas as pd

from .block_cd import AdditiveModel, PenaltyParams
from .design_matrix import BlockIndex, BlockSpec, Standardizer

__all__ = [
    "FORMAT_VERSION",
    "ArchiveError",
    "ChecksumError",
    "VersionError",
    "save_model",
    "load_model",
    "load_archive",
    "save_grid_summary",
    "load_grid_summary",
    "save_path",
    "load_path",
    "GRID_SUMMARY_COLUMNS",
    "file_sha256",
    "provenance_timestamp",
]

FORMAT = "sparse-am-model"
FORMAT_VERSION = 1
GRID_SUMMARY_COLUMNS = ("lambda1", "lambda2", "n_main", "n_interaction",
                        "train_rmse", "val_rmse", "val_mae")


class ArchiveError(ValueError):
    pass


class ChecksumError(ArchiveError):
    pass


class VersionError(ArchiveError):
    pass


def _hex(x) -> str:
    return float(x).hex()


def _unhex(s) -> float:
    return float.fromhex(s)


def _hex_list(a) -> list[str]:
    return [float(v).hex() for v in np.asarray(a, dtype=float).ravel()]


def _unhex_array(items) -> np.ndarray:
    return np.array([float.fromhex(s) for s in items], dtype=float)


def _canonical(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance_timestamp() -> str | None:
    """UTC timestamp taken from ``SOURCE_DATE_EPOCH``, or None when unset.

    Wall-clock time is deliberately not recorded so that archives from
    identical runs are byte-identical.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    import datetime as _dt

    return _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _encode_model(model: AdditiveModel, provenance: dict | None) -> dict:
    blocks = []
    for idx in sorted(model.coefficients):
        spec = model.specs[idx]
        blocks.append({
            "j": idx.j,
            "k": idx.k,
            "degree": spec.degree,
            "knots": [_hex_list(t) for t in spec.knots],
            "col_means": None if spec.col_means is None else _hex_list(spec.col_means),
            "coef": _hex_list(model.coefficients[idx]),
        })
    std = model.standardizer
    return {
        "intercept": _hex(model.intercept),
        "params": {"lambda1": _hex(model.params.lambda1), "lambda2": _hex(model.params.lambda2),
                   "alpha": _hex(model.params.alpha)},
        "n_features": int(model.n_features),
        "feature_names": None if model.feature_names is None else list(model.feature_names),
        "standardizer": None if std is None else {"means": _hex_list(std.means),
                                                  "stdevs": _hex_list(std.stdevs)},
        "converged": bool(model.converged),
        "objective": _hex(model.objective),
        "blocks": blocks,
        "provenance": provenance or {},
    }


def _decode_model(payload: dict) -> AdditiveModel:
    coefs, specs = {}, {}
    for b in payload["blocks"]:
        idx = BlockIndex(int(b["j"]), None if b["k"] is None else int(b["k"]))
        means = None if b["col_means"] is None else _unhex_array(b["col_means"])
        specs[idx] = BlockSpec(idx, tuple(_unhex_array(t) for t in b["knots"]), int(b["degree"]),
                               means)
        coefs[idx] = _unhex_array(b["coef"])
    std = payload["standardizer"]
    p = payload["params"]
    return AdditiveModel(
        intercept=_unhex(payload["intercept"]),
        coefficients=coefs,
        params=PenaltyParams(_unhex(p["lambda1"]), _unhex(p["lambda2"]), _unhex(p["alpha"])),
        specs=specs,
        n_features=int(payload["n_features"]),
        standardizer=None if std is None else Standardizer(_unhex_array(std["means"]),
                                                           _unhex_array(std["stdevs"])),
        feature_names=None if payload["feature_names"] is None else tuple(payload["feature_names"]),
        converged=bool(payload["converged"]),
        objective=_unhex(payload["objective"]),
        info={"provenance": payload.get("provenance", {})},
    )


def save_model(model: AdditiveModel, path, *, seed: int | None = None,
               data_sha256: str | None = None) -> None:
    """Write a self-contained archive for ``model``."""
    provenance = {"seed": seed, "data_sha256": data_sha256, "created": provenance_timestamp()}
    payload = _encode_model(model, provenance)
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "checksum": hashlib.sha256(_canonical(payload)).hexdigest(),
        "payload": payload,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_archive(path) -> tuple[AdditiveModel, dict]:
    """Read an archive, verifying format, version and checksum."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArchiveError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChecksumError(f"checksum failure: {path} is truncated or corrupt") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ArchiveError(f"{path} is not a sparse-am model archive")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported archive format_version {version!r} "
                           f"(this build reads version {FORMAT_VERSION})")
    payload = doc.get("payload")
    if payload is None or hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("checksum"):
        raise ChecksumError(f"checksum failure: {path} does not match its checksum")
    try:
        model = _decode_model(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveError(f"malformed archive {path}: {exc}") from exc
    return model, payload.get("provenance", {})


def load_model(path) -> AdditiveModel:
    return load_archive(path)[0]


# ---------------------------------------------------------------------------
# path exports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def save_grid_summary(grid, path) -> None:
    """One CSV row per fitted node, ordered by ``(l, m)``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_SUMMARY_COLUMNS)
        for key in sorted(grid.node_metrics):
            m = grid.node_metrics[key]
            w.writerow([_fmt(m.lambda1), _fmt(m.lambda2), m.n_main, m.n_interaction,
                        _fmt(m.train_rmse), _fmt(m.val_rmse), _fmt(m.val_mae)])


def load_grid_summary(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def save_path(grid, path) -> None:
    """Grid values plus per-node supports, metrics and failures as JSON."""
    nodes = []
    for (l, m) in sorted(set(grid.node_models) | set(grid.failures)):
        entry = {"l": l, "m": m}
        model = grid.node_models.get((l, m))
        if model is not None:
            entry["mains"] = model.mains
            entry["interactions"] = [list(p) for p in model.interactions]
        metrics = grid.node_metrics.get((l, m))
        if metrics is not None:
            entry["metrics"] = {
                "train_rmse": _hex(metrics.train_rmse), "val_rmse": _hex(metrics.val_rmse),
                "val_mae": _hex(metrics.val_mae), "objective": _hex(metrics.objective),
                "converged": metrics.converged,
            }
        if (l, m) in grid.failures:
            entry["failure"] = grid.failures[(l, m)]
        nodes.append(entry)
    doc = {
        "lambda1": _hex_list(grid.lambda1_values),
        "lambda2": _hex_list(grid.lambda2_values),
        "alpha": _hex(grid.alpha),
        "lambda2_max": _hex(grid.lambda2_max),
        "nodes": nodes,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_path(path):
    """Rebuild a :class:`PathGrid` of support-only models from :func:`save_path` output.

    The models carry supports and metrics but placeholder coefficients, which
    is enough for support-based reports such as entry ordering.
    """
    from .path_search import NodeMetrics, PathGrid

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    grid = PathGrid(_unhex_array(doc["lambda1"]), _unhex_array(doc["lambda2"]),
                    _unhex(doc["alpha"]), _unhex(doc["lambda2_max"]))
    for e in doc["nodes"]:
        l, m = e["l"], e["m"]
        if "failure" in e:
            grid.failures[(l, m)] = e["failure"]
        if "mains" not in e:
            continue
        support = [BlockIndex(j) for j in e["mains"]] + [BlockIndex(j, k) for j, k in e["interactions"]]
        coefs = {b: np.ones(1) for b in support}
        params = grid.params(l, m)
        grid.node_models[(l, m)] = AdditiveModel(0.0, coefs, params, {}, 0)
        if "metrics" in e:
            mt = e["metrics"]
            grid.node_metrics[(l, m)] = NodeMetrics(
                params.lambda1, params.lambda2, len(e["mains"]), len(e["interactions"]),
                _unhex(mt["train_rmse"]), _unhex(mt["val_rmse"]), _unhex(mt["val_mae"]),
                _unhex(mt["objective"]), bool(mt["converged"]))
    return grid
