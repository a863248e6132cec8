"""Command-line pipeline: ``sparse-am fit | predict | report``.

``fit`` reads a CSV, splits it, traces the (lambda1, lambda2) path,
selects a model on the validation part and writes every artifact to the
output directory (default: ``$SPARSE_AM_OUT`` or ``./sparse_am_out``).
Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .block_cd import FitOptions
from .design_matrix import (
    DataError,
    build_blocks,
    load_csv,
    split,
    standardize,
)
from .evaluation import (
    effective_covariates,
    mae,
    partial_dependence,
    predict,
    quintile_confusion,
    rmse,
    sparsity_coordinates,
    sparsity_pattern,
    support_ordering,
)
from .hierarchy import DEFAULT_TAUS, check_strong_hierarchy, fit_hierarchy_path
from .model_io import (
    ArchiveError,
    file_sha256,
    load_model,
    load_path,
    save_grid_summary,
    save_model,
    save_path,
)
from .path_search import build_grid, fit_path, select_model
from .splines import DegenerateCovariateError, SplineConfig

__all__ = ["RunConfig", "main", "cmd_fit", "cmd_predict", "cmd_report", "OUT_ENV"]

log = logging.getLogger("sparse_am")

OUT_ENV = "SPARSE_AM_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _default_out() -> str:
    return os.environ.get(OUT_ENV) or "sparse_am_out"


@dataclass
class RunConfig:
    data: str
    response: str
    exclude: list[str] = field(default_factory=list)
    id_column: str | None = None
    split: list[float] = field(default_factory=lambda: [0.8, 0.1, 0.1])
    seed: int = 0
    degree: int = 3
    knots_main: int = 10
    knots_interaction: int = 5
    knot_placement: str = "quantile"
    grid_l1: int = 20
    grid_l2: int = 50
    lambda1_min: float = 1e-4
    lambda1_max: float = 10.0
    alpha: float = 1.0
    tol: float = 1e-5
    max_cycles: int = 100
    hierarchy: bool = False
    tau_grid: list[float] = field(default_factory=lambda: list(DEFAULT_TAUS))
    criterion: str = "rmse"
    max_support: int | None = None
    threads: int = 1
    out: str = field(default_factory=_default_out)

    def validate(self) -> "RunConfig":
        try:
            self.spline_config()
            FitOptions(tol=self.tol, max_cycles=self.max_cycles)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if len(self.split) != 3 or any(f <= 0 for f in self.split) or \
                abs(sum(self.split) - 1.0) > 1e-9:
            raise UsageError("--split needs three positive fractions summing to 1")
        if self.grid_l1 < 1 or self.grid_l2 < 1:
            raise UsageError("grid sizes must be >= 1")
        if not 0 < self.lambda1_min <= self.lambda1_max:
            raise UsageError("need 0 < lambda1_min <= lambda1_max")
        if self.grid_l1 > 1 and self.lambda1_min == self.lambda1_max:
            raise UsageError("lambda1 range is degenerate for more than one lambda1 value")
        if not self.alpha >= 1:
            raise UsageError("--alpha must be >= 1")
        if not self.tau_grid or any(not 0 < t < 1 for t in self.tau_grid):
            raise UsageError("tau values must lie in (0, 1)")
        if self.criterion not in ("rmse", "mae"):
            raise UsageError("--criterion must be rmse or mae")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        if self.max_support is not None and self.max_support < 0:
            raise UsageError("--max-support must be >= 0")
        return self

    def spline_config(self) -> SplineConfig:
        return SplineConfig(self.degree, self.knots_main, self.knots_interaction, self.knot_placement)

    def fit_options(self) -> FitOptions:
        return FitOptions(tol=self.tol, max_cycles=self.max_cycles)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key in ("data", "response"):
            if values.get(key) is None:
                raise UsageError(f"missing required setting --{key}")
        clean = {k: v for k, v in values.items() if v is not None}
        return cls(**clean).validate()


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_frame(path: Path, frame: pd.DataFrame) -> None:
    _write_csv(path, list(frame.columns), frame.itertuples(index=False, name=None))


def _read_covariates(path, model, response=None, id_column=None, exclude=()):
    try:
        frame = pd.read_csv(path, encoding="utf-8", na_values=["", "NA"], keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if id_column is not None and id_column not in frame.columns:
        raise DataError(f"id column {id_column!r} not found in {path}")
    ids = (frame[id_column].astype(str).tolist() if id_column is not None
           else [str(i) for i in range(len(frame))])
    drop = set(exclude) | {c for c in (response, id_column) if c is not None}
    cols = [c for c in frame.columns if c not in drop]
    names = list(model.feature_names) if model.feature_names is not None else None
    if len(cols) != model.n_features:
        raise DataError(f"model expects {model.n_features} covariate columns, found {len(cols)}")
    if names is not None and cols != names:
        raise DataError(f"covariate columns {cols} do not match the model's {names}")
    try:
        X = frame[cols].apply(pd.to_numeric, errors="raise").to_numpy(float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric data in {path}: {exc}") from exc
    if model.standardizer is not None:
        missing = ~np.isfinite(X)
        X[missing] = np.broadcast_to(model.standardizer.means, X.shape)[missing]
    elif not np.all(np.isfinite(X)):
        raise DataError("missing covariate values and no training means to impute them")
    y = None
    if response is not None:
        if response not in frame.columns:
            raise DataError(f"response column {response!r} not found in {path}")
        y = pd.to_numeric(frame[response], errors="coerce").to_numpy(float)
    return X, y, ids


def _block_file_label(idx, names) -> str:
    label = idx.label(names)
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label.replace(":", "__"))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(config: RunConfig) -> int:
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(dataclasses.asdict(config), sort_keys=True,
                                                indent=1) + "\n", encoding="utf-8")
    t0 = time.perf_counter()
    data, report = load_csv(config.data, config.response, config.exclude, config.id_column)
    (out / "load_report.txt").write_text(report.to_text(), encoding="utf-8")
    data_hash = file_sha256(config.data)
    train, val, test = split(data, tuple(config.split), config.seed)
    scaler, train_z = standardize(train)
    blocks = build_blocks(train_z, config.spline_config(), standardizer=scaler)
    y = train_z.y - train_z.y.mean()
    options = config.fit_options()
    log.info("n_train=%d p=%d blocks=%d", train.n, train.p, len(blocks))

    grid = build_grid(blocks, y, config.grid_l1, config.grid_l2,
                      (config.lambda1_min, config.lambda1_max), config.alpha, options=options)
    fit_path(grid, blocks, y, options, validation=val, threads=config.threads)
    if not grid.node_models:
        log.error("every grid node failed; first failure: %s",
                  next(iter(grid.failures.values()), "?"))
        return EXIT_SOLVER
    l, m, model = select_model(grid, val, config.criterion, config.max_support)
    save_model(model, out / "model.json", seed=config.seed, data_sha256=data_hash)
    save_grid_summary(grid, out / "path_summary.csv")
    save_path(grid, out / "path.json")

    def split_metrics(mdl):
        rows = []
        for name, part in (("train", train), ("validation", val), ("test", test)):
            yhat = predict(mdl, part.X)
            rows.append((name, part.n, rmse(part.y, yhat), mae(part.y, yhat)))
        return rows

    names = data.feature_names
    lines = [
        f"selected node: l={l} m={m}",
        f"lambda1: {_fmt(grid.lambda1_values[l])}",
        f"lambda2: {_fmt(grid.lambda2_values[m])}",
        f"converged: {_fmt(model.converged)}",
        f"mains ({model.n_main}): {', '.join(names[j] for j in model.mains)}",
        f"interactions ({model.n_interaction}): "
        + ", ".join(f"{names[j]}:{names[k]}" for j, k in model.interactions),
        f"effective covariates: {effective_covariates(model)}",
        f"failed nodes: {len(grid.failures)}",
    ]
    for name, n, r, a in split_metrics(model):
        lines.append(f"{name}: n={n} rmse={_fmt(r)} mae={_fmt(a)}")
    status = EXIT_OK if model.converged else EXIT_SOLVER

    if config.hierarchy:
        result = fit_hierarchy_path(grid, blocks, y, val, config.tau_grid,
                                    criterion=config.criterion, threads=config.threads)
        hmodel = result.model
        if not check_strong_hierarchy(hmodel):
            raise RuntimeError("hierarchical model violates strong hierarchy")
        save_model(hmodel, out / "hierarchy_model.json", seed=config.seed, data_sha256=data_hash)
        cols = ["tau", "lambda2", "n_main", "n_interaction", "n_effective_covariates",
                "val_rmse", "val_mae"]
        _write_csv(out / "hierarchy_report.csv", cols, ([r[c] for c in cols] for r in result.rows))
        lines.append(f"hierarchy: tau={_fmt(result.tau)} mains={hmodel.n_main} "
                     f"interactions={hmodel.n_interaction}")
        for name, n, r, a in split_metrics(hmodel):
            lines.append(f"hierarchy {name}: n={n} rmse={_fmt(r)} mae={_fmt(a)}")
        if not all(rx.converged for rx in result.relaxations.values()):
            status = EXIT_SOLVER
    (out / "selection.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("fit finished in %.1f s", time.perf_counter() - t0)
    if status == EXIT_SOLVER:
        log.error("solver did not converge within its limits; artifacts were written anyway")
    return status


def cmd_predict(model_path, data_path, out_path, *, response=None, id_column=None,
                exclude=()) -> int:
    model = load_model(model_path)
    X, _, ids = _read_covariates(data_path, model, response, id_column, exclude)
    yhat = predict(model, X)
    _write_csv(Path(out_path), ["row_id", "prediction"], zip(ids, yhat))
    return EXIT_OK


def cmd_report(model_path, data_path, out_dir, *, response, path_json=None, id_column=None,
               exclude=(), grid_size: int = 50) -> int:
    model = load_model(model_path)
    X, y, _ = _read_covariates(data_path, model, response, id_column, exclude)
    keep = np.isfinite(y)
    X, y = X[keep], y[keep]
    if y.size == 0:
        raise DataError("no rows with an observed response")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    yhat = predict(model, X)
    _write_csv(out / "metrics.csv",
               ["n", "rmse", "mae", "n_main", "n_interaction", "n_effective_covariates"],
               [(y.size, rmse(y, yhat), mae(y, yhat), model.n_main, model.n_interaction,
                 effective_covariates(model))])
    _write_frame(out / "quintiles.csv", quintile_confusion(y, yhat).to_frame())
    _write_frame(out / "sparsity.csv", sparsity_coordinates(model))
    pattern = sparsity_pattern(model)
    names = model.feature_names or tuple(f"x{j}" for j in range(model.n_features))
    _write_csv(out / "sparsity_matrix.csv", ["covariate", *names],
               ([names[i], *pattern[i].tolist()] for i in range(len(names))))
    path_json = Path(path_json) if path_json else Path(model_path).with_name("path.json")
    if path_json.exists():
        grid = load_path(path_json)
        order = support_ordering(grid, 0)
        _write_csv(out / "support_ordering.csv", ["rank", "covariate_index", "covariate"],
                   ((r + 1, j, names[j]) for r, j in enumerate(order)))
    pd_dir = out / "partial_dependence"
    pd_dir.mkdir(exist_ok=True)
    for old in pd_dir.glob("*.csv"):
        old.unlink()
    for idx in sorted(model.support):
        table = partial_dependence(model, idx, grid_size)
        _write_frame(pd_dir / f"{_block_file_label(idx, names)}.csv", table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparse-am", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit the path, select a model and write all artifacts")
    f.add_argument("--config", help="YAML or JSON file with any of the settings below")
    f.add_argument("--data")
    f.add_argument("--response")
    f.add_argument("--exclude", type=_names, help="comma-separated columns to drop")
    f.add_argument("--id-column", dest="id_column")
    f.add_argument("--split", type=_floats, help="train,val,test fractions")
    f.add_argument("--seed", type=int)
    f.add_argument("--degree", type=int)
    f.add_argument("--knots-main", dest="knots_main", type=int)
    f.add_argument("--knots-interaction", dest="knots_interaction", type=int)
    f.add_argument("--knot-placement", dest="knot_placement", choices=["quantile", "uniform"])
    f.add_argument("--grid-l1", dest="grid_l1", type=int, help="number of lambda1 values")
    f.add_argument("--grid-l2", dest="grid_l2", type=int, help="number of lambda2 values")
    f.add_argument("--lambda1-min", dest="lambda1_min", type=float)
    f.add_argument("--lambda1-max", dest="lambda1_max", type=float)
    f.add_argument("--alpha", type=float)
    f.add_argument("--tol", type=float)
    f.add_argument("--max-cycles", dest="max_cycles", type=int)
    f.add_argument("--hierarchy", action="store_true", default=None)
    f.add_argument("--tau-grid", dest="tau_grid", type=_floats)
    f.add_argument("--criterion", choices=["rmse", "mae"])
    f.add_argument("--max-support", dest="max_support", type=int)
    f.add_argument("--threads", type=int)
    f.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./sparse_am_out)")

    p = sub.add_parser("predict", help="write (row_id, prediction) for a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--response", help="response column to ignore if present")
    p.add_argument("--id-column", dest="id_column")
    p.add_argument("--exclude", type=_names, default=[])

    r = sub.add_parser("report", help="metrics, quintiles, sparsity and partial dependence")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--response", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--path", dest="path_json", help="path.json from the fit run")
    r.add_argument("--id-column", dest="id_column")
    r.add_argument("--exclude", type=_names, default=[])
    r.add_argument("--grid-size", dest="grid_size", type=int, default=50)
    return parser


def _load_config_file(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    values = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return {k.replace("-", "_"): v for k, v in values.items()}


def _run_config(args) -> RunConfig:
    values = _load_config_file(args.config) if args.config else {}
    skip = {"config", "command", "verbose"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            values[key] = value
    return RunConfig.from_mapping(values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            return cmd_fit(_run_config(args))
        if args.command == "predict":
            return cmd_predict(args.model, args.data, args.out, response=args.response,
                               id_column=args.id_column, exclude=args.exclude)
        return cmd_report(args.model, args.data, args.out, response=args.response,
                          path_json=args.path_json, id_column=args.id_column,
                          exclude=args.exclude, grid_size=args.grid_size)
    except UsageError as exc:
        print(f"sparse-am: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DegenerateCovariateError, ArchiveError, FileNotFoundError) as exc:
        print(f"sparse-am: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except np.linalg.LinAlgError as exc:
        print(f"sparse-am: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
