"""
Batch command-line interface.

Modes
-----
features   cloud CSV(s) -> features.csv
variables  tree-list CSV -> variables.csv, rejects.csv
select     features.csv + variables.csv -> model.json, predictions.csv, metrics.json
predict    model.json + features.csv -> predictions.csv
classify   predictions.csv + variables.csv -> classify.json, classify_<var>.csv
evaluate   predictions.csv + variables.csv (or an error-matrix CSV) -> metrics.json
simulate   synthetic clouds.csv, trees.csv, plots.csv

Settings come from built-in defaults, then a ``key = value`` config file
(``--config``), then command-line flags; later sources win.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .chm import PlotCloud
from .features import FEATURE_NAMES, VERTICAL_IDS, plot_features, spatial_names
from .forest_variables import FD_CUT, MIN_DBH, MIN_TREES, classify_fd, classify_r, plot_variables
from .ga_selector import G_GRID, K_VALUES, Chromosome, GaConfig, build_model, run_ga
from .point_pattern import Window
from .prediction import (
    ErrorMatrix,
    Standardizer,
    cohen_kappa,
    error_matrix,
    evaluate,
    loo_predict,
    overall_accuracy,
    predict_new,
)
from .raster_spatial import LEVELS
from .synthetic_forest import simulate_survey

NA = "NA"
MODES = ("features", "variables", "select", "predict", "classify", "evaluate", "simulate")
CLOUD_COLUMNS = ("x", "y", "height", "intensity", "return_index", "plot_id")
TREE_COLUMNS = ("plot_id", "x", "y", "dbh")
VARIABLE_COLUMNS = ("plot_id", "n_trees", "r_index", "fd", "weibull_scale", "weibull_shape", "dev_class", "r_class", "fd_class")
CONTINUOUS = ("r_index", "fd", "weibull_scale", "weibull_shape")
CATEGORICAL = ("dev_class",)

DEFAULTS = {
    "mode": None,
    "out": ".",
    "clouds": None,
    "trees": None,
    "plots": None,
    "features": None,
    "variables": None,
    "model": None,
    "predictions": None,
    "matrix": None,
    "validation": None,
    "pixel_size": "0.5",
    "levels": ",".join(str(q) for q in LEVELS),
    "r_t": "4.5",
    "plot_radius": "9",
    "outer_radius": "12",
    "fd_cut": str(FD_CUT),
    "responses": ",".join(CONTINUOUS + CATEGORICAL),
    "feature_set": "all",
    "population": "50",
    "generations": "100",
    "mutation": "0.05",
    "elitism": "2",
    "seed": "0",
    "threads": "1",
    "n_plots": "30",
    "pulse_density": "0.89",
}


class CliError(Exception):
    pass


# ---------------------------------------------------------------- config


def read_config(path) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            cfg[key] = value
    return cfg


class Settings:
    """Resolved run settings with typed accessors."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key, required=True):
        v = self.values[key]
        if v is None:
            if required:
                raise CliError(f"missing setting {key!r}")
            return None
        p = Path(v)
        if required and not p.exists():
            raise CliError(f"{key}: {p} does not exist")
        return p

    def float(self, key) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise CliError(f"setting {key!r} must be a number") from None

    def int(self, key) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise CliError(f"setting {key!r} must be an integer") from None

    def list(self, key) -> list[str]:
        return [s.strip() for s in self.values[key].split(",") if s.strip()]

    def levels(self) -> tuple:
        try:
            q = tuple(float(s) for s in self.list("levels"))
        except ValueError:
            raise CliError("levels must be comma-separated numbers") from None
        if len(q) != 4 or any(not 0 < v < 1 for v in q) or any(a <= b for a, b in zip(q, q[1:])):
            raise CliError("levels must be four values in (0, 1) sorted descending")
        return q

    def pairs(self) -> tuple:
        # adjacent levels plus first-vs-third, as in the default layout
        q = self.levels()
        return (*zip(q, q[1:]), (q[0], q[2]))

    def out(self) -> Path:
        p = Path(self.values["out"])
        p.mkdir(parents=True, exist_ok=True)
        return p

    def ga(self, threads=None) -> GaConfig:
        try:
            return GaConfig(
                population=self.int("population"),
                generations=self.int("generations"),
                mutation=self.float("mutation"),
                elitism=self.int("elitism"),
                seed=self.int("seed"),
                threads=self.int("threads") if threads is None else threads,
            )
        except ValueError as exc:
            raise CliError(str(exc)) from None


# ---------------------------------------------------------------- CSV helpers


def fmt(v) -> str:
    if v is None:
        return NA
    if isinstance(v, (float, np.floating)):
        return NA if not math.isfinite(v) else repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_table(path: Path, required):
    """Rows of a headered CSV as (line number, dict) pairs."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CliError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise CliError(f"{path}:1: missing column(s) {', '.join(missing)}")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CliError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            rows.append((reader.line_num, dict(zip(header, (c.strip() for c in row)))))
    return header, rows


def to_float(value: str, path, lineno, column, allow_na=False) -> float:
    if allow_na and value == NA:
        return math.nan
    try:
        v = float(value)
    except ValueError:
        raise CliError(f"{path}:{lineno}: column {column!r}: cannot parse {value!r} as a number") from None
    if not math.isfinite(v):
        raise CliError(f"{path}:{lineno}: column {column!r}: non-finite value {value!r}")
    return v


def _csv_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise CliError(f"{path}: no .csv files")
        return files
    return [path]


def read_plots(path) -> dict:
    """plot_id -> (center, dev_class) from a plots CSV (plot_id, x, y[, dev_class])."""
    if path is None:
        return {}
    header, rows = read_table(path, ("plot_id", "x", "y"))
    out = {}
    for lineno, r in rows:
        c = (to_float(r["x"], path, lineno, "x"), to_float(r["y"], path, lineno, "y"))
        out[r["plot_id"]] = (c, r.get("dev_class", NA) or NA)
    return out


def read_clouds(path: Path) -> dict:
    """plot_id -> column arrays of the cloud CSV(s)."""
    acc: dict[str, list] = {}
    for f in _csv_files(path):
        _, rows = read_table(f, CLOUD_COLUMNS)
        for lineno, r in rows:
            vals = [to_float(r[c], f, lineno, c) for c in ("x", "y", "height", "intensity")]
            ri = r["return_index"].lower()
            if ri not in ("0", "1", "2", "first", "last", "intermediate"):
                raise CliError(f"{f}:{lineno}: column 'return_index': unknown return class {r['return_index']!r}")
            code = {"first": 0, "last": 1, "intermediate": 2}.get(ri, None)
            vals.append(int(ri) if code is None else code)
            acc.setdefault(r["plot_id"], []).append(vals)
    return {pid: np.array(v, dtype=float) for pid, v in acc.items()}


def read_keyed(path: Path, required=("plot_id",)) -> tuple[list, dict]:
    header, rows = read_table(path, required)
    out = {}
    for lineno, r in rows:
        pid = r["plot_id"]
        if pid in out:
            raise CliError(f"{path}:{lineno}: duplicate plot_id {pid!r}")
        out[pid] = (lineno, r)
    return header, out


# ---------------------------------------------------------------- features


def _features_job(args):
    pid, arr, center, pixel, r_t, levels, pairs, outer, inner = args
    msgs = []
    inside = np.hypot(arr[:, 0] - center[0], arr[:, 1] - center[1]) <= outer
    if not inside.all():
        msgs.append(f"{int((~inside).sum())} return(s) beyond the outer radius dropped")
        arr = arr[inside]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cloud = PlotCloud(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4].astype(int), pid, center, outer, inner)
            vals = plot_features(cloud, pixel, r_t, levels, pairs)
            err = None
        except ValueError as exc:
            vals, err = None, str(exc)
    return pid, vals, err, msgs + [str(w.message) for w in caught]


def _pool_map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(threads) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _extent_center(arr) -> tuple:
    # pulses cover the outer circle, so the bounding-box midpoint is close to its centre
    return (float((arr[:, 0].min() + arr[:, 0].max()) / 2), float((arr[:, 1].min() + arr[:, 1].max()) / 2))


def cmd_features(s: Settings) -> None:
    clouds = read_clouds(s.path("clouds"))
    plots = read_plots(s.path("plots", required=False))
    ids = sorted(clouds)
    if plots:
        for pid in sorted(set(plots) - set(clouds)):
            warn(f"plot {pid!r} has no cloud returns; skipped")
        for pid in sorted(set(clouds) - set(plots)):
            warn(f"plot {pid!r} missing from plots file; centre taken from the return extent")
    levels, pairs = s.levels(), s.pairs()
    names = [*FEATURE_NAMES[:62], *spatial_names(levels, pairs)]
    jobs = [
        (pid, clouds[pid], plots[pid][0] if pid in plots else _extent_center(clouds[pid]), s.float("pixel_size"), s.float("r_t"),
         levels, pairs, s.float("outer_radius"), s.float("plot_radius"))
        for pid in ids
    ]
    rows = []
    for pid, vals, err, msgs in _pool_map(_features_job, jobs, s.int("threads")):
        for m in msgs:
            warn(f"plot {pid!r}: {m}")
        if err is not None:
            warn(f"plot {pid!r} skipped: {err}")
            continue
        rows.append([pid, *vals])
    write_csv(s.out() / "features.csv", ["plot_id", *names], rows)


# ---------------------------------------------------------------- variables


def _variables_job(args):
    pid, xy, dbh, center, radius, dev, r_t, fd_cut = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            v = plot_variables(xy, Window.disc(center, radius), dbh, pid, dev, r_t=r_t, fd_cut=fd_cut)
            return pid, v, None
        except ValueError as exc:
            msg = str(exc)
            if "inside the window" in msg:
                msg = f"trees outside the {radius:g} m plot around {tuple(center)}; is the plots file missing?"
            return pid, None, msg


def cmd_variables(s: Settings) -> None:
    path = s.path("trees")
    _, rows = read_table(path, TREE_COLUMNS)
    trees: dict[str, list] = {}
    for lineno, r in rows:
        trees.setdefault(r["plot_id"], []).append([to_float(r[c], path, lineno, c) for c in ("x", "y", "dbh")])
    plots = read_plots(s.path("plots", required=False))
    for pid in sorted(set(plots) - set(trees)):
        warn(f"plot {pid!r} has no trees; rejected")
    radius = s.float("plot_radius")
    jobs = []
    for pid in sorted(trees):
        a = np.array(trees[pid])
        center, dev = plots.get(pid, ((0.0, 0.0), NA))
        jobs.append((pid, a[:, :2], a[:, 2], center, radius, dev, s.float("r_t"), s.float("fd_cut")))
    good, rejects = [], [[pid, 0, "no trees"] for pid in sorted(set(plots) - set(trees))]
    for pid, v, err in _pool_map(_variables_job, jobs, s.int("threads")):
        if v is None:
            a = np.array(trees[pid])
            rejects.append([pid, int((a[:, 2] > MIN_DBH).sum()), err])
        else:
            good.append([getattr(v, c) for c in VARIABLE_COLUMNS])
    out = s.out()
    write_csv(out / "variables.csv", VARIABLE_COLUMNS, good)
    write_csv(out / "rejects.csv", ["plot_id", "n_trees", "reason"], sorted(rejects))
    if rejects:
        warn(f"{len(rejects)} plot(s) rejected (fewer than {MIN_TREES} trees or invalid); see rejects.csv")


# ---------------------------------------------------------------- select / predict


def read_features(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    header, rows = read_table(path, ("plot_id",))
    names = header[1:]
    ids, X = [], []
    for lineno, r in rows:
        ids.append(r["plot_id"])
        X.append([to_float(r[c], path, lineno, c, allow_na=True) for c in names])
    if len(set(ids)) != len(ids):
        raise CliError(f"{path}: duplicate plot_id values")
    order = np.argsort(ids, kind="stable")
    return [ids[i] for i in order], names, np.array(X, dtype=float).reshape(len(ids), len(names))[order]


def _response(kind, values):
    if kind == "continuous":
        return np.array([math.nan if v == NA else float(v) for v in values])
    return np.array(values, dtype=object)


def _is_missing(kind, y):
    if kind == "continuous":
        return ~np.isfinite(y)
    return np.array([v == NA for v in y], dtype=bool)


def _read_validation(path) -> set:
    if path is None:
        return set()
    with open(path, newline="") as fh:
        cells = [row[0].strip() for row in csv.reader(fh) if row and row[0].strip()]
    return set(cells[1:] if cells and cells[0] == "plot_id" else cells)


def _kind_of(resp: str) -> str:
    if resp in CONTINUOUS:
        return "continuous"
    if resp in CATEGORICAL:
        return "categorical"
    raise CliError(f"unknown response {resp!r}; choose from {', '.join(CONTINUOUS + CATEGORICAL)}")


def _labels_key(v):
    try:
        return (0, float(v), str(v))
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def _matrix_rows(m):
    full = m.with_margins()
    labels = [*m.labels, "total"]
    return [[labels[i], *full[i]] for i in range(len(labels))]


def _write_matrix(path, m):
    write_csv(path, ["observed\\predicted", *m.labels, "total"], _matrix_rows(m))


def _metrics(pred, obs, kind) -> dict:
    res = evaluate(pred, obs, kind, labels=sorted(set(obs.tolist()) | set(pred.tolist()), key=_labels_key) if kind == "categorical" else None)
    if kind == "continuous":
        mean = float(np.mean(obs.astype(float)))
        res["rmse_pct"] = 100 * res["rmse"] / mean if mean else None
        res["bias_pct"] = 100 * res["bias"] / mean if mean else None
        return res
    m = res.pop("matrix")
    res["labels"] = [str(v) for v in m.labels]
    if not math.isfinite(res["kappa"]):
        warn("kappa undefined (chance agreement is 1); reported as NA")
        res["kappa"] = NA
    return res


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else NA
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def cmd_select(s: Settings) -> None:
    ids, names, X = read_features(s.path("features"))
    _, var = read_keyed(s.path("variables"))
    orphans_f = sorted(set(ids) - set(var))
    orphans_v = sorted(set(var) - set(ids))
    if orphans_v:
        raise CliError(
            "features and variables do not align on plot_id; "
            f"only in features: {orphans_f or '-'}; only in variables: {orphans_v or '-'}"
        )
    if orphans_f:
        # typically plots rejected by the variables step
        warn(f"plots without variables dropped: {orphans_f}")
        keep = np.array([pid in var for pid in ids])
        ids, X = [pid for pid in ids if pid in var], X[keep]
    validation = _read_validation(s.path("validation", required=False))
    unknown = sorted(validation - set(ids))
    if unknown:
        raise CliError(f"validation ids not in features: {unknown}")
    is_val = np.array([pid in validation for pid in ids])
    train = ~is_val
    if train.sum() < 2:
        raise CliError("need at least 2 training plots")
    std = Standardizer.fit(X[train])
    Z = std.transform(X)
    n_vertical = len(VERTICAL_IDS)
    allowed = ~std.degenerate
    fs = s["feature_set"]
    if fs == "vertical":
        allowed &= np.arange(len(names)) < n_vertical
    elif fs != "all":
        raise CliError("feature_set must be 'all' or 'vertical'")
    if not allowed.any():
        raise CliError("no usable (non-constant) feature columns")

    cfg = s.ga()
    model_out = {"feature_names": names, "standardizer": {"mean": std.mean.tolist(), "sd": std.sd.tolist()}, "responses": {}}
    metrics_out = {}
    pred_cols = {}
    out = s.out()
    for resp in s.list("responses"):
        kind = _kind_of(resp)
        y = _response(kind, [var[pid][1].get(resp, NA) for pid in ids])
        usable = train & ~_is_missing(kind, y)
        if usable.sum() < 2:
            warn(f"response {resp!r}: fewer than 2 training plots with values; skipped")
            continue
        rows = np.flatnonzero(usable)
        result = run_ga(cfg, Z[rows], y[rows], kind, allowed=allowed)
        chrom = result.best
        model = build_model(chrom, Z[rows], y[rows], kind)
        loo = loo_predict(model)
        pred = np.full(len(ids), None, dtype=object)
        pred[rows] = loo
        if is_val.any():
            pred[is_val] = predict_new(model, Z[is_val])
        pred_cols[resp] = pred
        sel = chrom.selected
        entry = {
            "kind": kind,
            "g": chrom.g,
            "k": chrom.k,
            "spatial": int((sel >= n_vertical).sum()),
            "total": int(sel.size),
            "loo": _metrics(loo, y[rows], kind),
        }
        vmask = is_val & ~_is_missing(kind, y)
        if vmask.any():
            entry["validation"] = _metrics(np.array(pred[vmask].tolist()), y[vmask], kind)
        metrics_out[resp] = entry
        model_out["responses"][resp] = {
            "kind": kind,
            "chromosome": chrom.to_dict(),
            "selected": [names[i] for i in sel],
            "fitness": result.best_fitness,
            "trace": result.trace,
            "train_ids": [ids[i] for i in rows],
            "train_y": [v if kind == "categorical" else float(v) for v in y[rows].tolist()],
        }
        if kind == "categorical":
            m = error_matrix(loo, y[rows], sorted(set(y[rows].tolist()) | set(loo.tolist()), key=_labels_key))
            _write_matrix(out / f"error_matrix_{resp}.csv", m)
    model_out["train_features"] = [[None if not math.isfinite(v) else v for v in row] for row in X[train].tolist()]
    model_out["train_ids"] = [pid for pid, t in zip(ids, train) if t]
    write_json(out / "model.json", _jsonable(model_out))
    write_json(out / "metrics.json", _jsonable(metrics_out))
    resps = list(pred_cols)
    write_csv(
        out / "predictions.csv",
        ["plot_id", "partition", *resps],
        [[pid, "validation" if v else "train", *(pred_cols[r][i] for r in resps)] for i, (pid, v) in enumerate(zip(ids, is_val))],
    )


def cmd_predict(s: Settings) -> None:
    path = s.path("model")
    try:
        with open(path) as fh:
            spec = json.load(fh)
        names = spec["feature_names"]
        std = Standardizer(np.array(spec["standardizer"]["mean"]), np.array(spec["standardizer"]["sd"]))
        train_X = np.array([[math.nan if v is None else v for v in row] for row in spec["train_features"]], dtype=float)
        train_ids = spec["train_ids"]
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise CliError(f"{path}: not a model file ({exc})") from None
    ids, qnames, Xq = read_features(s.path("features"))
    if qnames != names:
        raise CliError("feature columns of the query file differ from the model's")
    Ztrain, Zq = std.transform(train_X), std.transform(Xq)
    pos = {pid: i for i, pid in enumerate(train_ids)}
    cols = {}
    for resp, r in spec["responses"].items():
        c = r["chromosome"]
        chrom = Chromosome(tuple(c["weights"]), K_VALUES.index(int(c["k"])), G_GRID.index(round(float(c["g"]), 1)))
        rows = [pos[pid] for pid in r["train_ids"]]
        y = np.array(r["train_y"], dtype=float if r["kind"] == "continuous" else object)
        model = build_model(chrom, Ztrain[rows], y, r["kind"])
        cols[resp] = predict_new(model, Zq) if len(ids) else []
    resps = list(cols)
    write_csv(s.out() / "predictions.csv", ["plot_id", *resps], [[pid, *(cols[r][i] for r in resps)] for i, pid in enumerate(ids)])


# ---------------------------------------------------------------- classify / evaluate


def _paired(s: Settings, columns):
    ppath, vpath = s.path("predictions"), s.path("variables")
    _, pred = read_keyed(ppath)
    _, obs = read_keyed(vpath)
    common = sorted(set(pred) & set(obs))
    if not common:
        raise CliError("predictions and variables share no plot_id")
    for pid in sorted(set(pred) ^ set(obs)):
        warn(f"plot {pid!r} present in only one of predictions/variables; skipped")
    out = {}
    for col in columns:
        if not all(col in pred[p][1] and col in obs[p][1] for p in common):
            continue
        kind = _kind_of(col)
        pv, ov = [], []
        for pid in common:
            (pl, pr), (ol, orow) = pred[pid], obs[pid]
            if pr[col] == NA or orow[col] == NA:
                continue
            if kind == "continuous":
                pv.append(to_float(pr[col], ppath, pl, col))
                ov.append(to_float(orow[col], vpath, ol, col))
            else:
                pv.append(pr[col])
                ov.append(orow[col])
        if pv:
            out[col] = (kind, np.array(pv, dtype=float if kind == "continuous" else object), np.array(ov, dtype=float if kind == "continuous" else object))
    return out


def cmd_classify(s: Settings) -> None:
    pairs = _paired(s, ("r_index", "fd"))
    if not pairs:
        raise CliError("need predicted and observed r_index and/or fd columns")
    cut = s.float("fd_cut")
    rule = {"r_index": classify_r, "fd": lambda v: classify_fd(v, cut)}
    labels = ["regular", "random", "clustered"]
    report = {}
    out = s.out()
    for col, (_, pv, ov) in pairs.items():
        pc = np.array([rule[col](v) for v in pv], dtype=object)
        oc = np.array([rule[col](v) for v in ov], dtype=object)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = evaluate(pc, oc, "categorical", labels)
        m = res.pop("matrix")
        if not math.isfinite(res["kappa"]):
            warn(f"{col}: kappa undefined (chance agreement is 1); reported as NA")
        res["labels"] = labels
        report[col] = res
        _write_matrix(out / f"classify_{col}.csv", m)
    write_json(out / "classify.json", _jsonable(report))


def read_matrix(path: Path):
    header, rows = read_table(path, ())
    labels = header[1:]
    if labels and labels[-1] == "total":
        labels = labels[:-1]
    counts = []
    for lineno, r in rows:
        if r[header[0]] == "total":
            continue
        counts.append([to_float(r[c], path, lineno, c) for c in labels])
    try:
        return ErrorMatrix(tuple(labels), np.array(counts))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_evaluate(s: Settings) -> None:
    out = s.out()
    if s["matrix"] is not None:
        m = read_matrix(s.path("matrix"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            kappa = cohen_kappa(m)
        if not math.isfinite(kappa):
            warn("kappa undefined (chance agreement is 1); reported as NA")
        write_json(out / "metrics.json", _jsonable({"oa": overall_accuracy(m), "kappa": kappa, "n": m.total, "labels": list(m.labels)}))
        return
    pairs = _paired(s, CONTINUOUS + CATEGORICAL)
    if not pairs:
        raise CliError("no response column present in both predictions and variables")
    report = {}
    for col, (kind, pv, ov) in pairs.items():
        report[col] = _metrics(pv, ov, kind)
        if kind == "categorical":
            labs = sorted(set(ov.tolist()) | set(pv.tolist()), key=_labels_key)
            _write_matrix(out / f"error_matrix_{col}.csv", error_matrix(pv, ov, labs))
    write_json(out / "metrics.json", _jsonable(report))


# ---------------------------------------------------------------- simulate


def cmd_simulate(s: Settings) -> None:
    n = s.int("n_plots")
    if n < 1:
        raise CliError("n_plots must be positive")
    plots = simulate_survey(n, s.int("seed"), pulse_density=s.float("pulse_density"))
    out = s.out()
    cloud_rows, tree_rows, plot_rows = [], [], []
    for p in plots:
        c = p.cloud
        for x, y, h, i, r in zip(c.x, c.y, c.height, c.intensity, c.return_index):
            cloud_rows.append([round(x, 3), round(y, 3), round(h, 3), round(i, 1), int(r), p.plot_id])
        for (x, y), d in zip(p.field.points, p.field_dbh):
            tree_rows.append([p.plot_id, round(x, 3), round(y, 3), round(d, 2)])
        plot_rows.append([p.plot_id, *c.center, p.dev_class])
    write_csv(out / "clouds.csv", CLOUD_COLUMNS, cloud_rows)
    write_csv(out / "trees.csv", TREE_COLUMNS, tree_rows)
    write_csv(out / "plots.csv", ["plot_id", "x", "y", "dev_class"], plot_rows)


COMMANDS = {
    "features": cmd_features,
    "variables": cmd_variables,
    "select": cmd_select,
    "predict": cmd_predict,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
}


def warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alsstructure", description="ALS forest-structure features, variables and k-nn prediction.")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    for key in ("clouds", "trees", "plots", "features", "variables", "model", "predictions", "matrix", "validation"):
        p.add_argument(f"--{key}", help=f"{key} input path")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any setting")
    return p


def resolve(args) -> Settings:
    values = dict(DEFAULTS)
    if args.config:
        values.update(read_config(args.config))
    for item in args.set:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (t.strip() for t in item.split("=", 1))
        if key not in DEFAULTS:
            raise CliError(f"unknown setting {key!r}")
        values[key] = value
    for key in ("mode", "threads", "seed", "out", "clouds", "trees", "plots", "features", "variables", "model", "predictions", "matrix", "validation"):
        v = getattr(args, key)
        if v is not None:
            values[key] = str(v)
    if values["mode"] not in MODES:
        raise CliError(f"--mode is required (one of {', '.join(MODES)})")
    return Settings(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        s = resolve(args)
        COMMANDS[s["mode"]](s)
    except (CliError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
