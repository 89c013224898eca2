"""On-disk formats. Every file starts with ``# fanwatch-format v1``.

Data files (recordings, datasets) keep full round-trip precision; time
stamps are written with 6 decimals. Report files print NMSE with 4
decimals.
"""

from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np

from fanwatch.core import (
    GYRO_CHANNELS,
    RPM,
    AlignedTable,
    Channel,
    DataError,
    Dataset,
    Impeller,
    RawRecording,
)
from fanwatch.evaluation import ExperimentReport, HealthReport, ReportRow
from fanwatch.forest import ForestModel, ForestParams, RegressionTree
from fanwatch.linreg import LinearModel
from fanwatch.synthgen import ScheduleConfig, plateau_index

MAGIC = "# fanwatch-format v1"
TIME = "t_s"
ROW = "row"


def _fmt(value: float) -> str:
    return repr(float(value))


def _nmse(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.4f}"


def _meta_line(kind: str, **meta) -> str:
    parts = [f"kind: {kind}"] + [f"{k}: {v}" for k, v in meta.items()]
    return "# " + "; ".join(parts)


def _write_rows(fh, header, rows_text):
    fh.write(",".join(header) + "\n")
    for line in rows_text:
        fh.write(line + "\n")


def read_header(path) -> tuple[dict, list[str], int]:
    """(metadata, column names, number of lines before the data)."""
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != MAGIC:
            raise DataError(f"{path}: not a fanwatch v1 file")
        skip = 1
        for line in fh:
            skip += 1
            line = line.rstrip("\n")
            if line.startswith("#"):
                for item in line[1:].split(";"):
                    if ":" in item:
                        key, value = item.split(":", 1)
                        meta[key.strip()] = value.strip()
                continue
            return meta, line.split(","), skip
    raise DataError(f"{path}: missing column header")


def _load_matrix(path, skip: int, n_cols: int) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        for _ in range(skip):
            fh.readline()
        text = fh.read()
    if not text.strip():
        return np.empty((0, n_cols))
    data = np.loadtxt(io.StringIO(text), delimiter=",", dtype=np.float64, ndmin=2)
    if data.shape[1] != n_cols:
        raise DataError(f"{path}: expected {n_cols} columns, found {data.shape[1]}")
    return data


# recordings -----------------------------------------------------------------

def write_table(path, table: AlignedTable, impeller="", seed="") -> None:
    """Aligned recording: ``t_s, rpm, <24 gyro columns>``."""
    header = [TIME, RPM, *table.column_names]
    body = np.column_stack([table.target, table.columns]).tolist()
    ts = table.timestamps_s.tolist()
    lines = (f"{t:.6f}," + ",".join(map(repr, row)) for t, row in zip(ts, body))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        fh.write(_meta_line("recording", impeller=impeller, seed=seed) + "\n")
        _write_rows(fh, header, lines)


def read_table(path, schedule: ScheduleConfig) -> AlignedTable:
    """Read an aligned recording; plateau indices come from ``schedule``."""
    meta, header, skip = read_header(path)
    if meta.get("kind") != "recording":
        raise DataError(f"{path}: expected a recording file, got {meta.get('kind')!r}")
    if header[:2] != [TIME, RPM]:
        raise DataError(f"{path}: recording must start with t_s,rpm")
    data = _load_matrix(path, skip, len(header))
    if len(data) == 0:
        raise DataError(f"{path}: recording has no rows")
    t = data[:, 0]
    return AlignedTable(t, header[2:], data[:, 2:], data[:, 1], plateau_index(t, schedule))


def write_multirate(out_dir, rec: RawRecording) -> tuple[Path, Path]:
    """Native-rate files ``rpm.csv`` and ``gyro.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rpm = rec.rpm
    gyros = rec.gyro_channels
    paths = out / "rpm.csv", out / "gyro.csv"
    for path, chans in zip(paths, ((rpm,), gyros)):
        t = chans[0].timestamps().tolist()
        body = np.column_stack([c.samples for c in chans]).tolist()
        lines = (f"{ti:.6f}," + ",".join(map(repr, row)) for ti, row in zip(t, body))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(MAGIC + "\n")
            fh.write(_meta_line("channels", rate_hz=repr(chans[0].rate_hz), t0_s=repr(chans[0].t0_s),
                                impeller=rec.impeller.value, seed=rec.seed) + "\n")
            _write_rows(fh, [TIME, *[c.name for c in chans]], lines)
    return paths


def read_multirate(in_dir, schedule: ScheduleConfig) -> RawRecording:
    channels = []
    meta = {}
    for name in ("rpm.csv", "gyro.csv"):
        path = Path(in_dir) / name
        meta, header, skip = read_header(path)
        data = _load_matrix(path, skip, len(header))
        rate = float(meta["rate_hz"])
        t0 = float(meta.get("t0_s", 0.0))
        for j, col in enumerate(header[1:], start=1):
            channels.append(Channel(col, rate, data[:, j], t0))
    return RawRecording(tuple(channels), schedule, Impeller(meta.get("impeller", "healthy")),
                        int(meta.get("seed", 0)))


# datasets -------------------------------------------------------------------

def write_dataset(path, ds: Dataset, **meta) -> None:
    """``row, <features...>, rpm``; ``row`` is the provenance index."""
    header = [ROW, *ds.column_names, RPM]
    body = np.column_stack([ds.features, ds.target]).tolist()
    prov = ds.row_provenance.tolist()
    lines = (f"{r}," + ",".join(map(repr, row)) for r, row in zip(prov, body))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        fh.write(_meta_line("dataset", **meta) + "\n")
        _write_rows(fh, header, lines)


def read_dataset(path) -> Dataset:
    meta, header, skip = read_header(path)
    if meta.get("kind") != "dataset":
        raise DataError(f"{path}: expected a dataset file, got {meta.get('kind')!r}")
    if header[0] != ROW or header[-1] != RPM:
        raise DataError(f"{path}: dataset columns must be row,...,rpm")
    data = _load_matrix(path, skip, len(header))
    return Dataset(data[:, 1:-1], data[:, -1], header[1:-1], data[:, 0].astype(np.int64))


def dataset_meta(path) -> dict:
    return read_header(path)[0]


# models ---------------------------------------------------------------------

def write_model(path, model, **meta) -> None:
    lines = [MAGIC]
    if isinstance(model, LinearModel):
        lines += [
            "kind = linear",
            "columns = " + ",".join(model.column_names),
            "coefficients = " + ",".join(_fmt(c) for c in model.coefficients),
            "intercept = " + _fmt(model.intercept),
        ]
    elif isinstance(model, ForestModel):
        p = model.params
        lines += [
            "kind = forest",
            "columns = " + ",".join(model.column_names),
            f"n_trees = {p.n_trees}",
            f"row_fraction = {_fmt(p.row_fraction)}",
            f"feature_fraction = {_fmt(p.feature_fraction)}",
            f"min_leaf = {p.min_leaf}",
            f"max_depth = {'' if p.max_depth is None else p.max_depth}",
            f"bootstrap = {str(p.bootstrap).lower()}",
            f"param_seed = {p.seed}",
        ]
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    lines += [f"{k} = {v}" for k, v in meta.items()]
    if isinstance(model, ForestModel):
        for i, tree in enumerate(model.trees):
            lines.append(f"tree {i} {len(tree)}")
            for node in range(len(tree)):
                if tree.feature[node] < 0:
                    lines.append(f"{node} leaf {_fmt(tree.value[node])} {tree.count[node]}")
                else:
                    lines.append(
                        f"{node} split {tree.feature[node]} {_fmt(tree.threshold[node])} "
                        f"{tree.left[node]} {tree.right[node]} {_fmt(tree.value[node])} {tree.count[node]}"
                    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise DataError(f"{path}: not a fanwatch v1 file")
    keys: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("tree "):
        if "=" in lines[i]:
            k, v = lines[i].split("=", 1)
            keys[k.strip()] = v.strip()
        i += 1
    columns = tuple(c for c in keys.get("columns", "").split(",") if c)
    meta = {k: v for k, v in keys.items() if k not in _MODEL_KEYS}
    if keys.get("kind") == "linear":
        coef = [float(c) for c in keys["coefficients"].split(",") if c]
        return LinearModel(np.array(coef), float(keys["intercept"]), columns, meta)
    if keys.get("kind") != "forest":
        raise DataError(f"{path}: unknown model kind {keys.get('kind')!r}")
    params = ForestParams(
        n_trees=int(keys["n_trees"]),
        row_fraction=float(keys["row_fraction"]),
        feature_fraction=float(keys["feature_fraction"]),
        min_leaf=int(keys["min_leaf"]),
        max_depth=int(keys["max_depth"]) if keys.get("max_depth") else None,
        bootstrap=keys.get("bootstrap", "true") == "true",
        seed=int(keys.get("param_seed", 0)),
    )
    trees = []
    while i < len(lines):
        _, _, n_nodes = lines[i].split()
        n = int(n_nodes)
        feature = np.full(n, -1, np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, np.int64)
        right = np.full(n, -1, np.int64)
        value = np.zeros(n)
        count = np.zeros(n, np.int64)
        for line in lines[i + 1:i + 1 + n]:
            parts = line.split()
            node = int(parts[0])
            if parts[1] == "leaf":
                value[node] = float(parts[2])
                count[node] = int(parts[3])
            else:
                feature[node] = int(parts[2])
                threshold[node] = float(parts[3])
                left[node] = int(parts[4])
                right[node] = int(parts[5])
                value[node] = float(parts[6])
                count[node] = int(parts[7])
        trees.append(RegressionTree(feature, threshold, left, right, value, count))
        i += 1 + n
    return ForestModel(tuple(trees), params, columns, meta)


_MODEL_KEYS = {"kind", "columns", "coefficients", "intercept", "n_trees", "row_fraction",
               "feature_fraction", "min_leaf", "max_depth", "bootstrap", "param_seed"}


# reports --------------------------------------------------------------------

REPORT_COLUMNS = ["config_id", "reduction", "split", "model", "nmse_train", "nmse_test",
                  "n_train", "n_test", "seed", "status", "nmse_healthy", "nmse_damaged"]


def report_lines(rows) -> list[str]:
    out = [",".join(REPORT_COLUMNS)]
    for r in rows:
        out.append(",".join([
            r.config_id, r.reduction.replace(",", ";"), r.split, r.model,
            _nmse(r.nmse_train), _nmse(r.nmse_test), str(r.n_train), str(r.n_test), str(r.seed),
            r.status, _nmse(r.nmse_healthy), _nmse(r.nmse_damaged),
        ]))
    return out


def write_report(path, report: ExperimentReport | list[ReportRow], master_seed=None) -> None:
    rows = report.rows if isinstance(report, ExperimentReport) else report
    seed = report.master_seed if isinstance(report, ExperimentReport) else master_seed
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        fh.write(_meta_line("report", master_seed=seed) + "\n")
        fh.write("\n".join(report_lines(rows)) + "\n")


def read_report(path) -> list[dict]:
    _, header, skip = read_header(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()[skip:]
    return [dict(zip(header, line.split(","))) for line in lines if line]


def write_health(path, health: HealthReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        fh.write(_meta_line("health") + "\n")
        fh.write("config_id,model,split,nmse_healthy,nmse_damaged,ratio\n")
        fh.write(f"{health.config_id},{health.model},{health.split},{_nmse(health.nmse_healthy)},"
                 f"{_nmse(health.nmse_damaged)},{health.ratio:.4f}\n")


def write_health_pairs(path, health: HealthReport) -> None:
    """Per-row actual/predicted pairs of both datasets (scatter data)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        fh.write(_meta_line("figure", figure="health", config_id=health.config_id,
                            model=health.model) + "\n")
        fh.write("dataset,row,actual,predicted\n")
        for label, pairs in (("healthy", health.healthy_pairs), ("damaged", health.damaged_pairs)):
            if pairs is None:
                continue
            for i, (a, p) in enumerate(pairs.tolist()):
                fh.write(f"{label},{i},{a!r},{p!r}\n")


def write_figure_data(out_dir, report: ExperimentReport) -> list[Path]:
    """Per-figure CSVs: downsampling, binning (shuffled), binning (partitioned), health."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    def dump(name, kind, header, rows):
        path = out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(MAGIC + "\n")
            fh.write(_meta_line("figure", figure=kind) + "\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        paths.append(path)

    ds_rows = [r for r in report.rows if r.config_id.startswith("ds-")]
    dump("fig_downsampling.csv", "downsampling",
         ["fraction", "split", "model", "nmse_train", "nmse_test", "status"],
         [[r.config_id[3:], r.split, r.model, _nmse(r.nmse_train), _nmse(r.nmse_test),
           r.status] for r in ds_rows])
    for split in ("shuffled", "partitioned"):
        rows = []
        for r in report.rows:
            if r.config_id.startswith("bin-") and r.split == split:
                _, size, features = r.config_id.split("-", 2)
                rows.append([size, features, r.model, _nmse(r.nmse_train), _nmse(r.nmse_test),
                             r.status])
        dump(f"fig_binning_{split}.csv", f"binning-{split}",
             ["bin_size", "features", "model", "nmse_train", "nmse_test", "status"], rows)
    health_path = out / "fig_health.csv"
    if report.health is not None:
        write_health_pairs(health_path, report.health)
    else:
        with open(health_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(MAGIC + "\n" + _meta_line("figure", figure="health") + "\n")
            fh.write("dataset,row,actual,predicted\n")
    paths.append(health_path)
    return paths


def write_recording_from_run(path, rec: RawRecording) -> AlignedTable:
    """Align a generated run and store it; returns the stored table."""
    from fanwatch.preprocess import forward_fill_align

    table = forward_fill_align(rec)
    write_table(path, table, impeller=rec.impeller.value, seed=rec.seed)
    return table


__all__ = [
    "MAGIC", "GYRO_CHANNELS", "read_dataset", "read_header", "read_model", "read_multirate",
    "read_report", "read_table", "write_dataset", "write_figure_data", "write_health",
    "write_health_pairs", "write_model", "write_multirate", "write_report", "write_table",
]
