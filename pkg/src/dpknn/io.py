"""
Dataset manifests, CSV ingestion and result/plot-data serialization.

A manifest is a flat ``key = value`` text file::

    name = lymph
    csv = lymphography.data
    column_names = class,lymphatics,...   # optional; present => headerless file
    label_column = class
    outlier_values = 1,4
    m_outliers = 6
    features = lym_nodes_dimin,lym_nodes_enlar,no_of_nodes_in
    binary_features = sex:Male            # optional, value -> 1 else 0
    na_values = ?                          # optional, rows with these are dropped
    expected_inliers = 142                 # optional checks run on load
    expected_minority = 6

Relative ``csv`` paths resolve against ``$DPKNN_DATA_DIR`` when set,
otherwise against the manifest's own directory.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .evaluation import ALGORITHMS, PRIVATE, MetricsRecord, summarize
from .preprocessing import RawDataset

PRESETS = ("lymph", "diabetes", "wdbc", "heart", "adult")

RESULTS_HEADER = (
    "dataset", "algorithm", "k", "b", "epsilon", "seed", "auroc", "ap", "p_at_n",
    "n_used", "cells_visited_mean", "terminated_by_counts",
)
PLOT_HEADER = ("x", "algorithm", "mean", "std")
METRICS = ("auroc", "ap", "p_at_n")


# -- key = value files -------------------------------------------------------


def read_kv(path) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def split_list(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


# -- manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    csv_path: Path
    label_column: str
    outlier_values: Tuple[str, ...]
    m_outliers: int
    features: Tuple[str, ...]
    column_names: Tuple[str, ...] = ()
    binary_features: Dict[str, str] = field(default_factory=dict)
    na_values: Tuple[str, ...] = ()
    expected_inliers: Optional[int] = None
    expected_minority: Optional[int] = None


def preset_path(name: str) -> Path:
    return Path(str(resources.files("dpknn") / "presets" / f"{name}.manifest"))


def load_manifest(path_or_name, data_dir=None) -> DatasetManifest:
    """Read a manifest file, or a preset by name (``lymph``, ``adult``, ...)."""
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in PRESETS:
        path = preset_path(str(path_or_name))
    if not path.exists():
        raise ValidationError(f"manifest not found: {path_or_name}")
    kv = read_kv(path)
    required = ("name", "csv", "label_column", "outlier_values", "m_outliers", "features")
    missing = [k for k in required if k not in kv]
    if missing:
        raise ValidationError(f"{path}: missing keys {missing}")
    base = data_dir or os.environ.get("DPKNN_DATA_DIR") or path.parent
    csv_path = Path(kv["csv"])
    if not csv_path.is_absolute():
        csv_path = Path(base) / csv_path
    binary = {}
    for item in split_list(kv.get("binary_features", "")):
        col, _, val = item.partition(":")
        binary[col.strip()] = val.strip()
    try:
        return DatasetManifest(
            name=kv["name"],
            csv_path=csv_path,
            label_column=kv["label_column"],
            outlier_values=tuple(split_list(kv["outlier_values"])),
            m_outliers=int(kv["m_outliers"]),
            features=tuple(split_list(kv["features"])),
            column_names=tuple(split_list(kv.get("column_names", ""))),
            binary_features=binary,
            na_values=tuple(split_list(kv.get("na_values", ""))),
            expected_inliers=int(kv["expected_inliers"]) if "expected_inliers" in kv else None,
            expected_minority=int(kv["expected_minority"]) if "expected_minority" in kv else None,
        )
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def load_dataset(manifest: DatasetManifest, verify: bool = True) -> RawDataset:
    """Parse the manifest's feature columns and binary label, keeping row order.

    Row numbers in error messages count data rows from 1.  With
    ``verify`` the class counts and dimension are checked against the
    manifest's expectations.
    """
    path = manifest.csv_path
    if not path.exists():
        raise ValidationError(f"{manifest.name}: data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if manifest.column_names:
        header = list(manifest.column_names)
    else:
        if not rows:
            raise ValidationError(f"{manifest.name}: empty file {path}")
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise ValidationError(f"{manifest.name}: no data rows in {path}")
    cols = {c: i for i, c in enumerate(header)}
    for c in (manifest.label_column,) + manifest.features:
        if c not in cols:
            raise ValidationError(f"{manifest.name}: column {c!r} not in {path}")
    wanted = [cols[c] for c in manifest.features]
    points, labels = [], []
    for lineno, row in enumerate(rows, 1):
        if len(row) != len(header):
            raise ValidationError(
                f"{manifest.name}: row {lineno} has {len(row)} fields, expected {len(header)}"
            )
        cells = [row[i].strip() for i in wanted]
        if manifest.na_values and any(c in manifest.na_values for c in cells):
            continue
        values = []
        for name, cell in zip(manifest.features, cells):
            if name in manifest.binary_features:
                values.append(1.0 if cell == manifest.binary_features[name] else 0.0)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{manifest.name}: row {lineno}, column {name!r}: cannot parse {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise ValidationError(f"{manifest.name}: row {lineno}, column {name!r}: {cell!r}")
            values.append(v)
        points.append(values)
        labels.append(row[cols[manifest.label_column]].strip().rstrip(".") in manifest.outlier_values)
    data = RawDataset(np.array(points), np.array(labels), tuple(manifest.features))
    if verify:
        verify_dataset(manifest, data)
    return data


def verify_dataset(manifest: DatasetManifest, data: RawDataset) -> None:
    n_min = int(data.labels.sum())
    checks = [
        ("inlier rows", manifest.expected_inliers, data.n - n_min),
        ("minority rows", manifest.expected_minority, n_min),
    ]
    for what, expected, got in checks:
        if expected is not None and expected != got:
            raise ValidationError(
                f"{manifest.name}: expected {expected} {what}, found {got}; "
                "the file differs from the documented variant"
            )
    if n_min < manifest.m_outliers:
        raise ValidationError(
            f"{manifest.name}: only {n_min} minority rows, manifest needs {manifest.m_outliers}"
        )


# -- results -----------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_counts(counts: Dict[str, int]) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(counts.items()))


def results_rows(records: Sequence[MetricsRecord]) -> List[List[str]]:
    """Data rows, each group of two or more seeds followed by mean and std rows."""
    if not records:
        raise ValidationError("no records to write")
    groups: Dict[tuple, List[MetricsRecord]] = {}
    for r in records:
        groups.setdefault(r.group, []).append(r)
    stats = summarize(records)
    rows = []
    for key, members in groups.items():
        for r in members:
            rows.append([
                r.dataset, r.algorithm, _fmt(r.k), _fmt(r.b), _fmt(r.epsilon), _fmt(r.seed),
                _fmt(r.auroc), _fmt(r.ap), _fmt(r.p_at_n), _fmt(r.n_used),
                _fmt(r.cells_visited_mean), _fmt_counts(r.terminated_by_counts),
            ])
        if len(members) < 2:
            continue
        visited = [r.cells_visited_mean for r in members if r.cells_visited_mean is not None]
        for which, pick in (("mean", 0), ("std", 1)):
            if visited:
                arr = np.array(visited)
                cv = float(arr.mean()) if pick == 0 else float(arr.std(ddof=1))
            else:
                cv = None
            first = members[0]
            rows.append([
                first.dataset, first.algorithm, _fmt(first.k), _fmt(first.b),
                _fmt(first.epsilon), which,
                *(_fmt(stats[key][m][pick]) for m in METRICS),
                _fmt(first.n_used), _fmt(cv), "",
            ])
    return rows


def meta_path(path) -> Path:
    """Sidecar holding the run configuration: ``results.csv`` -> ``results.meta.json``."""
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def emit_results(records: Sequence[MetricsRecord], path, meta: Optional[dict] = None) -> Path:
    """Write the results CSV, plus a JSON sidecar when ``meta`` is given."""
    rows = results_rows(records)
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER)
            w.writerows(rows)
        if meta is not None:
            text = json.dumps(meta, indent=1, sort_keys=True) + "\n"
            meta_path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from None
    return path


def read_results(path) -> List[MetricsRecord]:
    """Parse the per-seed rows of a results CSV (summary rows are skipped)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValidationError(f"{path}: not a results file (header mismatch)")
        for row in reader:
            if row["seed"] in ("mean", "std"):
                continue
            counts = {}
            for item in filter(None, row["terminated_by_counts"].split(";")):
                k, _, v = item.partition("=")
                counts[k] = int(v)
            out.append(MetricsRecord(
                dataset=row["dataset"],
                algorithm=row["algorithm"],
                k=int(row["k"]),
                b=int(row["b"]) if row["b"] else None,
                epsilon=float(row["epsilon"]) if row["epsilon"] else None,
                seed=int(row["seed"]) if row["seed"] else None,
                auroc=float(row["auroc"]),
                ap=float(row["ap"]),
                p_at_n=float(row["p_at_n"]),
                n_used=int(row["n_used"]),
                cells_visited_mean=float(row["cells_visited_mean"]) if row["cells_visited_mean"] else None,
                terminated_by_counts=counts,
            ))
    return out


# -- plot data ---------------------------------------------------------------


def _axis_value(r: MetricsRecord, axis: str):
    return r.b if axis == "b" else (r.epsilon if r.algorithm in PRIVATE else None)


def plot_series(records: Sequence[MetricsRecord], axis: str, metric: str) -> List[tuple]:
    """Long-format ``(x, series, mean, std)`` rows for one dataset and metric.

    Series whose algorithm does not depend on the axis are repeated as a
    flat line at every x.  Series labels carry ``k``/``b``/``epsilon``
    only when the records hold more than one value of that parameter.
    """
    xs = sorted({_axis_value(r, axis) for r in records} - {None}, reverse=(axis == "epsilon"))
    others = ("k", "epsilon") if axis == "b" else ("k", "b")
    varying = [p for p in others if len({getattr(r, p) for r in records} - {None}) > 1]

    def label(r):
        extra = [f"{p}={_fmt(getattr(r, p))}" for p in varying if getattr(r, p) is not None]
        return r.algorithm + (f"[{','.join(extra)}]" if extra else "")

    cells: Dict[tuple, List[float]] = {}
    for r in records:
        cells.setdefault((_axis_value(r, axis), label(r), r.algorithm), []).append(getattr(r, metric))
    rows = []
    for x in xs:
        for (vx, lab, algo), vals in cells.items():
            if vx is not None and vx != x:
                continue
            arr = np.array(vals)
            std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            rows.append((x, lab, ALGORITHMS.index(algo), float(arr.mean()), std))
    rows.sort(key=lambda t: (xs.index(t[0]), t[2], t[1]))
    return [(x, lab, m, s) for x, lab, _, m, s in rows]


def emit_plot_data(records: Sequence[MetricsRecord], axis: str, out_dir, svg: bool = False) -> List[Path]:
    """One CSV per (dataset, metric) with columns ``x,algorithm,mean,std``."""
    if axis not in ("b", "epsilon"):
        raise ValidationError(f"axis must be 'b' or 'epsilon', got {axis!r}")
    if len({_axis_value(r, axis) for r in records} - {None}) < 2:
        raise ValidationError(f"axis {axis!r} is absent from the results (fewer than 2 values)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for dataset in dict.fromkeys(r.dataset for r in records):
        subset = [r for r in records if r.dataset == dataset]
        if len({_axis_value(r, axis) for r in subset} - {None}) < 1:
            continue
        for metric in METRICS:
            rows = plot_series(subset, axis, metric)
            path = out_dir / f"{dataset}_{metric}_{axis}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(PLOT_HEADER)
                w.writerows([_fmt(x), lab, _fmt(m), _fmt(s)] for x, lab, m, s in rows)
            written.append(path)
            if svg:
                written.append(write_svg(rows, axis, metric, dataset, path.with_suffix(".svg")))
    return written


def write_svg(rows, axis: str, metric: str, dataset: str, path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "dpknn"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for lab in dict.fromkeys(r[1] for r in rows):
        pts = [r for r in rows if r[1] == lab]
        ax.errorbar([p[0] for p in pts], [p[2] for p in pts], yerr=[p[3] for p in pts],
                    label=lab, marker="o", ms=3, capsize=2)
    if axis == "epsilon":
        ax.set_xscale("log")
        ax.invert_xaxis()
    ax.set_xlabel(axis)
    ax.set_ylabel(metric)
    ax.set_title(dataset)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)
