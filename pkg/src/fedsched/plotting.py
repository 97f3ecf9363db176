"""Static SVG line charts from result tables."""

from __future__ import annotations

import math
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .persist import parse_value, read_table  # noqa: E402

# fixed element ids and no timestamp, so reruns give identical files
matplotlib.rcParams["svg.hashsalt"] = "fedsched"

X_COLUMNS = ("G", "theta_db", "N", "round")
Y_COLUMNS = ("T_normalized", "gap_mean", "U_mc", "accuracy_mean", "gap")
SERIES_COLUMNS = ("algorithm", "policy")


class SchemaError(ValueError):
    pass


def detect_schema(columns, x=None, y=None):
    """(x column, y column, series columns) for a result table."""
    cols = list(columns)
    if x is None:
        x = next((c for c in X_COLUMNS if c in cols), None)
    if y is None:
        y = next((c for c in Y_COLUMNS if c in cols), None)
    if x is None or y is None or x not in cols or y not in cols:
        raise SchemaError(f"unrecognized columns {cols}; need an x column from {X_COLUMNS} "
                          f"and a y column from {Y_COLUMNS}")
    series = [c for c in SERIES_COLUMNS if c in cols]
    if not series:
        raise SchemaError("table has no 'policy' column to split series on")
    return x, y, series


def collect_series(rows, x, y, series, logy=False):
    """{label: (xs, ys)} in first-appearance order; bad points are skipped."""
    out = {}
    skipped = 0
    for r in rows:
        label = " ".join(r[c] for c in series)
        xs, ys = out.setdefault(label, ([], []))
        xv, yv = parse_value(r[x]), parse_value(r[y])
        if not isinstance(xv, float) or not isinstance(yv, float) or not math.isfinite(yv):
            skipped += 1
            continue
        if logy and yv <= 0:
            skipped += 1
            continue
        xs.append(xv)
        ys.append(yv)
    if skipped:
        warnings.warn(f"skipped {skipped} non-finite or non-positive points", stacklevel=2)
    return out


def plot_series(series: dict, path, xlabel="", ylabel="", title="", logy=False):
    if not series:
        raise SchemaError("nothing to plot")
    empty = [k for k, (xs, _) in series.items() if not xs]
    if empty:
        raise SchemaError(f"empty series: {empty}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, marker=".", label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_csv(csv_path, out_path=None, x=None, y=None, logy=False, title=None):
    """Render one line per policy from a result CSV; returns the SVG path."""
    _, cols, rows = read_table(csv_path)
    xc, yc, series = detect_schema(cols, x, y)
    data = collect_series(rows, xc, yc, series, logy)
    out = Path(out_path) if out_path else Path(csv_path).with_suffix(".svg")
    return plot_series(data, out, xc, yc, title if title is not None else Path(csv_path).stem, logy)
