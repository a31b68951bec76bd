"""Figure builders over the channel tool's CSV outputs.

Pure consumers: everything plotted comes from the input files; nothing is
recomputed.  CSV files may carry ``# key: value`` metadata lines before the
header row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class FigureInputError(ValueError):
    """Missing columns, ragged grids, empty files."""


@dataclass(frozen=True)
class FigureSpec:
    """What to read and where to render."""

    inputs: tuple[str, ...]
    kind: str  # "density" | "contour"
    output: str
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("density", "contour"):
            raise FigureInputError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise FigureInputError("no input files given")


def read_csv(path, required):
    """Rows of a metadata-headed CSV; checks the required columns exist."""
    meta = {}
    rows = []
    with open(path) as fh:
        data_lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line.lstrip("# ").partition(":")
                meta[key.strip()] = val.strip()
            else:
                data_lines.append(line)
        reader = csv.DictReader(data_lines)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FigureInputError(f"{path}: missing columns {missing}")
        for row in reader:
            rows.append(row)
    if not rows:
        raise FigureInputError(f"{path}: no data rows")
    return meta, rows


def plot_density(spec: FigureSpec) -> dict:
    """Overlay of one curve per series from density CSVs."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    n_series = 0
    for path in spec.inputs:
        _, rows = read_csv(path, required=("t", "series", "value"))
        by_series: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            by_series.setdefault(row["series"], []).append(
                (float(row["t"]), float(row["value"]))
            )
        for label, pts in by_series.items():
            pts.sort()
            ts, vals = zip(*pts)
            ax.plot(ts, vals, label=label)
            n_series += 1
    ax.set_xlabel(spec.xlabel or "t [s]")
    ax.set_ylabel(spec.ylabel or "density")
    if spec.title:
        ax.set_title(spec.title)
    if spec.xlim:
        ax.set_xlim(*spec.xlim)
    if spec.ylim:
        ax.set_ylim(*spec.ylim)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"output": spec.output, "series": n_series}


def plot_contour(spec: FigureSpec) -> dict:
    """Filled contour of the information surface over horizon and prior.

    Adds a dashed horizontal marker at the prior with the largest value in
    the final-horizon column (ties broken toward the lowest prior).
    """
    if len(spec.inputs) != 1:
        raise FigureInputError("contour figures take exactly one CSV")
    _, rows = read_csv(spec.inputs[0], required=("T", "pi", "mi", "se"))
    ts = sorted({float(r["T"]) for r in rows})
    pis = sorted({float(r["pi"]) for r in rows})
    if len(ts) < 2 or len(pis) < 2:
        raise FigureInputError("contour grid is degenerate (need at least 2x2)")
    grid = np.full((len(pis), len(ts)), np.nan)
    t_index = {t: j for j, t in enumerate(ts)}
    p_index = {p: i for i, p in enumerate(pis)}
    for r in rows:
        grid[p_index[float(r["pi"])], t_index[float(r["T"])]] = float(r["mi"])
    if np.isnan(grid).any():
        raise FigureInputError("contour grid is ragged (missing (T, pi) cells)")

    final = grid[:, -1]
    best = int(np.argmax(final))  # argmax picks the first (lowest pi) on ties
    marker_pi = pis[best]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    cf = ax.contourf(ts, pis, grid, levels=24)
    fig.colorbar(cf, ax=ax, label="information [nats]")
    ax.axhline(marker_pi, linestyle="--", color="red", linewidth=1.4)
    ax.set_xlabel(spec.xlabel or "T [s]")
    ax.set_ylabel(spec.ylabel or "prior")
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return {"output": spec.output, "marker_pi": marker_pi, "shape": grid.shape}
