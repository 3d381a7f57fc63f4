#!/usr/bin/env python3
"""Figure generation from benchmark CSV outputs.

Reads the CSV files written by the `serkn` command-line driver and renders
publication-style figures without recomputing any quantity:

* problem figure - three panels per problem:
    (i)   global error GE against function evaluations   (log-log)
    (ii)  global error GE against CPU seconds            (log-log)
    (iii) Hamiltonian drift GEH against log10(t_end)     (log y)
* stability figure - shaded (V, z) region where the method is stable or
  periodic, one panel per method CSV.

Usage:
    render.py --kind problem   --in <dir with converge/efficiency/energy csv> --out fig.png
    render.py --kind stability --in <dir with stability_*.csv>                --out fig.png

Rendering is a pure function of the CSV contents; timestamps are suppressed
so re-rendering produces identical bytes.  Exits nonzero on schema
violations.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MARKERS = "osd^vP*X"
COLORS = ["tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple",
          "tab:brown", "tab:pink", "tab:gray", "tab:olive", "tab:cyan"]


class SchemaError(ValueError):
    """A CSV is missing required columns or yields no plottable series."""


@dataclass
class FigureSpec:
    """Input CSVs and layout for one figure."""

    kind: str                      # "problem" | "stability"
    csv_paths: dict                # role -> Path
    out_path: Path = None
    series_style: dict = field(default_factory=dict)


def read_csv(path: Path, required: tuple):
    if not path.exists():
        raise SchemaError(f"missing input file {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in required if c not in cols]
        if missing:
            raise SchemaError(f"{path} lacks required columns {missing} "
                              f"(found {cols})")
        return list(reader)


def style_for(spec: FigureSpec, method: str):
    if method not in spec.series_style:
        k = len(spec.series_style)
        spec.series_style[method] = {
            "color": COLORS[k % len(COLORS)],
            "marker": MARKERS[k % len(MARKERS)],
        }
    return spec.series_style[method]


def series_by_method(rows, x_col, y_col):
    """Finite (x, y) pairs per method, in row order; empty series raise."""
    out = {}
    for row in rows:
        out.setdefault(row["method"], []).append(
            (float(row[x_col]), float(row[y_col])))
    series = {}
    for method, pts in out.items():
        finite = [(x, y) for x, y in pts if math.isfinite(x) and math.isfinite(y)
                  and y > 0.0]
        if not finite:
            raise SchemaError(f"series {method!r} has no plottable "
                              f"({x_col}, {y_col}) points")
        series[method] = finite
    return series


def _plot_panel(ax, spec, series, xlabel, ylabel, tag, xscale):
    for method in series:
        xs, ys = zip(*series[method])
        st = style_for(spec, method)
        ax.plot(xs, ys, label=method, color=st["color"], marker=st["marker"],
                markersize=4, linewidth=1.2)
    ax.set_xscale(xscale)
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(f"({tag})")
    ax.grid(True, which="both", alpha=0.3)


def render_problem_figure(spec: FigureSpec):
    """Three-panel GE/GEH figure; returns the matplotlib Figure."""
    converge = read_csv(spec.csv_paths["converge"],
                        ("method", "h", "nfev", "GE"))
    efficiency = read_csv(spec.csv_paths["efficiency"],
                          ("method", "h", "GE", "cpu_seconds"))
    energy = read_csv(spec.csv_paths["energy"], ("method", "t_end", "GEH"))

    fig, axes = plt.subplots(1, 3, figsize=(12.5, 4.0))
    _plot_panel(axes[0], spec, series_by_method(converge, "nfev", "GE"),
                "function evaluations", "GE", "i", "log")
    _plot_panel(axes[1], spec, series_by_method(efficiency, "cpu_seconds", "GE"),
                "CPU seconds", "GE", "ii", "log")

    geh = series_by_method(energy, "t_end", "GEH")
    log_series = {m: [(math.log10(x), y) for x, y in pts]
                  for m, pts in geh.items()}
    _plot_panel(axes[2], spec, log_series, "log10(t_end)", "GEH", "iii", "linear")
    ticks = sorted({round(x, 10) for pts in log_series.values() for x, _ in pts})
    axes[2].set_xticks(ticks)

    axes[0].legend(fontsize=8)
    fig.tight_layout()
    if spec.out_path is not None:
        save(fig, spec.out_path)
    return fig


def render_stability_figure(spec: FigureSpec, csv_path: Path, out_path: Path):
    """Shade the stable/periodic region of one method scan; returns Figure."""
    rows = read_csv(csv_path, ("V", "z", "code", "rho"))
    if not rows:
        raise SchemaError(f"{csv_path} has no grid points")
    V = np.array([float(r["V"]) for r in rows])
    z = np.array([float(r["z"]) for r in rows])
    code = np.array([int(r["code"]) for r in rows])
    V_axis = np.unique(V)
    z_axis = np.unique(z)
    if len(V_axis) * len(z_axis) != len(rows):
        raise SchemaError(f"{csv_path} is not a complete rectangular grid")
    # row-major in V then z
    shaded = ((code == 1) | (code == 2)).astype(float).reshape(
        len(V_axis), len(z_axis))

    fig, ax = plt.subplots(figsize=(4.4, 4.0))
    ax.pcolormesh(V_axis, z_axis, shaded.T, cmap="Greys", vmin=0.0, vmax=1.6,
                  shading="nearest")
    ax.set_xlabel("V")
    ax.set_ylabel("z")
    ax.set_title(method_name_from(csv_path))
    fig.tight_layout()
    if out_path is not None:
        save(fig, out_path)
    return fig


def method_name_from(csv_path: Path) -> str:
    return csv_path.stem.replace("stability_", "")


def save(fig, out_path: Path):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if out_path.suffix == ".svg":
        fig.savefig(out_path, metadata={"Date": None})
    else:
        fig.savefig(out_path, dpi=120)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=("problem", "stability"), required=True)
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory with the benchmark CSV files")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    in_dir = Path(args.in_dir)
    out = Path(args.out)
    try:
        if args.kind == "problem":
            spec = FigureSpec(kind="problem", csv_paths={
                "converge": in_dir / "converge.csv",
                "efficiency": in_dir / "efficiency.csv",
                "energy": in_dir / "energy.csv",
            }, out_path=out)
            render_problem_figure(spec)
            print(out)
        else:
            scans = sorted(in_dir.glob("stability_*.csv"))
            if not scans:
                raise SchemaError(f"no stability_*.csv files in {in_dir}")
            spec = FigureSpec(kind="stability",
                              csv_paths={p.stem: p for p in scans})
            for p in scans:
                target = out if len(scans) == 1 else out.with_name(
                    f"{out.stem}_{method_name_from(p)}{out.suffix}")
                render_stability_figure(spec, p, target)
                print(target)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
