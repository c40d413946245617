"""Matplotlib rendering of the experiment tables and error fields.

Figures are written as PNG files next to the CSV output. This module is the
only place matplotlib is imported; the solver core stays plotting-free.
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def _num(cell):
    try:
        return float(cell)
    except ValueError:
        return np.nan


def plot_robustness(table_path, out_path):
    """log-log condition number versus contrast, one curve per EV count."""
    header, rows = _read_table(table_path)
    contrasts = np.array([_num(r[0]) for r in rows])
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for col in range(1, len(header)):
        kappa = np.array([_num(r[col]) for r in rows])
        ax.loglog(contrasts, kappa, marker="o", label=header[col])
    ax.set_xlabel("coefficient contrast")
    ax.set_ylabel("condition number estimate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_scaling(table_path, out_path):
    header, rows = _read_table(table_path)
    grids = [r[0] for r in rows]
    one = np.array([_num(r[2]) for r in rows])
    two = np.array([_num(r[4]) for r in rows])
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    x = np.arange(len(grids))
    ax.plot(x, one, marker="s", label="one level")
    ax.plot(x, two, marker="o", label="two level")
    ax.set_xticks(x, grids)
    ax.set_xlabel("subdomain grid")
    ax.set_ylabel("PCG iterations")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_coarse_error(table_path, out_path):
    header, rows = _read_table(table_path)
    evs = np.array([_num(r[0]) for r in rows])
    rel = np.array([_num(r[3]) for r in rows])
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.semilogy(evs, rel, marker="o")
    ax.set_xlabel("eigenvectors per subdomain")
    ax.set_ylabel("relative energy error")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_field(dump_path, out_path, title=None, log_scale=False):
    """Heat map of a nodal scalar field dump (x, y, value CSV)."""
    header, rows = _read_table(dump_path)
    xs = np.array([_num(r[0]) for r in rows])
    ys = np.array([_num(r[1]) for r in rows])
    vs = np.array([_num(r[2]) for r in rows])
    nx = np.unique(xs).size
    ny = np.unique(ys).size
    if nx * ny != vs.size:
        # vector field dump (two values per node): plot the magnitude
        vs = np.hypot(vs[0::2], vs[1::2])
        xs, ys = xs[0::2], ys[0::2]
    grid = vs.reshape(ny, nx)
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    norm = matplotlib.colors.LogNorm() if log_scale and np.all(grid > 0) else None
    im = ax.pcolormesh(
        xs.reshape(ny, nx), ys.reshape(ny, nx), grid, shading="auto", norm=norm
    )
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def render_summary(cfg, summary, out_dir):
    """Render every figure the experiment kind calls for; returns the paths."""
    out_dir = Path(out_dir)
    figures = []
    if summary.kind == "robustness" and summary.tables:
        figures.append(
            plot_robustness(summary.tables[0], out_dir / f"{cfg.prefix}_cond.png")
        )
    elif summary.kind == "scaling" and summary.tables:
        figures.append(
            plot_scaling(summary.tables[0], out_dir / f"{cfg.prefix}_scaling.png")
        )
    elif summary.kind == "coarse_error" and summary.tables:
        figures.append(
            plot_coarse_error(summary.tables[0], out_dir / f"{cfg.prefix}_coarse_error.png")
        )
        for dump in summary.dumps:
            dump = Path(dump)
            if dump.suffix == ".csv" and "_error_field_" in dump.name:
                figures.append(
                    plot_field(
                        dump,
                        dump.with_suffix(".png"),
                        title=dump.stem.replace("_", " "),
                    )
                )
            elif dump.suffix == ".csv" and dump.name.endswith("_coefficients.csv"):
                figures.append(
                    plot_coefficients(dump, dump.with_suffix(".png"))
                )
    return figures


def plot_coefficients(dump_path, out_path):
    """Heat map of the per-element coefficient raster."""
    header, rows = _read_table(dump_path)
    xs = np.array([_num(r[0]) for r in rows])
    ys = np.array([_num(r[1]) for r in rows])
    vs = np.array([_num(r[2]) for r in rows])
    nx = np.unique(xs).size
    ny = np.unique(ys).size
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    norm = matplotlib.colors.LogNorm() if vs.max() / max(vs.min(), 1e-300) > 50 else None
    im = ax.pcolormesh(
        xs.reshape(ny, nx), ys.reshape(ny, nx), vs.reshape(ny, nx), shading="auto", norm=norm
    )
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_aspect("equal")
    ax.set_title("coefficient field", fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)
