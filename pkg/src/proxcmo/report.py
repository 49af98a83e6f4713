"""File emission for runs: trajectory CSVs, tidy per-figure CSVs, matplotlib
figures, and the comparison table.

Every CSV uses shortest-round-trip float formatting so identical runs emit
byte-identical files.  Figures are rendered straight to PNG; nothing is ever
shown interactively.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_trajectory_csv",
    "write_columns_csv",
    "lasso_figure",
    "shidoku_figure",
    "sysid_figure",
    "comparison_figure",
    "format_table",
]


def _fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def write_columns_csv(path, header, columns):
    """Write named columns (equal length) as a plain comma-separated file."""
    columns = [np.asarray(c) for c in columns]
    n = columns[0].shape[0]
    if any(c.shape[0] != n for c in columns):
        raise ValueError("columns must have equal length")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(c[i]) for c in columns) + "\n")


def trajectory_header(blocks) -> list:
    n, na, nl = blocks
    cols = ["t"]
    cols += [f"x{i}" for i in range(n)]
    cols += [f"a{i}" for i in range(na)]
    cols += [f"l{i}" for i in range(nl)]
    cols += ["res_stat", "res_feas", "obj"]
    return cols


def write_trajectory_csv(path, traj):
    """One row per recorded sample: time, state blocks, residuals, objective."""
    if traj.blocks is None:
        raise ValueError("trajectory has no block layout; run it through simulate()")
    header = trajectory_header(traj.blocks)
    cols = [traj.t] + [traj.y[:, j] for j in range(traj.y.shape[1])]
    for name in ("res_stat", "res_feas", "obj"):
        if name not in traj.metrics:
            raise ValueError(f"trajectory metrics are missing {name!r}")
        cols.append(traj.metrics[name])
    write_columns_csv(path, header, cols)


_METHOD_STYLE = {
    "dynamic": dict(color="tab:blue"),
    "static": dict(color="tab:orange"),
    "pi-pgd": dict(color="tab:green"),
    "pi-cmo": dict(color="tab:purple"),
    "grad-flow": dict(color="tab:red", linestyle="--"),
    "ns-pdgd": dict(color="tab:brown"),
    "pgf": dict(color="tab:gray"),
}


def lasso_figure(reports: dict, path: str):
    """Four panels: residual vs l1, residual vs time, sparsity level, and
    support error, one line per method."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for name, rep in reports.items():
        if rep.get("status") != "ok":
            continue
        style = _METHOD_STYLE.get(name, {})
        axes[0, 0].plot(rep["l1"], rep["residual"], label=name, **style)
        axes[0, 1].semilogy(rep["t"], np.maximum(rep["residual"], 1e-16),
                            label=name, **style)
        axes[1, 0].plot(rep["t"], rep["l0"], label=name, **style)
        axes[1, 1].plot(rep["t"], rep["support_error"], label=name, **style)
    axes[0, 0].set_xlabel(r"$\|x\|_1$")
    axes[0, 0].set_ylabel(r"$\|Ax-b\|_2$")
    axes[0, 1].set_xlabel("t")
    axes[0, 1].set_ylabel(r"$\|Ax-b\|_2$")
    axes[1, 0].set_xlabel("t")
    axes[1, 0].set_ylabel(r"$\|x\|_0$")
    axes[1, 1].set_xlabel("t")
    axes[1, 1].set_ylabel("support error")
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def shidoku_figure(result: dict, path: str):
    """Success-rate bar plus the first solved grid, when one exists."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.6))
    ax1.bar([result["method"]], [result["success_rate"]], color="tab:blue")
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("success rate")
    ax1.set_title(f"{result['successes']}/{result['n_runs']} solved")
    grid = next((g for g, r in zip(result["grids"], result["runs"])
                 if r["success"] and g is not None), None)
    ax2.set_xticks([])
    ax2.set_yticks([])
    if grid is None:
        ax2.text(0.5, 0.5, "no solved grid", ha="center", va="center")
    else:
        ax2.imshow(np.asarray(grid), cmap="Pastel1", vmin=1, vmax=4)
        for i in range(4):
            for j in range(4):
                ax2.text(j, i, str(int(grid[i][j])), ha="center", va="center",
                         fontsize=14)
        for k in (-0.5, 1.5, 3.5):
            ax2.axhline(k, color="k", lw=1.5)
            ax2.axvline(k, color="k", lw=1.5)
        ax2.set_title("solved grid")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def sysid_figure(result: dict, inst, path: str):
    """Coefficient intervals with the midpoint estimate, plus a test-set
    overlay of the true and predicted responses."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    idx = np.arange(1, len(result["theta_hat"]) + 1)
    lower = np.asarray(result["theta_lower"])
    upper = np.asarray(result["theta_upper"])
    hat = np.asarray(result["theta_hat"])
    ax1.errorbar(idx, hat, yerr=[hat - lower, upper - hat], fmt="o",
                 capsize=4, color="tab:blue")
    ax1.set_xticks(idx)
    ax1.set_xlabel("coefficient index")
    ax1.set_ylabel("value")
    ax1.set_title(f"{result['method']}: FIT {result['fit']:.2f}%")
    k = min(150, inst.y_test.size)
    ax2.plot(inst.y_test[:k], label="true", color="k", lw=1)
    ax2.plot(inst.Phi_test[:k] @ hat, label="predicted", color="tab:blue",
             lw=1, linestyle="--")
    ax2.set_xlabel("test sample")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def comparison_figure(rows: list, metric: str, path: str):
    """Bar chart of one numeric column across method rows."""
    labels = [f"{r['method']}" for r in rows]
    values = [r.get(metric) for r in rows]
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(rows), 3.4))
    vals = [v if v is not None else 0.0 for v in values]
    ax.bar(labels, vals, color="tab:blue")
    if metric.endswith("residual") and all(v and v > 0 for v in vals):
        ax.set_yscale("log")
    ax.set_ylabel(metric)
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


TABLE_COLUMNS = ("method", "final_residual", "l0", "support_error", "fit",
                 "success_rate")


def format_table(rows: list) -> str:
    """Aligned text table over the unified comparison columns."""
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    data = [[cell(r.get(c)) for c in TABLE_COLUMNS] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in data)) if data else len(h)
              for i, h in enumerate(TABLE_COLUMNS)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(TABLE_COLUMNS, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in data:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
