"""Static SVG plots for the CLI; rendered from the same values the CSVs hold."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "glaubernet"

import matplotlib.pyplot as plt  # noqa: E402


def line_plot(path, x, series: dict, xlabel: str, ylabel: str,
              logx: bool = False, markers: bool = True) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        ax.plot(x, y, marker="o" if markers else None, markersize=3,
                linewidth=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logx:
        ax.set_xscale("log")
    if len(series) > 1:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def fit_plot(path, x, y, fit, xlabel: str, ylabel: str) -> None:
    import numpy as np
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(x, y, s=18, zorder=3)
    xs = np.linspace(min(x), max(x), 50)
    ax.plot(xs, fit.predict(xs), "--", linewidth=1.2,
            label=f"y = {fit.a:.4g} x + {fit.b:.4g} (R2={fit.r2:.4f})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
