"""Matplotlib figures for the report path (PNG/PDF next to the CSV output)."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def throughput_figure(
    path,
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    title: str = "",
    x_label: str = "parallel work (cycles)",
    y_label: str = "throughput (ops/ms)",
    band: tuple[str, str] | None = None,
) -> None:
    """Line plot of named series; ``band`` shades between two of them."""
    fig, ax = plt.subplots(figsize=(7, 4.2), dpi=120)
    for name, (xs, ys) in series.items():
        style = "o-" if len(xs) < 40 else "-"
        ax.plot(xs, ys, style, label=name, markersize=3, linewidth=1.3)
    if band is not None and band[0] in series and band[1] in series:
        xs, lo = series[band[0]]
        _, hi = series[band[1]]
        ax.fill_between(xs, lo, hi, alpha=0.12, color="grey", linewidth=0)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_ylim(bottom=0)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def histogram_figure(path, histogram: Mapping[str, int], title: str = "") -> None:
    """Bar chart of consecutive-fail counts (keys "0".."5", "6+")."""
    keys = list(histogram)
    total = sum(histogram.values()) or 1
    fig, ax = plt.subplots(figsize=(5, 3.2), dpi=120)
    ax.bar(keys, [histogram[k] / total for k in keys], color="#1f77b4")
    ax.set_xlabel("consecutive fails before success")
    ax.set_ylabel("frequency")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
