"""Matplotlib figure rendering for the report path.

Figures are written to files (SVG by default) next to the delimited
outputs; nothing here opens an interactive window.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import HeatmapMatrix, MetricReport  # noqa: E402


def write_heatmap_csv(matrix: HeatmapMatrix, path: str | Path) -> None:
    """Labelled CSV of the conditional-response matrix."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([matrix.variable] + list(matrix.col_labels))
        for i, row_label in enumerate(matrix.row_labels):
            writer.writerow(
                [row_label] + [f"{value:.6f}" for value in matrix.values[i]]
            )


def save_heatmap_figure(matrix: HeatmapMatrix, path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(
        figsize=(1.2 * max(4, len(matrix.col_labels)), 0.6 * max(4, len(matrix.row_labels)))
    )
    image = ax.imshow(matrix.values, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(matrix.col_labels)))
    ax.set_xticklabels(matrix.col_labels, rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(len(matrix.row_labels)))
    ax.set_yticklabels(matrix.row_labels, fontsize=8)
    ax.set_xlabel("response")
    ax.set_ylabel(matrix.variable)
    ax.set_title(f"P(response | {matrix.variable}): {matrix.question_id}")
    for i in range(matrix.values.shape[0]):
        for j in range(matrix.values.shape[1]):
            ax.text(
                j, i, f"{matrix.values[i, j]:.2f}",
                ha="center", va="center", fontsize=7,
                color="white" if matrix.values[i, j] < 0.5 else "black",
            )
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_alignment_figure(reports: list[MetricReport], path: str | Path) -> Path:
    """Grouped bars of the bounded scores plus a chi-square panel per question."""
    path = Path(path)
    ids = [report.question_id for report in reports]
    x = range(len(ids))
    fig, (ax_scores, ax_chi) = plt.subplots(
        2, 1, figsize=(max(6, 0.9 * len(ids)), 7), sharex=True
    )
    width = 0.35
    ax_scores.bar([i - width / 2 for i in x], [r.jaccard for r in reports],
                  width=width, label="weighted Jaccard")
    ax_scores.bar([i + width / 2 for i in x], [r.nmi for r in reports],
                  width=width, label="alignment NMI")
    ax_scores.set_ylim(0, 1.05)
    ax_scores.set_ylabel("score")
    ax_scores.legend(loc="lower right", fontsize=8)
    ax_chi.bar(list(x), [r.chi_square for r in reports], color="#b44")
    ax_chi.set_ylabel("chi-square")
    ax_chi.set_xticks(list(x))
    ax_chi.set_xticklabels(ids, rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
