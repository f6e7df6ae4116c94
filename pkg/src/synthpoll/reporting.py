"""Plain-text and JSON report rendering.

Two table layouts are supported: the per-question alignment table
(Question | Chi-Square Test | Jaccard Index | Mutual Information) and
the model benchmark table. Ingested fixture rows keep their original
decimal strings so rendering loses no printed precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .metrics import MetricReport, ModelPerfRecord

ALIGNMENT_COLUMNS = ("Question", "Chi-Square Test", "Jaccard Index", "Mutual Information")
BENCHMARK_COLUMNS = (
    "Model",
    "AUC",
    "Balanced Accuracy",
    "Memory Consumption",
    "Training Time",
    "Prediction Time",
)


def _render_table(header: tuple[str, ...], rows: list[tuple[str, ...]]) -> str:
    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    lines = [" | ".join(cell.ljust(widths[i]) for i, cell in enumerate(header)).rstrip()]
    lines.append("-+-".join("-" * w for w in widths))
    for row in rows:
        lines.append(
            " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        )
    return "\n".join(lines) + "\n"


def parse_rendered_table(text: str) -> list[tuple[str, ...]]:
    """Inverse of _render_table: header row plus data rows, cells stripped."""
    rows = []
    for line in text.splitlines():
        if not line.strip() or set(line) <= {"-", "+", " "}:
            continue
        rows.append(tuple(cell.strip() for cell in line.split("|")))
    return rows


# --- computed alignment reports ----------------------------------------------


def render_metric_reports(
    reports: list[MetricReport], labels: dict[str, str] | None = None
) -> str:
    """Render computed report rows in the alignment-table layout."""
    labels = labels or {}
    rows = [
        (
            labels.get(report.question_id, report.question_id),
            f"{report.chi_square:.4f}",
            f"{report.jaccard:.4f}",
            f"{report.nmi:.4f}",
        )
        for report in reports
    ]
    return _render_table(ALIGNMENT_COLUMNS, rows)


def metric_reports_to_json(reports: list[MetricReport]) -> list[dict]:
    return [
        {
            "question_id": report.question_id,
            "chi_square": report.chi_square,
            "jaccard": report.jaccard,
            "nmi": report.nmi,
            "n_observed": report.n_observed,
            "n_expected": report.n_expected,
        }
        for report in reports
    ]


def metric_reports_from_json(doc: list[dict]) -> list[MetricReport]:
    return [MetricReport(**entry) for entry in doc]


# --- ingested alignment fixtures -----------------------------------------------


@dataclass(frozen=True)
class AlignmentFixtureRow:
    """A published alignment row kept verbatim; values stay decimal strings."""

    question: str
    chi_square: str
    jaccard: str
    mutual_information: str

    def __post_init__(self):
        for name in ("chi_square", "jaccard", "mutual_information"):
            float(getattr(self, name))  # must parse, rendering keeps the string


def load_alignment_fixture(path: str | Path) -> list[AlignmentFixtureRow]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [AlignmentFixtureRow(**row) for row in doc["rows"]]


def render_alignment_fixture(rows: list[AlignmentFixtureRow]) -> str:
    return _render_table(
        ALIGNMENT_COLUMNS,
        [(r.question, r.chi_square, r.jaccard, r.mutual_information) for r in rows],
    )


# --- benchmark rows -------------------------------------------------------------


_BENCHMARK_FIELDS = (
    "auc",
    "balanced_accuracy",
    "memory_consumption",
    "training_time",
    "prediction_time",
)


def load_benchmark_rows(path: str | Path) -> dict[str, list[ModelPerfRecord]]:
    """Read benchmark sections (e.g. low/high dimensional) of model rows."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    sections = {}
    for section, rows in doc.items():
        records = []
        for row in rows:
            raw = {name: str(row[name]) for name in _BENCHMARK_FIELDS}
            records.append(
                ModelPerfRecord(
                    model_name=row["model_name"],
                    raw=raw,
                    **{name: float(row[name]) for name in _BENCHMARK_FIELDS},
                )
            )
        sections[section] = records
    return sections


def benchmark_report(records: list[ModelPerfRecord], title: str = "") -> str:
    """Render benchmark rows, flagging the superlative models.

    Flags the highest-AUC row and the fastest- and slowest-training rows;
    a single row collects every flag.
    """
    if not records:
        raise ValueError("benchmark_report needs at least one row")
    best_auc = max(records, key=lambda r: r.auc)
    fastest = min(records, key=lambda r: r.training_time)
    slowest = max(records, key=lambda r: r.training_time)
    rows = []
    for record in records:
        flags = []
        if record is best_auc:
            flags.append("highest AUC")
        if record is fastest:
            flags.append("fastest training")
        if record is slowest:
            flags.append("slowest training")
        name = record.model_name + (f"  [{', '.join(flags)}]" if flags else "")
        rows.append(
            (name,) + tuple(record.display(field) for field in _BENCHMARK_FIELDS)
        )
    table = _render_table(BENCHMARK_COLUMNS, rows)
    return (title + "\n" + table) if title else table
