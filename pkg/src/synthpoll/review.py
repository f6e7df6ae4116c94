"""Expert-review tasks and inter-rater agreement.

Review tasks blind annotators to whether a statement came from a human
respondent or the synthetic pipeline; the ground truth stays server-side
until export. Agreement is reported both as raw pairwise agreement and
as Cohen's kappa, since either may be meant by published reviewer-score
ranges.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import DuplicateAnnotation, InsufficientOverlap, ParseError

SOURCES = ("Human", "Synthetic")
VERDICTS = ("Human", "AI")

#: verdict that counts as correct for each ground-truth source
_CORRECT_VERDICT = {"Human": "Human", "Synthetic": "AI"}


@dataclass(frozen=True)
class ReviewTask:
    """A blinded statement; source_hidden never reaches annotators."""

    id: str
    statement: str
    source_hidden: str

    def __post_init__(self):
        if self.source_hidden not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")


@dataclass(frozen=True)
class Annotation:
    task_id: str
    annotator_id: str
    verdict: str
    reasoning: str
    timestamp: str = ""

    def __post_init__(self):
        if not isinstance(self.task_id, str) or not self.task_id:
            raise ValueError("task_id must be a non-empty string")
        if not isinstance(self.annotator_id, str) or not self.annotator_id:
            raise ValueError("annotator_id must be a non-empty string")
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if not self.reasoning.strip():
            raise ValueError("reasoning must be non-empty")
        if not self.timestamp:
            object.__setattr__(
                self, "timestamp", datetime.now(timezone.utc).isoformat()
            )


def build_review_tasks(
    human_statements: list[str],
    synthetic_statements: list[str],
    seed: int,
    ratio: float = 1.0,
    limit: int | None = None,
) -> list[ReviewTask]:
    """Mix human and synthetic statements at the given human:synthetic ratio.

    Statements are sampled without replacement and shuffled with the
    seed; the ratio survives an applied task limit. Ids are stable and
    sequential.
    """
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    rng = random.Random(seed)
    human_share = ratio / (1.0 + ratio)
    feasible = min(
        int(len(human_statements) / human_share) if human_share > 0 else 0,
        int(len(synthetic_statements) / (1.0 - human_share)),
    )
    total = min(feasible, limit) if limit is not None else feasible
    n_human = min(len(human_statements), int(round(total * human_share)))
    n_synth = min(len(synthetic_statements), total - n_human)
    chosen_human = rng.sample(human_statements, n_human)
    chosen_synth = rng.sample(synthetic_statements, n_synth)
    pool = [(statement, "Human") for statement in chosen_human] + [
        (statement, "Synthetic") for statement in chosen_synth
    ]
    rng.shuffle(pool)
    return [
        ReviewTask(id=f"task-{i + 1:04d}", statement=statement, source_hidden=source)
        for i, (statement, source) in enumerate(pool)
    ]


# --- agreement statistics -------------------------------------------------------


@dataclass(frozen=True)
class PairAgreement:
    annotator_a: str
    annotator_b: str
    shared_tasks: int
    agreement: float
    kappa: float


@dataclass(frozen=True)
class AgreementStats:
    pairs: tuple[PairAgreement, ...]
    mean_agreement: float
    mean_kappa: float
    n_annotations: int
    per_task_accuracy: dict[str, float] | None = None
    per_annotator_accuracy: dict[str, float] | None = None


def cohen_kappa(verdicts_a: list[str], verdicts_b: list[str]) -> float:
    """Chance-corrected agreement; degenerate marginals fall back to raw identity."""
    if len(verdicts_a) != len(verdicts_b) or not verdicts_a:
        raise ValueError("kappa needs two equal-length, non-empty verdict lists")
    n = len(verdicts_a)
    observed = sum(1 for a, b in zip(verdicts_a, verdicts_b) if a == b) / n
    expected = 0.0
    for verdict in VERDICTS:
        pa = sum(1 for v in verdicts_a if v == verdict) / n
        pb = sum(1 for v in verdicts_b if v == verdict) / n
        expected += pa * pb
    if expected == 1.0:
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1.0 - expected)


def inter_rater_agreement(
    annotations: list[Annotation], tasks: list[ReviewTask] | None = None
) -> AgreementStats:
    """Pairwise raw agreement and kappa; accuracy when tasks unblind the source."""
    by_annotator: dict[str, dict[str, str]] = {}
    for annotation in annotations:
        by_annotator.setdefault(annotation.annotator_id, {})[
            annotation.task_id
        ] = annotation.verdict
    annotators = sorted(by_annotator)
    pairs: list[PairAgreement] = []
    for i, a in enumerate(annotators):
        for b in annotators[i + 1 :]:
            shared = sorted(set(by_annotator[a]) & set(by_annotator[b]))
            if not shared:
                continue
            verdicts_a = [by_annotator[a][task] for task in shared]
            verdicts_b = [by_annotator[b][task] for task in shared]
            agreement = sum(
                1 for va, vb in zip(verdicts_a, verdicts_b) if va == vb
            ) / len(shared)
            pairs.append(
                PairAgreement(
                    annotator_a=a,
                    annotator_b=b,
                    shared_tasks=len(shared),
                    agreement=agreement,
                    kappa=cohen_kappa(verdicts_a, verdicts_b),
                )
            )
    if not pairs:
        raise InsufficientOverlap(
            "need at least two annotators sharing at least one task"
        )
    per_task_accuracy = None
    per_annotator_accuracy = None
    if tasks is not None:
        source_by_task = {task.id: task.source_hidden for task in tasks}
        task_hits: dict[str, list[bool]] = {}
        annotator_hits: dict[str, list[bool]] = {}
        for annotation in annotations:
            source = source_by_task.get(annotation.task_id)
            if source is None:
                continue
            correct = annotation.verdict == _CORRECT_VERDICT[source]
            task_hits.setdefault(annotation.task_id, []).append(correct)
            annotator_hits.setdefault(annotation.annotator_id, []).append(correct)
        per_task_accuracy = {
            task: sum(hits) / len(hits) for task, hits in sorted(task_hits.items())
        }
        per_annotator_accuracy = {
            annotator: sum(hits) / len(hits)
            for annotator, hits in sorted(annotator_hits.items())
        }
    return AgreementStats(
        pairs=tuple(pairs),
        mean_agreement=sum(p.agreement for p in pairs) / len(pairs),
        mean_kappa=sum(p.kappa for p in pairs) / len(pairs),
        n_annotations=len(annotations),
        per_task_accuracy=per_task_accuracy,
        per_annotator_accuracy=per_annotator_accuracy,
    )


# --- persistence ------------------------------------------------------------------


def annotation_to_json(annotation: Annotation) -> dict:
    return {
        "task_id": annotation.task_id,
        "annotator_id": annotation.annotator_id,
        "verdict": annotation.verdict,
        "reasoning": annotation.reasoning,
        "timestamp": annotation.timestamp,
    }


def write_annotations(annotations: list[Annotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for annotation in annotations:
            fh.write(json.dumps(annotation_to_json(annotation), sort_keys=True) + "\n")


def review_import(
    path: str | Path, existing: list[Annotation] = ()
) -> list[Annotation]:
    """Parse an annotation JSONL file, rejecting malformed or duplicate lines.

    Duplicates are (task, annotator) pairs repeated within the file or
    already present in `existing`. Errors carry the offending line number.
    """
    seen = {(a.task_id, a.annotator_id) for a in existing}
    imported: list[Annotation] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                annotation = Annotation(
                    task_id=doc["task_id"],
                    annotator_id=doc["annotator_id"],
                    verdict=doc["verdict"],
                    reasoning=doc["reasoning"],
                    timestamp=doc.get("timestamp", ""),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as error:
                raise ParseError(lineno, str(error)) from error
            key = (annotation.task_id, annotation.annotator_id)
            if key in seen:
                raise DuplicateAnnotation(
                    lineno, f"annotator {key[1]!r} already rated task {key[0]!r}"
                )
            seen.add(key)
            imported.append(annotation)
    return imported


def tasks_to_json(tasks: list[ReviewTask]) -> dict:
    return {
        "tasks": [
            {"id": task.id, "statement": task.statement, "source_hidden": task.source_hidden}
            for task in tasks
        ]
    }


def load_tasks(path: str | Path) -> list[ReviewTask]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [
        ReviewTask(
            id=entry["id"],
            statement=entry["statement"],
            source_hidden=entry["source_hidden"],
        )
        for entry in doc["tasks"]
    ]


def agreement_to_json(stats: AgreementStats) -> dict:
    doc = {
        "mean_agreement": stats.mean_agreement,
        "mean_kappa": stats.mean_kappa,
        "n_annotations": stats.n_annotations,
        "pairs": [
            {
                "annotator_a": pair.annotator_a,
                "annotator_b": pair.annotator_b,
                "shared_tasks": pair.shared_tasks,
                "agreement": pair.agreement,
                "kappa": pair.kappa,
            }
            for pair in stats.pairs
        ],
    }
    if stats.per_task_accuracy is not None:
        doc["per_task_accuracy"] = stats.per_task_accuracy
    if stats.per_annotator_accuracy is not None:
        doc["per_annotator_accuracy"] = stats.per_annotator_accuracy
    return doc
