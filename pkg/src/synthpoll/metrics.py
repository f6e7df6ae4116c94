"""Distribution-alignment scoring for synthetic vs expected responses.

Implements the four comparison scores (chi-square goodness of fit,
entropy, mutual information, normalized mutual information, weighted
Jaccard), the per-question report row, bias/variance regime
classification, conditional-response heatmaps, and ingested model
benchmark rows.

All logarithms are base 2, so entropies are in bits and the normalized
mutual information bound of [0, 1] is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateMarginals, ZeroExpectedCategory
from .ingest import CategoricalDistribution

#: category label used when unparseable responses are bucketed rather than dropped
UNPARSEABLE_LABEL = "(unparseable)"


@dataclass(frozen=True)
class ResponseDistribution:
    """Observed or expected response counts over a question's scale."""

    question_id: str
    counts: dict[str, float]
    kind: str = "observed"  # observed | expected

    def __post_init__(self):
        if self.kind not in ("observed", "expected"):
            raise ValueError(f"kind must be observed or expected, got {self.kind!r}")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError(f"{self.question_id}: negative count")
        if not any(c > 0 for c in self.counts.values()):
            raise ValueError(f"{self.question_id}: needs at least one positive count")

    @property
    def total(self) -> float:
        return sum(self.counts.values())

    def mass(self) -> dict[str, float]:
        total = self.total
        return {cat: count / total for cat, count in self.counts.items()}


@dataclass(frozen=True)
class JointDistribution:
    """A joint probability table over two categorical variables."""

    mass: np.ndarray
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        object.__setattr__(self, "mass", mass)
        if mass.ndim != 2:
            raise ValueError("joint mass must be a 2-D matrix")
        if (mass < 0).any():
            raise ValueError("joint mass entries must be non-negative")
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError(f"joint mass sums to {mass.sum()}, not 1")

    def transposed(self) -> JointDistribution:
        return JointDistribution(
            mass=self.mass.T, row_labels=self.col_labels, col_labels=self.row_labels
        )


@dataclass(frozen=True)
class MetricReport:
    """One Table-style report row for a single question."""

    question_id: str
    chi_square: float
    jaccard: float
    nmi: float
    n_observed: int
    n_expected: int

    def __post_init__(self):
        if self.chi_square < 0:
            raise ValueError("chi_square must be >= 0")
        if not 0 <= self.jaccard <= 1:
            raise ValueError("jaccard must be in [0, 1]")
        if not 0 <= self.nmi <= 1:
            raise ValueError("nmi must be in [0, 1]")


def _check_same_categories(
    observed: ResponseDistribution, expected: ResponseDistribution
) -> list[str]:
    if set(observed.counts) != set(expected.counts):
        raise ValueError(
            f"{observed.question_id}: category sets differ "
            f"({sorted(observed.counts)} vs {sorted(expected.counts)})"
        )
    return list(observed.counts)


def chi_square(observed: ResponseDistribution, expected: ResponseDistribution) -> float:
    """Goodness-of-fit statistic with expected counts rescaled to the observed total."""
    categories = _check_same_categories(observed, expected)
    o = np.array([observed.counts[c] for c in categories], dtype=float)
    e = np.array([expected.counts[c] for c in categories], dtype=float)
    e_scaled = e / e.sum() * o.sum()
    bad = (e_scaled == 0) & (o > 0)
    if bad.any():
        raise ZeroExpectedCategory(
            f"{observed.question_id}: observed mass on zero-expected categories "
            f"{[categories[i] for i in np.flatnonzero(bad)]}"
        )
    keep = e_scaled > 0
    return float(((o[keep] - e_scaled[keep]) ** 2 / e_scaled[keep]).sum())


def entropy(dist: CategoricalDistribution) -> float:
    """Shannon entropy in bits, with 0 * log 0 taken as 0."""
    probs = np.array([p for p in dist.mass.values() if p > 0], dtype=float)
    return float(-(probs * np.log2(probs)).sum())


def _entropy_of(probs: np.ndarray) -> float:
    probs = probs[probs > 0]
    return float(-(probs * np.log2(probs)).sum())


def mutual_information(joint: JointDistribution) -> float:
    """Discrete mutual information of the joint table, in bits."""
    mass = joint.mass
    px = mass.sum(axis=1)
    py = mass.sum(axis=0)
    total = 0.0
    for i in range(mass.shape[0]):
        for j in range(mass.shape[1]):
            p = mass[i, j]
            if p > 0:
                total += p * np.log2(p / (px[i] * py[j]))
    return float(total)


def nmi(joint: JointDistribution) -> float:
    """Mutual information normalized to [0, 1]: 2 I(X;Y) / (H(X) + H(Y))."""
    hx = _entropy_of(joint.mass.sum(axis=1))
    hy = _entropy_of(joint.mass.sum(axis=0))
    if hx + hy == 0:
        raise DegenerateMarginals("both marginals are deterministic")
    value = 2.0 * mutual_information(joint) / (hx + hy)
    return float(min(1.0, max(0.0, value)))


def jaccard_weighted(
    observed: ResponseDistribution, expected: ResponseDistribution
) -> float:
    """Weighted Jaccard over normalized category mass: sum(min) / sum(max)."""
    categories = _check_same_categories(observed, expected)
    o_mass = observed.mass()
    e_mass = expected.mass()
    num = sum(min(o_mass[c], e_mass[c]) for c in categories)
    den = sum(max(o_mass[c], e_mass[c]) for c in categories)
    return num / den


def stacked_joint(
    observed: ResponseDistribution, expected: ResponseDistribution
) -> JointDistribution:
    """2 x C joint pairing the two distributions under a uniform source indicator.

    Row 0 conditions on the observed source, row 1 on the expected source,
    each carrying half the mass.
    """
    categories = _check_same_categories(observed, expected)
    o_mass = observed.mass()
    e_mass = expected.mass()
    mass = np.array(
        [
            [0.5 * o_mass[c] for c in categories],
            [0.5 * e_mass[c] for c in categories],
        ]
    )
    return JointDistribution(
        mass=mass, row_labels=("observed", "expected"), col_labels=tuple(categories)
    )


def alignment_nmi(
    observed: ResponseDistribution, expected: ResponseDistribution
) -> float:
    """Source-indistinguishability score in [0, 1]; 1 means identical distributions.

    The normalized mutual information between the response and a uniform
    observed/expected source indicator measures how separable the two
    distributions are, so its complement is the alignment score: identical
    distributions carry no information about the source and score 1.
    """
    return 1.0 - nmi(stacked_joint(observed, expected))


def evaluate_question(
    observed: ResponseDistribution, expected: ResponseDistribution
) -> MetricReport:
    """Combine the three comparison scores into one report row."""
    return MetricReport(
        question_id=observed.question_id,
        chi_square=chi_square(observed, expected),
        jaccard=jaccard_weighted(observed, expected),
        nmi=alignment_nmi(observed, expected),
        n_observed=int(round(observed.total)),
        n_expected=int(round(expected.total)),
    )


def distribution_from_outcomes(
    outcomes: Sequence,
    question_id: str,
    scale: Sequence[str],
    kind: str = "observed",
    unparseable: str = "drop",
) -> ResponseDistribution:
    """Histogram category outcomes for one question onto its scale.

    `unparseable` chooses the treatment of non-matching responses:
    "drop" excludes them, "bucket" counts them under UNPARSEABLE_LABEL.
    """
    if unparseable not in ("drop", "bucket"):
        raise ValueError(f"unparseable must be drop or bucket, got {unparseable!r}")
    counts: dict[str, float] = {cat: 0.0 for cat in scale}
    if unparseable == "bucket":
        counts[UNPARSEABLE_LABEL] = 0.0
    for outcome in outcomes:
        if outcome.question_id != question_id:
            continue
        if outcome.category is None:
            if unparseable == "bucket":
                counts[UNPARSEABLE_LABEL] += 1
        elif outcome.category in counts:
            counts[outcome.category] += 1
    return ResponseDistribution(question_id=question_id, counts=counts, kind=kind)


# --- bias/variance regimes ---------------------------------------------------


@dataclass(frozen=True)
class RegimeThresholds:
    gap_threshold: float = 0.10
    bias_threshold: float = 0.25


@dataclass(frozen=True)
class RegimeDiagnosis:
    train_error: float
    test_error: float
    regime: str  # HighVariance | HighBias | Balanced

    def __post_init__(self):
        for name, value in (("train_error", self.train_error), ("test_error", self.test_error)):
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def regime_classify(
    train_error: float,
    test_error: float,
    thresholds: RegimeThresholds = RegimeThresholds(),
) -> RegimeDiagnosis:
    """Classify a train/test error pair into a failure regime.

    A test-train gap above gap_threshold is the high-variance regime; both
    errors above bias_threshold without such a gap is high bias; anything
    else is balanced.
    """
    gap = test_error - train_error
    if gap > thresholds.gap_threshold:
        regime = "HighVariance"
    elif (
        train_error > thresholds.bias_threshold
        and test_error > thresholds.bias_threshold
    ):
        regime = "HighBias"
    else:
        regime = "Balanced"
    return RegimeDiagnosis(train_error=train_error, test_error=test_error, regime=regime)


# --- conditional-response heatmap --------------------------------------------


@dataclass(frozen=True)
class HeatmapMatrix:
    """P(response category | profile category); rows sum to 1 or are flagged empty."""

    question_id: str
    variable: str
    values: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    empty_rows: tuple[str, ...] = ()
    unparsed: int = 0


def heatmap(
    outcomes: Sequence,
    profiles: Sequence,
    question_id: str,
    variable: str,
    row_categories: Sequence[str] | None = None,
    scale: Sequence[str] | None = None,
) -> HeatmapMatrix:
    """Conditional response distribution per profile category.

    Outcomes and profiles must be aligned by index. Rows with zero
    respondents are emitted all-zero and listed in empty_rows.
    """
    if len(outcomes) != len(profiles):
        raise ValueError("outcomes and profiles must be aligned by index")
    pairs = [
        (profile.assignment[variable], outcome.category)
        for outcome, profile in zip(outcomes, profiles)
        if outcome.question_id == question_id
    ]
    unparsed = sum(1 for _, category in pairs if category is None)
    pairs = [(row, cat) for row, cat in pairs if cat is not None]
    rows = (
        tuple(row_categories)
        if row_categories is not None
        else tuple(sorted({row for row, _ in pairs}))
    )
    cols = (
        tuple(scale)
        if scale is not None
        else tuple(sorted({cat for _, cat in pairs}))
    )
    counts = np.zeros((len(rows), len(cols)))
    row_index = {label: i for i, label in enumerate(rows)}
    col_index = {label: j for j, label in enumerate(cols)}
    for row, cat in pairs:
        if row in row_index and cat in col_index:
            counts[row_index[row], col_index[cat]] += 1
    totals = counts.sum(axis=1)
    values = np.zeros_like(counts)
    nonempty = totals > 0
    values[nonempty] = counts[nonempty] / totals[nonempty, None]
    empty = tuple(rows[i] for i in np.flatnonzero(~nonempty))
    return HeatmapMatrix(
        question_id=question_id,
        variable=variable,
        values=values,
        row_labels=rows,
        col_labels=cols,
        empty_rows=empty,
        unparsed=unparsed,
    )


# --- ingested benchmark rows --------------------------------------------------


@dataclass(frozen=True)
class ModelPerfRecord:
    """One ingested model-performance row; raw strings preserve printed precision."""

    model_name: str
    auc: float
    balanced_accuracy: float
    memory_consumption: float
    training_time: float
    prediction_time: float
    raw: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("auc", "balanced_accuracy"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("memory_consumption", "training_time", "prediction_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def display(self, field_name: str) -> str:
        if field_name in self.raw:
            return self.raw[field_name]
        return format(getattr(self, field_name), "g")
