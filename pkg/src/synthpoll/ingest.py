"""Categorical survey ingestion and preprocessing.

Loads delimited survey files against a declared schema, enforces the
three recognized missing-value codes, imputes or excludes missing
entries, drops fringe categories, and standardizes variables into
probability distributions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    AllMissing,
    EmptyDataset,
    EverythingRemoved,
    InvalidValue,
    MissingColumn,
)


class MissingCode(Enum):
    """The only cell values accepted as missing; any other negative is an error."""

    INAPPLICABLE = -8
    REFUSAL = -2
    DONT_KNOW = -1


_MISSING_BY_CODE = {m.value: m for m in MissingCode}


@dataclass(frozen=True)
class VariableSchema:
    """One categorical variable: its ordered category labels and its role."""

    name: str
    categories: tuple[str, ...]
    kind: str = "demographic"  # demographic | opinion
    likert: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be non-empty")
        if self.kind not in ("demographic", "opinion"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        cats = tuple(self.categories)
        object.__setattr__(self, "categories", cats)
        if len(cats) < 2:
            raise ValueError(f"{self.name}: needs at least 2 categories")
        if any(not c for c in cats):
            raise ValueError(f"{self.name}: category labels must be non-empty")
        if len(set(cats)) != len(cats):
            raise ValueError(f"{self.name}: category labels must be unique")

    def index_of(self, label: str) -> int:
        return self.categories.index(label)


@dataclass
class SurveyDataset:
    """Validated categorical records. Cells hold category indexes or MissingCode."""

    schema: list[VariableSchema]
    records: list[dict[str, int | MissingCode]]
    provenance: str = ""

    def variable(self, name: str) -> VariableSchema:
        for var in self.schema:
            if var.name == name:
                return var
        raise KeyError(name)

    def column(self, name: str) -> list[int | MissingCode]:
        return [row[name] for row in self.records]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class CategoricalDistribution:
    """Empirical probability mass of one variable."""

    variable: str
    mass: dict[str, float]
    support_count: int

    def __post_init__(self):
        if any(p < 0 for p in self.mass.values()):
            raise ValueError(f"{self.variable}: negative probability")
        total = sum(self.mass.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"{self.variable}: mass sums to {total}, not 1")

    @property
    def categories(self) -> list[str]:
        return list(self.mass)


@dataclass(frozen=True)
class OutlierRemoval:
    """Result of fringe-category filtering."""

    dataset: SurveyDataset
    dropped_records: int
    dropped_categories: tuple[str, ...]


def load_schema(path: str | Path) -> list[VariableSchema]:
    """Read a JSON schema document listing variables, categories, and kinds."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [
        VariableSchema(
            name=entry["name"],
            categories=tuple(entry["categories"]),
            kind=entry.get("kind", "demographic"),
            likert=bool(entry.get("likert", False)),
        )
        for entry in doc["variables"]
    ]


def _parse_cell(raw: str, var: VariableSchema) -> int | MissingCode:
    """Map a raw cell onto a category index or a missing code.

    Accepted grammar: an exact category label; a 1-based integer category
    code; or one of the literal missing codes -8/-2/-1. Anything else is
    an InvalidValue.
    """
    text = raw.strip()
    if text in var.categories:
        return var.index_of(text)
    try:
        number = int(text)
    except ValueError:
        raise InvalidValue(
            f"{var.name}: {raw!r} is not a category of {list(var.categories)}"
        ) from None
    if number in _MISSING_BY_CODE:
        return _MISSING_BY_CODE[number]
    if number < 0:
        raise InvalidValue(
            f"{var.name}: negative code {number} is not one of the recognized "
            f"missing codes {sorted(_MISSING_BY_CODE)}"
        )
    if 1 <= number <= len(var.categories):
        return number - 1
    raise InvalidValue(
        f"{var.name}: code {number} outside 1..{len(var.categories)}"
    )


def load_survey(
    path: str | Path, schema: list[VariableSchema], delimiter: str = ","
) -> SurveyDataset:
    """Load a delimited text file with a header row into a validated dataset."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for var in schema:
            if var.name not in header:
                raise MissingColumn(f"header {header} lacks variable {var.name!r}")
        records: list[dict[str, int | MissingCode]] = []
        for row in reader:
            records.append({var.name: _parse_cell(row[var.name], var) for var in schema})
    if not records:
        raise EmptyDataset(f"{path} contains no data rows")
    return SurveyDataset(schema=list(schema), records=records, provenance=str(path))


def write_survey(dataset: SurveyDataset, path: str | Path, delimiter: str = ",") -> None:
    """Write a dataset back to the delimited format (labels, codes as integers)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([var.name for var in dataset.schema])
        for row in dataset.records:
            out = []
            for var in dataset.schema:
                value = row[var.name]
                if isinstance(value, MissingCode):
                    out.append(str(value.value))
                else:
                    out.append(var.categories[value])
            writer.writerow(out)


def impute_invalid(
    dataset: SurveyDataset,
    variable: str,
    seed: int,
    codes: tuple[MissingCode, ...] = tuple(MissingCode),
) -> SurveyDataset:
    """Replace missing entries of one variable with draws from its valid values.

    Draws are independent from the empirical distribution of valid values,
    using a generator seeded by `seed`; valid cells are never touched.
    `codes` narrows which missing codes get imputed (default: all three).
    """
    var = dataset.variable(variable)
    column = dataset.column(variable)
    valid = [v for v in column if not isinstance(v, MissingCode)]
    if not valid:
        raise AllMissing(f"{variable}: no valid values to impute from")
    counts = np.bincount(valid, minlength=len(var.categories))
    probs = counts / counts.sum()
    rng = np.random.default_rng(seed)
    records = []
    for row in dataset.records:
        value = row[variable]
        if isinstance(value, MissingCode) and value in codes:
            row = dict(row)
            row[variable] = int(rng.choice(len(var.categories), p=probs))
        records.append(row)
    return replace(dataset, records=records)


def exclude_missing(
    dataset: SurveyDataset,
    variable: str,
    codes: tuple[MissingCode, ...] = tuple(MissingCode),
) -> SurveyDataset:
    """Drop records whose value for `variable` is one of the given missing codes."""
    records = [
        row
        for row in dataset.records
        if not (isinstance(row[variable], MissingCode) and row[variable] in codes)
    ]
    return replace(dataset, records=records)


def remove_outliers(
    dataset: SurveyDataset, variable: str, min_share: float
) -> OutlierRemoval:
    """Drop records in fringe categories (empirical share below min_share).

    Runs after imputation: the variable must have no missing entries.
    """
    if not 0 <= min_share < 1:
        raise ValueError(f"min_share must be in [0, 1), got {min_share}")
    var = dataset.variable(variable)
    column = dataset.column(variable)
    if any(isinstance(v, MissingCode) for v in column):
        raise ValueError(f"{variable}: impute or exclude missing values first")
    counts = np.bincount(column, minlength=len(var.categories))
    shares = counts / counts.sum()
    fringe = {i for i, share in enumerate(shares) if counts[i] > 0 and share < min_share}
    if len(fringe) == np.count_nonzero(counts):
        raise EverythingRemoved(
            f"{variable}: min_share={min_share} removes every category"
        )
    records = [row for row in dataset.records if row[variable] not in fringe]
    return OutlierRemoval(
        dataset=replace(dataset, records=records),
        dropped_records=len(dataset.records) - len(records),
        dropped_categories=tuple(var.categories[i] for i in sorted(fringe)),
    )


def standardize(dataset: SurveyDataset, variable: str) -> CategoricalDistribution:
    """Return the empirical distribution of a fully-valid variable."""
    var = dataset.variable(variable)
    column = dataset.column(variable)
    if any(isinstance(v, MissingCode) for v in column):
        raise ValueError(f"{variable}: impute or exclude missing values first")
    counts = np.bincount(column, minlength=len(var.categories))
    total = counts.sum()
    mass = {var.categories[i]: counts[i] / total for i in range(len(var.categories))}
    return CategoricalDistribution(variable=variable, mass=mass, support_count=int(total))


def dump_distributions(
    distributions: list[CategoricalDistribution], path: str | Path
) -> None:
    doc = {
        dist.variable: {"mass": dist.mass, "support_count": dist.support_count}
        for dist in distributions
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_distributions(path: str | Path) -> list[CategoricalDistribution]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [
        CategoricalDistribution(
            variable=name, mass=entry["mass"], support_count=entry["support_count"]
        )
        for name, entry in doc.items()
    ]
