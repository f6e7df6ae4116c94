"""Stakeholder profile sampling and prompt assembly.

Profiles are drawn per-variable from standardized distributions, each
variable contributing one sub-prompt to the rendered question prompt.
A data-minimization check flags ingested variables no sub-prompt uses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingVariable
from .ingest import CategoricalDistribution, MissingCode, SurveyDataset, VariableSchema

DEFAULT_LIKERT_SCALE = (
    "strongly disagree",
    "tend to disagree",
    "neither agree nor disagree",
    "tend to agree",
    "strongly agree",
)


@dataclass(frozen=True)
class ProfileSchema:
    """Ordered demographic variables that condition a synthetic respondent."""

    variables: tuple[VariableSchema, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise ValueError("profile schema needs at least one variable")
        names = [var.name for var in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names in profile schema")
        for var in self.variables:
            if var.kind != "demographic":
                raise ValueError(f"{var.name}: profiling variables must be demographic")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(var.name for var in self.variables)


@dataclass(frozen=True)
class Profile:
    """One sampled respondent: a category per profiling variable."""

    assignment: dict[str, str]


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    scale: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "scale", tuple(self.scale))
        if len(self.scale) < 2:
            raise ValueError(f"{self.id}: scale needs at least 2 categories")


@dataclass(frozen=True)
class PromptTemplate:
    """Text patterns assembled into one prompt per (profile, question)."""

    template_id: str
    preamble: str
    sub_prompt_patterns: dict[str, str]
    question_pattern: str
    answer_instruction: str
    max_answer_words: int

    def __post_init__(self):
        if self.max_answer_words < 1:
            raise ValueError("max_answer_words must be >= 1")
        for variable, pattern in self.sub_prompt_patterns.items():
            if pattern.count("{category}") != 1:
                raise ValueError(
                    f"sub-prompt for {variable} must contain exactly one {{category}}"
                )
        if self.question_pattern.count("{question}") != 1:
            raise ValueError("question pattern must contain exactly one {question}")


@dataclass(frozen=True)
class PromptBundle:
    profile: Profile
    question: Question
    rendered: str
    provenance: dict = field(default_factory=dict)


#: the ten default questions with a five-point agreement scale each
DEFAULT_QUESTION_BANK = tuple(
    Question(id=qid, text=text, scale=DEFAULT_LIKERT_SCALE)
    for qid, text in (
        ("lifestyle", "Describe your lifestyle"),
        ("personal_impact", "Personal Impact on Climate"),
        ("willing_to_pay", "Willing to Pay"),
        ("personal_change", "Personal Change"),
        ("environ_disaster", "Environ. Disaster"),
        ("green_tariff", "Green Tariff"),
        ("pollution", "Pollution"),
        ("environ_group", "Environ. Group"),
        ("climate_change_control", "Climate Change Control"),
        ("climate_change_impact", "Climate Change Impact"),
    )
)


def sample_profiles(
    distributions: list[CategoricalDistribution], n: int, seed: int
) -> list[Profile]:
    """Draw n profiles independently per variable (marginal product sampling)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    columns: dict[str, list[str]] = {}
    for dist in distributions:
        categories = list(dist.mass)
        probs = np.array([dist.mass[c] for c in categories], dtype=float)
        probs = probs / probs.sum()
        draws = rng.choice(len(categories), size=n, p=probs)
        columns[dist.variable] = [categories[i] for i in draws]
    return [
        Profile(assignment={variable: columns[variable][i] for variable in columns})
        for i in range(n)
    ]


def profiles_from_dataset(dataset: SurveyDataset, variables: list[str]) -> list[Profile]:
    """Direct record-to-profile conversion (joint, not marginal, sampling path)."""
    profiles = []
    for row in dataset.records:
        assignment = {}
        for name in variables:
            value = row[name]
            if isinstance(value, MissingCode):
                raise ValueError(f"{name}: impute or exclude missing values first")
            assignment[name] = dataset.variable(name).categories[value]
        profiles.append(Profile(assignment=assignment))
    return profiles


def render_prompt(
    profile: Profile,
    question: Question,
    template: PromptTemplate,
    seed: int | None = None,
) -> PromptBundle:
    """Assemble preamble, sub-prompts in template order, question, and instruction."""
    parts = [template.preamble]
    for variable, pattern in template.sub_prompt_patterns.items():
        if variable not in profile.assignment:
            raise MissingVariable(f"profile lacks templated variable {variable!r}")
        parts.append(pattern.format(category=profile.assignment[variable]))
    parts.append(template.question_pattern.format(question=question.text))
    parts.append(
        f"{template.answer_instruction} "
        f"Answer with exactly one of: {', '.join(question.scale)}. "
        f"Use at most {template.max_answer_words} words."
    )
    rendered = "\n".join(part for part in parts if part)
    provenance = {"template_id": template.template_id}
    if seed is not None:
        provenance["seed"] = seed
    return PromptBundle(
        profile=profile, question=question, rendered=rendered, provenance=provenance
    )


def check_minimization(schema: ProfileSchema, template: PromptTemplate) -> list[str]:
    """Variables ingested but unused by any sub-prompt; empty means compliant."""
    return [
        name for name in schema.names if name not in template.sub_prompt_patterns
    ]


# --- JSON documents -----------------------------------------------------------


def load_template(path: str | Path) -> PromptTemplate:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return PromptTemplate(
        template_id=doc.get("template_id", Path(path).stem),
        preamble=doc["preamble"],
        sub_prompt_patterns=dict(doc.get("sub_prompts", {})),
        question_pattern=doc["question_pattern"],
        answer_instruction=doc["answer_instruction"],
        max_answer_words=int(doc["max_answer_words"]),
    )


def load_question_bank(path: str | Path) -> list[Question]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    questions = [
        Question(id=q["id"], text=q["text"], scale=tuple(q["scale"]))
        for q in doc["questions"]
    ]
    ids = [q.id for q in questions]
    if len(set(ids)) != len(ids):
        raise ValueError("question ids must be unique within a bank")
    return questions


def bundle_to_json(bundle: PromptBundle) -> dict:
    return {
        "profile": bundle.profile.assignment,
        "question": {
            "id": bundle.question.id,
            "text": bundle.question.text,
            "scale": list(bundle.question.scale),
        },
        "rendered": bundle.rendered,
        "provenance": bundle.provenance,
    }


def bundle_from_json(doc: dict) -> PromptBundle:
    return PromptBundle(
        profile=Profile(assignment=dict(doc["profile"])),
        question=Question(
            id=doc["question"]["id"],
            text=doc["question"]["text"],
            scale=tuple(doc["question"]["scale"]),
        ),
        rendered=doc["rendered"],
        provenance=dict(doc.get("provenance", {})),
    )


def write_bundles(bundles, path: str | Path) -> None:
    """Stream bundles as JSONL, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for bundle in bundles:
            fh.write(json.dumps(bundle_to_json(bundle), sort_keys=True) + "\n")


def read_bundles(path: str | Path) -> list[PromptBundle]:
    bundles = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                bundles.append(bundle_from_json(json.loads(line)))
    return bundles
