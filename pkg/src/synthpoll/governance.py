"""Run-level compliance artifacts.

Risk tiering follows a data-driven ordered rule table (first match
wins) so legal review can edit classifications without code changes.
The four-pillar scorecard uses deliberately simple aggregation formulas
that are embedded in every report. The audit log is an append-only
hash chain: any mutation of a stored entry breaks verification.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import ChainBroken, EmptyRuleTable, MissingOversightStatement
from .metrics import MetricReport

SECTORS = ("healthcare", "law_enforcement", "finance", "education", "retail", "research", "other")
TIERS = ("Unacceptable", "High", "Limited", "Minimal")

CHECKLIST_DIMENSIONS = (
    "Strategy",
    "Supply Chain",
    "Governance",
    "Processes",
    "Measurement",
    "Culture and Skills",
    "Data",
    "Technology",
)
CHECKLIST_STATUSES = ("addressed", "partial", "unaddressed", "not_applicable")

SCORECARD_FORMULAS = {
    "ethics": "mean of per-question alignment NMI",
    "desirability": "mean of per-question weighted Jaccard",
    "control": "satisfied control checks / 3 (oversight declared, audit chain valid, reproducibility check passed)",
    "viability": "min over configured budgets of min(1, budget / actual); 1 with no budgets",
}

VERDICT_PROCEED = "proceed"
VERDICT_REMEDIATE = "proceed with remediation"
VERDICT_REFUSE = "do not proceed"

_GENESIS = "0" * 64


@dataclass(frozen=True)
class UseCaseDescriptor:
    """Deployment facts for risk classification; every flag must be declared."""

    sector: str
    automated_decision_affecting_rights: bool
    mass_surveillance_capability: bool
    human_oversight_declared: bool
    personal_data_processed: bool

    def __post_init__(self):
        if self.sector not in SECTORS:
            raise ValueError(f"unknown sector {self.sector!r}; expected one of {SECTORS}")
        for name in (
            "automated_decision_affecting_rights",
            "mass_surveillance_capability",
            "human_oversight_declared",
            "personal_data_processed",
        ):
            if not isinstance(getattr(self, name), bool):
                raise ValueError(f"{name} must be declared as a boolean")


@dataclass(frozen=True)
class RiskTier:
    tier: str
    rationale: tuple[str, ...]

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        object.__setattr__(self, "rationale", tuple(self.rationale))
        if not self.rationale:
            raise ValueError("a tier needs a non-empty rationale")


@dataclass(frozen=True)
class RiskRule:
    """One classification rule: fires when every condition holds.

    Conditions are exact matches on descriptor flags, plus "sector_in"
    for sector membership. An empty condition set always fires.
    """

    rule_id: str
    tier: str
    when: dict

    def matches(self, descriptor: UseCaseDescriptor) -> bool:
        for key, expected in self.when.items():
            if key == "sector_in":
                if descriptor.sector not in expected:
                    return False
            elif getattr(descriptor, key) != expected:
                return False
        return True


DEFAULT_RISK_RULES = (
    RiskRule(
        rule_id="unacceptable-mass-surveillance",
        tier="Unacceptable",
        when={"mass_surveillance_capability": True},
    ),
    RiskRule(
        rule_id="high-risk-sector-automated-decisions",
        tier="High",
        when={
            "sector_in": ["healthcare", "law_enforcement", "finance"],
            "automated_decision_affecting_rights": True,
        },
    ),
    RiskRule(
        rule_id="limited-personal-data",
        tier="Limited",
        when={
            "personal_data_processed": True,
            "automated_decision_affecting_rights": False,
        },
    ),
    RiskRule(rule_id="minimal-default", tier="Minimal", when={}),
)


def classify_risk(
    descriptor: UseCaseDescriptor, rules: tuple[RiskRule, ...] = DEFAULT_RISK_RULES
) -> RiskTier:
    """First-match evaluation over the ordered rule table."""
    if not rules:
        raise EmptyRuleTable("risk classification needs at least one rule")
    for rule in rules:
        if rule.matches(descriptor):
            return RiskTier(tier=rule.tier, rationale=(rule.rule_id,))
    raise EmptyRuleTable("no rule matched; add a catch-all rule to the table")


def load_risk_rules(path: str | Path) -> tuple[RiskRule, ...]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return tuple(
        RiskRule(rule_id=entry["rule_id"], tier=entry["tier"], when=dict(entry["when"]))
        for entry in doc["rules"]
    )


def rules_to_json(rules: tuple[RiskRule, ...]) -> dict:
    return {
        "rules": [
            {"rule_id": rule.rule_id, "tier": rule.tier, "when": rule.when}
            for rule in rules
        ]
    }


# --- four-pillar scorecard -----------------------------------------------------


@dataclass(frozen=True)
class OversightFlags:
    oversight_declared: bool
    audit_chain_valid: bool
    reproducibility_check_passed: bool


@dataclass(frozen=True)
class RunStats:
    """Actuals vs configured budgets; budgets of None are unenforced."""

    runtime_seconds: float = 0.0
    cost_units: float = 0.0
    runtime_budget_seconds: float | None = None
    cost_budget_units: float | None = None


@dataclass(frozen=True)
class PillarScorecard:
    ethics: float
    control: float
    viability: float
    desirability: float
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ethics", "control", "viability", "desirability"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def pillar_scorecard(
    metrics: list[MetricReport], oversight: OversightFlags, run_stats: RunStats
) -> PillarScorecard:
    """Score the four pillars from run evidence; formulas ride along in inputs."""
    if not metrics:
        raise ValueError("pillar_scorecard needs at least one metric report")
    ethics = sum(report.nmi for report in metrics) / len(metrics)
    desirability = sum(report.jaccard for report in metrics) / len(metrics)
    checks = (
        oversight.oversight_declared,
        oversight.audit_chain_valid,
        oversight.reproducibility_check_passed,
    )
    control = sum(checks) / len(checks)
    ratios = [1.0]
    if run_stats.runtime_budget_seconds is not None and run_stats.runtime_seconds > 0:
        ratios.append(min(1.0, run_stats.runtime_budget_seconds / run_stats.runtime_seconds))
    if run_stats.cost_budget_units is not None and run_stats.cost_units > 0:
        ratios.append(min(1.0, run_stats.cost_budget_units / run_stats.cost_units))
    viability = min(ratios)
    return PillarScorecard(
        ethics=ethics,
        control=control,
        viability=viability,
        desirability=desirability,
        inputs={
            "formulas": dict(SCORECARD_FORMULAS),
            "n_questions": len(metrics),
            "mean_nmi": ethics,
            "mean_jaccard": desirability,
            "control_checks": {
                "oversight_declared": oversight.oversight_declared,
                "audit_chain_valid": oversight.audit_chain_valid,
                "reproducibility_check_passed": oversight.reproducibility_check_passed,
            },
            "run_stats": {
                "runtime_seconds": run_stats.runtime_seconds,
                "cost_units": run_stats.cost_units,
                "runtime_budget_seconds": run_stats.runtime_budget_seconds,
                "cost_budget_units": run_stats.cost_budget_units,
            },
        },
    )


# --- transformation checklist ----------------------------------------------------


@dataclass(frozen=True)
class TransformationChecklist:
    """Self-declared organizational readiness across the eight dimensions."""

    answers: dict[str, str]

    def __post_init__(self):
        missing = [dim for dim in CHECKLIST_DIMENSIONS if dim not in self.answers]
        if missing:
            raise ValueError(f"checklist must answer every dimension; missing {missing}")
        for dim, status in self.answers.items():
            if dim not in CHECKLIST_DIMENSIONS:
                raise ValueError(f"unknown checklist dimension {dim!r}")
            if status not in CHECKLIST_STATUSES:
                raise ValueError(f"{dim}: unknown status {status!r}")


def load_checklist(path: str | Path) -> TransformationChecklist:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return TransformationChecklist(answers=dict(doc["answers"]))


# --- append-only audit log --------------------------------------------------------


@dataclass(frozen=True)
class AuditEntry:
    index: int
    timestamp: str
    stage: str
    actor: str
    event: dict
    event_digest: str
    prev_hash: str
    entry_hash: str

    def body(self) -> dict:
        return {
            "index": self.index,
            "timestamp": self.timestamp,
            "stage": self.stage,
            "actor": self.actor,
            "event": self.event,
            "event_digest": self.event_digest,
            "prev_hash": self.prev_hash,
        }


def _digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


class AuditLog:
    """Append-only, hash-chained run evidence; optionally file-backed JSONL.

    Every append re-checks the whole chain before extending it. Hash
    links are re-compared on each append; entry bodies are re-digested
    the first time this object sees them (at load or on a full verify),
    so appends stay near-linear while file-level tampering is always
    caught on reload and entry replacement is caught immediately.
    """

    def __init__(self, path: str | Path | None = None):
        self.entries: list[AuditEntry] = []
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._digest_checked = 0  # entries whose body digests this object verified

    @classmethod
    def load(cls, path: str | Path) -> AuditLog:
        log = cls(path=path)
        path = Path(path)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        doc = json.loads(line)
                        log.entries.append(
                            AuditEntry(
                                index=doc["index"],
                                timestamp=doc["timestamp"],
                                stage=doc["stage"],
                                actor=doc["actor"],
                                event=doc["event"],
                                event_digest=doc["event_digest"],
                                prev_hash=doc["prev_hash"],
                                entry_hash=doc["entry_hash"],
                            )
                        )
        return log

    def _links_intact(self) -> bool:
        prev = _GENESIS
        for i, entry in enumerate(self.entries):
            if entry.index != i or entry.prev_hash != prev:
                return False
            prev = entry.entry_hash
        return True

    def _digests_intact(self, start: int = 0) -> bool:
        for entry in self.entries[start:]:
            if entry.event_digest != _digest(entry.event):
                return False
            if entry.entry_hash != _digest(entry.body()):
                return False
        return True

    def verify(self) -> bool:
        with self._lock:
            return self._verify_locked(full=True)

    def _verify_locked(self, full: bool) -> bool:
        if not self._links_intact():
            self._digest_checked = 0
            return False
        start = 0 if full else self._digest_checked
        if not self._digests_intact(start):
            self._digest_checked = 0
            return False
        self._digest_checked = len(self.entries)
        return True

    def append(self, stage: str, actor: str, event: dict) -> AuditEntry:
        with self._lock:
            if not self._verify_locked(full=False):
                raise ChainBroken("audit chain verification failed; refusing to append")
            prev = self.entries[-1].entry_hash if self.entries else _GENESIS
            body = {
                "index": len(self.entries),
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "stage": stage,
                "actor": actor,
                "event": event,
                "event_digest": _digest(event),
                "prev_hash": prev,
            }
            entry = AuditEntry(**body, entry_hash=_digest(body))
            self.entries.append(entry)
            self._digest_checked = len(self.entries)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps({**entry.body(), "entry_hash": entry.entry_hash},
                                   sort_keys=True)
                        + "\n"
                    )
            return entry

    def __len__(self) -> int:
        return len(self.entries)


def audit_append(log: AuditLog, stage: str, actor: str, event: dict) -> AuditLog:
    log.append(stage=stage, actor=actor, event=event)
    return log


# --- DPIA report -------------------------------------------------------------------


@dataclass(frozen=True)
class DpiaReport:
    use_case: UseCaseDescriptor
    tier: RiskTier
    minimization_findings: tuple[str, ...]
    anonymization_summary: dict | None
    scorecard: PillarScorecard
    checklist: TransformationChecklist
    metric_reports: tuple[MetricReport, ...]
    timestamp: str
    toolkit_version: str
    verdict: str
    oversight_statement: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "metric_reports", tuple(self.metric_reports))
        object.__setattr__(
            self, "minimization_findings", tuple(self.minimization_findings)
        )
        if self.tier.tier in ("High", "Unacceptable") and not self.oversight_statement:
            raise MissingOversightStatement(
                f"a {self.tier.tier}-tier report requires a human-oversight statement"
            )
        if self.tier.tier == "Unacceptable" and self.verdict == VERDICT_PROCEED:
            raise ValueError("an Unacceptable tier forbids a proceed verdict")


def generate_dpia(
    use_case: UseCaseDescriptor,
    tier: RiskTier,
    scorecard: PillarScorecard,
    checklist: TransformationChecklist,
    metric_reports: list[MetricReport],
    minimization_findings: tuple[str, ...] = (),
    anonymization_summary: dict | None = None,
    oversight_statement: str | None = None,
    timestamp: str | None = None,
    toolkit_version: str = "0.1.0",
) -> DpiaReport:
    """Assemble the report; the verdict never proceeds past an Unacceptable tier."""
    if tier.tier == "Unacceptable":
        verdict = VERDICT_REFUSE
    elif minimization_findings:
        verdict = VERDICT_REMEDIATE
    else:
        verdict = VERDICT_PROCEED
    return DpiaReport(
        use_case=use_case,
        tier=tier,
        minimization_findings=tuple(minimization_findings),
        anonymization_summary=anonymization_summary,
        scorecard=scorecard,
        checklist=checklist,
        metric_reports=tuple(metric_reports),
        timestamp=timestamp or datetime.now(timezone.utc).isoformat(),
        toolkit_version=toolkit_version,
        verdict=verdict,
        oversight_statement=oversight_statement,
    )


def dpia_to_json(report: DpiaReport) -> dict:
    return {
        "use_case": {
            "sector": report.use_case.sector,
            "automated_decision_affecting_rights": report.use_case.automated_decision_affecting_rights,
            "mass_surveillance_capability": report.use_case.mass_surveillance_capability,
            "human_oversight_declared": report.use_case.human_oversight_declared,
            "personal_data_processed": report.use_case.personal_data_processed,
        },
        "tier": {"tier": report.tier.tier, "rationale": list(report.tier.rationale)},
        "minimization_findings": list(report.minimization_findings),
        "anonymization_summary": report.anonymization_summary,
        "scorecard": {
            "ethics": report.scorecard.ethics,
            "control": report.scorecard.control,
            "viability": report.scorecard.viability,
            "desirability": report.scorecard.desirability,
            "inputs": report.scorecard.inputs,
        },
        "checklist": dict(report.checklist.answers),
        "metric_reports": [
            {
                "question_id": r.question_id,
                "chi_square": r.chi_square,
                "jaccard": r.jaccard,
                "nmi": r.nmi,
                "n_observed": r.n_observed,
                "n_expected": r.n_expected,
            }
            for r in report.metric_reports
        ],
        "timestamp": report.timestamp,
        "toolkit_version": report.toolkit_version,
        "verdict": report.verdict,
        "oversight_statement": report.oversight_statement,
    }


def dpia_from_json(doc: dict) -> DpiaReport:
    return DpiaReport(
        use_case=UseCaseDescriptor(**doc["use_case"]),
        tier=RiskTier(tier=doc["tier"]["tier"], rationale=tuple(doc["tier"]["rationale"])),
        minimization_findings=tuple(doc["minimization_findings"]),
        anonymization_summary=doc["anonymization_summary"],
        scorecard=PillarScorecard(**doc["scorecard"]),
        checklist=TransformationChecklist(answers=dict(doc["checklist"])),
        metric_reports=tuple(MetricReport(**r) for r in doc["metric_reports"]),
        timestamp=doc["timestamp"],
        toolkit_version=doc["toolkit_version"],
        verdict=doc["verdict"],
        oversight_statement=doc["oversight_statement"],
    )


def render_dpia_markdown(report: DpiaReport) -> str:
    lines = [
        "# Data Protection Impact Assessment",
        "",
        f"- Generated: {report.timestamp}",
        f"- Toolkit version: {report.toolkit_version}",
        f"- Sector: {report.use_case.sector}",
        f"- Risk tier: **{report.tier.tier}** (rules fired: {', '.join(report.tier.rationale)})",
        f"- Verdict: **{report.verdict}**",
        "",
        "## Human oversight",
        "",
        report.oversight_statement or "No oversight statement recorded.",
        "",
        "## Four-pillar scorecard",
        "",
        "| Pillar | Score | Formula |",
        "|---|---|---|",
    ]
    for pillar in ("ethics", "control", "viability", "desirability"):
        formula = report.scorecard.inputs.get("formulas", {}).get(pillar, "")
        lines.append(f"| {pillar} | {getattr(report.scorecard, pillar):.4f} | {formula} |")
    lines += ["", "## Data minimization", ""]
    if report.minimization_findings:
        lines.append("Ingested but unused variables (remediate or drop):")
        lines += [f"- {name}" for name in report.minimization_findings]
    else:
        lines.append("No unused variables; minimization check passed.")
    lines += ["", "## Anonymization", ""]
    if report.anonymization_summary:
        lines.append(
            f"- Records: {report.anonymization_summary.get('records', 'n/a')}, "
            f"suppressed codes: {report.anonymization_summary.get('suppressed', 'n/a')}, "
            f"k={report.anonymization_summary.get('k', '?')}, "
            f"m={report.anonymization_summary.get('m', '?')}, "
            f"verified: {report.anonymization_summary.get('verified', 'n/a')}"
        )
    else:
        lines.append("No anonymization stage ran in this pipeline.")
    lines += ["", "## Alignment metrics", ""]
    lines.append("| Question | Chi-Square Test | Jaccard Index | Mutual Information |")
    lines.append("|---|---|---|---|")
    for row in report.metric_reports:
        lines.append(
            f"| {row.question_id} | {row.chi_square:.4f} | {row.jaccard:.4f} | {row.nmi:.4f} |"
        )
    lines += ["", "## Transformation checklist", ""]
    for dim in CHECKLIST_DIMENSIONS:
        lines.append(f"- {dim}: {report.checklist.answers[dim]}")
    return "\n".join(lines) + "\n"
