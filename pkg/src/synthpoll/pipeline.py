"""Run-directory orchestration of the pipeline stages.

Every stage reads its inputs from the run directory (or the configured
source files), writes its outputs under fixed names, and appends one
audit entry. Artifact names are stable so runs diff cleanly:
manifest.json, cleaned.csv, distributions.json, anonymized.json,
profiles.jsonl, bundles.jsonl, outcomes.jsonl, metrics.json,
governance.json, dpia.json, audit.jsonl.
"""

from __future__ import annotations

import hashlib
import json
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .anonymize import (
    AnonymizationParams,
    Code,
    RecordCluster,
    UtilityConstraintSet,
    constraints_from_json,
    gendiag,
    outcome_to_json,
    verify_km_anonymity,
)
from .config import PipelineConfig
from .errors import ConfigError
from .figures import save_alignment_figure, save_heatmap_figure, write_heatmap_csv
from .gateway import (
    HttpBackend,
    StubBackend,
    load_stub_spec,
    read_outcomes,
    run_batch,
    write_outcomes,
)
from .governance import (
    AuditLog,
    OversightFlags,
    PillarScorecard,
    RiskTier,
    RunStats,
    UseCaseDescriptor,
    classify_risk,
    dpia_to_json,
    generate_dpia,
    load_checklist,
    load_risk_rules,
    pillar_scorecard,
    render_dpia_markdown,
)
from .ingest import (
    MissingCode,
    dump_distributions,
    exclude_missing,
    impute_invalid,
    load_distributions,
    load_schema,
    load_survey,
    remove_outliers,
    standardize,
    write_survey,
)
from .metrics import (
    MetricReport,
    ResponseDistribution,
    chi_square,
    distribution_from_outcomes,
    evaluate_question,
    heatmap,
    jaccard_weighted,
    alignment_nmi,
    regime_classify,
    RegimeThresholds,
    UNPARSEABLE_LABEL,
)
from .profiles import (
    Profile,
    ProfileSchema,
    check_minimization,
    load_question_bank,
    load_template,
    read_bundles,
    render_prompt,
    sample_profiles,
    write_bundles,
)
from .reporting import (
    benchmark_report,
    load_benchmark_rows,
    metric_reports_from_json,
    metric_reports_to_json,
    render_metric_reports,
)
from .review import build_review_tasks, load_tasks, tasks_to_json

MANIFEST_NAME = "manifest.json"
AUDIT_NAME = "audit.jsonl"
OUTCOMES_NAME = "outcomes.jsonl"
DPIA_NAME = "dpia.json"


def derive_seed(base: int, label: str) -> int:
    """Stable per-purpose sub-seed so stages cannot correlate by accident."""
    digest = hashlib.sha256(f"{base}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class RunDirectory:
    """A self-contained pipeline run rooted at one directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def file(self, name: str) -> Path:
        return self.path / name

    @property
    def audit(self) -> AuditLog:
        return AuditLog.load(self.file(AUDIT_NAME))

    def read_manifest(self) -> dict:
        manifest_path = self.file(MANIFEST_NAME)
        if not manifest_path.exists():
            raise ConfigError(f"{manifest_path} missing; run the ingest stage first")
        return json.loads(manifest_path.read_text(encoding="utf-8"))

    def write_manifest(self, manifest: dict) -> None:
        self.file(MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def ensure_manifest(self, config: PipelineConfig) -> dict:
        manifest_path = self.file(MANIFEST_NAME)
        if manifest_path.exists():
            manifest = self.read_manifest()
            if manifest.get("config_digest") != config.digest:
                raise ConfigError(
                    "run directory was created with a different config; "
                    "start a fresh run directory"
                )
            return manifest
        manifest = {
            "created": datetime.now(timezone.utc).isoformat(),
            "seed": config.seed,
            "config_digest": config.digest,
            "toolkit_version": __version__,
            "stages": {},
        }
        self.write_manifest(manifest)
        return manifest

    def record_stage(self, stage: str, summary: dict, elapsed: float) -> None:
        manifest = self.read_manifest()
        manifest["stages"][stage] = {
            "summary": summary,
            "elapsed_seconds": round(elapsed, 6),
        }
        self.write_manifest(manifest)
        self.audit.append(stage=stage, actor="pipeline", event=summary)


def _stage(config: PipelineConfig, run: RunDirectory, name: str, worker) -> dict:
    run.ensure_manifest(config)
    start = time.perf_counter()
    summary = worker()
    run.record_stage(name, summary, time.perf_counter() - start)
    return summary


# --- ingest -------------------------------------------------------------------


def stage_ingest(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        schema = load_schema(config.path("schema"))
        dataset = load_survey(config.path("survey"), schema)
        rows_in = len(dataset)
        impute_codes = tuple(
            m for m in MissingCode if m.value in config.missing_policy.get("impute", [])
        )
        exclude_codes = tuple(
            m for m in MissingCode if m.value in config.missing_policy.get("exclude", [])
        )
        dropped_outliers: dict[str, int] = {}
        for var in schema:
            if exclude_codes:
                dataset = exclude_missing(dataset, var.name, codes=exclude_codes)
            if impute_codes:
                dataset = impute_invalid(
                    dataset,
                    var.name,
                    seed=derive_seed(config.seed, f"impute:{var.name}"),
                    codes=impute_codes,
                )
        for var in schema:
            removal = remove_outliers(dataset, var.name, config.outlier_min_share)
            dataset = removal.dataset
            dropped_outliers[var.name] = removal.dropped_records
        distributions = [standardize(dataset, var.name) for var in schema]
        write_survey(dataset, run.file("cleaned.csv"))
        dump_distributions(distributions, run.file("distributions.json"))
        return {
            "rows_in": rows_in,
            "rows_out": len(dataset),
            "outliers_dropped": dropped_outliers,
            "variables": [var.name for var in schema],
        }

    return _stage(config, run, "ingest", worker)


# --- anonymize ------------------------------------------------------------------


def _dataset_to_cluster(config: PipelineConfig, run: RunDirectory) -> RecordCluster:
    schema = load_schema(config.path("schema"))
    dataset = load_survey(run.file("cleaned.csv"), schema)
    universe = {
        f"{var.name}={category}" for var in schema for category in var.categories
    }
    records = []
    for row in dataset.records:
        codes = set()
        for var in schema:
            value = row[var.name]
            codes.add(Code.leaf(f"{var.name}={var.categories[value]}"))
        records.append(frozenset(codes))
    return RecordCluster(records=tuple(records), code_universe=frozenset(universe))


def _default_constraints(config: PipelineConfig) -> UtilityConstraintSet:
    schema = load_schema(config.path("schema"))
    return UtilityConstraintSet(
        constraints=tuple(
            frozenset(f"{var.name}={category}" for category in var.categories)
            for var in schema
        )
    )


def stage_anonymize(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        cluster = _dataset_to_cluster(config, run)
        if config.has_path("constraints"):
            constraints = constraints_from_json(
                json.loads(config.path("constraints").read_text(encoding="utf-8"))
            )
        else:
            constraints = _default_constraints(config)
        params = AnonymizationParams(
            k=int(config.anonymization.get("k", 2)),
            m=int(config.anonymization.get("m", 2)),
        )
        outcome = gendiag(cluster, constraints, params)
        verified = verify_km_anonymity(outcome.cluster, params)
        doc = outcome_to_json(outcome)
        run.file("anonymized.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return {
            "records": len(outcome.cluster.records),
            "suppressed": outcome.suppressed,
            "generalizations": sum(
                1 for action in outcome.trace if hasattr(action, "result")
            ),
            "k": params.k,
            "m": params.m,
            "verified": verified,
        }

    return _stage(config, run, "anonymize", worker)


# --- profiles --------------------------------------------------------------------


def stage_profiles(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        schema = load_schema(config.path("schema"))
        demographics = [var for var in schema if var.kind == "demographic"]
        profile_schema = ProfileSchema(variables=tuple(demographics))
        template = load_template(config.path("template"))
        distributions = {
            dist.variable: dist
            for dist in load_distributions(run.file("distributions.json"))
        }
        ordered = [distributions[var.name] for var in demographics]
        n = int(config.simulation.get("n_samples", 200))
        sampled = sample_profiles(
            ordered, n=n, seed=derive_seed(config.seed, "profiles")
        )
        with open(run.file("profiles.jsonl"), "w", encoding="utf-8") as fh:
            for profile in sampled:
                fh.write(json.dumps(profile.assignment, sort_keys=True) + "\n")
        findings = check_minimization(profile_schema, template)
        run.file("minimization.json").write_text(
            json.dumps({"unused_variables": findings}, indent=2) + "\n",
            encoding="utf-8",
        )
        return {"profiles": n, "unused_variables": findings}

    return _stage(config, run, "profiles", worker)


def read_profiles(run: RunDirectory) -> list[Profile]:
    profiles = []
    with open(run.file("profiles.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                profiles.append(Profile(assignment=json.loads(line)))
    return profiles


# --- simulate ---------------------------------------------------------------------


def make_backend(config: PipelineConfig, backend_kind: str, questions):
    if backend_kind == "stub":
        if not config.has_path("stub_spec"):
            raise ConfigError("stub backend requires paths.stub_spec")
        return StubBackend(load_stub_spec(config.path("stub_spec")), questions=questions)
    if backend_kind == "remote":
        try:
            return HttpBackend()
        except ValueError as error:
            raise ConfigError(str(error)) from error
    raise ConfigError(f"unknown backend {backend_kind!r}; expected stub or remote")


def stage_simulate(
    config: PipelineConfig, run: RunDirectory, backend_kind: str = "stub"
) -> dict:
    def worker() -> dict:
        template = load_template(config.path("template"))
        questions = load_question_bank(config.path("question_bank"))
        profiles = read_profiles(run)
        backend = make_backend(config, backend_kind, questions)
        bundles = [
            render_prompt(profile, question, template, seed=config.seed)
            for question in questions
            for profile in profiles
        ]
        write_bundles(bundles, run.file("bundles.jsonl"))
        outcomes = run_batch(
            bundles,
            backend,
            concurrency=int(config.simulation.get("concurrency", 4)),
            model_id=str(config.simulation.get("model_id", "stub")),
            temperature=float(config.simulation.get("temperature", 0.0)),
            max_words=int(config.simulation.get("max_answer_words", 4)),
            audit=run.audit,
        )
        write_outcomes(outcomes, run.file(OUTCOMES_NAME))
        unparseable = sum(1 for outcome in outcomes if outcome.unparseable)
        over_limit = sum(1 for outcome in outcomes if outcome.over_limit)
        return {
            "bundles": len(bundles),
            "outcomes": len(outcomes),
            "backend": backend_kind,
            "unparseable": unparseable,
            "over_limit": over_limit,
        }

    return _stage(config, run, "simulate", worker)


# --- evaluate ---------------------------------------------------------------------


def load_expected(config: PipelineConfig) -> dict[str, dict[str, float]]:
    doc = json.loads(config.path("expected").read_text(encoding="utf-8"))
    return {qid: dict(entry["counts"]) for qid, entry in doc["per_question"].items()}


def stage_evaluate(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        questions = load_question_bank(config.path("question_bank"))
        outcomes = read_outcomes(run.file(OUTCOMES_NAME))
        expected_counts = load_expected(config)
        labels = {question.id: question.text for question in questions}
        reports: list[MetricReport] = []
        bucket_rows: list[dict] = []
        for question in questions:
            if question.id not in expected_counts:
                continue
            expected = ResponseDistribution(
                question_id=question.id,
                counts=expected_counts[question.id],
                kind="expected",
            )
            observed = distribution_from_outcomes(
                outcomes, question.id, question.scale, kind="observed",
                unparseable="drop",
            )
            reports.append(evaluate_question(observed, expected))
            observed_b = distribution_from_outcomes(
                outcomes, question.id, question.scale, kind="observed",
                unparseable="bucket",
            )
            expected_b = ResponseDistribution(
                question_id=question.id,
                counts={**expected_counts[question.id], UNPARSEABLE_LABEL: 0.0},
                kind="expected",
            )
            try:
                chi_b = chi_square(observed_b, expected_b)
            except Exception:
                chi_b = None  # observed mass on the zero-expected bucket
            bucket_rows.append(
                {
                    "question_id": question.id,
                    "chi_square": chi_b,
                    "jaccard": jaccard_weighted(observed_b, expected_b),
                    "nmi": alignment_nmi(observed_b, expected_b),
                }
            )
        metrics_doc = {
            "drop": metric_reports_to_json(reports),
            "bucket": bucket_rows,
        }
        run.file("metrics.json").write_text(
            json.dumps(metrics_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        report_text = render_metric_reports(reports, labels=labels)
        run.file("alignment_report.txt").write_text(report_text, encoding="utf-8")
        save_alignment_figure(reports, run.file("alignment_scores.svg"))

        heatmap_cfg = config.metrics.get("heatmap", {}) or {}
        variable = heatmap_cfg.get("variable")
        heatmap_questions = heatmap_cfg.get("questions") or []
        heatmaps = []
        if variable:
            profiles = read_profiles(run)
            schema = {var.name: var for var in load_schema(config.path("schema"))}
            by_question = {question.id: question for question in questions}
            for qid in heatmap_questions:
                question = by_question[qid]
                per_question = [o for o in outcomes if o.question_id == qid]
                matrix = heatmap(
                    per_question,
                    profiles[: len(per_question)],
                    question_id=qid,
                    variable=variable,
                    row_categories=schema[variable].categories,
                    scale=question.scale,
                )
                write_heatmap_csv(matrix, run.file(f"heatmap_{qid}.csv"))
                save_heatmap_figure(matrix, run.file(f"heatmap_{qid}.svg"))
                heatmaps.append(qid)

        regime_cfg = config.metrics.get("regime")
        if regime_cfg:
            thresholds = RegimeThresholds(
                **config.metrics.get("regime_thresholds", {})
            )
            diagnosis = regime_classify(
                float(regime_cfg["train_error"]),
                float(regime_cfg["test_error"]),
                thresholds,
            )
            run.file("regime.json").write_text(
                json.dumps(
                    {
                        "train_error": diagnosis.train_error,
                        "test_error": diagnosis.test_error,
                        "regime": diagnosis.regime,
                    },
                    indent=2,
                )
                + "\n",
                encoding="utf-8",
            )

        if config.has_path("benchmark"):
            sections = load_benchmark_rows(config.path("benchmark"))
            text = "\n".join(
                benchmark_report(records, title=section)
                for section, records in sections.items()
            )
            run.file("benchmark_report.txt").write_text(text, encoding="utf-8")

        return {
            "questions": [report.question_id for report in reports],
            "mean_nmi": sum(r.nmi for r in reports) / len(reports) if reports else None,
            "mean_jaccard": sum(r.jaccard for r in reports) / len(reports)
            if reports
            else None,
            "heatmaps": heatmaps,
        }

    return _stage(config, run, "evaluate", worker)


# --- govern -----------------------------------------------------------------------


def _reproducibility_check(config: PipelineConfig, run: RunDirectory) -> bool:
    """Re-run a small prefix of the batch twice on the stub and compare."""
    if not config.has_path("stub_spec"):
        return False
    questions = load_question_bank(config.path("question_bank"))
    bundles = read_bundles(run.file("bundles.jsonl"))[:10]
    if not bundles:
        return False
    spec = load_stub_spec(config.path("stub_spec"))
    first = run_batch(bundles, StubBackend(spec, questions=questions), concurrency=2)
    second = run_batch(bundles, StubBackend(spec, questions=questions), concurrency=2)
    return first == second


def stage_govern(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        if "use_case" not in config.governance:
            raise ConfigError("govern stage requires governance.use_case in the config")
        use_case = UseCaseDescriptor(**config.governance["use_case"])
        rules = (
            load_risk_rules(config.path("risk_rules"))
            if config.has_path("risk_rules")
            else None
        )
        tier = classify_risk(use_case, rules) if rules else classify_risk(use_case)
        metrics_doc = json.loads(run.file("metrics.json").read_text(encoding="utf-8"))
        reports = metric_reports_from_json(metrics_doc["drop"])
        manifest = run.read_manifest()
        runtime = sum(
            stage.get("elapsed_seconds", 0.0) for stage in manifest["stages"].values()
        )
        budgets = config.governance.get("budgets", {})
        oversight = OversightFlags(
            oversight_declared=use_case.human_oversight_declared
            and bool(config.governance.get("oversight_statement")),
            audit_chain_valid=run.audit.verify(),
            reproducibility_check_passed=_reproducibility_check(config, run),
        )
        stats = RunStats(
            runtime_seconds=runtime,
            cost_units=float(config.governance.get("run_cost_units", 0.0)),
            runtime_budget_seconds=budgets.get("runtime_seconds"),
            cost_budget_units=budgets.get("cost_units"),
        )
        scorecard = pillar_scorecard(reports, oversight, stats)
        doc = {
            "tier": {"tier": tier.tier, "rationale": list(tier.rationale)},
            "scorecard": {
                "ethics": scorecard.ethics,
                "control": scorecard.control,
                "viability": scorecard.viability,
                "desirability": scorecard.desirability,
                "inputs": scorecard.inputs,
            },
        }
        run.file("governance.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return {"tier": tier.tier, "rationale": list(tier.rationale)}

    return _stage(config, run, "govern", worker)


# --- report -----------------------------------------------------------------------


def stage_report(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        manifest = run.read_manifest()
        governance_doc = json.loads(
            run.file("governance.json").read_text(encoding="utf-8")
        )
        metrics_doc = json.loads(run.file("metrics.json").read_text(encoding="utf-8"))
        minimization = json.loads(
            run.file("minimization.json").read_text(encoding="utf-8")
        )
        anonymization_summary = None
        if run.file("anonymized.json").exists():
            stage_info = manifest["stages"].get("anonymize", {})
            anonymization_summary = stage_info.get("summary")
        if "use_case" not in config.governance:
            raise ConfigError("report stage requires governance.use_case in the config")
        use_case = UseCaseDescriptor(**config.governance["use_case"])
        tier = RiskTier(
            tier=governance_doc["tier"]["tier"],
            rationale=tuple(governance_doc["tier"]["rationale"]),
        )
        scorecard = PillarScorecard(**governance_doc["scorecard"])
        checklist = (
            load_checklist(config.path("checklist"))
            if config.has_path("checklist")
            else None
        )
        if checklist is None:
            raise ConfigError("report stage requires paths.checklist")
        reports = metric_reports_from_json(metrics_doc["drop"])
        dpia = generate_dpia(
            use_case=use_case,
            tier=tier,
            scorecard=scorecard,
            checklist=checklist,
            metric_reports=reports,
            minimization_findings=tuple(minimization["unused_variables"]),
            anonymization_summary=anonymization_summary,
            oversight_statement=config.governance.get("oversight_statement"),
            timestamp=manifest["created"],
            toolkit_version=manifest["toolkit_version"],
        )
        run.file(DPIA_NAME).write_text(
            json.dumps(dpia_to_json(dpia), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        run.file("dpia.md").write_text(render_dpia_markdown(dpia), encoding="utf-8")
        return {"verdict": dpia.verdict, "tier": dpia.tier.tier}

    return _stage(config, run, "report", worker)


# --- review helpers ----------------------------------------------------------------


def stage_review_build(config: PipelineConfig, run: RunDirectory) -> dict:
    def worker() -> dict:
        if not config.has_path("human_statements"):
            raise ConfigError("review build requires paths.human_statements")
        human = json.loads(
            config.path("human_statements").read_text(encoding="utf-8")
        )["statements"]
        outcomes = read_outcomes(run.file(OUTCOMES_NAME))
        synthetic = [
            outcome.category for outcome in outcomes if outcome.category is not None
        ]
        tasks = build_review_tasks(
            human,
            synthetic,
            seed=derive_seed(config.seed, "review"),
            ratio=float(config.review.get("ratio", 1.0)),
            limit=config.review.get("n_tasks"),
        )
        run.file("tasks.json").write_text(
            json.dumps(tasks_to_json(tasks), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return {"tasks": len(tasks)}

    return _stage(config, run, "review-build", worker)


def load_run_tasks(run: RunDirectory):
    return load_tasks(run.file("tasks.json"))
