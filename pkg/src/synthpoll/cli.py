"""Command-line pipeline and review service.

One subcommand per pipeline stage, a demo-workspace generator, the
review service, and annotation import/export. Exit codes: 0 success,
2 configuration, 3 data validation, 4 backend, 5 governance veto.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import sys
from importlib import resources
from pathlib import Path

import click

from . import __version__
from .config import PipelineConfig, load_config
from .errors import (
    BackendError,
    ConfigError,
    MissingOversightStatement,
    SynthpollError,
)
from .pipeline import (
    RunDirectory,
    stage_anonymize,
    stage_evaluate,
    stage_govern,
    stage_ingest,
    stage_profiles,
    stage_report,
    stage_review_build,
    stage_simulate,
)
from .review import (
    agreement_to_json,
    annotation_to_json,
    inter_rater_agreement,
    review_import,
    write_annotations,
)
from .service import ReviewStore, make_server

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4
EXIT_GOVERNANCE_VETO = 5


def _fail(code: int, error: Exception) -> None:
    click.echo(f"error: {error}", err=True)
    sys.exit(code)


def _guarded(worker):
    try:
        return worker()
    except (ConfigError, MissingOversightStatement) as error:
        _fail(EXIT_CONFIG, error)
    except BackendError as error:
        _fail(EXIT_BACKEND, error)
    except SynthpollError as error:
        _fail(EXIT_DATA, error)
    except (ValueError, KeyError, OSError) as error:
        _fail(EXIT_DATA, error)


def _load(config_path: str, seed: int | None) -> PipelineConfig:
    config = load_config(config_path)
    if seed is not None:
        config.seed = seed
        config.raw["seed"] = seed
        config.digest = hashlib.sha256(
            json.dumps(config.raw, sort_keys=True).encode("utf-8")
        ).hexdigest()
    return config


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path())(fn)
    fn = click.option("--run-dir", "run_dir", required=True, type=click.Path())(fn)
    fn = click.option("--seed", type=int, default=None, help="override the config seed")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="synthpoll")
def main():
    """Compliance-aware synthetic survey simulation and evaluation."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
def demo(out_dir: str):
    """Materialize the shipped demo workspace (config, data, fixtures)."""
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    data_root = resources.files("synthpoll").joinpath("data")
    for entry in data_root.iterdir():
        if entry.is_file():
            shutil.copyfile(str(entry), target / entry.name)
    click.echo(f"demo workspace written to {target}")
    click.echo(f"next: synthpoll ingest --config {target / 'config.json'} --run-dir {target / 'run'}")


def _stage_command(name: str, worker, help_text: str):
    @main.command(name=name, help=help_text)
    @_common_options
    def command(config_path: str, run_dir: str, seed: int | None):
        def job():
            config = _load(config_path, seed)
            run = RunDirectory(run_dir)
            summary = worker(config, run)
            click.echo(json.dumps({name: summary}, indent=2, sort_keys=True))
            return summary

        return _guarded(job)

    return command


_stage_command(
    "ingest", stage_ingest,
    "Load and validate the survey, apply the missing-code policy, drop fringe "
    "categories, and standardize every variable into a distribution.",
)
_stage_command(
    "profiles", stage_profiles,
    "Sample stakeholder profiles from the standardized distributions and run "
    "the data-minimization check against the prompt template.",
)
_stage_command(
    "evaluate", stage_evaluate,
    "Score synthetic vs expected response distributions per question and "
    "render the report tables, heatmaps, and figures.",
)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--run-dir", "run_dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--cluster", "cluster_path", type=click.Path(exists=True), default=None,
              help="anonymize a raw cluster JSON instead of the run's survey records")
@click.option("--constraints", "constraints_path", type=click.Path(exists=True), default=None)
@click.option("--k", "k_param", type=int, default=2, show_default=True)
@click.option("--m", "m_param", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def anonymize(config_path, run_dir, seed, cluster_path, constraints_path, k_param, m_param, out_path):
    """Make records (k, k^m)-anonymous via constrained generalization.

    Stage mode (--config/--run-dir) anonymizes the run's survey records;
    direct mode (--cluster/--constraints/--out) anonymizes a cluster file.
    """

    def job():
        if cluster_path is not None:
            from .anonymize import (
                AnonymizationParams,
                cluster_from_json,
                constraints_from_json,
                gendiag,
                write_outcome,
            )

            if constraints_path is None or out_path is None:
                raise ConfigError("direct mode needs --constraints and --out")
            cluster = cluster_from_json(json.loads(Path(cluster_path).read_text()))
            constraints = constraints_from_json(
                json.loads(Path(constraints_path).read_text())
            )
            outcome = gendiag(cluster, constraints, AnonymizationParams(k=k_param, m=m_param))
            write_outcome(outcome, out_path)
            click.echo(json.dumps({"anonymize": {"suppressed": outcome.suppressed,
                                                 "records": len(outcome.cluster.records),
                                                 "out": str(out_path)}}, indent=2))
            return
        if config_path is None or run_dir is None:
            raise ConfigError("stage mode needs --config and --run-dir")
        config = _load(config_path, seed)
        run = RunDirectory(run_dir)
        summary = stage_anonymize(config, run)
        click.echo(json.dumps({"anonymize": summary}, indent=2, sort_keys=True))

    return _guarded(job)


@main.command()
@_common_options
@click.option(
    "--backend",
    type=click.Choice(["stub", "remote"]),
    default="stub",
    show_default=True,
)
def simulate(config_path: str, run_dir: str, seed: int | None, backend: str):
    """Render prompt bundles and dispatch them to the completion backend."""

    def job():
        config = _load(config_path, seed)
        run = RunDirectory(run_dir)
        summary = stage_simulate(config, run, backend_kind=backend)
        click.echo(json.dumps({"simulate": summary}, indent=2, sort_keys=True))

    return _guarded(job)


@main.command()
@_common_options
def govern(config_path: str, run_dir: str, seed: int | None):
    """Classify the run's risk tier and score the four pillars."""

    def job():
        config = _load(config_path, seed)
        run = RunDirectory(run_dir)
        summary = stage_govern(config, run)
        click.echo(json.dumps({"govern": summary}, indent=2, sort_keys=True))
        if summary["tier"] == "Unacceptable":
            click.echo("governance veto: Unacceptable risk tier", err=True)
            sys.exit(EXIT_GOVERNANCE_VETO)

    return _guarded(job)


@main.command()
@_common_options
def report(config_path: str, run_dir: str, seed: int | None):
    """Assemble the DPIA report (JSON and Markdown) for the run."""

    def job():
        config = _load(config_path, seed)
        run = RunDirectory(run_dir)
        summary = stage_report(config, run)
        click.echo(json.dumps({"report": summary}, indent=2, sort_keys=True))
        if summary["tier"] == "Unacceptable":
            click.echo("governance veto: Unacceptable risk tier", err=True)
            sys.exit(EXIT_GOVERNANCE_VETO)

    return _guarded(job)


@main.command()
@_common_options
@click.option("--port", type=int, default=8700, show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="directory with the built review UI bundle")
def serve(config_path: str, run_dir: str, seed: int | None, port: int, static_dir: str | None):
    """Serve review tasks and collect expert annotations over HTTP."""

    def job():
        _load(config_path, seed)  # validates config
        run = RunDirectory(run_dir)
        tasks_path = run.file("tasks.json")
        if not tasks_path.exists():
            raise ConfigError("no tasks.json in the run directory; run `review build` first")
        from .review import load_tasks

        store = ReviewStore(
            load_tasks(tasks_path), annotations_path=run.file("annotations.jsonl")
        )
        server = make_server(store, port=port, static_dir=static_dir)
        host, bound_port = server.server_address[:2]
        click.echo(f"review service on http://{host}:{bound_port} ({len(store.tasks)} tasks)")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            server.shutdown()

    return _guarded(job)


@main.group()
def review():
    """Review-loop utilities: build tasks, import/export annotations, agreement."""


@review.command("build")
@_common_options
def review_build(config_path: str, run_dir: str, seed: int | None):
    """Mix held-out human statements with synthetic outcomes into blinded tasks."""

    def job():
        config = _load(config_path, seed)
        run = RunDirectory(run_dir)
        summary = stage_review_build(config, run)
        click.echo(json.dumps({"review-build": summary}, indent=2, sort_keys=True))

    return _guarded(job)


@review.command("import")
@click.option("--run-dir", "run_dir", required=True, type=click.Path())
@click.argument("path", type=click.Path(exists=True))
def review_import_cmd(run_dir: str, path: str):
    """Merge a JSONL annotation file into the run, rejecting duplicates."""

    def job():
        run = RunDirectory(run_dir)
        existing = []
        annotations_path = run.file("annotations.jsonl")
        if annotations_path.exists():
            existing = review_import(annotations_path)
        imported = review_import(path, existing=existing)
        write_annotations(existing + imported, annotations_path)
        click.echo(json.dumps({"imported": len(imported), "total": len(existing) + len(imported)}))

    return _guarded(job)


@review.command("export")
@click.option("--run-dir", "run_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--unblind", is_flag=True, default=False,
              help="include the ground-truth source per task")
def review_export(run_dir: str, out_path: str, unblind: bool):
    """Export stored annotations as JSONL (optionally unblinded)."""

    def job():
        run = RunDirectory(run_dir)
        annotations = review_import(run.file("annotations.jsonl"))
        if not unblind:
            write_annotations(annotations, out_path)
        else:
            from .review import load_tasks

            tasks = {t.id: t for t in load_tasks(run.file("tasks.json"))}
            with open(out_path, "w", encoding="utf-8") as fh:
                for annotation in annotations:
                    doc = annotation_to_json(annotation)
                    doc["source"] = tasks[annotation.task_id].source_hidden
                    fh.write(json.dumps(doc, sort_keys=True) + "\n")
        click.echo(f"exported {len(annotations)} annotations to {out_path}")

    return _guarded(job)


@review.command("agreement")
@click.option("--run-dir", "run_dir", required=True, type=click.Path())
@click.option("--unblind", is_flag=True, default=False,
              help="also score accuracy against the ground-truth source")
def review_agreement(run_dir: str, unblind: bool):
    """Print inter-rater agreement statistics for the stored annotations."""

    def job():
        run = RunDirectory(run_dir)
        annotations = review_import(run.file("annotations.jsonl"))
        tasks = None
        if unblind:
            from .review import load_tasks

            tasks = load_tasks(run.file("tasks.json"))
        stats = inter_rater_agreement(annotations, tasks=tasks)
        click.echo(json.dumps(agreement_to_json(stats), indent=2, sort_keys=True))

    return _guarded(job)


if __name__ == "__main__":
    main()
