"""Pipeline configuration loading and validation.

A run is configured by one JSON document; every referenced file must
exist at validation time and the seed is mandatory, since each
stochastic stage derives its generator from it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

#: paths that must exist for any pipeline run
_REQUIRED_PATHS = ("schema", "survey", "template", "question_bank", "expected")
#: optional paths validated only when present
_OPTIONAL_PATHS = (
    "stub_spec",
    "constraints",
    "risk_rules",
    "checklist",
    "human_statements",
    "benchmark",
)


@dataclass
class PipelineConfig:
    seed: int
    base_dir: Path
    paths: dict[str, Path]
    missing_policy: dict = field(default_factory=lambda: {"impute": [-1, -2], "exclude": [-8]})
    outlier_min_share: float = 0.01
    anonymization: dict = field(default_factory=lambda: {"k": 2, "m": 2})
    simulation: dict = field(
        default_factory=lambda: {
            "n_samples": 200,
            "max_answer_words": 4,
            "temperature": 0.0,
            "concurrency": 4,
            "model_id": "stub",
        }
    )
    metrics: dict = field(
        default_factory=lambda: {
            "unparseable": "drop",
            "heatmap": {"variable": None, "questions": []},
        }
    )
    governance: dict = field(default_factory=dict)
    review: dict = field(default_factory=lambda: {"ratio": 1.0})
    raw: dict = field(default_factory=dict)
    digest: str = ""

    def path(self, name: str) -> Path:
        if name not in self.paths:
            raise ConfigError(f"config does not define paths.{name}")
        return self.paths[name]

    def has_path(self, name: str) -> bool:
        return name in self.paths


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise ConfigError(f"config {path} is not valid JSON: {error}") from error
    if "seed" not in raw:
        raise ConfigError("config must set a seed; reproducibility depends on it")
    base_dir = path.parent
    paths: dict[str, Path] = {}
    for name, value in raw.get("paths", {}).items():
        resolved = (base_dir / value).resolve()
        paths[name] = resolved
    for name in _REQUIRED_PATHS:
        if name not in paths:
            raise ConfigError(f"config must define paths.{name}")
    for name, resolved in paths.items():
        if name in _REQUIRED_PATHS + _OPTIONAL_PATHS and not resolved.exists():
            raise ConfigError(f"paths.{name} -> {resolved} does not exist")
    config = PipelineConfig(
        seed=int(raw["seed"]),
        base_dir=base_dir,
        paths=paths,
        raw=raw,
        digest=hashlib.sha256(
            json.dumps(raw, sort_keys=True).encode("utf-8")
        ).hexdigest(),
    )
    for section in ("missing_policy", "outlier_min_share", "anonymization", "review"):
        if section in raw:
            setattr(config, section, raw[section])
    for section in ("simulation", "metrics", "governance"):
        if section in raw:
            merged = dict(getattr(config, section))
            merged.update(raw[section])
            setattr(config, section, merged)
    unparseable = config.metrics.get("unparseable", "drop")
    if unparseable not in ("drop", "bucket"):
        raise ConfigError(f"metrics.unparseable must be drop or bucket, got {unparseable!r}")
    return config
