"""Application configuration: one versioned file for every tunable.

Thresholds and caps are design choices rather than published values, so
they all live here, explicit and versioned. Paths are resolved relative to
the config file location.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .filtering import FilterConfig
from .model import PolicyConstraints
from .pipeline import PipelineConfig, validate_pipeline_config


@dataclass(frozen=True)
class EmbeddingSettings:
    provider: str = "hashed-bag"
    dimension: int = 64
    seed: int = 0


@dataclass(frozen=True)
class AppConfig:
    config_version: str = "v1"
    seed: int = 7
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)

    # page shape
    min_placements: int = 3
    max_placements: int = 8
    m_default: int = 5

    # guardrails
    banned_terms: tuple[str, ...] = ()
    required_theme_tags: tuple[str, ...] = ()

    # candidate retrieval
    k_per_concept: int = 20
    candidate_cap: int = 100
    max_keywords: int = 5

    # filtering
    dedup_threshold: float = 0.90
    relevance_threshold: float = 0.50
    min_slate_size: int = 4

    # assembly and serving
    slate_limit: int = 20
    cache_ttl_seconds: float = 3600.0

    # evaluation judges
    judge_seed: int = 13
    product_judge_rate: float = 0.85
    keyword_judge_rate: float = 0.90

    # data paths (resolved; may be None when supplied via CLI flags)
    corpus_path: str | None = None
    catalog_path: str | None = None
    users_path: str | None = None
    fallback_plan_path: str | None = None
    artifacts_dir: str | None = None

    def policy_constraints(self) -> PolicyConstraints:
        return PolicyConstraints(
            min_placements=self.min_placements,
            max_placements=self.max_placements,
            min_slate_size=self.min_slate_size,
            max_keywords_per_placement=self.max_keywords,
            banned_terms=frozenset(self.banned_terms),
            required_theme_tags=frozenset(self.required_theme_tags),
            config_version=self.config_version,
        )

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            dedup_threshold=self.dedup_threshold,
            relevance_threshold=self.relevance_threshold,
            min_slate_size=self.min_slate_size,
        )

    def pipeline_config(self) -> PipelineConfig:
        cfg = PipelineConfig(
            m_default=self.m_default,
            theme_generator_id=f"stub-themes-seed{self.seed}",
            keyword_generator_id="stub-keywords",
            filter=self.filter_config(),
            k_per_concept=self.k_per_concept,
            candidate_cap=self.candidate_cap,
            max_keywords=self.max_keywords,
            slate_limit=self.slate_limit,
            cache_ttl_seconds=self.cache_ttl_seconds,
            config_version=self.config_version,
        )
        validate_pipeline_config(cfg, self.policy_constraints())
        return cfg

    def to_record(self) -> dict[str, Any]:
        record = asdict(self)
        record["embedding"] = asdict(self.embedding)
        record["banned_terms"] = list(self.banned_terms)
        record["required_theme_tags"] = list(self.required_theme_tags)
        return record


_PATH_FIELDS = ("corpus_path", "catalog_path", "users_path", "fallback_plan_path", "artifacts_dir")


def load_config(path: str | Path) -> AppConfig:
    """Load and validate a JSON config file; unknown keys are rejected."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")

    known = set(AppConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    kwargs: dict[str, Any] = dict(raw)
    if "embedding" in kwargs:
        emb = kwargs["embedding"]
        if not isinstance(emb, dict):
            raise ConfigError("embedding must be an object")
        bad = set(emb) - set(EmbeddingSettings.__dataclass_fields__)
        if bad:
            raise ConfigError(f"unknown embedding keys: {', '.join(sorted(bad))}")
        kwargs["embedding"] = EmbeddingSettings(**emb)
    for key in ("banned_terms", "required_theme_tags"):
        if key in kwargs:
            kwargs[key] = tuple(str(t) for t in kwargs[key])
    base = path.parent
    for key in _PATH_FIELDS:
        value = kwargs.get(key)
        if value is not None:
            kwargs[key] = str((base / str(value)).resolve())
    try:
        config = AppConfig(**kwargs)
        config.pipeline_config()  # cross-field validation
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return config


def write_config(config: AppConfig, path: str | Path) -> None:
    record = config.to_record()
    # Persist paths relative to the config file so the directory is movable.
    base = Path(path).resolve().parent
    for key in _PATH_FIELDS:
        value = record.get(key)
        if value is not None:
            try:
                record[key] = str(Path(value).resolve().relative_to(base))
            except ValueError:
                record[key] = str(value)
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
