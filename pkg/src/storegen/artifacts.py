"""Persisted index artifacts: build once offline, load read-only to serve.

An artifact directory holds the normalized corpus, its embedding matrix,
the normalized catalog, and a digest file. The digest covers the raw input
bytes plus the embedding configuration, so re-running ingestion over
unchanged inputs is detected and skipped. Ingestion takes an exclusive
lock on the directory; loading does not.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from filelock import FileLock

from .catalog import ProductIndex, build_product_index, load_product_records
from .corpus import KeywordCorpus, build_corpus, load_keyword_records
from .embedding import HashedEmbeddingProvider
from .errors import ConfigError
from .model import EmbeddingVector, Keyword
from .serde import dumps_record, keyword_to_record, product_to_record, read_jsonl

DIGEST_FILENAME = "digest.json"
CORPUS_FILENAME = "corpus.jsonl"
VECTORS_FILENAME = "vectors.npy"
CATALOG_FILENAME = "catalog.jsonl"
LOCK_FILENAME = ".ingest.lock"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArtifactPaths:
    root: Path

    @property
    def digest(self) -> Path:
        return self.root / DIGEST_FILENAME

    @property
    def corpus(self) -> Path:
        return self.root / CORPUS_FILENAME

    @property
    def vectors(self) -> Path:
        return self.root / VECTORS_FILENAME

    @property
    def catalog(self) -> Path:
        return self.root / CATALOG_FILENAME

    @property
    def lock(self) -> Path:
        return self.root / LOCK_FILENAME


def _file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def compute_input_digest(
    corpus_path: Path, catalog_path: Path, provider: HashedEmbeddingProvider
) -> str:
    material = dumps_record(
        {
            "format_version": FORMAT_VERSION,
            "corpus": _file_digest(corpus_path),
            "catalog": _file_digest(catalog_path),
            "provider": provider.provider_id,
            "dimension": provider.dimension,
            "embedding_seed": provider.seed,
        }
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class IngestResult:
    corpus: KeywordCorpus
    index: ProductIndex
    digest: dict[str, Any]
    up_to_date: bool


def ingest(
    corpus_path: str | Path,
    catalog_path: str | Path,
    out_dir: str | Path,
    provider: HashedEmbeddingProvider,
) -> IngestResult:
    """Build and persist corpus vectors and the product index.

    Idempotent: when the digest file matches the current inputs the
    existing artifacts are loaded and returned with ``up_to_date=True``.
    """
    corpus_path = Path(corpus_path)
    catalog_path = Path(catalog_path)
    paths = ArtifactPaths(Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)

    with FileLock(str(paths.lock)):
        input_digest = compute_input_digest(corpus_path, catalog_path, provider)
        if paths.digest.exists():
            try:
                existing = json.loads(paths.digest.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                existing = {}
            if existing.get("input_digest") == input_digest:
                corpus, index = _load_corpus_and_index(paths)
                return IngestResult(corpus=corpus, index=index, digest=existing, up_to_date=True)

        corpus = build_corpus(load_keyword_records(str(corpus_path)), provider)
        index = build_product_index(load_product_records(str(catalog_path)), corpus)

        with open(paths.corpus, "w", encoding="utf-8") as handle:
            for entry in corpus.entries:
                handle.write(dumps_record(keyword_to_record(entry)) + "\n")
        np.save(paths.vectors, corpus.matrix)
        with open(paths.catalog, "w", encoding="utf-8") as handle:
            for product_id in sorted(index.products):
                handle.write(dumps_record(product_to_record(index.products[product_id])) + "\n")
        digest = {
            "format_version": FORMAT_VERSION,
            "input_digest": input_digest,
            "provider": provider.provider_id,
            "dimension": provider.dimension,
            "embedding_seed": provider.seed,
            "n_keywords": len(corpus),
            "n_products": len(index),
        }
        paths.digest.write_text(json.dumps(digest, sort_keys=True, indent=2), encoding="utf-8")
        return IngestResult(corpus=corpus, index=index, digest=digest, up_to_date=False)


def _load_corpus_and_index(paths: ArtifactPaths) -> tuple[KeywordCorpus, ProductIndex]:
    entries: list[Keyword] = []
    for record in read_jsonl(paths.corpus):
        entries.append(
            Keyword(
                keyword_id=str(record["keyword_id"]),
                surface=str(record["surface"]),
                taxonomy_path=tuple(str(t) for t in record.get("taxonomy_path", [])),
            )
        )
    matrix = np.load(paths.vectors)
    if matrix.shape[0] != len(entries):
        raise ConfigError(
            f"artifact mismatch: {matrix.shape[0]} vectors for {len(entries)} keywords"
        )
    vectors = tuple(EmbeddingVector(row) for row in matrix)
    corpus = KeywordCorpus(
        entries=tuple(entries), vectors=vectors, dimension=int(matrix.shape[1])
    )
    index = build_product_index(read_jsonl(paths.catalog), corpus)
    return corpus, index


def load_artifacts(artifact_dir: str | Path) -> tuple[KeywordCorpus, ProductIndex, dict[str, Any]]:
    """Load previously ingested artifacts; raises ConfigError if absent."""
    paths = ArtifactPaths(Path(artifact_dir))
    if not paths.digest.exists():
        raise ConfigError(f"no artifacts at {paths.root}; run ingest first")
    digest = json.loads(paths.digest.read_text(encoding="utf-8"))
    corpus, index = _load_corpus_and_index(paths)
    return corpus, index, digest
