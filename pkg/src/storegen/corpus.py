"""Keyword corpus ingestion and nearest-neighbor search.

The corpus is built offline and immutable afterwards; concurrent reads are
safe. Similarity is cosine, computed as the dot product of unit vectors.
The default search is exact brute force, which is tractable at corpus scale
and anchors every test; an IVF-style approximate index is available behind
the same result shape for callers that want it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .embedding import EmbeddingProvider, embed
from .errors import DimensionMismatch, DuplicateKeyword, MalformedRecord
from .model import EmbeddingVector, Keyword, normalize_text


@dataclass(frozen=True)
class Neighbor:
    keyword_id: str
    similarity: float


@dataclass(frozen=True)
class KeywordCorpus:
    """Parallel keyword entries and unit-norm vectors of equal dimension."""

    entries: tuple[Keyword, ...]
    vectors: tuple[EmbeddingVector, ...]
    dimension: int

    def __post_init__(self) -> None:
        if len(self.entries) != len(self.vectors):
            raise ValueError("entries and vectors must have equal length")
        seen: set[str] = set()
        for entry in self.entries:
            if entry.keyword_id in seen:
                raise DuplicateKeyword(entry.keyword_id)
            seen.add(entry.keyword_id)
        for vec in self.vectors:
            if vec.dimension != self.dimension:
                raise DimensionMismatch(self.dimension, vec.dimension)

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def matrix(self) -> np.ndarray:
        """(n, dimension) stacked vectors; empty corpus yields (0, dimension)."""
        if not self.vectors:
            return np.zeros((0, self.dimension), dtype=np.float64)
        stacked = np.vstack([v.values for v in self.vectors])
        stacked.flags.writeable = False
        return stacked

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.keyword_id for e in self.entries)

    @cached_property
    def by_id(self) -> Mapping[str, Keyword]:
        return {e.keyword_id: e for e in self.entries}


def parse_keyword_record(record: Mapping[str, Any], line: int) -> Keyword:
    try:
        keyword_id = str(record["keyword_id"])
        surface = normalize_text(str(record["surface"]))
        taxonomy = tuple(str(t) for t in record.get("taxonomy_path", []))
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(line, f"bad keyword record: {exc}") from exc
    if not keyword_id:
        raise MalformedRecord(line, "empty keyword_id")
    if not surface:
        raise MalformedRecord(line, "empty surface")
    return Keyword(keyword_id=keyword_id, surface=surface, taxonomy_path=taxonomy)


def load_keyword_records(path: str) -> Iterator[Mapping[str, Any]]:
    """Stream line-delimited keyword records, citing line numbers on failure."""
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, "record is not an object")
            yield record


def build_corpus(
    records: Iterable[Mapping[str, Any]], provider: EmbeddingProvider
) -> KeywordCorpus:
    """Embed a stream of keyword records into an immutable corpus.

    Entry order is preserved. Duplicate keyword_ids raise DuplicateKeyword;
    structurally bad records raise MalformedRecord with their ordinal (which
    equals the line number for line-delimited input).
    """
    entries: list[Keyword] = []
    vectors: list[EmbeddingVector] = []
    seen: set[str] = set()
    for ordinal, record in enumerate(records, start=1):
        keyword = parse_keyword_record(record, ordinal)
        if keyword.keyword_id in seen:
            raise DuplicateKeyword(keyword.keyword_id)
        seen.add(keyword.keyword_id)
        entries.append(keyword)
        vectors.append(embed(keyword.surface, provider))
    return KeywordCorpus(
        entries=tuple(entries), vectors=tuple(vectors), dimension=provider.dimension
    )


def _rank_candidates(
    corpus: KeywordCorpus, sims: np.ndarray, candidate_idx: Iterable[int], k: int
) -> list[Neighbor]:
    ids = corpus.ids
    order = sorted(candidate_idx, key=lambda i: (-sims[i], ids[i]))[:k]
    return [
        Neighbor(keyword_id=ids[i], similarity=float(np.clip(sims[i], -1.0, 1.0)))
        for i in order
    ]


def knn(corpus: KeywordCorpus, query: EmbeddingVector, k: int) -> list[Neighbor]:
    """Exact top-k by similarity desc, ties broken by keyword_id asc.

    Returns min(k, |corpus|) neighbors. Exactness matters: candidate
    selection and dedup both sit on top of this, and tests compare it
    against a full-sort oracle.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.dimension != corpus.dimension:
        raise DimensionMismatch(corpus.dimension, query.dimension)
    n = len(corpus)
    if n == 0:
        return []
    sims = corpus.matrix @ query.values
    if k >= n:
        return _rank_candidates(corpus, sims, range(n), n)
    # Everything tied with the k-th largest similarity stays in play so the
    # keyword_id tie-break is applied over the full boundary set.
    kth = np.partition(sims, n - k)[n - k]
    candidates = np.nonzero(sims >= kth)[0]
    return _rank_candidates(corpus, sims, candidates.tolist(), k)


class IvfIndex:
    """Approximate inverted-file index over a corpus.

    Vectors are bucketed by nearest centroid at build time; queries scan only
    the ``n_probe`` closest buckets and rank exactly within them. Recall
    against exact search depends on data and probe width; the bundled
    defaults hold recall@50 >= 0.95 on the synthetic 10k corpus, pinned by
    test. Results use the same ordering contract as knn().
    """

    def __init__(
        self,
        corpus: KeywordCorpus,
        n_centroids: int | None = None,
        n_probe: int | None = None,
        seed: int = 0,
        refine_iterations: int = 3,
    ) -> None:
        self._corpus = corpus
        n = len(corpus)
        if n_centroids is None:
            n_centroids = max(1, int(round(n**0.5)))
        n_centroids = max(1, min(n_centroids, max(n, 1)))
        if n_probe is None:
            n_probe = max(1, (n_centroids + 1) // 2)
        self._n_probe = max(1, min(n_probe, n_centroids))
        if n == 0:
            self._centroids = np.zeros((1, corpus.dimension), dtype=np.float64)
            self._buckets: list[np.ndarray] = [np.array([], dtype=np.int64)]
            return
        rng = np.random.default_rng(seed)
        picks = rng.choice(n, size=n_centroids, replace=False)
        centroids = corpus.matrix[np.sort(picks)].copy()
        assign = np.argmax(corpus.matrix @ centroids.T, axis=1)
        for _ in range(refine_iterations):
            for c in range(n_centroids):
                members = np.nonzero(assign == c)[0]
                if members.size:
                    mean = corpus.matrix[members].mean(axis=0)
                    norm = np.linalg.norm(mean)
                    if norm > 0:
                        centroids[c] = mean / norm
            assign = np.argmax(corpus.matrix @ centroids.T, axis=1)
        self._centroids = centroids
        self._buckets = [
            np.nonzero(assign == c)[0] for c in range(n_centroids)
        ]

    def search(self, query: EmbeddingVector, k: int) -> list[Neighbor]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.dimension != self._corpus.dimension:
            raise DimensionMismatch(self._corpus.dimension, query.dimension)
        if len(self._corpus) == 0:
            return []
        centroid_sims = self._centroids @ query.values
        probe = np.argsort(-centroid_sims)[: self._n_probe]
        candidate_idx = np.concatenate([self._buckets[c] for c in probe])
        if candidate_idx.size == 0:
            return []
        cand_sims = self._corpus.matrix[candidate_idx] @ query.values
        ids = self._corpus.ids
        order = sorted(
            range(candidate_idx.size),
            key=lambda j: (-cand_sims[j], ids[candidate_idx[j]]),
        )[: min(k, candidate_idx.size)]
        return [
            Neighbor(
                keyword_id=ids[candidate_idx[j]],
                similarity=float(np.clip(cand_sims[j], -1.0, 1.0)),
            )
            for j in order
        ]
