"""Domain types shared by every pipeline phase.

All types are immutable value objects after construction and are safe to
share between concurrent tasks. Sequence fields are coerced to tuples so
accidental aliasing of caller lists cannot mutate a constructed value.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-9
UNIT_NORM_TOL = 1e-6


def normalize_text(raw: str) -> str:
    """Lowercase, trim, and collapse internal whitespace runs to one space.

    Idempotent; the empty string maps to itself.
    """
    return " ".join(raw.lower().split())


def tokenize(raw: str) -> list[str]:
    """Whitespace tokens of the normalized text."""
    return normalize_text(raw).split()


class Provenance(str, Enum):
    GENERATED = "generated"
    FALLBACK = "fallback"
    CACHED = "cached"


@dataclass(frozen=True)
class UserContext:
    """Per-user signals consumed by theme generation.

    ``purchase_history`` is an ordered sequence of
    (product_id, timestamp_seconds, quantity) triples, non-decreasing in
    timestamp. Signals arrive precomputed; no derivation happens here.
    """

    user_id: str
    purchase_history: tuple[tuple[str, int, int], ...] = ()
    engagement_signals: Mapping[str, float] = field(default_factory=dict)
    preferences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        history = tuple(
            (str(pid), int(ts), int(qty)) for pid, ts, qty in self.purchase_history
        )
        for earlier, later in zip(history, history[1:]):
            if later[1] < earlier[1]:
                raise ValueError("purchase_history must be non-decreasing in timestamp")
        signals = {str(k): float(v) for k, v in dict(self.engagement_signals).items()}
        for name, score in signals.items():
            if not math.isfinite(score):
                raise ValueError(f"engagement signal {name!r} is not finite")
        object.__setattr__(self, "purchase_history", history)
        object.__setattr__(self, "engagement_signals", signals)
        object.__setattr__(self, "preferences", tuple(str(p) for p in self.preferences))


@dataclass(frozen=True)
class PolicyConstraints:
    """Business and policy bounds applied to every assembled page."""

    min_placements: int
    max_placements: int
    min_slate_size: int
    max_keywords_per_placement: int
    banned_terms: frozenset[str] = frozenset()
    required_theme_tags: frozenset[str] = frozenset()
    config_version: str = "v1"

    def __post_init__(self) -> None:
        if not (1 <= self.min_placements <= self.max_placements):
            raise ValueError("need 1 <= min_placements <= max_placements")
        if self.min_slate_size < 1:
            raise ValueError("min_slate_size must be >= 1")
        if self.max_keywords_per_placement < 1:
            raise ValueError("max_keywords_per_placement must be >= 1")
        if not self.config_version:
            raise ValueError("config_version must be non-empty")
        object.__setattr__(
            self, "banned_terms", frozenset(normalize_text(t) for t in self.banned_terms)
        )
        object.__setattr__(
            self, "required_theme_tags", frozenset(str(t) for t in self.required_theme_tags)
        )


@dataclass(frozen=True)
class Theme:
    """A placement's semantic intent plus signals derived at generation time."""

    title: str
    persona: str
    product_concepts: tuple[str, ...]
    rank_hint: int

    def __post_init__(self) -> None:
        if not normalize_text(self.title):
            raise ValueError("theme title must be non-empty")
        concepts = tuple(str(c) for c in self.product_concepts)
        if not concepts:
            raise ValueError("theme needs at least one product concept")
        object.__setattr__(self, "product_concepts", concepts)


@dataclass(frozen=True)
class Keyword:
    """A normalized corpus entry used for product retrieval."""

    keyword_id: str
    surface: str
    taxonomy_path: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.keyword_id:
            raise ValueError("keyword_id must be non-empty")
        if self.surface != normalize_text(self.surface):
            raise ValueError(f"surface not normalized: {self.surface!r}")
        object.__setattr__(self, "taxonomy_path", tuple(str(t) for t in self.taxonomy_path))


@dataclass(frozen=True)
class Product:
    product_id: str
    name: str
    category_path: tuple[str, ...] = ()
    keyword_ids: frozenset[str] = frozenset()
    availability: bool = True

    def __post_init__(self) -> None:
        if not self.product_id:
            raise ValueError("product_id must be non-empty")
        object.__setattr__(self, "category_path", tuple(str(c) for c in self.category_path))
        object.__setattr__(self, "keyword_ids", frozenset(self.keyword_ids))


ScoredProduct = tuple[Product, float]


def sort_slate(pairs: Iterable[ScoredProduct]) -> tuple[ScoredProduct, ...]:
    """Order a slate by relevance score descending, product_id ascending."""
    return tuple(sorted(pairs, key=lambda sp: (-sp[1], sp[0].product_id)))


def clamp_score(value: float, source: str = "scorer") -> float:
    """Clamp a pluggable scorer's output into [0, 1], logging excursions.

    Non-finite values are a contract breach and raise ValueError; the
    defensive boundary only forgives range errors.
    """
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{source} produced non-finite score {value!r}")
    if value < 0.0 or value > 1.0:
        logger.warning("%s produced out-of-range score %.6f; clamping", source, value)
        return min(1.0, max(0.0, value))
    return value


@dataclass(frozen=True)
class Placement:
    """Theme plus chosen keywords plus the retrieved, scored product slate.

    ``retrieved_count`` records the pre-truncation retrieval volume observed
    at build time; it defaults to the slate length when not supplied.
    """

    theme: Theme
    keywords: tuple[Keyword, ...]
    slate: tuple[ScoredProduct, ...] = ()
    retrieved_count: int | None = None

    def __post_init__(self) -> None:
        keywords = tuple(self.keywords)
        if not keywords:
            raise ValueError("placement needs at least one keyword")
        slate = tuple((p, float(s)) for p, s in self.slate)
        for _, score in slate:
            if not (math.isfinite(score) and -SCORE_EPS <= score <= 1.0 + SCORE_EPS):
                raise ValueError(f"slate score out of [0,1]: {score!r}")
        if slate != sort_slate(slate):
            raise ValueError("slate must be sorted by (score desc, product_id asc)")
        object.__setattr__(self, "keywords", keywords)
        object.__setattr__(self, "slate", slate)
        if self.retrieved_count is None:
            object.__setattr__(self, "retrieved_count", len(slate))
        elif self.retrieved_count < 0:
            raise ValueError("retrieved_count must be >= 0")

    @property
    def title(self) -> str:
        return self.theme.title


@dataclass(frozen=True)
class Storefront:
    """The ordered list of placements served to one user."""

    user_id: str
    placements: tuple[Placement, ...]
    provenance: Provenance
    context_hash: str
    config_version: str

    def __post_init__(self) -> None:
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        placements = tuple(self.placements)
        titles = [normalize_text(p.theme.title) for p in placements]
        if len(set(titles)) != len(titles):
            raise ValueError("placement titles must be pairwise distinct")
        object.__setattr__(self, "placements", placements)
        object.__setattr__(self, "provenance", Provenance(self.provenance))


def validate_storefront(storefront: Storefront, policy: PolicyConstraints) -> None:
    """Raise ValueError if a storefront breaks any policy-level invariant.

    Placement-count bounds are waived for fallback pages, which serve
    whatever the static plan yields. Slate ordering and title distinctness
    are already enforced at construction; this adds the policy checks.
    """
    count = len(storefront.placements)
    if storefront.provenance is not Provenance.FALLBACK:
        if not (policy.min_placements <= count <= policy.max_placements):
            raise ValueError(
                f"placement count {count} outside "
                f"[{policy.min_placements}, {policy.max_placements}]"
            )
    hints = [p.theme.rank_hint for p in storefront.placements]
    if len(set(hints)) != len(hints):
        raise ValueError("rank_hint values must be unique within a storefront")
    for placement in storefront.placements:
        if len(placement.keywords) > policy.max_keywords_per_placement:
            raise ValueError(
                f"placement {placement.title!r} exceeds max_keywords_per_placement"
            )
        for term in policy.banned_terms:
            if term and term in normalize_text(placement.theme.title):
                raise ValueError(f"banned term {term!r} in title {placement.title!r}")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A unit-norm embedding of fixed dimension.

    Wraps a read-only float64 array; providers must unit-normalize before
    construction (tolerance 1e-6 on the L2 norm).
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64).copy()
        if arr.ndim != 1:
            raise ValueError("embedding must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding has non-finite components")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"embedding L2 norm {norm} not within 1e-6 of 1.0")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    def dot(self, other: EmbeddingVector) -> float:
        return float(np.dot(self.values, other.values))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


def _encode_chunk(buf: bytearray, data: bytes) -> None:
    buf += len(data).to_bytes(4, "big")
    buf += data


def _encode_str(buf: bytearray, text: str) -> None:
    _encode_chunk(buf, text.encode("utf-8"))


def _encode_int(buf: bytearray, value: int) -> None:
    _encode_chunk(buf, int(value).to_bytes(8, "big", signed=True))


def _encode_float(buf: bytearray, value: float) -> None:
    _encode_chunk(buf, struct.pack(">d", float(value)))


def _encode_str_seq(buf: bytearray, items: Sequence[str]) -> None:
    _encode_int(buf, len(items))
    for item in items:
        _encode_str(buf, item)


def context_hash(ctx: UserContext, policy: PolicyConstraints) -> str:
    """Deterministic digest of a user context under one config version.

    Uses a field-order-fixed, length-prefixed canonical encoding so equal
    inputs hash equally on any platform and any field change moves the
    digest. Used as the cache key component for assembled storefronts.
    """
    buf = bytearray()
    _encode_str(buf, ctx.user_id)
    _encode_int(buf, len(ctx.purchase_history))
    for product_id, ts, qty in ctx.purchase_history:
        _encode_str(buf, product_id)
        _encode_int(buf, ts)
        _encode_int(buf, qty)
    signal_names = sorted(ctx.engagement_signals)
    _encode_int(buf, len(signal_names))
    for name in signal_names:
        _encode_str(buf, name)
        _encode_float(buf, ctx.engagement_signals[name])
    _encode_str_seq(buf, ctx.preferences)
    _encode_str(buf, policy.config_version)
    return hashlib.sha256(bytes(buf)).hexdigest()
