"""JSON record (de)serialization for every interchange schema.

All files are line-delimited JSON with fixed field names; writers emit
sorted keys and compact separators so identical inputs produce identical
bytes. These schemas are the external contract for ingestion, dumps, and
the serving API; see the README schema reference.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import MalformedRecord
from .model import (
    Keyword,
    Placement,
    Product,
    Provenance,
    Storefront,
    Theme,
    UserContext,
)


def dumps_record(record: Mapping[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(dumps_record(record))
            handle.write("\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> Iterator[Mapping[str, Any]]:
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


def user_context_to_record(ctx: UserContext) -> dict[str, Any]:
    return {
        "user_id": ctx.user_id,
        "purchase_history": [list(entry) for entry in ctx.purchase_history],
        "engagement_signals": dict(ctx.engagement_signals),
        "preferences": list(ctx.preferences),
    }


def user_context_from_record(record: Mapping[str, Any], line: int = 0) -> UserContext:
    try:
        return UserContext(
            user_id=str(record["user_id"]),
            purchase_history=tuple(
                (str(p), int(t), int(q)) for p, t, q in record.get("purchase_history", [])
            ),
            engagement_signals={
                str(k): float(v) for k, v in record.get("engagement_signals", {}).items()
            },
            preferences=tuple(str(p) for p in record.get("preferences", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line, f"bad user record: {exc}") from exc


def keyword_to_record(keyword: Keyword) -> dict[str, Any]:
    return {
        "keyword_id": keyword.keyword_id,
        "surface": keyword.surface,
        "taxonomy_path": list(keyword.taxonomy_path),
    }


def product_to_record(product: Product) -> dict[str, Any]:
    return {
        "product_id": product.product_id,
        "name": product.name,
        "category_path": list(product.category_path),
        "keyword_ids": sorted(product.keyword_ids),
        "availability": product.availability,
    }


def _theme_to_record(theme: Theme) -> dict[str, Any]:
    return {
        "title": theme.title,
        "persona": theme.persona,
        "product_concepts": list(theme.product_concepts),
        "rank_hint": theme.rank_hint,
    }


def _theme_from_record(record: Mapping[str, Any]) -> Theme:
    return Theme(
        title=str(record["title"]),
        persona=str(record["persona"]),
        product_concepts=tuple(str(c) for c in record["product_concepts"]),
        rank_hint=int(record["rank_hint"]),
    )


def _placement_to_record(placement: Placement) -> dict[str, Any]:
    return {
        "theme": _theme_to_record(placement.theme),
        "keywords": [keyword_to_record(k) for k in placement.keywords],
        "slate": [
            {**product_to_record(product), "score": score}
            for product, score in placement.slate
        ],
        "retrieved_count": placement.retrieved_count,
    }


def _placement_from_record(record: Mapping[str, Any]) -> Placement:
    slate = tuple(
        (
            Product(
                product_id=str(item["product_id"]),
                name=str(item["name"]),
                category_path=tuple(str(c) for c in item.get("category_path", [])),
                keyword_ids=frozenset(str(k) for k in item.get("keyword_ids", [])),
                availability=bool(item.get("availability", True)),
            ),
            float(item["score"]),
        )
        for item in record["slate"]
    )
    keywords = tuple(
        Keyword(
            keyword_id=str(k["keyword_id"]),
            surface=str(k["surface"]),
            taxonomy_path=tuple(str(t) for t in k.get("taxonomy_path", [])),
        )
        for k in record["keywords"]
    )
    return Placement(
        theme=_theme_from_record(record["theme"]),
        keywords=keywords,
        slate=slate,
        retrieved_count=int(record["retrieved_count"]),
    )


def storefront_to_record(storefront: Storefront) -> dict[str, Any]:
    return {
        "user_id": storefront.user_id,
        "provenance": storefront.provenance.value,
        "context_hash": storefront.context_hash,
        "config_version": storefront.config_version,
        "placements": [_placement_to_record(p) for p in storefront.placements],
    }


def storefront_from_record(record: Mapping[str, Any], line: int = 0) -> Storefront:
    try:
        return Storefront(
            user_id=str(record["user_id"]),
            placements=tuple(_placement_from_record(p) for p in record["placements"]),
            provenance=Provenance(record["provenance"]),
            context_hash=str(record["context_hash"]),
            config_version=str(record["config_version"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line, f"bad storefront record: {exc}") from exc
