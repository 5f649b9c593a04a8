"""Product catalog ingestion and keyword-to-product retrieval."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping

from .corpus import KeywordCorpus
from .errors import MalformedRecord, UnknownKeyword
from .model import Keyword, Product


@dataclass(frozen=True)
class ProductIndex:
    """Inverted keyword_id -> product_id postings over an immutable catalog.

    Every corpus keyword has a posting list (possibly empty), which is what
    distinguishes an unknown keyword from a keyword with no products.
    Postings are sorted by product_id; availability is filtered at retrieval
    time, not at build time.
    """

    inverted: Mapping[str, tuple[str, ...]]
    products: Mapping[str, Product]

    def __len__(self) -> int:
        return len(self.products)


def parse_product_record(record: Mapping[str, Any], line: int) -> Product:
    try:
        product = Product(
            product_id=str(record["product_id"]),
            name=str(record["name"]),
            category_path=tuple(str(c) for c in record.get("category_path", [])),
            keyword_ids=frozenset(str(k) for k in record.get("keyword_ids", [])),
            availability=bool(record.get("availability", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line, f"bad product record: {exc}") from exc
    return product


def load_product_records(path: str) -> Iterator[Mapping[str, Any]]:
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


def build_product_index(
    records: Iterable[Mapping[str, Any]], corpus: KeywordCorpus
) -> ProductIndex:
    """Build the inverted index, validating every keyword reference.

    Raises UnknownKeyword for references outside the corpus and
    MalformedRecord for duplicate or structurally bad products.
    """
    known = corpus.by_id
    products: dict[str, Product] = {}
    postings: dict[str, list[str]] = {kid: [] for kid in known}
    for ordinal, record in enumerate(records, start=1):
        product = parse_product_record(record, ordinal)
        if product.product_id in products:
            raise MalformedRecord(ordinal, f"duplicate product_id: {product.product_id}")
        for kid in product.keyword_ids:
            if kid not in known:
                raise UnknownKeyword(kid)
            postings[kid].append(product.product_id)
        products[product.product_id] = product
    inverted = {kid: tuple(sorted(pids)) for kid, pids in postings.items()}
    return ProductIndex(inverted=inverted, products=products)


def retrieve_products(index: ProductIndex, keyword: Keyword, limit: int) -> list[Product]:
    """Up to `limit` available products indexed under a keyword, posting order.

    An empty posting list returns []; a keyword outside the corpus raises
    UnknownKeyword.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    posting = index.inverted.get(keyword.keyword_id)
    if posting is None:
        raise UnknownKeyword(keyword.keyword_id)
    out: list[Product] = []
    for product_id in posting:
        product = index.products[product_id]
        if not product.availability:
            continue
        out.append(product)
        if len(out) == limit:
            break
    return out
