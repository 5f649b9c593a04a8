"""HTTP adapters for externally hosted generators, scorers, and judges.

The in-repo stubs cover desk-scale runs; production model services plug in
through these adapters instead. Request and response bodies mirror the
documented interchange schemas (see README), so a remote service only has
to speak JSON over POST. Failures surface as the same error types the
stubs' contracts use, which keeps pipeline fallback behavior identical.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from typing import Any, Sequence

from .errors import GeneratorError, ScorerError
from .generation import CandidateSet, RawGeneration, ThemeGenerationRequest
from .model import Product, Theme
from .serde import user_context_to_record

DEFAULT_TIMEOUT_SECONDS = 10.0


def _post_json(url: str, body: dict[str, Any], timeout: float) -> dict[str, Any]:
    data = json.dumps(body).encode("utf-8")
    request = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            payload = response.read().decode("utf-8")
    except (urllib.error.URLError, OSError) as exc:
        raise ConnectionError(f"POST {url} failed: {exc}") from exc
    try:
        parsed = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ValueError(f"non-JSON response from {url}: {exc.msg}") from exc
    if not isinstance(parsed, dict):
        raise ValueError(f"expected JSON object from {url}")
    return parsed


class HttpThemeGenerator:
    """Theme generation against a remote service.

    Request: {"user": <user record>, "m": int, "config_version": str}.
    Response: {"themes": [{"title", "persona", "product_concepts"}...]}.
    The response array is passed through the same schema validation as any
    other generator output.
    """

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT_SECONDS) -> None:
        self.generator_id = f"http-themes:{url}"
        self._url = url
        self._timeout = timeout

    def generate(self, request: ThemeGenerationRequest) -> RawGeneration:
        body = {
            "user": user_context_to_record(request.ctx),
            "m": request.m,
            "config_version": request.policy.config_version,
        }
        try:
            response = _post_json(self._url, body, self._timeout)
            themes = response["themes"]
        except (ConnectionError, ValueError, KeyError) as exc:
            raise GeneratorError(f"theme service error: {exc}") from exc
        return RawGeneration(payload=json.dumps(themes), generator_id=self.generator_id)


class HttpKeywordGenerator:
    """Keyword generation against a remote service.

    Request: {"theme": {...}, "candidates": [{"keyword_id", "surface",
    "similarity"}...], "max_keywords": int}.
    Response: {"keyword_ids": [str, ...]}. Candidate-set membership is still
    enforced after the call; a misbehaving service cannot widen retrieval.
    """

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT_SECONDS) -> None:
        self.generator_id = f"http-keywords:{url}"
        self._url = url
        self._timeout = timeout

    def generate(
        self, theme: Theme, candidates: CandidateSet, max_keywords: int
    ) -> list[str]:
        body = {
            "theme": {
                "title": theme.title,
                "persona": theme.persona,
                "product_concepts": list(theme.product_concepts),
            },
            "candidates": [
                {"keyword_id": c.keyword_id, "surface": c.surface, "similarity": s}
                for c, s in zip(candidates.candidates, candidates.source_similarities)
            ],
            "max_keywords": max_keywords,
        }
        try:
            response = _post_json(self._url, body, self._timeout)
            keyword_ids = response["keyword_ids"]
            return [str(k) for k in keyword_ids]
        except (ConnectionError, ValueError, KeyError, TypeError) as exc:
            raise GeneratorError(f"keyword service error: {exc}") from exc


class HttpRelevanceScorer:
    """Cross-encoder style scoring against a remote service.

    Single: {"theme_title", "theme_concepts", "product_name",
    "product_category"} -> {"score": float}.
    Batch: {"pairs": [<single request>...]} -> {"scores": [float, ...]}.
    """

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT_SECONDS) -> None:
        self.scorer_id = f"http-scorer:{url}"
        self._url = url
        self._timeout = timeout

    @staticmethod
    def _pair_body(theme: Theme, product: Product) -> dict[str, Any]:
        return {
            "theme_title": theme.title,
            "theme_concepts": list(theme.product_concepts),
            "product_name": product.name,
            "product_category": list(product.category_path),
        }

    def score(self, theme: Theme, product: Product) -> float:
        try:
            response = _post_json(self._url, self._pair_body(theme, product), self._timeout)
            return float(response["score"])
        except (ConnectionError, ValueError, KeyError, TypeError) as exc:
            raise ScorerError(f"scorer service error: {exc}") from exc

    def score_batch(self, pairs: Sequence[tuple[Theme, Product]]) -> list[float]:
        body = {"pairs": [self._pair_body(t, p) for t, p in pairs]}
        try:
            response = _post_json(self._url, body, self._timeout)
            scores = [float(s) for s in response["scores"]]
        except (ConnectionError, ValueError, KeyError, TypeError) as exc:
            raise ScorerError(f"scorer service error: {exc}") from exc
        if len(scores) != len(pairs):
            raise ScorerError(f"scorer returned {len(scores)} scores for {len(pairs)} pairs")
        return scores
