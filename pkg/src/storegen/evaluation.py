"""Offline evaluation: judge-based precision metrics and lift arithmetic.

Averaging conventions are pinned here because they change the numbers:
product-theme precision averages per-placement precision unweighted
(placements are the unit), while keyword-user precision pools keyword
instances across all placements. Metric reductions use exact summation so
results are invariant to storefront order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import InvalidCounts, ZeroBaseline
from .judges import KeywordJudge, ProductJudge
from .model import Storefront, UserContext

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicyReport:
    """One row of the cross-policy comparison table."""

    policy_name: str
    pt_at: Mapping[int, float | None]
    ku: float | None
    density: float | None
    n_users: int
    n_placements: int
    n_empty_slates: int = 0
    n_failures: int = 0
    seed: int | None = None

    def __post_init__(self) -> None:
        for k, value in self.pt_at.items():
            if value is not None and not (0.0 <= value <= 1.0):
                raise ValueError(f"pt_at[{k}] outside [0, 1]: {value}")
        if self.ku is not None and not (0.0 <= self.ku <= 1.0):
            raise ValueError(f"ku outside [0, 1]: {self.ku}")
        if self.density is not None and self.density < 0.0:
            raise ValueError(f"density negative: {self.density}")
        object.__setattr__(self, "pt_at", dict(self.pt_at))

    def to_record(self) -> dict:
        return {
            "policy_name": self.policy_name,
            "pt_at": {str(k): v for k, v in sorted(self.pt_at.items())},
            "ku": self.ku,
            "density": self.density,
            "n_users": self.n_users,
            "n_placements": self.n_placements,
            "n_empty_slates": self.n_empty_slates,
            "n_failures": self.n_failures,
            "seed": self.seed,
        }


def product_theme_precision(
    storefronts: Sequence[Storefront], judge: ProductJudge, k: int
) -> float | None:
    """Mean over placements of (relevant in top-min(k, slate)) / min(k, slate).

    Placements with empty slates are skipped with a warning. Returns None
    when no placement contributes (the metric is undefined, not zero).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    precisions: list[float] = []
    skipped = 0
    for storefront in storefronts:
        for placement in storefront.placements:
            if not placement.slate:
                skipped += 1
                continue
            top = placement.slate[: min(k, len(placement.slate))]
            relevant = sum(
                1 for product, _ in top if judge.judge(placement.theme, product).relevant
            )
            precisions.append(relevant / len(top))
    if skipped:
        logger.warning("product_theme_precision skipped %d empty slates", skipped)
    if not precisions:
        return None
    return math.fsum(precisions) / len(precisions)


def keyword_user_precision(
    storefronts: Sequence[Storefront],
    judge: KeywordJudge,
    contexts: Mapping[str, UserContext],
) -> float | None:
    """Pooled fraction of keyword instances judged relevant to their user.

    Pooling (not per-user averaging) matches the report definition: every
    keyword instance across all placements of all storefronts counts once.
    Returns None when there are no keyword instances.
    """
    relevant = 0
    total = 0
    for storefront in storefronts:
        ctx = contexts[storefront.user_id]
        for placement in storefront.placements:
            for keyword in placement.keywords:
                total += 1
                if judge.judge(ctx, keyword).relevant:
                    relevant += 1
    if total == 0:
        return None
    return relevant / total


def recall_density(storefronts: Sequence[Storefront]) -> float | None:
    """Mean recorded retrieval volume per placement.

    Uses the pre-truncation retrieval count recorded at build time (the
    post-prune slate size is the documented alternative). None when there
    are no placements.
    """
    counts = [
        placement.retrieved_count or 0
        for storefront in storefronts
        for placement in storefront.placements
    ]
    if not counts:
        return None
    return math.fsum(counts) / len(counts)


def relative_lift(control_rate: float, treatment_rate: float) -> float:
    """Percent change of treatment over control: 100 * (t - c) / c."""
    if control_rate <= 0.0:
        raise ZeroBaseline(f"control rate must be positive, got {control_rate}")
    return 100.0 * (treatment_rate - control_rate) / control_rate


def format_lift(percent: float) -> str:
    """Render a lift to one decimal with an explicit sign, e.g. '+2.7%'."""
    rounded = round(percent, 1)
    if rounded == 0.0:
        return "0.0%"
    return f"{rounded:+.1f}%"


def two_proportion_significance(
    successes_c: int, trials_c: int, successes_t: int, trials_t: int
) -> float:
    """Two-sided pooled z-test p-value for a difference in proportions."""
    for successes, trials in ((successes_c, trials_c), (successes_t, trials_t)):
        if trials <= 0:
            raise InvalidCounts(f"trials must be positive, got {trials}")
        if successes < 0 or successes > trials:
            raise InvalidCounts(f"successes {successes} outside [0, {trials}]")
    p_c = successes_c / trials_c
    p_t = successes_t / trials_t
    pooled = (successes_c + successes_t) / (trials_c + trials_t)
    variance = pooled * (1.0 - pooled) * (1.0 / trials_c + 1.0 / trials_t)
    if variance == 0.0:
        # All successes or all failures on both arms: proportions are equal.
        return 1.0
    z = (p_t - p_c) / math.sqrt(variance)
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass
class EvaluationRun:
    """Working state collected while evaluating one policy."""

    storefronts: list[Storefront] = field(default_factory=list)
    n_failures: int = 0


def evaluate_policy(
    users: Sequence[UserContext],
    build: Callable[[UserContext], Storefront],
    product_judge: ProductJudge,
    keyword_judge: KeywordJudge,
    ks: Sequence[int],
    policy_name: str = "policy",
    seed: int | None = None,
) -> PolicyReport:
    """Build storefronts for a fixed user sample and compute all metrics.

    The same (seeded) user sample must be reused across policies for the
    cross-policy comparison to be meaningful. Per-user build failures are
    counted, never propagated.
    """
    run = EvaluationRun()
    contexts = {u.user_id: u for u in users}
    for user in users:
        try:
            run.storefronts.append(build(user))
        except Exception:
            logger.exception("build failed for user %s", user.user_id)
            run.n_failures += 1
    placements = [p for sf in run.storefronts for p in sf.placements]
    return PolicyReport(
        policy_name=policy_name,
        pt_at={k: product_theme_precision(run.storefronts, product_judge, k) for k in ks},
        ku=keyword_user_precision(run.storefronts, keyword_judge, contexts),
        density=recall_density(run.storefronts),
        n_users=len(users),
        n_placements=len(placements),
        n_empty_slates=sum(1 for p in placements if not p.slate),
        n_failures=run.n_failures,
        seed=seed,
    )


def render_report_table(reports: Sequence[PolicyReport]) -> str:
    """Side-by-side text table, one row per policy."""
    if not reports:
        return "(no policies evaluated)"
    ks = sorted({k for r in reports for k in r.pt_at})
    headers = ["policy", *[f"P-T@{k}" for k in ks], "K-U", "Density", "users", "placements"]

    def fmt(value: float | None, digits: int) -> str:
        return "-" if value is None else f"{value:.{digits}f}"

    rows = [
        [
            r.policy_name,
            *[fmt(r.pt_at.get(k), 3) for k in ks],
            fmt(r.ku, 3),
            fmt(r.density, 3),
            str(r.n_users),
            str(r.n_placements),
        ]
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)) for row in rows)
    return "\n".join(lines)
