"""Grounded calorie estimation: match ingredients to KB evidence, convert to
grams, and total kcal. Unmatched ingredients contribute 0 kcal instead of a
guessed prior, so every nonzero figure traces back to a retrieved record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .ingredients import ParsedIngredient, to_grams
from .kb import FoodRecord, KnowledgeBase
from .retrieval import RetrievedContext, VectorIndex

DEFAULT_K = 3
DEFAULT_MIN_SCORE = 0.35

FLAG_ASSUMED_DENSITY = "assumed_density"
FLAG_NO_MATCH = "no_match"
FLAG_LOW_CONFIDENCE = "low_confidence"

MATCH = "match"
LOW_CONFIDENCE = "low_confidence"
NO_MATCH = "no_match"


@dataclass(frozen=True)
class EstimateConfig:
    k: int = DEFAULT_K
    min_score: float = DEFAULT_MIN_SCORE


@dataclass(frozen=True)
class IngredientEstimate:
    ingredient: ParsedIngredient
    matched_food_id: str | None
    grams: float
    kcal: float
    match_score: float
    flags: frozenset[str]


@dataclass(frozen=True)
class CalorieReport:
    estimates: tuple[IngredientEstimate, ...]
    total_kcal: float
    evidence: tuple[RetrievedContext, ...]
    generated_answer: str = field(compare=False, default="")


def classify_score(score: float, min_score: float) -> str:
    """Band a retrieval score: >= min_score matches, (0.8*min_score, min_score)
    matches with low confidence, anything at or below the band floor does not."""
    if score >= min_score:
        return MATCH
    if score > min_score * 0.8:
        return LOW_CONFIDENCE
    return NO_MATCH


def match_ingredient(
    item: ParsedIngredient,
    index: VectorIndex,
    kb: KnowledgeBase,
    k: int = DEFAULT_K,
    min_score: float = DEFAULT_MIN_SCORE,
) -> tuple[FoodRecord | None, RetrievedContext]:
    """Top retrieval hit for the ingredient name, subject to the score band.

    The retrieved context is returned even when nothing clears the band.
    """
    context = index.search(item.name, k)
    top = context.hits[0]
    if classify_score(top.score, min_score) == NO_MATCH:
        return None, context
    return kb.get(top.doc_id), context


def round_half_up(value: float) -> int:
    """Round to the nearest integer; exact halves round toward +inf."""
    return math.floor(value + 0.5)


def estimate(
    items: list[ParsedIngredient],
    index: VectorIndex,
    kb: KnowledgeBase,
    config: EstimateConfig = EstimateConfig(),
) -> CalorieReport:
    """Per-ingredient match -> grams -> kcal, plus an fsum total and evidence."""
    estimates: list[IngredientEstimate] = []
    evidence: list[RetrievedContext] = []
    for item in items:
        record, context = match_ingredient(item, index, kb, config.k, config.min_score)
        evidence.append(context)
        top_score = context.hits[0].score
        flags = set()
        band = classify_score(top_score, config.min_score)
        if band == LOW_CONFIDENCE:
            flags.add(FLAG_LOW_CONFIDENCE)
        grams, assumed = to_grams(item, record)
        if assumed:
            flags.add(FLAG_ASSUMED_DENSITY)
        if record is None:
            flags.add(FLAG_NO_MATCH)
            kcal = 0.0
            matched_id = None
        else:
            kcal = grams * record.kcal_per_100g / 100.0
            matched_id = record.food_id
        estimates.append(
            IngredientEstimate(
                ingredient=item,
                matched_food_id=matched_id,
                grams=grams,
                kcal=kcal,
                match_score=top_score,
                flags=frozenset(flags),
            )
        )
    total = math.fsum(e.kcal for e in estimates)
    report = CalorieReport(
        estimates=tuple(estimates),
        total_kcal=total,
        evidence=tuple(evidence),
    )
    return CalorieReport(
        estimates=report.estimates,
        total_kcal=report.total_kcal,
        evidence=report.evidence,
        generated_answer=render_answer(report),
    )


def _format_grams(grams: float) -> str:
    rounded = round(grams, 2)
    if rounded == int(rounded):
        return str(int(rounded))
    return f"{rounded:g}"


def render_answer(report: CalorieReport) -> str:
    """Plain-text table: one line per ingredient, then the kcal total.

    kcal values are rounded half-up to integers here only; the report keeps
    full precision.
    """
    lines = []
    for est in report.estimates:
        line = (
            f"{est.ingredient.name} — {_format_grams(est.grams)} g"
            f" — {round_half_up(est.kcal)} kcal"
        )
        if est.flags:
            line += f" — [{', '.join(sorted(est.flags))}]"
        lines.append(line)
    lines.append(f"TOTAL: {round_half_up(report.total_kcal)} kcal")
    return "\n".join(lines)
