"""Retrieval-grounded calorie estimation toolkit."""

__version__ = "0.1.0"

from .calories import CalorieReport, EstimateConfig, IngredientEstimate, estimate, render_answer
from .ingredients import ParsedIngredient, ParseError, Unit, parse_block, parse_line, to_grams
from .kb import FoodRecord, KnowledgeBase, ingest_csv, load_snapshot, lookup, resolve_portion
from .metrics import AggregateSpec, MetricsReport, aggregate, corpus_bleu, evaluate_corpus
from .retrieval import HashedBagEmbedder, RetrievedContext, VectorIndex, build_index
from .vlm import AnalysisResult, ChatSession, ImageRef, StubBackend, analyze_image, chat_turn

__all__ = [
    "AggregateSpec",
    "AnalysisResult",
    "CalorieReport",
    "ChatSession",
    "EstimateConfig",
    "FoodRecord",
    "HashedBagEmbedder",
    "ImageRef",
    "IngredientEstimate",
    "KnowledgeBase",
    "MetricsReport",
    "ParseError",
    "ParsedIngredient",
    "RetrievedContext",
    "StubBackend",
    "Unit",
    "VectorIndex",
    "aggregate",
    "analyze_image",
    "build_index",
    "chat_turn",
    "corpus_bleu",
    "estimate",
    "evaluate_corpus",
    "ingest_csv",
    "load_snapshot",
    "lookup",
    "parse_block",
    "parse_line",
    "render_answer",
    "resolve_portion",
    "to_grams",
]
