"""Text-generation evaluation: ROUGE-1/2/L/Lsum, corpus BLEU (unit and
100x-scaled), greedy embedding-match scoring, and the weighted ROUGE-L/BLEU
aggregate.

All reductions are left-to-right sums so corpus values are reproducible
bit-for-bit. The canonical tokenizer lowercases, splits on whitespace, strips
leading/trailing punctuation per token, and drops empties.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

TokenSequence = Sequence[str]

BLEU_MAX_ORDER = 4
BLEU_PRECISION_FLOOR = 1e-9

UNIT = "unit"
PERCENT = "percent"
OPEN = "open"

DEFAULT_LAMBDA_ROUGE = 2.5
DEFAULT_LAMBDA_BLEU = 1.5


class MetricsError(ValueError):
    """Raised for unusable metric inputs (empty corpus, misaligned files)."""


def tokenize(text: str) -> list[str]:
    """Canonical tokenizer shared by every metric."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    scale: str

    def __post_init__(self) -> None:
        if self.scale not in (UNIT, PERCENT, OPEN):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.scale == UNIT and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"{self.name}: unit-scale value {self.value} outside [0, 1]")
        if self.scale == PERCENT and not (0.0 <= self.value <= 100.0):
            raise ValueError(f"{self.name}: percent-scale value {self.value} outside [0, 100]")


@dataclass(frozen=True)
class AggregateSpec:
    lambda_rouge: float = DEFAULT_LAMBDA_ROUGE
    lambda_bleu: float = DEFAULT_LAMBDA_BLEU

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lambda_rouge) and math.isfinite(self.lambda_bleu)):
            raise ValueError("aggregate weights must be finite")


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngram_counts(tokens: TokenSequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: TokenSequence, reference: TokenSequence, n: int) -> float:
    """Clipped n-gram overlap F1 for n in {1, 2}. Empty sequences score 0."""
    if n not in (1, 2):
        raise MetricsError(f"rouge_n supports n in {{1, 2}}, got {n}")
    cand_counts = _ngram_counts(candidate, n)
    ref_counts = _ngram_counts(reference, n)
    cand_total = sum(cand_counts.values())
    ref_total = sum(ref_counts.values())
    if cand_total == 0 or ref_total == 0:
        return 0.0
    overlap = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    precision = overlap / cand_total
    recall = overlap / ref_total
    return _f1(precision, recall)


def _lcs_table(reference: TokenSequence, candidate: TokenSequence) -> list[list[int]]:
    rows, cols = len(reference), len(candidate)
    table = [[0] * (cols + 1) for _ in range(rows + 1)]
    for i in range(1, rows + 1):
        for j in range(1, cols + 1):
            if reference[i - 1] == candidate[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table


def lcs_length(a: TokenSequence, b: TokenSequence) -> int:
    return _lcs_table(a, b)[len(a)][len(b)]


def _lcs_reference_indices(reference: TokenSequence, candidate: TokenSequence) -> set[int]:
    """Reference positions on one LCS path.

    Backtracks from the end of the DP table; on ties it drops a reference
    token (decrements i), which fixes a single deterministic path among the
    maximal subsequences.
    """
    table = _lcs_table(reference, candidate)
    indices: set[int] = set()
    i, j = len(reference), len(candidate)
    while i > 0 and j > 0:
        if reference[i - 1] == candidate[j - 1]:
            indices.add(i - 1)
            i -= 1
            j -= 1
        elif table[i][j - 1] > table[i - 1][j]:
            j -= 1
        else:
            i -= 1
    return indices


def rouge_l(candidate: TokenSequence, reference: TokenSequence) -> float:
    """LCS-based F1: P = LCS/|candidate|, R = LCS/|reference|."""
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(reference, candidate)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return _f1(precision, recall)


def rouge_lsum(candidate_text: str, reference_text: str) -> float:
    """Summary-level ROUGE-L: union LCS per reference line with count clipping.

    Texts are split on newlines; for single-line inputs this equals rouge_l
    exactly.
    """
    ref_sents = [tokenize(line) for line in reference_text.splitlines()]
    ref_sents = [s for s in ref_sents if s]
    can_sents = [tokenize(line) for line in candidate_text.splitlines()]
    can_sents = [s for s in can_sents if s]
    m = sum(len(s) for s in ref_sents)
    n = sum(len(s) for s in can_sents)
    if m == 0 or n == 0:
        return 0.0
    ref_budget = Counter(t for s in ref_sents for t in s)
    can_budget = Counter(t for s in can_sents for t in s)
    hits = 0
    for ref_sent in ref_sents:
        union: set[int] = set()
        for can_sent in can_sents:
            union |= _lcs_reference_indices(ref_sent, can_sent)
        for position in sorted(union):
            token = ref_sent[position]
            if ref_budget[token] > 0 and can_budget[token] > 0:
                hits += 1
                ref_budget[token] -= 1
                can_budget[token] -= 1
    precision = hits / n
    recall = hits / m
    return _f1(precision, recall)


def corpus_bleu(pairs: Sequence[tuple[TokenSequence, TokenSequence]]) -> float:
    """Corpus BLEU: clipped modified precisions n=1..4 pooled over the corpus,
    uniform-weight geometric mean, brevity penalty exp(1 - r/c) when c < r.

    An order with zero clipped matches contributes the 1e-9 floor instead of
    log(0).
    """
    if not pairs:
        raise MetricsError("corpus is empty")
    matches = [0] * (BLEU_MAX_ORDER + 1)
    totals = [0] * (BLEU_MAX_ORDER + 1)
    candidate_length = 0
    reference_length = 0
    for candidate, reference in pairs:
        candidate_length += len(candidate)
        reference_length += len(reference)
        for n in range(1, BLEU_MAX_ORDER + 1):
            cand_counts = _ngram_counts(candidate, n)
            ref_counts = _ngram_counts(reference, n)
            totals[n] += sum(cand_counts.values())
            matches[n] += sum(
                min(count, ref_counts[gram]) for gram, count in cand_counts.items()
            )
    if candidate_length == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, BLEU_MAX_ORDER + 1):
        if matches[n] > 0:
            precision = matches[n] / totals[n]
        else:
            precision = BLEU_PRECISION_FLOOR
        log_sum += math.log(precision) / BLEU_MAX_ORDER
    if candidate_length < reference_length:
        brevity = math.exp(1.0 - reference_length / candidate_length)
    else:
        brevity = 1.0
    return brevity * math.exp(log_sum)


def scaled_bleu(pairs: Sequence[tuple[TokenSequence, TokenSequence]]) -> float:
    """Percent-scale BLEU, exactly 100x the unit-scale value."""
    return 100.0 * corpus_bleu(pairs)


class TokenEmbedder(Protocol):
    def embed(self, token: str) -> np.ndarray: ...


class OneHotTokenEmbedder:
    """Reference token embedder: one basis vector per vocabulary entry.

    Cosine is 1 for equal tokens and 0 otherwise, so greedy matching reduces
    to set membership. Tokens outside the vocabulary embed to zero.
    """

    def __init__(self, vocabulary: Sequence[str]):
        self._index: dict[str, int] = {}
        for token in vocabulary:
            if token not in self._index:
                self._index[token] = len(self._index)
        self.dim = max(len(self._index), 1)

    def embed(self, token: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        position = self._index.get(token)
        if position is not None:
            vector[position] = 1.0
        return vector


def _token_cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (norm_a * norm_b)


def bert_style_score(
    candidate: TokenSequence,
    reference: TokenSequence,
    token_embedder: TokenEmbedder,
) -> tuple[float, float, float]:
    """Greedy-matching precision/recall/F1 over token embeddings."""
    if not candidate or not reference:
        return 0.0, 0.0, 0.0
    cand_vectors = [token_embedder.embed(t) for t in candidate]
    ref_vectors = [token_embedder.embed(t) for t in reference]
    precision = sum(
        max(_token_cosine(cv, rv) for rv in ref_vectors) for cv in cand_vectors
    ) / len(cand_vectors)
    recall = sum(
        max(_token_cosine(rv, cv) for cv in cand_vectors) for rv in ref_vectors
    ) / len(ref_vectors)
    return precision, recall, _f1(precision, recall)


def aggregate(rouge_l_value: float, bleu_value: float, spec: AggregateSpec) -> float:
    """Weighted combination lambda_rouge * ROUGE-L + lambda_bleu * BLEU."""
    return spec.lambda_rouge * rouge_l_value + spec.lambda_bleu * bleu_value


def solve_aggregate_weights(
    point_a: tuple[float, float, float],
    point_b: tuple[float, float, float],
) -> AggregateSpec:
    """Recover (lambda_rouge, lambda_bleu) from two observed
    (rouge_l, bleu, aggregate) triples by solving the 2x2 linear system."""
    r1, b1, a1 = point_a
    r2, b2, a2 = point_b
    determinant = r1 * b2 - b1 * r2
    if determinant == 0.0:
        raise MetricsError("aggregate weight system is singular")
    lambda_rouge = (a1 * b2 - b1 * a2) / determinant
    lambda_bleu = (r1 * a2 - a1 * r2) / determinant
    return AggregateSpec(lambda_rouge=lambda_rouge, lambda_bleu=lambda_bleu)


@dataclass(frozen=True)
class MetricsReport:
    """Corpus-level metric values; full precision stored, 4 decimals rendered."""

    rouge1: MetricValue
    rouge2: MetricValue
    rouge_l: MetricValue
    rouge_lsum: MetricValue
    bleu: MetricValue
    scaled_bleu: MetricValue
    bertscore_precision: MetricValue
    bertscore_recall: MetricValue
    bertscore_f1: MetricValue
    aggregate: MetricValue
    corpus_size: int

    def values(self) -> list[MetricValue]:
        return [
            self.rouge1,
            self.rouge2,
            self.rouge_l,
            self.rouge_lsum,
            self.bleu,
            self.scaled_bleu,
            self.bertscore_precision,
            self.bertscore_recall,
            self.bertscore_f1,
            self.aggregate,
        ]

    def to_dict(self) -> dict:
        payload = {value.name: value.value for value in self.values()}
        payload["corpus_size"] = self.corpus_size
        return payload

    def render_table(self) -> str:
        labels = {
            "rouge1": "ROUGE-1",
            "rouge2": "ROUGE-2",
            "rouge_l": "ROUGE-L",
            "rouge_lsum": "ROUGE-Lsum",
            "bleu": "BLEU",
            "scaled_bleu": "BLEU (x100)",
            "bertscore_precision": "BERTScore (P)",
            "bertscore_recall": "BERTScore (R)",
            "bertscore_f1": "BERTScore (F1)",
            "aggregate": "Aggregate",
        }
        width = max(len(label) for label in labels.values()) + 2
        lines = [f"{'Metric':<{width}}Value", f"{'-' * (width + 6)}"]
        for value in self.values():
            lines.append(f"{labels[value.name]:<{width}}{value.value:.4f}")
        lines.append(f"{'pairs':<{width}}{self.corpus_size}")
        return "\n".join(lines)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def evaluate_pairs(
    candidates: Sequence[str],
    references: Sequence[str],
    spec: AggregateSpec = AggregateSpec(),
) -> MetricsReport:
    """All metrics over aligned candidate/reference texts.

    ROUGE values are means of per-pair F1; BLEU is corpus-level; the greedy
    embedding score uses a per-pair one-hot embedder over both token sets.
    """
    if len(candidates) != len(references):
        raise MetricsError(
            f"candidate count {len(candidates)} != reference count {len(references)}"
        )
    if not candidates:
        raise MetricsError("corpus is empty")
    token_pairs = [(tokenize(c), tokenize(r)) for c, r in zip(candidates, references)]
    rouge1_scores = [rouge_n(c, r, 1) for c, r in token_pairs]
    rouge2_scores = [rouge_n(c, r, 2) for c, r in token_pairs]
    rouge_l_scores = [rouge_l(c, r) for c, r in token_pairs]
    rouge_lsum_scores = [
        rouge_lsum(c, r) for c, r in zip(candidates, references)
    ]
    bleu_value = corpus_bleu(token_pairs)
    bert_scores = []
    for cand_tokens, ref_tokens in token_pairs:
        embedder = OneHotTokenEmbedder(list(cand_tokens) + list(ref_tokens))
        bert_scores.append(bert_style_score(cand_tokens, ref_tokens, embedder))
    rouge_l_mean = _mean(rouge_l_scores)
    return MetricsReport(
        rouge1=MetricValue("rouge1", _mean(rouge1_scores), UNIT),
        rouge2=MetricValue("rouge2", _mean(rouge2_scores), UNIT),
        rouge_l=MetricValue("rouge_l", rouge_l_mean, UNIT),
        rouge_lsum=MetricValue("rouge_lsum", _mean(rouge_lsum_scores), UNIT),
        bleu=MetricValue("bleu", bleu_value, UNIT),
        scaled_bleu=MetricValue("scaled_bleu", 100.0 * bleu_value, PERCENT),
        bertscore_precision=MetricValue(
            "bertscore_precision", _mean([s[0] for s in bert_scores]), UNIT
        ),
        bertscore_recall=MetricValue(
            "bertscore_recall", _mean([s[1] for s in bert_scores]), UNIT
        ),
        bertscore_f1=MetricValue(
            "bertscore_f1", _mean([s[2] for s in bert_scores]), UNIT
        ),
        aggregate=MetricValue("aggregate", aggregate(rouge_l_mean, bleu_value, spec), OPEN),
        corpus_size=len(candidates),
    )


def evaluate_corpus(
    pred_path: str,
    ref_path: str,
    spec: AggregateSpec = AggregateSpec(),
) -> MetricsReport:
    """Evaluate line-aligned UTF-8 prediction and reference files."""
    with open(pred_path, "r", encoding="utf-8") as fh:
        predictions = fh.read().splitlines()
    with open(ref_path, "r", encoding="utf-8") as fh:
        references = fh.read().splitlines()
    return evaluate_pairs(predictions, references, spec)
