import random

import numpy as np
import pytest

from caloraify.ingredients import parse_line
from caloraify.retrieval import (
    EMBEDDING_DIM,
    HashedBagEmbedder,
    HttpEmbedder,
    IndexedDocument,
    RetrievalError,
    VectorIndex,
    build_index,
    build_rag_query,
    cosine_score,
    render_document,
)

EMBEDDER = HashedBagEmbedder()

WORDS = [
    "flour", "sugar", "milk", "egg", "butter", "olive", "oil", "salt", "rice",
    "wheat", "honey", "yeast", "water", "cream", "cheese", "tomato", "basil",
    "onion", "garlic", "pepper", "lemon", "apple", "baking", "soda", "vanilla",
]


def random_text(rng, max_words=8):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randrange(1, max_words + 1)))


def brute_force_search(docs, query_vector, k):
    """Independent oracle: full scan, clamp, sort desc with doc_id tie-break."""
    scored = []
    for doc_id, vector in docs:
        raw = float(np.dot(vector, query_vector))
        scored.append((min(1.0, max(-1.0, raw)), doc_id))
    ordered = sorted(scored, key=lambda p: (-p[0], p[1]))
    return [(doc_id, score) for score, doc_id in ordered[:k]]


class TestEmbedder:
    def test_deterministic(self):
        a = EMBEDDER.embed("whole wheat flour")
        b = EMBEDDER.embed("whole wheat flour")
        assert np.array_equal(a, b)

    def test_empty_is_zero(self):
        assert not EMBEDDER.embed("").any()
        assert not EMBEDDER.embed("  \t !!! ").any()

    def test_unit_norm_or_zero(self):
        rng = random.Random(5)
        for _ in range(200):
            vector = EMBEDDER.embed(random_text(rng))
            norm = float(np.linalg.norm(vector))
            assert abs(norm - 1.0) < 1e-9 or norm == 0.0

    def test_self_cosine_is_one(self):
        vector = EMBEDDER.embed("whole wheat flour")
        assert cosine_score(vector, vector) == pytest.approx(1.0, abs=1e-9)

    def test_dimension(self):
        assert EMBEDDER.embed("x").shape == (EMBEDDING_DIM,)

    def test_case_and_separator_insensitive(self):
        assert np.array_equal(EMBEDDER.embed("Olive-Oil"), EMBEDDER.embed("olive oil"))


class TestIndex:
    def test_add_and_size(self):
        index = VectorIndex()
        for i in range(3):
            index.add_text(f"d{i}", f"doc {i} flour")
        assert len(index) == 3

    def test_duplicate_doc_id(self):
        index = VectorIndex()
        index.add_text("d0", "flour")
        with pytest.raises(RetrievalError, match="d0"):
            index.add_text("d0", "sugar")
        with pytest.raises(RetrievalError):
            index.add(IndexedDocument("d0", "x", EMBEDDER.embed("x")))

    def test_exact_text_scores_one(self):
        index = VectorIndex()
        index.add_text("a", "sugar milk")
        index.add_text("b", "olive oil basil")
        context = index.search("olive oil basil", 2)
        assert context.hits[0].doc_id == "b"
        assert context.hits[0].score == pytest.approx(1.0, abs=1e-9)

    def test_empty_index_and_bad_k(self):
        index = VectorIndex()
        with pytest.raises(RetrievalError):
            index.search("flour", 1)
        index.add_text("a", "flour")
        with pytest.raises(RetrievalError):
            index.search("flour", 0)

    def test_orthogonal_docs(self):
        index = VectorIndex()
        index.add_text("a", "flour")
        index.add_text("b", "sugar")
        index.add_text("c", "milk")
        context = index.search("sugar", 3)
        assert context.hits[0].doc_id == "b"
        assert context.hits[0].score == pytest.approx(1.0, abs=1e-9)
        assert {h.doc_id for h in context.hits[1:]} == {"a", "c"}
        assert all(h.score == 0.0 for h in context.hits[1:])

    def test_tie_break_ascending_doc_id(self):
        index = VectorIndex()
        index.add_text("zeta", "flour")
        index.add_text("alpha", "flour")
        context = index.search("flour", 1)
        assert context.hits[0].doc_id == "alpha"

    def test_hits_bounded_by_corpus(self):
        index = VectorIndex()
        index.add_text("a", "flour")
        context = index.search("flour", 10)
        assert len(context.hits) == 1
        assert context.k_requested == 10

    def test_scores_in_bounds(self):
        rng = random.Random(11)
        index = VectorIndex()
        for i in range(50):
            index.add_text(f"d{i:02d}", random_text(rng))
        for _ in range(20):
            context = index.search(random_text(rng), 5)
            assert all(-1.0 <= h.score <= 1.0 for h in context.hits)

    def test_monotone_k_prefix(self):
        rng = random.Random(13)
        index = VectorIndex()
        for i in range(60):
            index.add_text(f"d{i:02d}", random_text(rng))
        for _ in range(20):
            query = random_text(rng)
            previous = index.search(query, 1).hits
            for k in range(2, 8):
                current = index.search(query, k).hits
                assert current[: len(previous)] == previous
                previous = current

    def test_matches_brute_force_oracle_small(self):
        rng = random.Random(17)
        index = VectorIndex()
        docs = []
        for i in range(200):
            text = random_text(rng)
            doc = index.add_text(f"d{i:03d}", text)
            docs.append((doc.doc_id, doc.vector))
        for _ in range(25):
            query = random_text(rng)
            query_vector = EMBEDDER.embed(query)
            for k in (1, 5, 10):
                expected = brute_force_search(docs, query_vector, k)
                got = [(h.doc_id, h.score) for h in index.search(query, k).hits]
                assert got == expected


class FourBucketEmbedder:
    """Tiny alternative embedder to exercise pluggability."""

    dim = 4

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(4)
        for token in text.lower().split():
            vector[len(token) % 4] += 1.0
        norm = np.linalg.norm(vector)
        return vector / norm if norm > 0 else vector


def test_embedder_pluggability_keeps_invariants():
    rng = random.Random(19)
    index = VectorIndex(FourBucketEmbedder())
    for i in range(40):
        index.add_text(f"d{i:02d}", random_text(rng))
    for _ in range(10):
        query = random_text(rng)
        context = index.search(query, 10)
        scores = [h.score for h in context.hits]
        assert scores == sorted(scores, reverse=True)
        for first, second in zip(context.hits, context.hits[1:]):
            if first.score == second.score:
                assert first.doc_id < second.doc_id
        assert all(-1.0 <= s <= 1.0 for s in scores)


class TestRenderAndQuery:
    def test_render_document(self, fixture_kb):
        flour = fixture_kb.get("flour-01")
        assert render_document(flour) == "flour; grains; cup"

    def test_render_skips_empty_parts(self):
        from caloraify.kb import FoodRecord

        bare = FoodRecord("x", "flour", "", 10, 0, 0, 0, None, {})
        assert render_document(bare) == "flour"

    def test_build_index_covers_kb(self, fixture_kb):
        index = build_index(fixture_kb)
        assert len(index) == fixture_kb.record_count

    def test_rag_query_template(self):
        items = [parse_line("2 cups flour")]
        assert build_rag_query(items) == "nutrition facts for flour"

    def test_rag_query_multiple(self):
        items = [parse_line("2 cups flour"), parse_line("3 eggs")]
        assert build_rag_query(items) == "nutrition facts for flour\nnutrition facts for eggs"

    def test_rag_query_deterministic(self):
        items = [parse_line("1 cup milk")]
        assert build_rag_query(items) == build_rag_query(items)

    def test_rag_query_empty_errors(self):
        with pytest.raises(RetrievalError):
            build_rag_query([])


class FakeResponse:
    def __init__(self, payload):
        self._payload = payload

    def raise_for_status(self):
        return None

    def json(self):
        return self._payload


def test_http_embedder_validates_dim(monkeypatch):
    calls = {"n": 0}

    def fake_post(url, json=None, timeout=None):
        calls["n"] += 1
        dim = 3 if calls["n"] == 1 else 4
        return FakeResponse({"vectors": [[0.0] * dim for _ in json["texts"]], "dim": dim})

    monkeypatch.setattr("caloraify.retrieval.requests.post", fake_post)
    embedder = HttpEmbedder("http://embed.local/v1")
    embedder.embed("a")
    with pytest.raises(RetrievalError, match="dim"):
        embedder.embed("b")


def test_http_embedder_rejects_ragged_vectors(monkeypatch):
    def fake_post(url, json=None, timeout=None):
        return FakeResponse({"vectors": [[0.0, 1.0]], "dim": 3})

    monkeypatch.setattr("caloraify.retrieval.requests.post", fake_post)
    with pytest.raises(RetrievalError, match="length"):
        HttpEmbedder("http://embed.local/v1").embed("a")
