"""Dense text embedding and exact top-k cosine search over the nutrition KB.

The reference embedder is a hashed bag of tokens: deterministic, dependency
free, and cheap enough that search stays an exact full scan. External neural
embedders can be plugged in over a small HTTP contract without touching the
ranking rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

EMBEDDING_DIM = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class RetrievalError(ValueError):
    """Raised for invalid index operations (duplicates, empty index, bad k)."""


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _tokenize(text: str) -> list[str]:
    tokens = []
    current = []
    for ch in text.lower():
        if ("a" <= ch <= "z") or ("0" <= ch <= "9"):
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedBagEmbedder:
    """Signed feature hashing of tokens into a fixed-size L2-normalized vector.

    Each token is FNV-1a hashed; the hash picks a bucket (mod dim) and a sign
    (top bit). Empty text embeds to the all-zero vector.
    """

    def __init__(self, dim: int = EMBEDDING_DIM):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        for token in _tokenize(text):
            h = fnv1a64(token.encode("utf-8"))
            bucket = h % self.dim
            sign = 1.0 if (h >> 63) == 0 else -1.0
            vector[bucket] += sign
        norm = float(np.linalg.norm(vector))
        if norm > 0.0:
            vector /= norm
        return vector


class HttpEmbedder:
    """Client for the external embedding endpoint.

    Wire contract: POST {"texts": [...]} -> {"vectors": [[...], ...], "dim": D}.
    The reported dim must match every vector and stay constant across calls.
    """

    def __init__(self, endpoint: str, timeout_s: float = 10.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.dim: int | None = None

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        response = requests.post(
            self.endpoint, json={"texts": list(texts)}, timeout=self.timeout_s
        )
        response.raise_for_status()
        payload = response.json()
        dim = payload["dim"]
        vectors = payload["vectors"]
        if self.dim is None:
            self.dim = dim
        elif self.dim != dim:
            raise RetrievalError(f"embedder dim changed from {self.dim} to {dim}")
        out = []
        for vec in vectors:
            if len(vec) != dim:
                raise RetrievalError(f"vector length {len(vec)} != reported dim {dim}")
            out.append(np.asarray(vec, dtype=np.float64))
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine over pre-normalized vectors; the zero vector scores 0 with anything."""
    score = float(np.dot(a, b))
    if score > 1.0:
        return 1.0
    if score < -1.0:
        return -1.0
    return score


@dataclass(frozen=True)
class IndexedDocument:
    doc_id: str
    text: str
    vector: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class Hit:
    doc_id: str
    score: float
    text: str


@dataclass(frozen=True)
class RetrievedContext:
    """Ranked evidence for one query: score-descending, ties by ascending doc_id."""

    query_text: str
    hits: tuple[Hit, ...]
    k_requested: int


class VectorIndex:
    """Exact (non-approximate) cosine index. Concurrent reads are safe once built."""

    def __init__(self, embedder: Embedder | None = None):
        self.embedder: Embedder = embedder if embedder is not None else HashedBagEmbedder()
        self._docs: dict[str, IndexedDocument] = {}
        self._order: list[str] = []

    def __len__(self) -> int:
        return len(self._docs)

    def add(self, doc: IndexedDocument) -> None:
        if doc.doc_id in self._docs:
            raise RetrievalError(f"duplicate doc_id {doc.doc_id!r}")
        self._docs[doc.doc_id] = doc
        self._order.append(doc.doc_id)

    def add_text(self, doc_id: str, text: str) -> IndexedDocument:
        doc = IndexedDocument(doc_id=doc_id, text=text, vector=self.embedder.embed(text))
        self.add(doc)
        return doc

    def search(self, query: str, k: int) -> RetrievedContext:
        if k < 1:
            raise RetrievalError(f"k must be >= 1, got {k}")
        if not self._docs:
            raise RetrievalError("search on empty index")
        query_vector = self.embedder.embed(query)
        scored = []
        for doc_id in self._order:
            doc = self._docs[doc_id]
            scored.append((cosine_score(doc.vector, query_vector), doc_id))
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        hits = tuple(
            Hit(doc_id=doc_id, score=score, text=self._docs[doc_id].text)
            for score, doc_id in scored[:k]
        )
        return RetrievedContext(query_text=query, hits=hits, k_requested=k)


def render_document(record) -> str:
    """Searchable text for a food record: name; category; portion names."""
    parts = [record.name, record.category]
    if record.portion_weights:
        parts.append(" ".join(record.portion_weights))
    return "; ".join(part for part in parts if part)


def build_index(kb, embedder: Embedder | None = None) -> VectorIndex:
    """Index every KB record under its food_id."""
    index = VectorIndex(embedder)
    for record in kb.records:
        index.add_text(record.food_id, render_document(record))
    return index


def build_rag_query(ingredients: Iterable) -> str:
    """Per-ingredient retrieval query lines, one `nutrition facts for {name}` each."""
    items = list(ingredients)
    if not items:
        raise RetrievalError("no ingredients to build a query from")
    return "\n".join(f"nutrition facts for {item.name.strip()}" for item in items)
