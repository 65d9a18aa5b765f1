"""Nutrition knowledge base: CSV ingestion, lookup, portions, JSONL snapshots.

The KB is the nonparametric store the retrieval layer searches. Records are
immutable after ingestion; any number of readers may share a KnowledgeBase.
"""

from __future__ import annotations

import hashlib
import io
import json
import csv
from dataclasses import dataclass, field
from typing import IO, Iterable

CSV_COLUMNS = [
    "food_id",
    "name",
    "category",
    "kcal_per_100g",
    "protein_g",
    "fat_g",
    "carb_g",
    "density_g_per_ml",
    "portion_weights",
]

ATWATER_DEVIATION_THRESHOLD = 0.25


class KnowledgeBaseError(ValueError):
    """Raised when an input file cannot be ingested."""


class RowError(KnowledgeBaseError):
    """A single malformed data row; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class FoodRecord:
    """One food item with a per-100 g nutrient profile and named portions."""

    food_id: str
    name: str
    category: str
    kcal_per_100g: float
    protein_g: float
    fat_g: float
    carb_g: float
    density_g_per_ml: float | None
    portion_weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for label, value in (
            ("kcal_per_100g", self.kcal_per_100g),
            ("protein_g", self.protein_g),
            ("fat_g", self.fat_g),
            ("carb_g", self.carb_g),
        ):
            if value < 0:
                raise ValueError(f"{label} must be non-negative, got {value}")
        if self.density_g_per_ml is not None and self.density_g_per_ml <= 0:
            raise ValueError(f"density_g_per_ml must be positive, got {self.density_g_per_ml}")
        for portion, grams in self.portion_weights.items():
            if grams <= 0:
                raise ValueError(f"portion {portion!r} weight must be positive, got {grams}")


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable collection of FoodRecords keyed by food_id."""

    records: tuple[FoodRecord, ...]
    source_digest: str
    _by_id: dict[str, FoodRecord] = field(repr=False, compare=False, default_factory=dict)

    @property
    def record_count(self) -> int:
        return len(self.records)

    def get(self, food_id: str) -> FoodRecord | None:
        return self._by_id.get(food_id)


def _make_kb(records: list[FoodRecord], digest: str) -> KnowledgeBase:
    return KnowledgeBase(
        records=tuple(records),
        source_digest=digest,
        _by_id={r.food_id: r for r in records},
    )


def _parse_portions(encoded: str, line_number: int) -> dict[str, float]:
    """Decode `name:grams;name:grams`. Empty string means no portions."""
    portions: dict[str, float] = {}
    if not encoded.strip():
        return portions
    for part in encoded.split(";"):
        if ":" not in part:
            raise RowError(line_number, f"malformed portion segment {part!r}")
        name, _, grams_text = part.partition(":")
        name = name.strip()
        if not name:
            raise RowError(line_number, f"portion name missing in segment {part!r}")
        try:
            grams = float(grams_text)
        except ValueError:
            raise RowError(line_number, f"portion weight {grams_text!r} is not a number") from None
        if grams <= 0:
            raise RowError(line_number, f"portion {name!r} weight must be positive, got {grams}")
        if name.lower() in {k.lower() for k in portions}:
            raise RowError(line_number, f"duplicate portion name {name!r}")
        portions[name] = grams
    return portions


def _parse_float(value: str, column: str, line_number: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise RowError(line_number, f"{column} value {value!r} is not a number") from None


def ingest_csv(stream: IO[str] | str) -> KnowledgeBase:
    """Build a KnowledgeBase from a header-bearing CSV character stream.

    Rows are kept in file order. Raises KnowledgeBaseError on duplicate
    food_ids and RowError (with line number) on malformed rows.
    """
    text = stream if isinstance(stream, str) else stream.read()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise KnowledgeBaseError("empty input: missing header row") from None
    if header != CSV_COLUMNS:
        raise KnowledgeBaseError(
            f"unexpected header {header!r}; expected {CSV_COLUMNS!r}"
        )

    records: list[FoodRecord] = []
    seen: set[str] = set()
    for line_number, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CSV_COLUMNS):
            raise RowError(line_number, f"expected {len(CSV_COLUMNS)} columns, got {len(row)}")
        values = dict(zip(CSV_COLUMNS, row))
        food_id = values["food_id"].strip()
        if not food_id:
            raise RowError(line_number, "food_id is empty")
        if food_id in seen:
            raise KnowledgeBaseError(f"duplicate food_id {food_id!r} at line {line_number}")
        seen.add(food_id)

        kcal = _parse_float(values["kcal_per_100g"], "kcal_per_100g", line_number)
        protein = _parse_float(values["protein_g"], "protein_g", line_number)
        fat = _parse_float(values["fat_g"], "fat_g", line_number)
        carb = _parse_float(values["carb_g"], "carb_g", line_number)
        for column, value in (
            ("kcal_per_100g", kcal),
            ("protein_g", protein),
            ("fat_g", fat),
            ("carb_g", carb),
        ):
            if value < 0:
                raise RowError(line_number, f"{column} must be non-negative, got {value}")

        density_text = values["density_g_per_ml"].strip()
        density = None
        if density_text:
            density = _parse_float(density_text, "density_g_per_ml", line_number)
            if density <= 0:
                raise RowError(line_number, f"density_g_per_ml must be positive, got {density}")

        portions = _parse_portions(values["portion_weights"], line_number)
        records.append(
            FoodRecord(
                food_id=food_id,
                name=values["name"].strip(),
                category=values["category"].strip(),
                kcal_per_100g=kcal,
                protein_g=protein,
                fat_g=fat,
                carb_g=carb,
                density_g_per_ml=density,
                portion_weights=portions,
            )
        )
    return _make_kb(records, digest)


def ingest_csv_path(path: str) -> KnowledgeBase:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest_csv(fh)


def lookup(kb: KnowledgeBase, food_id: str) -> FoodRecord | None:
    """Return the record for food_id, or None when it was never ingested."""
    return kb.get(food_id)


def resolve_portion(record: FoodRecord, portion_name: str) -> float | None:
    """Grams for a named portion; names compared case-insensitively after trimming."""
    wanted = portion_name.strip().lower()
    for name, grams in record.portion_weights.items():
        if name.strip().lower() == wanted:
            return grams
    return None


def _record_to_json(record: FoodRecord) -> str:
    payload = {
        "food_id": record.food_id,
        "name": record.name,
        "category": record.category,
        "kcal_per_100g": record.kcal_per_100g,
        "protein_g": record.protein_g,
        "fat_g": record.fat_g,
        "carb_g": record.carb_g,
        "density_g_per_ml": record.density_g_per_ml,
        "portion_weights": record.portion_weights,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def serialize_snapshot(kb: KnowledgeBase) -> str:
    """Line-delimited JSON snapshot, one record per line, UTF-8, order-preserving."""
    return "".join(_record_to_json(r) + "\n" for r in kb.records)


def write_snapshot(kb: KnowledgeBase, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_snapshot(kb))


def load_snapshot(stream: IO[str] | str) -> KnowledgeBase:
    """Rebuild a KnowledgeBase from a snapshot; inverse of serialize_snapshot."""
    text = stream if isinstance(stream, str) else stream.read()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    records: list[FoodRecord] = []
    seen: set[str] = set()
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RowError(line_number, f"invalid JSON: {exc}") from None
        food_id = payload["food_id"]
        if food_id in seen:
            raise KnowledgeBaseError(f"duplicate food_id {food_id!r} at line {line_number}")
        seen.add(food_id)
        records.append(
            FoodRecord(
                food_id=food_id,
                name=payload["name"],
                category=payload["category"],
                kcal_per_100g=payload["kcal_per_100g"],
                protein_g=payload["protein_g"],
                fat_g=payload["fat_g"],
                carb_g=payload["carb_g"],
                density_g_per_ml=payload.get("density_g_per_ml"),
                portion_weights=dict(payload.get("portion_weights", {})),
            )
        )
    return _make_kb(records, digest)


def load_snapshot_path(path: str) -> KnowledgeBase:
    with open(path, "r", encoding="utf-8") as fh:
        return load_snapshot(fh)


def atwater_deviation(record: FoodRecord) -> float:
    """Relative gap between 4/9/4 macro estimate and the stated kcal.

    Zero kcal with zero macros counts as no deviation; zero kcal with
    nonzero macros is infinite.
    """
    estimate = 4.0 * record.protein_g + 9.0 * record.fat_g + 4.0 * record.carb_g
    if record.kcal_per_100g == 0:
        return 0.0 if estimate == 0 else float("inf")
    return abs(estimate - record.kcal_per_100g) / record.kcal_per_100g


def atwater_outliers(
    kb: KnowledgeBase, threshold: float = ATWATER_DEVIATION_THRESHOLD
) -> list[tuple[str, float]]:
    """Records whose macro-derived kcal deviates beyond threshold. Warnings only."""
    flagged = []
    for record in kb.records:
        deviation = atwater_deviation(record)
        if deviation > threshold:
            flagged.append((record.food_id, deviation))
    return flagged


def iter_records(kb: KnowledgeBase) -> Iterable[FoodRecord]:
    return iter(kb.records)
