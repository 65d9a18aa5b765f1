"""Parsing of model-produced ingredient lines into (quantity, unit, name) triples.

Line grammar: `quantity unit name` | `quantity name` | `name`. Quantities may
be integers, decimals, a/b fractions, mixed numbers (`1 1/2`) or the vulgar
fraction characters. Unknown unit tokens fold into the name; a bare name gets
quantity 1 of the count unit `piece`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .kb import FoodRecord, resolve_portion

MASS = "mass"
VOLUME = "volume"
COUNT = "count"

# US legal definitions; exact constants keep gram conversions exact.
ML_PER_TSP = 4.92892159375
ML_PER_TBSP = 14.78676478125
ML_PER_CUP = 236.5882365
ML_PER_FLOZ = 29.5735295625
G_PER_OZ = 28.349523125
G_PER_LB = 453.59237

DEFAULT_PIECE_GRAMS = 100.0


class ParseError(ValueError):
    """A line that cannot yield a valid ParsedIngredient."""


@dataclass(frozen=True)
class Unit:
    """A measurement unit; to_base is grams (mass), milliliters (volume) or 1 (count)."""

    kind: str
    name: str
    to_base: float

    def __post_init__(self) -> None:
        if self.to_base <= 0:
            raise ValueError(f"to_base must be positive, got {self.to_base}")


GRAM = Unit(MASS, "g", 1.0)
KILOGRAM = Unit(MASS, "kg", 1000.0)
OUNCE = Unit(MASS, "oz", G_PER_OZ)
POUND = Unit(MASS, "lb", G_PER_LB)
MILLILITER = Unit(VOLUME, "ml", 1.0)
LITER = Unit(VOLUME, "l", 1000.0)
TEASPOON = Unit(VOLUME, "tsp", ML_PER_TSP)
TABLESPOON = Unit(VOLUME, "tbsp", ML_PER_TBSP)
CUP = Unit(VOLUME, "cup", ML_PER_CUP)
FLUID_OUNCE = Unit(VOLUME, "fl oz", ML_PER_FLOZ)
PIECE = Unit(COUNT, "piece", 1.0)

_UNITS = [
    GRAM,
    KILOGRAM,
    OUNCE,
    POUND,
    MILLILITER,
    LITER,
    TEASPOON,
    TABLESPOON,
    CUP,
    FLUID_OUNCE,
    PIECE,
]

_ALIASES: dict[str, Unit] = {}
for _unit, _names in [
    (GRAM, ["g", "gram", "grams"]),
    (KILOGRAM, ["kg", "kilogram", "kilograms"]),
    (OUNCE, ["oz", "ounce", "ounces"]),
    (POUND, ["lb", "lbs", "pound", "pounds"]),
    (MILLILITER, ["ml", "milliliter", "milliliters", "millilitre", "millilitres"]),
    (LITER, ["l", "liter", "liters", "litre", "litres"]),
    (TEASPOON, ["tsp", "teaspoon", "teaspoons"]),
    (TABLESPOON, ["tbsp", "tbs", "tablespoon", "tablespoons"]),
    (CUP, ["cup", "cups"]),
    (FLUID_OUNCE, ["fl oz", "floz", "fluid ounce", "fluid ounces"]),
    (PIECE, ["piece", "pieces"]),
]:
    for _name in _names:
        _ALIASES[_name] = _unit

_VULGAR_FRACTIONS = {
    "½": 0.5,  # 1/2
    "¼": 0.25,  # 1/4
    "¾": 0.75,  # 3/4
    "⅓": 1.0 / 3.0,  # 1/3
    "⅔": 2.0 / 3.0,  # 2/3
}

_INT_RE = re.compile(r"^\d+$")
_DECIMAL_RE = re.compile(r"^\d+(\.\d+)?$")
_FRACTION_RE = re.compile(r"^(\d+)/(\d+)$")
_LIST_MARKER_RE = re.compile(r"^\s*(?:[-*•]+|\d+\.)\s+")
_HAS_ALNUM_RE = re.compile(r"[0-9a-z]")


@dataclass(frozen=True)
class ParsedIngredient:
    """Structured ingredient; raw_line is kept for traceability, not equality."""

    name: str
    quantity: float
    unit: Unit
    raw_line: str = field(compare=False, default="")

    def __post_init__(self) -> None:
        if self.quantity <= 0:
            raise ValueError(f"quantity must be positive, got {self.quantity}")
        if not self.name:
            raise ValueError("name must be non-empty")


def _parse_quantity_token(token: str) -> float | None:
    """One token as a quantity, or None when it is not a quantity at all."""
    if token in _VULGAR_FRACTIONS:
        return _VULGAR_FRACTIONS[token]
    match = _FRACTION_RE.match(token)
    if match:
        numerator, denominator = int(match.group(1)), int(match.group(2))
        if denominator == 0:
            return None
        return numerator / denominator
    if _DECIMAL_RE.match(token):
        return float(token)
    return None


def _match_unit(tokens: list[str], start: int) -> tuple[Unit, int] | None:
    """Longest alias match at tokens[start], trying two-token units first."""
    if start >= len(tokens):
        return None
    if start + 1 < len(tokens):
        two = f"{tokens[start]} {tokens[start + 1]}".lower()
        if two in _ALIASES:
            return _ALIASES[two], start + 2
    one = tokens[start].lower()
    if one in _ALIASES:
        return _ALIASES[one], start + 1
    return None


def parse_line(line: str) -> ParsedIngredient:
    """Parse one ingredient line.

    Unparseable quantity tokens fold into the name; an empty line or a line
    without any alphanumeric name content raises ParseError.
    """
    stripped = line.strip()
    if not stripped:
        raise ParseError("empty line")
    tokens = stripped.split()

    quantity: float | None = _parse_quantity_token(tokens[0])
    consumed = 0
    if quantity is not None:
        consumed = 1
        # Mixed number: integer followed by a/b.
        if _INT_RE.match(tokens[0]) and consumed < len(tokens):
            fraction = _FRACTION_RE.match(tokens[consumed])
            if fraction and int(fraction.group(2)) != 0:
                quantity = quantity + int(fraction.group(1)) / int(fraction.group(2))
                consumed = 2
        if quantity <= 0:
            raise ParseError(f"quantity must be positive in {line!r}")

    unit = PIECE
    if quantity is None:
        quantity = 1.0
    else:
        matched = _match_unit(tokens, consumed)
        if matched is not None:
            unit, consumed = matched

    name = " ".join(tokens[consumed:]).lower()
    if not name:
        raise ParseError(f"missing ingredient name in {line!r}")
    if not _HAS_ALNUM_RE.search(name):
        raise ParseError(f"no ingredient name in {line!r}")
    return ParsedIngredient(name=name, quantity=quantity, unit=unit, raw_line=line)


def strip_list_marker(line: str) -> str:
    """Drop a leading `-`, `*`, bullet or `1.`-style ordinal marker."""
    return _LIST_MARKER_RE.sub("", line)


def parse_block(text: str) -> tuple[list[ParsedIngredient], list[tuple[int, str]]]:
    """Parse a multi-line block; per-line failures are collected, never raised.

    Returns (ingredients, errors) where errors are (1-based line number, message).
    """
    items: list[ParsedIngredient] = []
    errors: list[tuple[int, str]] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        candidate = strip_list_marker(raw)
        try:
            items.append(parse_line(candidate))
        except ParseError as exc:
            errors.append((line_number, str(exc)))
    return items, errors


def to_grams(item: ParsedIngredient, record: FoodRecord | None) -> tuple[float, bool]:
    """Convert an ingredient quantity to grams.

    Returns (grams, assumed_density): the flag is set whenever a default
    density (1.0 g/ml) or the default piece weight (100 g) had to stand in
    for missing record data.
    """
    unit = item.unit
    if unit.kind == MASS:
        return item.quantity * unit.to_base, False
    if unit.kind == VOLUME:
        ml = item.quantity * unit.to_base
        if record is not None and record.density_g_per_ml is not None:
            return ml * record.density_g_per_ml, False
        return ml * 1.0, True
    # count
    if record is not None:
        for portion_name in ("piece", "unit"):
            grams = resolve_portion(record, portion_name)
            if grams is not None:
                return item.quantity * grams, False
    return item.quantity * DEFAULT_PIECE_GRAMS, True


def format_ingredient(item: ParsedIngredient) -> str:
    """Canonical line that parse_line maps back to an equal ParsedIngredient."""
    quantity = item.quantity
    if quantity == int(quantity):
        quantity_text = str(int(quantity))
    else:
        quantity_text = repr(quantity)
    if item.unit == PIECE:
        return f"{quantity_text} {item.name}"
    return f"{quantity_text} {item.unit.name} {item.name}"


def unit_by_name(name: str) -> Unit | None:
    return _ALIASES.get(name.strip().lower())


def known_units() -> list[Unit]:
    return list(_UNITS)
