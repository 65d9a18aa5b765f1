"""Dataset curation: class-balanced sampling, image-instruction pairing, and
per-recipe train/val/test splits with a cross-language-reproducible PRNG.

All randomness flows through splitmix64-driven Fisher-Yates shuffles with a
documented consumption order, so a (catalog, seed, config) triple always
yields a byte-identical manifest.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import requests

logger = logging.getLogger(__name__)

_MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_RATIOS = (0.6, 0.2, 0.2)
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_MAX_IMAGES = 5
DEFAULT_INSTRUCTIONS_PER_IMAGE = 5


class CuratorError(ValueError):
    """Raised for invalid curation inputs (bad ratios, oversized targets)."""


class SplitMix64:
    """splitmix64 PRNG; one next_uint64 call per consumed value."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates: i from len-1 down to 1, j = next % (i + 1)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_uint64() % (i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class RecipeSample:
    sample_id: str
    class_label: str
    image_ids: tuple[str, ...]
    instructions: tuple[str, ...]
    nutrition_text: str = ""


@dataclass(frozen=True)
class PairEntry:
    pair_id: str
    sample_id: str
    image_id: str
    instruction_index: int
    split: str = ""


@dataclass(frozen=True)
class PairManifest:
    entries: tuple[PairEntry, ...]
    seed: int
    ratios: tuple[float, float, float]

    def split_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in SPLIT_NAMES}
        for entry in self.entries:
            counts[entry.split] += 1
        return counts


def class_balanced_sample(
    catalog: Sequence[RecipeSample], target: int, seed: int
) -> list[str]:
    """Draw target sample_ids, one per class per round, classes in
    lexicographic order, each class pre-shuffled with the shared PRNG."""
    if target > len(catalog):
        raise CuratorError(f"target {target} exceeds catalog size {len(catalog)}")
    by_class: dict[str, list[str]] = {}
    for sample in catalog:
        by_class.setdefault(sample.class_label, []).append(sample.sample_id)
    rng = SplitMix64(seed)
    class_labels = sorted(by_class)
    for label in class_labels:
        rng.shuffle(by_class[label])
    selected: list[str] = []
    cursors = {label: 0 for label in class_labels}
    while len(selected) < target:
        progressed = False
        for label in class_labels:
            if len(selected) >= target:
                break
            cursor = cursors[label]
            if cursor < len(by_class[label]):
                selected.append(by_class[label][cursor])
                cursors[label] = cursor + 1
                progressed = True
        if not progressed:
            break
    return selected


def build_pairs(
    sample: RecipeSample,
    max_images: int = DEFAULT_MAX_IMAGES,
    instructions_per_image: int = DEFAULT_INSTRUCTIONS_PER_IMAGE,
) -> list[PairEntry]:
    """Cartesian image x instruction pairs: first max_images images crossed
    with the first instructions_per_image instructions, image-major order."""
    if max_images < 1:
        raise CuratorError(f"max_images must be >= 1, got {max_images}")
    if not sample.image_ids:
        return []
    images = sample.image_ids[:max_images]
    instructions = sample.instructions[:instructions_per_image]
    pairs = []
    for image_id in images:
        for instruction_index in range(len(instructions)):
            pairs.append(
                PairEntry(
                    pair_id=f"{sample.sample_id}:{image_id}:{instruction_index}",
                    sample_id=sample.sample_id,
                    image_id=image_id,
                    instruction_index=instruction_index,
                )
            )
    return pairs


def _largest_remainder(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Split n into three counts matching ratios; remainders go to the largest
    fractional parts, ties resolved in (train, val, test) order."""
    quotas = [ratio * n for ratio in ratios]
    base = [int(quota) for quota in quotas]
    remainder = n - sum(base)
    by_fraction = sorted(range(3), key=lambda idx: (-(quotas[idx] - base[idx]), idx))
    for idx in by_fraction[:remainder]:
        base[idx] += 1
    return base[0], base[1], base[2]


def split(
    pairs: Sequence[PairEntry],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> PairManifest:
    """Assign pairs to train/val/test within each sample.

    Per sample (first-appearance order): shuffle that sample's pairs with the
    shared PRNG, then hand out largest-remainder counts in train/val/test
    order.
    """
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-12:
        raise CuratorError(f"ratios must be positive and sum to 1, got {ratios}")
    by_sample: dict[str, list[PairEntry]] = {}
    sample_order: list[str] = []
    for pair in pairs:
        if pair.sample_id not in by_sample:
            by_sample[pair.sample_id] = []
            sample_order.append(pair.sample_id)
        by_sample[pair.sample_id].append(pair)
    rng = SplitMix64(seed)
    entries: list[PairEntry] = []
    for sample_id in sample_order:
        sample_pairs = list(by_sample[sample_id])
        rng.shuffle(sample_pairs)
        n = len(sample_pairs)
        train_n, val_n, _ = _largest_remainder(n, ratios)
        for position, pair in enumerate(sample_pairs):
            if position < train_n:
                name = "train"
            elif position < train_n + val_n:
                name = "val"
            else:
                name = "test"
            entries.append(
                PairEntry(
                    pair_id=pair.pair_id,
                    sample_id=pair.sample_id,
                    image_id=pair.image_id,
                    instruction_index=pair.instruction_index,
                    split=name,
                )
            )
    return PairManifest(entries=tuple(entries), seed=seed, ratios=tuple(ratios))


_SYNONYMS = [
    ("ingredients", "components"),
    ("quantities", "amounts"),
    ("recipe", "dish"),
    ("dish", "meal"),
]

_PREFIXES = (
    "Please answer: ",
    "Could you tell me: ",
    "I would like to know: ",
    "Quick question: ",
)


def _flip_mood(question: str) -> str:
    """Swap interrogative and imperative phrasing, deterministically."""
    text = question.strip()
    if text.endswith("?"):
        body = text[:-1].strip()
        lowered = body.lower()
        for lead in ("what are ", "what ", "which "):
            if lowered.startswith(lead):
                return "Identify " + body[len(lead):].strip() + "."
        return "Describe the following: " + body + "."
    body = text.rstrip(".").strip()
    if not body:
        return text
    return "Can you " + body[0].lower() + body[1:] + "?"


def _rule_based_variants(base: str) -> list[str]:
    variants = [base, _flip_mood(base)]
    for word, replacement in _SYNONYMS:
        if word in base.lower():
            replaced = base.replace(word, replacement).replace(
                word.capitalize(), replacement.capitalize()
            )
            variants.append(replaced)
    for prefix in _PREFIXES:
        variants.append(prefix + base)
    return variants


class HttpRephraser:
    """Client for the external rephrasing endpoint.

    Wire contract: POST {"text": s, "n": k} -> {"variants": [...]}.
    """

    def __init__(self, endpoint: str, timeout_s: float = 10.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def __call__(self, text: str, n: int) -> list[str]:
        response = requests.post(
            self.endpoint, json={"text": text, "n": n}, timeout=self.timeout_s
        )
        response.raise_for_status()
        return list(response.json()["variants"])


def augment_questions(
    base: str,
    rephraser: Callable[[str, int], list[str]] | None = None,
    count: int = 1,
) -> list[str]:
    """Up to count distinct question variants, the base always first.

    A failing external rephraser falls back to the rule-based transforms with
    a logged warning.
    """
    if count < 1:
        raise CuratorError(f"count must be >= 1, got {count}")
    candidates: list[str] = [base]
    if rephraser is not None:
        try:
            candidates.extend(rephraser(base, count))
        except Exception as exc:
            logger.warning("rephraser failed (%s); using rule-based fallback", exc)
            candidates.extend(_rule_based_variants(base)[1:])
    else:
        candidates.extend(_rule_based_variants(base)[1:])
    seen: set[str] = set()
    unique: list[str] = []
    for candidate in candidates:
        if candidate not in seen:
            seen.add(candidate)
            unique.append(candidate)
        if len(unique) == count:
            break
    return unique


def load_catalog(stream: IO[str] | str) -> list[RecipeSample]:
    """Read a line-delimited JSON catalog of recipe samples."""
    text = stream if isinstance(stream, str) else stream.read()
    samples = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CuratorError(f"catalog line {line_number}: invalid JSON ({exc})") from None
        samples.append(
            RecipeSample(
                sample_id=payload["sample_id"],
                class_label=payload["class_label"],
                image_ids=tuple(payload.get("image_ids", [])),
                instructions=tuple(payload.get("instructions", [])),
                nutrition_text=payload.get("nutrition_text", ""),
            )
        )
    return samples


def _config_digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def curate(
    catalog: Sequence[RecipeSample],
    target: int,
    seed: int,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    max_images: int = DEFAULT_MAX_IMAGES,
    instructions_per_image: int = DEFAULT_INSTRUCTIONS_PER_IMAGE,
) -> tuple[PairManifest, list[str]]:
    """Full pipeline: balanced sample -> pairs -> split.

    Returns the manifest and warning strings for skipped zero-image samples.
    """
    selected = class_balanced_sample(catalog, target, seed)
    by_id = {sample.sample_id: sample for sample in catalog}
    pairs: list[PairEntry] = []
    warnings: list[str] = []
    for sample_id in selected:
        sample = by_id[sample_id]
        sample_pairs = build_pairs(sample, max_images, instructions_per_image)
        if not sample_pairs:
            warnings.append(f"sample {sample_id} has no images; skipped")
            continue
        pairs.extend(sample_pairs)
    manifest = split(pairs, ratios, seed)
    return manifest, warnings


def serialize_manifest(
    manifest: PairManifest,
    max_images: int = DEFAULT_MAX_IMAGES,
    instructions_per_image: int = DEFAULT_INSTRUCTIONS_PER_IMAGE,
) -> str:
    """Manifest file: a JSON header line, then one JSON entry per pair."""
    config = {
        "seed": manifest.seed,
        "ratios": list(manifest.ratios),
        "max_images": max_images,
        "instructions_per_image": instructions_per_image,
    }
    header = dict(config)
    header["config_digest"] = _config_digest(config)
    header["entry_count"] = len(manifest.entries)
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for entry in manifest.entries:
        lines.append(
            json.dumps(
                {
                    "pair_id": entry.pair_id,
                    "sample_id": entry.sample_id,
                    "image_id": entry.image_id,
                    "instruction_index": entry.instruction_index,
                    "split": entry.split,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + "\n"


def write_manifest(manifest: PairManifest, path: str, **config) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_manifest(manifest, **config))
