"""Rule-based blocking: generate candidate pairs without quadratic comparison.

Each blocking rule builds an index over the right-hand collection and probes
it with the left-hand one, so the cost is linear in input plus output size.
Rules compose by union or intersection.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .entities import EntityCollection, EntityEntry, get_path
from .errors import ConfigError, DataError
from .processing import jaccard, normalize_text, qgrams

_TOKEN_RE = re.compile(r"[0-9a-z]+")

PairKey = tuple[str, str]


@dataclass(frozen=True)
class CandidatePair:
    pair_id: str
    left_id: str
    right_id: str
    provenance: tuple[str, ...]

    @staticmethod
    def make(left_id: str, right_id: str, provenance: Iterable[str]) -> "CandidatePair":
        return CandidatePair(
            pair_id=f"{left_id}::{right_id}",
            left_id=left_id,
            right_id=right_id,
            provenance=tuple(provenance),
        )

    def to_json(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "left_id": self.left_id,
            "right_id": self.right_id,
            "provenance": list(self.provenance),
        }


def pair_id_parts(pair_id: str) -> PairKey:
    """Split a "<left>::<right>" pair id back into its components."""
    left, sep, right = pair_id.partition("::")
    if not sep or not left or not right:
        raise DataError(f"malformed pair id {pair_id!r}")
    return left, right


PairMap = dict[PairKey, CandidatePair]


def _field_text(entry: EntityEntry, path: str) -> str | None:
    """Normalized text at a path; None when missing (entry skipped), error on non-text."""
    value = get_path(entry, path)
    if value is None:
        return None
    if not isinstance(value, str):
        raise DataError(f"field {path!r} on entry {entry.id!r} is not text")
    return normalize_text(value)


def tokenize_words(text: str) -> frozenset[str]:
    """Lowercased tokens split on non-alphanumeric boundaries."""
    return frozenset(_TOKEN_RE.findall(normalize_text(text)))


def exact_match_block(
    a: EntityCollection, b: EntityCollection, field_path: str, rule_name: str = "exact_match"
) -> PairMap:
    """Pairs whose normalized field values are byte-equal, via a hash index on B."""
    index: dict[str, list[str]] = {}
    for entry in b.entries:
        value = _field_text(entry, field_path)
        if value is not None:
            index.setdefault(value, []).append(entry.id)
    out: PairMap = {}
    for entry in a.entries:
        value = _field_text(entry, field_path)
        if value is None:
            continue
        for right_id in index.get(value, ()):
            out[(entry.id, right_id)] = CandidatePair.make(entry.id, right_id, (rule_name,))
    return out


def qgram_block(
    a: EntityCollection,
    b: EntityCollection,
    field_path: str,
    q: int = 3,
    min_shared_grams: int = 2,
    jaccard_refine: float = 0.3,
    max_gram_freq: float = 0.05,
    rule_name: str = "qgram",
) -> PairMap:
    """Q-gram blocking through an inverted index with a frequency filter.

    Grams whose document frequency in B exceeds ``max_gram_freq`` (a fraction
    of |B| when < 1, otherwise an absolute count) are dropped from the index.
    Pairs sharing at least ``min_shared_grams`` surviving grams are emitted,
    then refined by full (unpruned) gram-set Jaccard.
    """
    if q < 2:
        raise ConfigError(f"q-gram size must be >= 2, got {q}")
    b_grams: dict[str, frozenset[str]] = {}
    index: dict[str, list[str]] = {}
    for entry in b.entries:
        value = _field_text(entry, field_path)
        if value is None:
            continue
        grams = qgrams(value, q)
        b_grams[entry.id] = grams
        for g in grams:
            index.setdefault(g, []).append(entry.id)

    if max_gram_freq < 1:
        freq_cap = max(1, math.ceil(max_gram_freq * len(b.entries)))
    else:
        freq_cap = int(max_gram_freq)
    index = {g: ids for g, ids in index.items() if len(ids) <= freq_cap}

    out: PairMap = {}
    for entry in a.entries:
        value = _field_text(entry, field_path)
        if value is None:
            continue
        grams = qgrams(value, q)
        shared: dict[str, int] = {}
        for g in grams:
            for right_id in index.get(g, ()):
                shared[right_id] = shared.get(right_id, 0) + 1
        for right_id, count in shared.items():
            if count < min_shared_grams:
                continue
            if jaccard(grams, b_grams[right_id]) >= jaccard_refine:
                out[(entry.id, right_id)] = CandidatePair.make(entry.id, right_id, (rule_name,))
    return out


def keyword_overlap_block(
    a: EntityCollection,
    b: EntityCollection,
    left_path: str,
    right_path: str,
    min_shared: int = 1,
    stopwords: frozenset[str] = frozenset(),
    rule_name: str = "keyword_overlap",
) -> PairMap:
    """Pairs sharing at least min_shared non-stopword tokens between two fields."""
    if min_shared < 1:
        raise ConfigError(f"min_shared must be >= 1, got {min_shared}")
    index: dict[str, list[str]] = {}
    for entry in b.entries:
        value = _field_text(entry, right_path)
        if value is None:
            continue
        for token in tokenize_words(value) - stopwords:
            index.setdefault(token, []).append(entry.id)
    out: PairMap = {}
    for entry in a.entries:
        value = _field_text(entry, left_path)
        if value is None:
            continue
        shared: dict[str, int] = {}
        for token in tokenize_words(value) - stopwords:
            for right_id in index.get(token, ()):
                shared[right_id] = shared.get(right_id, 0) + 1
        for right_id, count in shared.items():
            if count >= min_shared:
                out[(entry.id, right_id)] = CandidatePair.make(entry.id, right_id, (rule_name,))
    return out


@dataclass(frozen=True)
class ExactMatchRule:
    name: str
    field_path: str

    def apply(self, a: EntityCollection, b: EntityCollection) -> PairMap:
        return exact_match_block(a, b, self.field_path, rule_name=self.name)


@dataclass(frozen=True)
class KeywordOverlapRule:
    name: str
    left_path: str
    right_path: str
    min_shared: int = 1
    stopwords: frozenset[str] = frozenset()

    def apply(self, a: EntityCollection, b: EntityCollection) -> PairMap:
        return keyword_overlap_block(
            a, b, self.left_path, self.right_path, self.min_shared, self.stopwords, rule_name=self.name
        )


@dataclass(frozen=True)
class QGramRule:
    name: str
    field_path: str
    q: int = 3
    min_shared_grams: int = 2
    jaccard_refine: float = 0.3
    max_gram_freq: float = 0.05

    def __post_init__(self) -> None:
        if self.q < 2:
            raise ConfigError(f"rule {self.name!r}: q must be >= 2")
        if self.min_shared_grams < 1:
            raise ConfigError(f"rule {self.name!r}: min_shared_grams must be >= 1")
        if not 0.0 <= self.jaccard_refine <= 1.0:
            raise ConfigError(f"rule {self.name!r}: jaccard_refine must be in [0, 1]")

    def apply(self, a: EntityCollection, b: EntityCollection) -> PairMap:
        return qgram_block(
            a,
            b,
            self.field_path,
            q=self.q,
            min_shared_grams=self.min_shared_grams,
            jaccard_refine=self.jaccard_refine,
            max_gram_freq=self.max_gram_freq,
            rule_name=self.name,
        )


BlockingRule = ExactMatchRule | KeywordOverlapRule | QGramRule


def compose_blockers(rules: Sequence[BlockingRule], mode: str = "union"):
    """Combine rules into one blocking function.

    Union keeps pairs produced by any rule, merging provenance; intersection
    keeps only pairs produced by every rule.
    """
    if not rules:
        raise ConfigError("compose_blockers requires at least one rule")
    if mode not in ("union", "intersection"):
        raise ConfigError(f"unknown composition mode {mode!r}")

    def block(a: EntityCollection, b: EntityCollection) -> PairMap:
        outputs = [rule.apply(a, b) for rule in rules]
        if mode == "union":
            merged: dict[PairKey, list[str]] = {}
            for output in outputs:
                for key, pair in output.items():
                    merged.setdefault(key, []).extend(pair.provenance)
            return {
                key: CandidatePair.make(key[0], key[1], sorted(set(names)))
                for key, names in merged.items()
            }
        common = set(outputs[0])
        for output in outputs[1:]:
            common &= set(output)
        names = [rule.name for rule in rules]
        return {key: CandidatePair.make(key[0], key[1], names) for key in common}

    return block


def estimate_recall(pairs: Mapping[PairKey, CandidatePair] | set[PairKey], gold: set[PairKey]) -> float:
    """Fraction of gold pairs surviving blocking."""
    if not gold:
        raise DataError("recall is undefined for an empty gold set")
    keys = set(pairs)
    return len(gold & keys) / len(gold)


def rule_from_json(obj: dict) -> BlockingRule:
    kind = obj.get("kind")
    name = obj.get("name") or str(kind)
    if kind == "exact_match":
        return ExactMatchRule(name=name, field_path=obj["field"])
    if kind == "keyword_overlap":
        return KeywordOverlapRule(
            name=name,
            left_path=obj["left_field"],
            right_path=obj["right_field"],
            min_shared=int(obj.get("min_shared", 1)),
            stopwords=frozenset(obj.get("stopwords", ())),
        )
    if kind == "qgram":
        return QGramRule(
            name=name,
            field_path=obj["field"],
            q=int(obj.get("q", 3)),
            min_shared_grams=int(obj.get("min_shared_grams", 2)),
            jaccard_refine=float(obj.get("jaccard_refine", 0.3)),
            max_gram_freq=float(obj.get("max_gram_freq", 0.05)),
        )
    raise ConfigError(f"unknown blocking rule kind {kind!r}")


def load_rules_config(path: str | Path) -> tuple[list[BlockingRule], str]:
    """Read a {"mode": ..., "rules": [...]} JSON config."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    rules = [rule_from_json(r) for r in obj.get("rules", [])]
    if not rules:
        raise ConfigError(f"{path}: no blocking rules defined")
    return rules, obj.get("mode", "union")


def write_pairs(pairs: Mapping[PairKey, CandidatePair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for key in sorted(pairs):
            fh.write(json.dumps(pairs[key].to_json()) + "\n")


def read_pairs(path: str | Path) -> PairMap:
    from .entities import iter_jsonl

    out: PairMap = {}
    for obj in iter_jsonl(path):
        pair = CandidatePair(
            pair_id=obj["pair_id"],
            left_id=obj["left_id"],
            right_id=obj["right_id"],
            provenance=tuple(obj.get("provenance", ())),
        )
        out[(pair.left_id, pair.right_id)] = pair
    return out


__all__ = [
    "BlockingRule",
    "CandidatePair",
    "ExactMatchRule",
    "KeywordOverlapRule",
    "PairMap",
    "QGramRule",
    "compose_blockers",
    "estimate_recall",
    "exact_match_block",
    "keyword_overlap_block",
    "load_rules_config",
    "pair_id_parts",
    "qgram_block",
    "read_pairs",
    "rule_from_json",
    "tokenize_words",
    "write_pairs",
]
