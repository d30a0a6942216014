"""Collection cleaning: text normalization, near-duplicate removal, spam filtering."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .entities import EntityCollection, EntityEntry, entry_text
from .errors import ConfigError

_URL_RE = re.compile(r"^(https?://|www\.)\S+$", re.IGNORECASE)


def normalize_text(s: str) -> str:
    """NFC-normalize, lowercase, and collapse whitespace runs."""
    s = unicodedata.normalize("NFC", s)
    return " ".join(s.lower().split())


def qgrams(s: str, q: int) -> frozenset[str]:
    """Character q-gram set; strings shorter than q contribute themselves."""
    if len(s) < q:
        return frozenset((s,))
    return frozenset(s[i : i + q] for i in range(len(s) - q + 1))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass
class DedupReport:
    """Which entries were dropped and why; serializable for the CLI --report flag."""

    clusters: list[tuple[str, list[str]]] = field(default_factory=list)
    removed_spam: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "clusters": [{"kept": kept, "removed": removed} for kept, removed in self.clusters],
            "removed_spam": list(self.removed_spam),
        }


def dedup_collection(
    collection: EntityCollection, q: int = 3, threshold: float = 0.9
) -> tuple[EntityCollection, DedupReport]:
    """Cluster entries whose q-gram Jaccard reaches the threshold and keep one per cluster.

    Clustering is transitive (union-find over similar pairs); the entry with
    the lexicographically smallest id represents each cluster, which makes
    the result independent of input order.
    """
    if q < 2:
        raise ConfigError(f"q-gram size must be >= 2, got {q}")
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")

    entries = collection.entries
    grams = [qgrams(normalize_text(entry_text(e)), q) for e in entries]

    # Candidate pairs share at least one gram; with threshold > 0 no other
    # pair can reach it.
    index: dict[str, list[int]] = {}
    for i, gs in enumerate(grams):
        for g in gs:
            index.setdefault(g, []).append(i)

    uf = _UnionFind(len(entries))
    checked: set[tuple[int, int]] = set()
    for postings in index.values():
        if len(postings) < 2:
            continue
        for a_pos, i in enumerate(postings):
            for j in postings[a_pos + 1 :]:
                key = (i, j)
                if key in checked:
                    continue
                checked.add(key)
                if jaccard(grams[i], grams[j]) >= threshold:
                    uf.union(i, j)

    clusters: dict[int, list[int]] = {}
    for i in range(len(entries)):
        clusters.setdefault(uf.find(i), []).append(i)

    kept_indexes: set[int] = set()
    report = DedupReport()
    for members in clusters.values():
        by_id = sorted(members, key=lambda i: entries[i].id)
        kept = by_id[0]
        kept_indexes.add(kept)
        removed = [entries[i].id for i in by_id[1:]]
        if removed:
            report.clusters.append((entries[kept].id, removed))
    report.clusters.sort(key=lambda item: item[0])

    kept_entries = [e for i, e in enumerate(entries) if i in kept_indexes]
    deduped = EntityCollection(
        name=collection.name, entries=kept_entries, structure_kind=collection.structure_kind
    )
    return deduped, report


@dataclass(frozen=True)
class SpamRule:
    name: str
    matches: Callable[[EntityEntry], bool]


def min_length_rule(min_chars: int = 40) -> SpamRule:
    return SpamRule(
        name=f"min_length_{min_chars}",
        matches=lambda e: len(normalize_text(entry_text(e))) < min_chars,
    )


def url_only_rule() -> SpamRule:
    def is_url_only(e: EntityEntry) -> bool:
        text = entry_text(e).strip()
        return bool(_URL_RE.match(text))

    return SpamRule(name="url_only", matches=is_url_only)


def default_spam_rules(min_chars: int = 40) -> list[SpamRule]:
    # url_only first: a bare URL is spam regardless of its length.
    return [url_only_rule(), min_length_rule(min_chars)]


def spam_filter(
    collection: EntityCollection, rules: Sequence[SpamRule]
) -> tuple[EntityCollection, list[str]]:
    """Drop entries matching any rule; returns the surviving collection and removed ids."""
    if not rules:
        raise ConfigError("spam_filter requires at least one rule")
    kept: list[EntityEntry] = []
    removed: list[str] = []
    for entry in collection.entries:
        if any(rule.matches(entry) for rule in rules):
            removed.append(entry.id)
        else:
            kept.append(entry)
    filtered = EntityCollection(
        name=collection.name, entries=kept, structure_kind=collection.structure_kind
    )
    return filtered, removed


__all__ = [
    "DedupReport",
    "SpamRule",
    "dedup_collection",
    "default_spam_rules",
    "jaccard",
    "min_length_rule",
    "normalize_text",
    "qgrams",
    "spam_filter",
    "url_only_rule",
]
