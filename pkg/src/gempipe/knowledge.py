"""External knowledge injection: sentence splitting, topic classification,
and restructuring long text fields into topic attributes.

Sentences classified to a topic are grouped (in original order) into a new
string attribute named after the topic; sentences nobody claims fall into
the "none" bucket and are dropped from the model input.
"""

from __future__ import annotations

import json
import re
import subprocess
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol

import httpx

from .entities import EntityCollection, EntityEntry, get_path
from .errors import ConfigError, DataError
from .processing import normalize_text

NONE_LABEL = "none"

_BULLET_RE = re.compile(r"^\s*[-*•]\s+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")


def split_sentences(doc: str) -> list[str]:
    """Deterministic rule-based sentence splitting.

    Newlines always break sentences; bullet lines stand alone; within a
    line, sentence-final punctuation followed by whitespace and a capital
    letter ends a sentence.
    """
    sentences: list[str] = []
    for line in doc.splitlines():
        line = line.strip()
        if not line:
            continue
        if _BULLET_RE.match(line):
            sentences.append(line)
            continue
        for piece in _SENTENCE_SPLIT_RE.split(line):
            piece = piece.strip()
            if piece:
                sentences.append(piece)
    return sentences


@dataclass(frozen=True)
class KeywordRuleSet:
    """Keyword/phrase lists per topic; list order is the tie-break priority."""

    topics: tuple[str, ...]
    keywords: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        if NONE_LABEL in self.topics:
            raise ConfigError(f'"{NONE_LABEL}" is the fallback label and carries no keywords')
        for topic in self.topics:
            if topic not in self.keywords:
                raise ConfigError(f"topic {topic!r} has no keyword list")

    def compiled(self) -> list[tuple[str, re.Pattern[str]]]:
        cached = getattr(self, "_compiled", None)
        if cached is None:
            cached = []
            for topic in self.topics:
                words = sorted(self.keywords[topic], key=len, reverse=True)
                if not words:
                    continue
                alternation = "|".join(re.escape(w) for w in words)
                cached.append((topic, re.compile(rf"\b(?:{alternation})\b")))
            object.__setattr__(self, "_compiled", cached)
        return cached


def load_rule_set(directory: str | Path) -> KeywordRuleSet:
    """Load a rule directory: topics.json lists the priority order, and each
    <topic>.txt holds one lowercase keyword or phrase per line."""
    directory = Path(directory)
    manifest = directory / "topics.json"
    if manifest.exists():
        order = json.loads(manifest.read_text(encoding="utf-8"))["order"]
    else:
        order = sorted(p.stem for p in directory.glob("*.txt"))
    keywords: dict[str, frozenset[str]] = {}
    for topic in order:
        path = directory / f"{topic}.txt"
        if not path.exists():
            raise ConfigError(f"missing keyword file {path}")
        lines = [normalize_text(line) for line in path.read_text(encoding="utf-8").splitlines()]
        keywords[topic] = frozenset(line for line in lines if line)
    return KeywordRuleSet(topics=tuple(order), keywords=keywords)


def default_rule_set() -> KeywordRuleSet:
    """The shipped job-domain rules (qualification/benefit/duty/time/location/company)."""
    with resources.as_file(resources.files("gempipe").joinpath("data/topics")) as directory:
        return load_rule_set(directory)


def classify_sentence(sentence: str, rules: KeywordRuleSet) -> str:
    """Highest-priority topic whose keywords appear in the sentence; "none" otherwise."""
    normalized = normalize_text(sentence)
    for topic, pattern in rules.compiled():
        if pattern.search(normalized):
            return topic
    return NONE_LABEL


class SentenceClassifier(Protocol):
    """Total function from sentence to topic label."""

    def classify(self, sentence: str) -> str: ...


class RuleBasedClassifier:
    def __init__(self, rules: KeywordRuleSet | None = None) -> None:
        self.rules = rules or default_rule_set()
        self._patterns = self.rules.compiled()

    def classify(self, sentence: str) -> str:
        normalized = normalize_text(sentence)
        for topic, pattern in self._patterns:
            if pattern.search(normalized):
                return topic
        return NONE_LABEL


class ExternalClassifier:
    """Out-of-process scorer speaking a one-sentence-in/one-label-out JSON protocol.

    An http(s) address talks to POST /classify; anything else is run as a
    subprocess exchanging JSON lines over stdio.  Access is serialized per
    connection.
    """

    def __init__(self, address: str) -> None:
        self.address = address
        self._lock = threading.Lock()
        self._proc: subprocess.Popen[str] | None = None
        if not address.startswith(("http://", "https://")):
            self._proc = subprocess.Popen(
                address.split(),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )

    def classify(self, sentence: str) -> str:
        request = json.dumps({"sentence": sentence})
        with self._lock:
            if self._proc is not None:
                assert self._proc.stdin is not None and self._proc.stdout is not None
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
                if not line:
                    raise DataError(f"external classifier {self.address!r} closed its stream")
                response = json.loads(line)
            else:
                reply = httpx.post(f"{self.address.rstrip('/')}/classify", json={"sentence": sentence})
                reply.raise_for_status()
                response = reply.json()
        label = response.get("label")
        if not isinstance(label, str) or not label:
            raise DataError(f"external classifier returned no label: {response!r}")
        return label.lower()

    def close(self) -> None:
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=5)
            self._proc = None


def restructure_document(
    entry: EntityEntry, text_field: str, classifier: SentenceClassifier
) -> EntityEntry:
    """Replace a long text field with one attribute per classified topic.

    Sentences keep their original relative order inside each topic; "none"
    sentences are dropped.  Raises when the field is missing or not text.
    """
    value = get_path(entry, text_field)
    if value is None:
        raise DataError(f"entry {entry.id!r} has no field {text_field!r}")
    if not isinstance(value, str):
        raise DataError(f"field {text_field!r} on entry {entry.id!r} is not text")

    buckets: dict[str, list[str]] = {}
    label_order: list[str] = []
    for sentence in split_sentences(value):
        label = classifier.classify(sentence)
        if label == NONE_LABEL:
            continue
        if label not in buckets:
            buckets[label] = []
            label_order.append(label)
        buckets[label].append(sentence)

    # Topic attributes follow the classifier's configured order when known,
    # first-seen order otherwise, so serialization stays deterministic.
    rules = getattr(classifier, "rules", None)
    if rules is not None:
        ordered = [t for t in rules.topics if t in buckets]
        ordered += [t for t in label_order if t not in ordered]
    else:
        ordered = label_order

    attributes: dict[str, object] = {}
    segments = text_field.split(".")
    for name, val in entry.attributes.items():
        if name == segments[0]:
            if len(segments) == 1:
                continue
            pruned = _remove_path(val, segments[1:])
            if pruned is not None:
                attributes[name] = pruned
        else:
            attributes[name] = val
    for topic in ordered:
        attributes[topic] = " ".join(buckets[topic])
    return EntityEntry(id=entry.id, attributes=attributes)  # type: ignore[arg-type]


def _remove_path(value: object, segments: list[str]) -> object | None:
    if not isinstance(value, dict):
        return value
    out = {}
    for name, val in value.items():
        if name == segments[0]:
            if len(segments) == 1:
                continue
            pruned = _remove_path(val, segments[1:])
            if pruned is not None:
                out[name] = pruned
        else:
            out[name] = val
    return out or None


def restructure_collection(
    collection: EntityCollection, text_field: str, classifier: SentenceClassifier
) -> EntityCollection:
    """Restructure every entry carrying the text field; entries without it pass through

    unchanged, which makes the collection-level operation idempotent."""
    from .entities import classify_structure

    entries = []
    for entry in collection.entries:
        if get_path(entry, text_field) is None:
            entries.append(entry)
        else:
            entries.append(restructure_document(entry, text_field, classifier))
    return EntityCollection(
        name=collection.name,
        entries=entries,
        structure_kind=classify_structure(entries) if entries else collection.structure_kind,
    )


__all__ = [
    "ExternalClassifier",
    "KeywordRuleSet",
    "NONE_LABEL",
    "RuleBasedClassifier",
    "SentenceClassifier",
    "classify_sentence",
    "default_rule_set",
    "load_rule_set",
    "restructure_collection",
    "restructure_document",
    "split_sentences",
]
