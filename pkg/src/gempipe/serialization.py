"""Tagged serialization of entries and pairs into token-id sequences.

Entries render as "[COL] name [VAL] value" runs, recursing through nested
attributes; pairs join as "[CLS] left [SEP] right".  When anchor tags are
enabled, each top-level [COL] is replaced by a per-attribute tag (for
example [DUTY]) whose encoder output becomes that attribute's vector.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .entities import AttributeValue, EntityEntry, format_number
from .errors import ConfigError, DataError
from .processing import normalize_text

PAD, UNK, CLS, SEP, COL, VAL = 0, 1, 2, 3, 4, 5

RESERVED_TAGS = {
    "[PAD]": PAD,
    "[UNK]": UNK,
    "[CLS]": CLS,
    "[SEP]": SEP,
    "[COL]": COL,
    "[VAL]": VAL,
}

_TAG_RE = re.compile(r"^\[[A-Z0-9_]+\]$")
_SANITIZE_RE = re.compile(r"[^A-Z0-9]+")


def anchor_tag(attribute_name: str) -> str:
    """Uppercased bracketed tag for an attribute ("years exp" -> "[YEARS_EXP]")."""
    cleaned = _SANITIZE_RE.sub("_", attribute_name.upper()).strip("_")
    if not cleaned:
        raise ConfigError(f"attribute name {attribute_name!r} yields an empty anchor tag")
    return f"[{cleaned}]"


class Vocabulary:
    """Bijective token -> id map with stable reserved ids.

    Anchor tags are registered at construction so collisions with reserved
    tags (or with each other after sanitizing) fail early.
    """

    def __init__(self, anchor_names: list[str] | None = None) -> None:
        self.token_to_id: dict[str, int] = dict(RESERVED_TAGS)
        self.id_to_token: list[str] = list(RESERVED_TAGS)
        self.anchor_names: dict[str, str] = {}  # tag -> original attribute name
        for name in anchor_names or []:
            self.add_anchor(name)

    def add_anchor(self, attribute_name: str) -> str:
        tag = anchor_tag(attribute_name)
        if tag in RESERVED_TAGS:
            raise ConfigError(f"anchor tag {tag} collides with a reserved tag")
        if tag in self.anchor_names:
            if self.anchor_names[tag] != attribute_name:
                raise ConfigError(
                    f"anchor tag {tag} already maps to {self.anchor_names[tag]!r}"
                )
            return tag
        self.anchor_names[tag] = attribute_name
        self._assign(tag)
        return tag

    def _assign(self, token: str) -> int:
        if token in self.token_to_id:
            return self.token_to_id[token]
        token_id = len(self.id_to_token)
        self.token_to_id[token] = token_id
        self.id_to_token.append(token)
        return token_id

    def lookup(self, token: str, grow: bool = False) -> int:
        if token in self.token_to_id:
            return self.token_to_id[token]
        if grow:
            return self._assign(token)
        return UNK

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] if 0 <= i < len(self.id_to_token) else "[UNK]" for i in ids]

    def anchor_ids(self) -> dict[int, str]:
        """Token id -> original attribute name for every anchor tag."""
        return {self.token_to_id[tag]: name for tag, name in self.anchor_names.items()}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def to_json(self) -> dict:
        return {"tokens": self.token_to_id, "anchors": self.anchor_names}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        vocab = cls()
        vocab.anchor_names = dict(obj.get("anchors", {}))
        items = sorted(obj["tokens"].items(), key=lambda kv: kv[1])
        for token, token_id in items:
            if token in RESERVED_TAGS:
                if RESERVED_TAGS[token] != token_id:
                    raise DataError(f"reserved tag {token} moved to id {token_id}")
                continue
            assigned = vocab._assign(token)
            if assigned != token_id:
                raise DataError(f"vocabulary ids are not contiguous at {token!r}")
        return vocab

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SerializedSequence:
    """Token ids plus the anchor-tag positions that survived truncation."""

    token_ids: tuple[int, ...]
    anchors: tuple[tuple[str, int], ...] = ()
    side_boundary: int | None = None

    def __len__(self) -> int:
        return len(self.token_ids)


def _serialize_value(value: AttributeValue) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, dict):
        parts = [f"[COL] {name} [VAL] {_serialize_value(sub)}" for name, sub in value.items()]
        return " ".join(parts)
    if isinstance(value, list):
        # Scalar elements join into one string; nested elements concatenate
        # their recursive [COL]/[VAL] serializations.
        return " ".join(_serialize_value(v) for v in value)
    raise DataError(f"unsupported attribute value type: {type(value).__name__}")


def serialize_entry(entry: EntityEntry, use_anchor_tags: bool = False) -> str:
    """Render an entry as a tagged token string.

    Nested attributes recurse with inner [COL]/[VAL] tags; list values are
    space-joined (lists of nested maps concatenate their serializations).
    """
    parts = []
    for name, value in entry.attributes.items():
        tag = anchor_tag(name) if use_anchor_tags else "[COL]"
        parts.append(f"{tag} {name} [VAL] {_serialize_value(value)}")
    return " ".join(parts)


def tokenize(s: str, vocab: Vocabulary, grow: bool = False) -> list[int]:
    """Whitespace tokenization with normalized words and verbatim bracketed tags."""
    ids = []
    for piece in s.split():
        if _TAG_RE.match(piece):
            ids.append(vocab.lookup(piece, grow=grow))
        else:
            word = normalize_text(piece)
            if word:
                ids.append(vocab.lookup(word, grow=grow))
    return ids


def _find_anchors(ids: list[int], vocab: Vocabulary, offset: int = 0) -> list[tuple[str, int]]:
    anchor_ids = vocab.anchor_ids()
    return [(anchor_ids[t], offset + pos) for pos, t in enumerate(ids) if t in anchor_ids]


def _check_reserved(vocab: Vocabulary) -> None:
    for tag, token_id in RESERVED_TAGS.items():
        if vocab.token_to_id.get(tag) != token_id:
            raise DataError(f"vocabulary is missing reserved tag {tag}")


def serialize_single(
    entry: EntityEntry,
    vocab: Vocabulary,
    max_len: int,
    use_anchor_tags: bool = False,
    grow: bool = False,
) -> SerializedSequence:
    """"[CLS] serialize(entry)" truncated to max_len, with surviving anchors."""
    if max_len < 2:
        raise ConfigError(f"max_len must be >= 2, got {max_len}")
    _check_reserved(vocab)
    ids = tokenize(serialize_entry(entry, use_anchor_tags), vocab, grow=grow)[: max_len - 1]
    token_ids = [CLS] + ids
    return SerializedSequence(
        token_ids=tuple(token_ids),
        anchors=tuple(_find_anchors(ids, vocab, offset=1)),
    )


def serialize_pair(
    entry_a: EntityEntry,
    entry_b: EntityEntry,
    vocab: Vocabulary,
    max_len: int,
    use_anchor_tags: bool = False,
    grow: bool = False,
) -> SerializedSequence:
    """"[CLS] serialize(a) [SEP] serialize(b)" with proportional truncation.

    Each side receives floor((max_len - 2) / 2) tokens; a side shorter than
    its budget donates the remainder to the other.  The output always holds
    exactly one [CLS] and one [SEP].
    """
    if max_len < 8:
        raise ConfigError(f"max_len must be >= 8 for pairs, got {max_len}")
    _check_reserved(vocab)
    ids_a = tokenize(serialize_entry(entry_a, use_anchor_tags), vocab, grow=grow)
    ids_b = tokenize(serialize_entry(entry_b, use_anchor_tags), vocab, grow=grow)

    base = (max_len - 2) // 2
    spare_from_b = max(0, base - len(ids_b))
    keep_a = min(len(ids_a), base + spare_from_b)
    spare_from_a = max(0, base - len(ids_a))
    keep_b = min(len(ids_b), base + spare_from_a)

    ids_a = ids_a[:keep_a]
    ids_b = ids_b[:keep_b]
    token_ids = [CLS] + ids_a + [SEP] + ids_b
    boundary = 1 + len(ids_a)
    anchors = _find_anchors(ids_a, vocab, offset=1) + _find_anchors(
        ids_b, vocab, offset=boundary + 1
    )
    return SerializedSequence(
        token_ids=tuple(token_ids),
        anchors=tuple(anchors),
        side_boundary=boundary,
    )


def build_vocabulary(corpus: list[str], anchor_names: list[str] | None = None) -> Vocabulary:
    """Create a vocabulary over serialized strings; ids are append-only in corpus order."""
    vocab = Vocabulary(anchor_names=anchor_names)
    for text in corpus:
        tokenize(text, vocab, grow=True)
    return vocab


__all__ = [
    "CLS",
    "COL",
    "PAD",
    "RESERVED_TAGS",
    "SEP",
    "SerializedSequence",
    "UNK",
    "VAL",
    "Vocabulary",
    "anchor_tag",
    "build_vocabulary",
    "serialize_entry",
    "serialize_pair",
    "serialize_single",
    "tokenize",
]
