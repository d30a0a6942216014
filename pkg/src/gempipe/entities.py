"""Entity data model: attribute trees, entries, collections, and JSONL ingestion.

An attribute value is one of four kinds: a 64-bit float, a Unicode string,
a homogeneous list of values, or a nested name -> value mapping.  Nested
mappings preserve insertion order so that downstream serialization is
deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Union

from .errors import DataError

AttributeValue = Union[float, str, list["AttributeValue"], dict[str, "AttributeValue"]]


class StructureKind(str, Enum):
    STRUCTURED = "structured"
    SEMI_STRUCTURED = "semi_structured"
    UNSTRUCTURED = "unstructured"


@dataclass(frozen=True)
class EntityEntry:
    """A named, possibly nested attribute tree.

    ``attributes`` is treated as read-only after construction; dict order
    is the document order of the source file.
    """

    id: str
    attributes: dict[str, AttributeValue]

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("entity id must be nonempty")
        for name in self.attributes:
            if not name:
                raise DataError(f"entry {self.id!r}: attribute names must be nonempty")


@dataclass
class EntityCollection:
    name: str
    entries: list[EntityEntry]
    structure_kind: StructureKind

    def by_id(self) -> dict[str, EntityEntry]:
        return {e.id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


def _value_kind(value: AttributeValue) -> str:
    if isinstance(value, str):
        return "text"
    if isinstance(value, float):
        return "number"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "nested"
    raise DataError(f"unsupported attribute value type: {type(value).__name__}")


def _convert_json_value(raw: object) -> AttributeValue | None:
    """Map a parsed JSON value onto the attribute model.

    Nulls are dropped (the attribute is omitted); booleans become the
    strings "true"/"false" since the model has no boolean kind.
    """
    if raw is None:
        return None
    if isinstance(raw, bool):
        return "true" if raw else "false"
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        return raw
    if isinstance(raw, list):
        items = [_convert_json_value(v) for v in raw]
        items = [v for v in items if v is not None]
        kinds = {_value_kind(v) for v in items}
        if len(kinds) > 1:
            raise DataError(f"list elements must share one kind, got {sorted(kinds)}")
        return items
    if isinstance(raw, dict):
        out: dict[str, AttributeValue] = {}
        for key, val in raw.items():
            if not isinstance(key, str) or not key:
                raise DataError("attribute names must be nonempty strings")
            converted = _convert_json_value(val)
            if converted is not None:
                out[key] = converted
        return out
    raise DataError(f"unsupported JSON value: {raw!r}")


def entry_from_json(obj: dict[str, object]) -> EntityEntry:
    entry_id = obj.get("id")
    if not isinstance(entry_id, str) or not entry_id:
        raise DataError('entry is missing a nonempty string "id" field')
    attributes: dict[str, AttributeValue] = {}
    for key, val in obj.items():
        if key == "id":
            continue
        converted = _convert_json_value(val)
        if converted is not None:
            attributes[key] = converted
    return EntityEntry(id=entry_id, attributes=attributes)


def entry_to_json(entry: EntityEntry) -> dict[str, object]:
    out: dict[str, object] = {"id": entry.id}
    out.update(entry.attributes)
    return out


def parse_collection(path: str | Path, name: str) -> EntityCollection:
    """Parse a UTF-8 line-delimited JSON file into a collection.

    Each line must be an object carrying an "id" string field; all other
    fields become attributes.  Raises :class:`DataError` with the line
    number on malformed lines and names the offending id on duplicates.
    """
    path = Path(path)
    entries: list[EntityEntry] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise DataError("line is not a JSON object")
                entry = entry_from_json(obj)
            except (json.JSONDecodeError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if entry.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {entry.id!r}")
            seen.add(entry.id)
            entries.append(entry)
    return EntityCollection(name=name, entries=entries, structure_kind=classify_structure(entries))


def write_collection(collection: EntityCollection, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for entry in collection.entries:
            fh.write(json.dumps(entry_to_json(entry), ensure_ascii=False) + "\n")


def _is_flat(entry: EntityEntry) -> bool:
    return all(_value_kind(v) in ("text", "number") for v in entry.attributes.values())


def classify_structure(entries: list[EntityEntry]) -> StructureKind:
    """Three-way structure classification.

    Unstructured iff every entry has exactly one text attribute; structured
    iff all entries are flat (no lists or nested maps) and share one
    attribute set; semi-structured otherwise.
    """
    if not entries:
        raise DataError("cannot classify an empty collection")
    if all(
        len(e.attributes) == 1 and _value_kind(next(iter(e.attributes.values()))) == "text"
        for e in entries
    ):
        return StructureKind.UNSTRUCTURED
    schemas = {frozenset(e.attributes) for e in entries}
    if len(schemas) == 1 and all(_is_flat(e) for e in entries):
        return StructureKind.STRUCTURED
    return StructureKind.SEMI_STRUCTURED


def format_number(value: float) -> str:
    """Render a float in its shortest round-trip decimal form.

    Integral values small enough for exact integer representation drop the
    trailing ".0"; everything else uses repr(), which is already the
    shortest repr that round-trips in Python 3.
    """
    if value.is_integer() and abs(value) < 1e16:
        short = str(int(value))
        if len(short) <= len(repr(value)):
            return short
    return repr(value)


def render_text(value: AttributeValue) -> str:
    """Flatten any attribute value to plain text.

    Numbers use the shortest round-trip form, list elements are joined by
    a single space in input order, and nested maps contribute their values
    (names omitted) depth-first.
    """
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, list):
        return " ".join(render_text(v) for v in value)
    if isinstance(value, dict):
        return " ".join(render_text(v) for v in value.values())
    raise DataError(f"unsupported attribute value type: {type(value).__name__}")


def flatten_attributes(entry: EntityEntry) -> list[tuple[str, str]]:
    """Depth-first (dotted path, text value) pairs for an entry.

    Lists collapse into a single path whose text joins the rendered
    elements with spaces.
    """
    out: list[tuple[str, str]] = []

    def walk(prefix: str, value: AttributeValue) -> None:
        if isinstance(value, dict):
            for name, sub in value.items():
                walk(f"{prefix}.{name}" if prefix else name, sub)
        else:
            out.append((prefix, render_text(value)))

    for name, value in entry.attributes.items():
        walk(name, value)
    return out


def get_path(entry: EntityEntry, path: str) -> AttributeValue | None:
    """Resolve a dotted attribute path; None when any segment is missing."""
    node: AttributeValue | None = entry.attributes  # type: ignore[assignment]
    for segment in path.split("."):
        if not isinstance(node, dict) or segment not in node:
            return None
        node = node[segment]
    return node


def entry_text(entry: EntityEntry) -> str:
    """All text content of an entry, flattened and space-joined."""
    return " ".join(text for _, text in flatten_attributes(entry))


def iter_jsonl(path: str | Path) -> Iterator[dict[str, object]]:
    """Yield parsed objects from a line-delimited JSON file."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc


__all__ = [
    "AttributeValue",
    "EntityCollection",
    "EntityEntry",
    "StructureKind",
    "classify_structure",
    "entry_from_json",
    "entry_text",
    "entry_to_json",
    "flatten_attributes",
    "format_number",
    "get_path",
    "iter_jsonl",
    "parse_collection",
    "render_text",
    "write_collection",
]
