"""HTTP labeling service: serve candidate pairs with knowledge-injected views,
accept match/nomatch/skip labels, report label and blocking quality, and run
the explanation pipeline against a loaded checkpoint.

State is an append-only label file plus in-memory indexes rebuilt at startup;
writes are serialized through the store's single lock.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .blocking import CandidatePair, estimate_recall, read_pairs
from .checkpoint import load_model
from .dataset import LabeledPair, LabelStore
from .entities import EntityEntry, flatten_attributes, iter_jsonl, parse_collection
from .errors import ConfigError
from .explain import explain_pair
from .knowledge import RuleBasedClassifier, load_rule_set, restructure_collection
from .matcher import MatchModel


@dataclass
class ServiceConfig:
    collection_a: str
    collection_b: str
    pairs: str
    labels: str
    gold: str | None = None
    checkpoint: str | None = None
    listen: str = "127.0.0.1:8700"
    cors_origin: str | None = None
    text_field: str | None = None
    rules_dir: str | None = None

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        knowledge = obj.pop("knowledge", None) or {}
        base = Path(path).parent

        def resolve(value: str | None) -> str | None:
            if value is None:
                return None
            p = Path(value)
            return str(p if p.is_absolute() else base / p)

        cfg = cls(
            collection_a=resolve(obj["collection_a"]),
            collection_b=resolve(obj["collection_b"]),
            pairs=resolve(obj["pairs"]),
            labels=resolve(obj["labels"]),
            gold=resolve(obj.get("gold")),
            checkpoint=resolve(obj.get("checkpoint")),
            listen=obj.get("listen", "127.0.0.1:8700"),
            cors_origin=obj.get("cors_origin"),
            text_field=knowledge.get("text_field"),
            rules_dir=resolve(knowledge.get("rules_dir")),
        )
        return cfg


class LabelRequest(BaseModel):
    label: str
    annotator: str = "anonymous"


def _sections(entry: EntityEntry) -> list[dict]:
    """Top-level attributes rendered as named text sections."""
    sections: dict[str, list[str]] = {}
    for path, text in flatten_attributes(entry):
        top = path.split(".")[0]
        sections.setdefault(top, []).append(text)
    return [{"name": name, "text": " ".join(texts)} for name, texts in sections.items()]


def read_gold(path: str | Path) -> set[tuple[str, str]]:
    """Gold matches from a JSONL file of {pair_id|left_id/right_id, label?} records."""
    gold: set[tuple[str, str]] = set()
    for obj in iter_jsonl(path):
        if obj.get("label", "match") != "match":
            continue
        if "left_id" in obj and "right_id" in obj:
            gold.add((obj["left_id"], obj["right_id"]))
        else:
            left, _, right = str(obj["pair_id"]).partition("::")
            gold.add((left, right))
    return gold


class LabelerState:
    """Loaded collections, candidate pairs, label store, and optional model."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        collection_a = parse_collection(config.collection_a, "left")
        collection_b = parse_collection(config.collection_b, "right")
        if config.text_field:
            rules = load_rule_set(config.rules_dir) if config.rules_dir else None
            classifier = RuleBasedClassifier(rules)
            collection_a = restructure_collection(collection_a, config.text_field, classifier)
            collection_b = restructure_collection(collection_b, config.text_field, classifier)
        self.left = collection_a.by_id()
        self.right = collection_b.by_id()
        self.pairs: dict[str, CandidatePair] = {
            pair.pair_id: pair for pair in read_pairs(config.pairs).values()
        }
        self.order = sorted(self.pairs)
        self.store = LabelStore(config.labels)
        self.gold = read_gold(config.gold) if config.gold else None
        self.model: MatchModel | None = (
            load_model(config.checkpoint) if config.checkpoint else None
        )

    def entries_for(self, pair: CandidatePair) -> tuple[EntityEntry, EntityEntry]:
        left = self.left.get(pair.left_id)
        right = self.right.get(pair.right_id)
        if left is None or right is None:
            raise HTTPException(status_code=404, detail=f"entries for {pair.pair_id} not loaded")
        return left, right

    def pair_view(self, pair: CandidatePair, current: dict[str, LabeledPair]) -> dict:
        left, right = self.entries_for(pair)
        record = current.get(pair.pair_id)
        return {
            "pair_id": pair.pair_id,
            "left": {"id": left.id, "sections": _sections(left)},
            "right": {"id": right.id, "sections": _sections(right)},
            "provenance": list(pair.provenance),
            "label": record.label if record else None,
        }


def create_app(config: ServiceConfig) -> FastAPI:
    state = LabelerState(config)
    app = FastAPI(title="gempipe labeler")
    app.state.labeler = state
    if config.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.get("/pairs")
    def list_pairs(
        status: str = Query("all"),
        limit: int = Query(50, ge=1, le=500),
        cursor: str | None = Query(None),
    ) -> dict:
        if status not in ("all", "labeled", "unlabeled"):
            raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        if cursor is not None and cursor not in state.pairs:
            raise HTTPException(status_code=400, detail=f"unknown cursor {cursor!r}")
        current = state.store.current()
        start = state.order.index(cursor) + 1 if cursor is not None else 0

        def wanted(pair_id: str) -> bool:
            labeled = pair_id in current
            return status == "all" or (status == "labeled") == labeled

        filtered = [pair_id for pair_id in state.order[start:] if wanted(pair_id)]
        page = [state.pair_view(state.pairs[pid], current) for pid in filtered[:limit]]
        next_cursor = filtered[limit - 1] if len(filtered) > limit else None
        return {"pairs": page, "next_cursor": next_cursor}

    @app.post("/pairs/{pair_id}/label")
    def post_label(pair_id: str, request: LabelRequest) -> dict:
        if pair_id not in state.pairs:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id!r}")
        if request.label not in ("match", "nomatch", "skip"):
            raise HTTPException(status_code=400, detail=f"invalid label {request.label!r}")
        record = LabeledPair(
            pair_id=pair_id,
            label=request.label,
            annotator=request.annotator,
            timestamp=time.time(),
            source="human",
        )
        state.store.append(record)
        return record.to_json()

    @app.get("/stats")
    def stats() -> dict:
        current = state.store.current()
        counts = {"match": 0, "nomatch": 0}
        for record in current.values():
            if record.label in counts:
                counts[record.label] += 1
        labeled = sum(counts.values())
        provenance: dict[str, int] = {}
        for pair in state.pairs.values():
            for rule in pair.provenance:
                provenance[rule] = provenance.get(rule, 0) + 1
        recall = None
        if state.gold:
            keys = {(p.left_id, p.right_id) for p in state.pairs.values()}
            recall = estimate_recall(keys, state.gold)
        return {
            "total_pairs": len(state.pairs),
            "labeled": labeled,
            "unlabeled": len(state.pairs) - labeled,
            "counts": counts,
            "positive_fraction": counts["match"] / labeled if labeled else None,
            "provenance": provenance,
            "recall": recall,
        }

    @app.get("/pairs/{pair_id}/explain")
    def explain(pair_id: str) -> dict:
        if state.model is None:
            raise HTTPException(status_code=409, detail="no model checkpoint loaded")
        if pair_id not in state.pairs:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id!r}")
        pair = state.pairs[pair_id]
        left, right = state.entries_for(pair)
        explanation = explain_pair(state.model, (left, right), pair_id)
        return explanation.to_json()

    return app


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    host, _, port = config.listen.partition(":")
    if not port:
        raise ConfigError(f"listen address {config.listen!r} must be host:port")
    uvicorn.run(create_app(config), host=host, port=int(port), log_level="warning")


__all__ = ["LabelerState", "ServiceConfig", "create_app", "read_gold", "run_service"]
