"""Model persistence: one .npz container holding config, vocabulary, and tensors.

Arrays are stored row-major in 64-bit, so save/load round-trips bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, EncoderParams
from .errors import DataError
from .matcher import MatchModel
from .serialization import Vocabulary

_FORMAT = "gempipe-checkpoint-v1"


def save_model(model: MatchModel, path: str | Path) -> None:
    meta = {
        "format": _FORMAT,
        "architecture": model.architecture,
        "schema_mode": model.schema_mode,
        "alignment": list(model.alignment),
        "structure_pooling": model.structure_pooling,
        "knowledge": model.knowledge,
        "text_field": model.text_field,
        "encoder_config": model.encoder.config.to_json(),
        "vocab": model.vocab.to_json(),
    }
    arrays = {f"encoder/{name}": tensor for name, tensor in model.encoder.tensors.items()}
    arrays["output.weight"] = model.out_w
    arrays["output.bias"] = model.out_b
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(Path(path), **arrays)


def load_model(path: str | Path) -> MatchModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint {path} does not exist")
    with np.load(path) as data:
        try:
            meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        except KeyError as exc:
            raise DataError(f"{path} is not a model checkpoint") from exc
        if meta.get("format") != _FORMAT:
            raise DataError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        tensors = {
            name[len("encoder/") :]: data[name]
            for name in data.files
            if name.startswith("encoder/")
        }
        return MatchModel(
            architecture=meta["architecture"],
            schema_mode=meta["schema_mode"],
            encoder=EncoderParams(
                config=EncoderConfig.from_json(meta["encoder_config"]), tensors=tensors
            ),
            out_w=data["output.weight"],
            out_b=data["output.bias"],
            vocab=Vocabulary.from_json(meta["vocab"]),
            alignment=tuple(meta["alignment"]),
            structure_pooling=meta["structure_pooling"],
            knowledge=meta.get("knowledge", "off"),
            text_field=meta.get("text_field"),
        )


__all__ = ["load_model", "save_model"]
