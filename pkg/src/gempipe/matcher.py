"""Match models: the Sequenced and Siamese architectures, training, evaluation.

Sequenced encodes the concatenated pair in one pass and splits anchors at
the separator; Siamese encodes each entity with the same shared encoder.
Pooled features (or the entity vectors alone, when structure pooling is
ablated) feed a linear layer with a softmax over {nomatch, match}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .encoder import (
    EncodedEntity,
    EncodedEntityGrad,
    EncoderConfig,
    EncoderParams,
    encode,
    encoder_gradients,
    init_encoder,
)
from .entities import EntityEntry
from .errors import ConfigError, DataError, GemError
from .pooling import (
    pooling_heter,
    pooling_heter_backward,
    pooling_homo,
    pooling_homo_backward,
    siamese_pool,
)
from .serialization import SerializedSequence, Vocabulary, serialize_pair, serialize_single

LABELS = ("nomatch", "match")
LABEL_INDEX = {"nomatch": 0, "match": 1}

Pair = tuple[EntityEntry, EntityEntry]
LabeledExample = tuple[EntityEntry, EntityEntry, str]


class TrainingDivergedError(GemError):
    pass


@dataclass(frozen=True)
class ModelTemplate:
    """Everything needed to build a fresh model for one grid cell."""

    architecture: str  # "sequenced" | "siamese"
    schema_mode: str  # "homo" | "heter"
    alignment: tuple[str, ...]
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int | None = None
    structure_pooling: bool = True
    knowledge: str = "on"  # "on" | "off" | "rule_only"; consumed by data preparation

    def __post_init__(self) -> None:
        if self.architecture not in ("sequenced", "siamese"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.schema_mode not in ("homo", "heter"):
            raise ConfigError(f"unknown schema mode {self.schema_mode!r}")
        if self.knowledge not in ("on", "off", "rule_only"):
            raise ConfigError(f"unknown knowledge mode {self.knowledge!r}")
        if self.structure_pooling and not self.alignment:
            raise ConfigError("structure pooling needs a nonempty attribute list")


def ablate(
    template: ModelTemplate,
    knowledge: str | None = None,
    structure_pooling: bool | None = None,
) -> ModelTemplate:
    """Reconfigure a pipeline template for an ablation cell.

    structure_pooling=False replaces pooled features with the entity
    vector(s) only; knowledge="off" feeds raw text without restructuring;
    "rule_only" forces the rule-based sentence classifier.
    """
    changes: dict = {}
    if knowledge is not None:
        changes["knowledge"] = knowledge
    if structure_pooling is not None:
        changes["structure_pooling"] = structure_pooling
    return replace(template, **changes) if changes else template


@dataclass
class MatchModel:
    architecture: str
    schema_mode: str
    encoder: EncoderParams
    out_w: np.ndarray  # (feature_dim, 2)
    out_b: np.ndarray  # (2,)
    vocab: Vocabulary
    alignment: tuple[str, ...]
    structure_pooling: bool = True
    # Input-preparation metadata so eval/serve reproduce the training-time view.
    knowledge: str = "off"
    text_field: str | None = None

    @property
    def max_len(self) -> int:
        return self.encoder.config.max_len

    def feature_dim(self) -> int:
        d = self.encoder.config.d_model
        if self.architecture == "sequenced":
            return len(self.alignment) * d if self.structure_pooling else d
        base = 2 * d
        return base + len(self.alignment) * d if self.structure_pooling else base

    def tensors(self) -> dict[str, np.ndarray]:
        return {"output.weight": self.out_w, "output.bias": self.out_b, **self.encoder.tensors}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: tensor.copy() for name, tensor in self.tensors().items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, tensor in self.tensors().items():
            np.copyto(tensor, snapshot[name])


def build_model(
    template: ModelTemplate, vocab: Vocabulary, max_len: int, seed: int = 0
) -> MatchModel:
    cfg = EncoderConfig(
        vocab_size=len(vocab),
        d_model=template.d_model,
        n_layers=template.n_layers,
        n_heads=template.n_heads,
        ff_dim=template.ff_dim,
        max_len=max_len,
        seed=seed,
    )
    encoder = init_encoder(cfg)
    model = MatchModel(
        architecture=template.architecture,
        schema_mode=template.schema_mode,
        encoder=encoder,
        out_w=np.empty(0),
        out_b=np.zeros(2),
        vocab=vocab,
        alignment=template.alignment,
        structure_pooling=template.structure_pooling,
    )
    rng = np.random.default_rng([seed, 1])
    fdim = model.feature_dim()
    limit = np.sqrt(6.0 / (fdim + 2))
    model.out_w = rng.uniform(-limit, limit, size=(fdim, 2))
    return model


def _split_sides(seq: SerializedSequence, enc: EncodedEntity):
    """Anchor name -> (position, vector) maps for each side of a pair sequence."""
    boundary = seq.side_boundary
    left: dict[str, tuple[int, np.ndarray]] = {}
    right: dict[str, tuple[int, np.ndarray]] = {}
    for name, pos in seq.anchors:
        target = left if boundary is None or pos < boundary else right
        target.setdefault(name, (pos, enc.token_vectors[pos]))
    return left, right


def _vectors(anchored: dict[str, tuple[int, np.ndarray]]) -> dict[str, np.ndarray]:
    return {name: vec for name, (pos, vec) in anchored.items()}


@dataclass
class ForwardTrace:
    """Everything backward and the explanation pipeline need from one forward pass."""

    probabilities: np.ndarray
    features: np.ndarray
    sequences: list[SerializedSequence]
    encodings: list[EncodedEntity]
    left_anchors: dict[str, tuple[int, np.ndarray]]
    right_anchors: dict[str, tuple[int, np.ndarray]]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _pooled_features(model: MatchModel, left: dict[str, np.ndarray], right: dict[str, np.ndarray]) -> np.ndarray:
    d = model.encoder.config.d_model
    if model.schema_mode == "homo":
        return pooling_homo(left, right, model.alignment)
    filled = {
        attr: left.get(attr, np.zeros(d)) for attr in model.alignment
    }
    if not right:
        raise DataError(
            "heterogeneous pooling found no right-side anchors; "
            "enable anchor tags or raise max_len"
        )
    return pooling_heter(filled, right)


def forward(model: MatchModel, pair: Pair) -> tuple[np.ndarray, ForwardTrace]:
    """Probabilities (nomatch, match) for a pair, plus the trace for backprop/explain."""
    entry_a, entry_b = pair
    if model.architecture == "sequenced":
        seq = serialize_pair(entry_a, entry_b, model.vocab, model.max_len, use_anchor_tags=True)
        enc = encode(model.encoder, seq)
        left, right = _split_sides(seq, enc)
        if model.structure_pooling:
            features = _pooled_features(model, _vectors(left), _vectors(right))
        else:
            features = enc.cls_vector
        sequences, encodings = [seq], [enc]
    else:
        seq_a = serialize_single(entry_a, model.vocab, model.max_len, use_anchor_tags=True)
        seq_b = serialize_single(entry_b, model.vocab, model.max_len, use_anchor_tags=True)
        enc_a = encode(model.encoder, seq_a)
        enc_b = encode(model.encoder, seq_b)
        left = {name: (pos, enc_a.token_vectors[pos]) for name, pos in seq_a.anchors}
        right = {name: (pos, enc_b.token_vectors[pos]) for name, pos in seq_b.anchors}
        if model.structure_pooling:
            attr = _pooled_features(model, _vectors(left), _vectors(right))
            features = siamese_pool(enc_a.cls_vector, enc_b.cls_vector, attr)
        else:
            features = np.concatenate([enc_a.cls_vector, enc_b.cls_vector])
        sequences, encodings = [seq_a, seq_b], [enc_a, enc_b]

    logits = features @ model.out_w + model.out_b
    probs = _softmax(logits)
    return probs, ForwardTrace(
        probabilities=probs,
        features=features,
        sequences=sequences,
        encodings=encodings,
        left_anchors=left,
        right_anchors=right,
    )


def _pooling_upstream(
    model: MatchModel,
    trace: ForwardTrace,
    d_attr: np.ndarray,
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Map pooled-feature gradients back onto anchor positions per side."""
    d = model.encoder.config.d_model
    left_vecs = _vectors(trace.left_anchors)
    right_vecs = _vectors(trace.right_anchors)
    if model.schema_mode == "homo":
        d_left, d_right = pooling_homo_backward(left_vecs, right_vecs, model.alignment, d_attr)
    else:
        filled = {attr: left_vecs.get(attr, np.zeros(d)) for attr in model.alignment}
        d_left, d_right = pooling_heter_backward(filled, right_vecs, d_attr)
    left_pos = {
        trace.left_anchors[name][0]: grad
        for name, grad in d_left.items()
        if name in trace.left_anchors
    }
    right_pos = {
        trace.right_anchors[name][0]: grad
        for name, grad in d_right.items()
        if name in trace.right_anchors
    }
    return left_pos, right_pos


def loss_and_gradients(
    model: MatchModel, batch: Sequence[LabeledExample]
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and mean gradients for every tensor."""
    grads = {name: np.zeros_like(tensor) for name, tensor in model.tensors().items()}
    total_loss = 0.0
    d = model.encoder.config.d_model
    for entry_a, entry_b, label in batch:
        y = LABEL_INDEX[label]
        probs, trace = forward(model, (entry_a, entry_b))
        total_loss += -float(np.log(max(probs[y], 1e-300)))
        d_logits = probs.copy()
        d_logits[y] -= 1.0

        grads["output.weight"] += np.outer(trace.features, d_logits)
        grads["output.bias"] += d_logits
        d_features = model.out_w @ d_logits

        if model.architecture == "sequenced":
            if model.structure_pooling:
                left_pos, right_pos = _pooling_upstream(model, trace, d_features)
                upstream = EncodedEntityGrad(positions={**left_pos, **right_pos})
            else:
                upstream = EncodedEntityGrad(cls_vector=d_features)
            enc_grads = encoder_gradients(model.encoder, trace.sequences[0], upstream)
            for name, grad in enc_grads.items():
                grads[name] += grad
        else:
            d_cls_a, d_cls_b = d_features[:d], d_features[d : 2 * d]
            if model.structure_pooling:
                left_pos, right_pos = _pooling_upstream(model, trace, d_features[2 * d :])
            else:
                left_pos, right_pos = {}, {}
            for seq, d_cls, positions in (
                (trace.sequences[0], d_cls_a, left_pos),
                (trace.sequences[1], d_cls_b, right_pos),
            ):
                upstream = EncodedEntityGrad(cls_vector=d_cls, positions=positions)
                enc_grads = encoder_gradients(model.encoder, seq, upstream)
                for name, grad in enc_grads.items():
                    grads[name] += grad

    scale = 1.0 / len(batch)
    for name in grads:
        grads[name] *= scale
    return total_loss / len(batch), grads


@dataclass(frozen=True)
class TrainConfig:
    """Adam hyperparameters plus the search grids; plain train uses singletons."""

    learning_rates: tuple[float, ...] = (1e-3,)
    max_lens: tuple[int, ...] = (128,)
    epoch_counts: tuple[int, ...] = (30,)
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (self.learning_rates and self.max_lens and self.epoch_counts):
            raise ConfigError("grids must be nonempty")


class Adam:
    def __init__(self, tensors: dict[str, np.ndarray], lr: float, cfg: TrainConfig) -> None:
        self.tensors = tensors
        self.lr = lr
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, tensor in self.tensors.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            tensor -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss": self.loss,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class EvalResult:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def predict(model: MatchModel, pair: Pair) -> str:
    """Argmax class; an exact tie counts as nomatch, biasing toward precision."""
    probs, _ = forward(model, pair)
    return "match" if probs[1] > probs[0] else "nomatch"


def evaluate(model: MatchModel, test_set: Sequence[LabeledExample]) -> EvalResult:
    if not test_set:
        raise DataError("cannot evaluate on an empty set")
    tp = fp = fn = tn = 0
    for entry_a, entry_b, label in test_set:
        predicted = predict(model, (entry_a, entry_b))
        if predicted == "match" and label == "match":
            tp += 1
        elif predicted == "match":
            fp += 1
        elif label == "match":
            fn += 1
        else:
            tn += 1
    return EvalResult(tp=tp, fp=fp, fn=fn, tn=tn)


def _check_finite(loss: float, model: MatchModel, epoch: int, batch_index: int) -> None:
    if np.isfinite(loss):
        return
    norms = {name: float(np.abs(t).max()) for name, t in model.tensors().items()}
    worst = sorted(norms.items(), key=lambda kv: -kv[1])[:5]
    raise TrainingDivergedError(
        f"non-finite loss at epoch {epoch}, batch {batch_index}; "
        f"largest parameter magnitudes: {worst}"
    )


def train(
    model: MatchModel,
    train_set: Sequence[LabeledExample],
    val_set: Sequence[LabeledExample],
    cfg: TrainConfig,
) -> tuple[MatchModel, list[EpochLog]]:
    """Adam over shuffled mini-batches; returns the best-validation-F1 snapshot.

    Singleton grids only; grid_search owns the Cartesian product.
    """
    if not train_set or not val_set:
        raise DataError("train and validation sets must be nonempty")
    for _, _, label in itertools.chain(train_set, val_set):
        if label not in LABEL_INDEX:
            raise DataError(f"unknown label {label!r}")
    if max(len(cfg.learning_rates), len(cfg.epoch_counts), len(cfg.max_lens)) > 1:
        raise ConfigError("train expects singleton grids; use grid_search for products")

    lr = cfg.learning_rates[0]
    epochs = cfg.epoch_counts[0]
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(model.tensors(), lr, cfg)

    best_f1 = -1.0
    best_snapshot = model.snapshot()
    logs: list[EpochLog] = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for batch_index, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = loss_and_gradients(model, batch)
            _check_finite(loss, model, epoch, batch_index)
            optimizer.step(grads)
            total += loss * len(batch)
        result = evaluate(model, val_set)
        logs.append(
            EpochLog(
                epoch=epoch,
                loss=total / len(train_set),
                precision=result.precision,
                recall=result.recall,
                f1=result.f1,
            )
        )
        if result.f1 > best_f1:
            best_f1 = result.f1
            best_snapshot = model.snapshot()
    model.restore(best_snapshot)
    return model, logs


def grid_search(
    build: Callable[[int, int], MatchModel],
    train_set: Sequence[LabeledExample],
    val_set: Sequence[LabeledExample],
    cfg: TrainConfig,
) -> tuple[MatchModel, list[EpochLog], list[dict]]:
    """Full Cartesian product over {lr} x {max_len} x {epochs}.

    ``build(max_len, seed)`` must return a fresh model; the best
    validation-F1 cell wins (ties go to the earlier cell).
    """
    report: list[dict] = []
    best: tuple[float, MatchModel, list[EpochLog]] | None = None
    for lr, max_len, epochs in itertools.product(
        cfg.learning_rates, cfg.max_lens, cfg.epoch_counts
    ):
        cell_cfg = replace(
            cfg, learning_rates=(lr,), max_lens=(max_len,), epoch_counts=(epochs,)
        )
        model = build(max_len, cfg.seed)
        model, logs = train(model, train_set, val_set, cell_cfg)
        val_f1 = max(log.f1 for log in logs)
        best_epoch = max(logs, key=lambda log: (log.f1, -log.epoch)).epoch
        report.append(
            {
                "lr": lr,
                "max_len": max_len,
                "epochs": epochs,
                "val_f1": val_f1,
                "best_epoch": best_epoch,
            }
        )
        if best is None or val_f1 > best[0]:
            best = (val_f1, model, logs)
    assert best is not None
    return best[1], best[2], report


__all__ = [
    "Adam",
    "EpochLog",
    "EvalResult",
    "ForwardTrace",
    "LABELS",
    "LABEL_INDEX",
    "MatchModel",
    "ModelTemplate",
    "TrainConfig",
    "TrainingDivergedError",
    "ablate",
    "build_model",
    "evaluate",
    "forward",
    "grid_search",
    "loss_and_gradients",
    "predict",
    "train",
]
