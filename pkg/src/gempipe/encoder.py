"""A small trainable transformer encoder with exact analytical gradients.

Post-norm residual blocks (attention -> add & norm -> ReLU feed-forward ->
add & norm), learned positional embeddings, 64-bit arithmetic throughout.
The encode/encoder_gradients surface is the plug point for swapping in a
real pre-trained language model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError
from .serialization import PAD, SerializedSequence

LN_EPS = 1e-5
MASK_VALUE = -1e30


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int | None = None
    max_len: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.vocab_size, self.d_model, self.n_layers, self.n_heads, self.max_len) < 1:
            raise ConfigError("all encoder dimensions must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}"
            )
        if self.ff_dim is not None and self.ff_dim < 1:
            raise ConfigError("ff_dim must be >= 1")

    @property
    def ff(self) -> int:
        return self.ff_dim if self.ff_dim is not None else 4 * self.d_model

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "ff_dim": self.ff_dim,
            "max_len": self.max_len,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderConfig":
        return cls(**obj)


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


@dataclass
class EncodedEntity:
    """Per-token vectors plus the views the rest of the pipeline consumes.

    ``anchor_vectors`` maps each anchor attribute name to the output at its
    first tagged position; paired sequences with the same attribute on both
    sides are disambiguated by position through ``token_vectors`` instead.
    """

    token_vectors: np.ndarray
    cls_vector: np.ndarray
    anchor_vectors: dict[str, np.ndarray]
    attentions: list[np.ndarray]


@dataclass
class EncodedEntityGrad:
    """Upstream gradients w.r.t. encoder outputs; unset channels are zero."""

    token_vectors: np.ndarray | None = None
    cls_vector: np.ndarray | None = None
    anchor_vectors: Mapping[str, np.ndarray] | None = None
    positions: Mapping[int, np.ndarray] | None = None


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_encoder(cfg: EncoderConfig) -> EncoderParams:
    """Seeded Xavier-uniform weights, zero biases, identity layer norms."""
    rng = np.random.default_rng(cfg.seed)
    d, ff = cfg.d_model, cfg.ff
    t: dict[str, np.ndarray] = {}
    t["token_embedding"] = _xavier(rng, cfg.vocab_size, d, (cfg.vocab_size, d))
    t["position_embedding"] = _xavier(rng, cfg.max_len, d, (cfg.max_len, d))
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        for proj in ("q", "k", "v", "o"):
            t[p + f"attn.w_{proj}"] = _xavier(rng, d, d, (d, d))
        t[p + "ln1.scale"] = np.ones(d)
        t[p + "ln1.offset"] = np.zeros(d)
        t[p + "ffn.w1"] = _xavier(rng, d, ff, (d, ff))
        t[p + "ffn.b1"] = np.zeros(ff)
        t[p + "ffn.w2"] = _xavier(rng, ff, d, (ff, d))
        t[p + "ffn.b2"] = np.zeros(d)
        t[p + "ln2.scale"] = np.ones(d)
        t[p + "ln2.offset"] = np.zeros(d)
    return EncoderParams(config=cfg, tensors=t)


def _layer_norm(z: np.ndarray, scale: np.ndarray, offset: np.ndarray):
    mu = z.mean(axis=-1, keepdims=True)
    var = ((z - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (z - mu) * inv
    return scale * xhat + offset, (xhat, inv)

def _layer_norm_backward(dout: np.ndarray, scale: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv = cache
    dscale = (dout * xhat).sum(axis=0)
    doffset = dout.sum(axis=0)
    dxhat = dout * scale
    dz = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dz, dscale, doffset


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _forward_trace(params: EncoderParams, ids: np.ndarray) -> dict:
    cfg = params.config
    t = params.tensors
    n = len(ids)
    key_mask = ids == PAD  # padding positions are masked out of attention

    x = t["token_embedding"][ids] + t["position_embedding"][:n]
    trace: dict = {"ids": ids, "x0": x, "layers": [], "key_mask": key_mask}
    scale = 1.0 / np.sqrt(cfg.d_model // cfg.n_heads)

    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        layer: dict = {"x_in": x}
        q = x @ t[p + "attn.w_q"]
        k = x @ t[p + "attn.w_k"]
        v = x @ t[p + "attn.w_v"]
        qh, kh, vh = (_split_heads(m, cfg.n_heads) for m in (q, k, v))
        scores = (qh @ kh.transpose(0, 2, 1)) * scale
        if key_mask.any():
            scores[:, :, key_mask] = MASK_VALUE
        scores -= scores.max(axis=-1, keepdims=True)
        exp = np.exp(scores)
        attn = exp / exp.sum(axis=-1, keepdims=True)
        ctx = attn @ vh
        merged = _merge_heads(ctx)
        attn_out = merged @ t[p + "attn.w_o"]
        y1, ln1_cache = _layer_norm(x + attn_out, t[p + "ln1.scale"], t[p + "ln1.offset"])
        pre = y1 @ t[p + "ffn.w1"] + t[p + "ffn.b1"]
        hidden = np.maximum(pre, 0.0)
        ffn_out = hidden @ t[p + "ffn.w2"] + t[p + "ffn.b2"]
        x, ln2_cache = _layer_norm(y1 + ffn_out, t[p + "ln2.scale"], t[p + "ln2.offset"])
        layer.update(
            qh=qh, kh=kh, vh=vh, attn=attn, merged=merged,
            ln1_cache=ln1_cache, y1=y1, pre=pre, hidden=hidden, ln2_cache=ln2_cache,
        )
        trace["layers"].append(layer)
    trace["x_out"] = x
    return trace


def encode(params: EncoderParams, seq: SerializedSequence) -> EncodedEntity:
    """Contextualized token vectors, entity vector, anchor vectors, attentions."""
    if len(seq) > params.config.max_len:
        raise DataError(
            f"sequence length {len(seq)} exceeds max_len {params.config.max_len}"
        )
    if len(seq) == 0:
        raise DataError("cannot encode an empty sequence")
    ids = np.asarray(seq.token_ids, dtype=np.int64)
    trace = _forward_trace(params, ids)
    x = trace["x_out"]
    anchors: dict[str, np.ndarray] = {}
    for name, pos in seq.anchors:
        anchors.setdefault(name, x[pos])
    return EncodedEntity(
        token_vectors=x,
        cls_vector=x[0],
        anchor_vectors=anchors,
        attentions=[layer["attn"] for layer in trace["layers"]],
    )


def _assemble_upstream(seq: SerializedSequence, upstream: EncodedEntityGrad, n: int, d: int) -> np.ndarray:
    dx = np.zeros((n, d))
    if upstream.token_vectors is not None:
        if upstream.token_vectors.shape != (n, d):
            raise DataError(
                f"token_vectors gradient shape {upstream.token_vectors.shape} != {(n, d)}"
            )
        dx += upstream.token_vectors
    if upstream.cls_vector is not None:
        dx[0] += upstream.cls_vector
    if upstream.anchor_vectors:
        first_pos = {}
        for name, pos in seq.anchors:
            first_pos.setdefault(name, pos)
        for name, grad in upstream.anchor_vectors.items():
            if name not in first_pos:
                raise DataError(f"gradient for unknown anchor {name!r}")
            dx[first_pos[name]] += grad
    if upstream.positions:
        for pos, grad in upstream.positions.items():
            dx[pos] += grad
    return dx


def encoder_gradients(
    params: EncoderParams, seq: SerializedSequence, upstream: EncodedEntityGrad
) -> dict[str, np.ndarray]:
    """Exact gradients of the loss w.r.t. every parameter tensor.

    The forward pass is recomputed internally (cheap at this scale), so the
    call only needs the same sequence that was encoded.
    """
    cfg = params.config
    t = params.tensors
    ids = np.asarray(seq.token_ids, dtype=np.int64)
    n, d = len(ids), cfg.d_model
    trace = _forward_trace(params, ids)
    dx = _assemble_upstream(seq, upstream, n, d)

    grads = {name: np.zeros_like(tensor) for name, tensor in t.items()}
    head_scale = 1.0 / np.sqrt(d // cfg.n_heads)

    for i in reversed(range(cfg.n_layers)):
        p = f"layers.{i}."
        layer = trace["layers"][i]

        dz2, dscale2, doffset2 = _layer_norm_backward(dx, t[p + "ln2.scale"], layer["ln2_cache"])
        grads[p + "ln2.scale"] += dscale2
        grads[p + "ln2.offset"] += doffset2
        dy1 = dz2.copy()
        dffn_out = dz2

        grads[p + "ffn.w2"] += layer["hidden"].T @ dffn_out
        grads[p + "ffn.b2"] += dffn_out.sum(axis=0)
        dhidden = dffn_out @ t[p + "ffn.w2"].T
        dpre = dhidden * (layer["pre"] > 0.0)
        grads[p + "ffn.w1"] += layer["y1"].T @ dpre
        grads[p + "ffn.b1"] += dpre.sum(axis=0)
        dy1 += dpre @ t[p + "ffn.w1"].T

        dz1, dscale1, doffset1 = _layer_norm_backward(dy1, t[p + "ln1.scale"], layer["ln1_cache"])
        grads[p + "ln1.scale"] += dscale1
        grads[p + "ln1.offset"] += doffset1
        dx = dz1.copy()
        dattn_out = dz1

        grads[p + "attn.w_o"] += layer["merged"].T @ dattn_out
        dmerged = dattn_out @ t[p + "attn.w_o"].T
        dctx = _split_heads(dmerged, cfg.n_heads)

        attn, vh = layer["attn"], layer["vh"]
        dattn = dctx @ vh.transpose(0, 2, 1)
        dvh = attn.transpose(0, 2, 1) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dqh = (dscores @ layer["kh"]) * head_scale
        dkh = (dscores.transpose(0, 2, 1) @ layer["qh"]) * head_scale

        x_in = layer["x_in"]
        for name, dproj in (("q", dqh), ("k", dkh), ("v", dvh)):
            dmat = _merge_heads(dproj)
            grads[p + f"attn.w_{name}"] += x_in.T @ dmat
            dx += dmat @ t[p + f"attn.w_{name}"].T

    np.add.at(grads["token_embedding"], ids, dx)
    grads["position_embedding"][:n] += dx
    return grads


__all__ = [
    "EncodedEntity",
    "EncodedEntityGrad",
    "EncoderConfig",
    "EncoderParams",
    "LN_EPS",
    "encode",
    "encoder_gradients",
    "init_encoder",
]
