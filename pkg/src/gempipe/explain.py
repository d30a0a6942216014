"""Attribute- and word-level explanations for match decisions.

Attribute explanations are Euclidean distances between the two sides'
anchor vectors; word explanations highlight tokens whose attention mass
(summed over heads and source tokens) lands in the top 10% of any
inspected lower layer.
"""

from __future__ import annotations

import html as html_module
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encoder import EncodedEntity
from .errors import DataError
from .matcher import ForwardTrace, MatchModel, forward
from .serialization import PAD


@dataclass
class AttributeHeatmap:
    rows: list[str]  # left-entity attribute names
    cols: list[str]  # right-entity attribute names
    values: np.ndarray  # (len(rows), len(cols)) nonnegative distances

    def to_json(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "values": self.values.tolist()}


@dataclass
class TokenHighlight:
    token: str
    position: int
    side: str  # "left" | "right"
    highlighted: bool
    scores: list[float]  # aggregated attention per inspected layer

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "pos": self.position,
            "side": self.side,
            "highlighted": self.highlighted,
            "scores": self.scores,
        }


def _anchor_map(source: EncodedEntity | Mapping[str, np.ndarray]) -> Mapping[str, np.ndarray]:
    if isinstance(source, EncodedEntity):
        return source.anchor_vectors
    return source


def attribute_distance_matrix(
    enc_left: EncodedEntity | Mapping[str, np.ndarray],
    enc_right: EncodedEntity | Mapping[str, np.ndarray],
) -> AttributeHeatmap:
    """Pairwise Euclidean distances between left and right anchor vectors."""
    left = _anchor_map(enc_left)
    right = _anchor_map(enc_right)
    if not left or not right:
        raise DataError(
            "no anchor vectors on one side; enable anchor tags during serialization"
        )
    rows = list(left)
    cols = list(right)
    values = np.zeros((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            diff = left[a] - right[b]
            values[i, j] = math.sqrt(float(diff @ diff))
    return AttributeHeatmap(rows=rows, cols=cols, values=values)


def top_fraction_count(seq_len: int, fraction: float = 0.10) -> int:
    return math.ceil(fraction * seq_len)


def word_level_highlights(
    enc: EncodedEntity,
    tokens: Sequence[str],
    layers_to_inspect: int | None = None,
    side: str = "left",
    side_boundary: int | None = None,
    token_ids: Sequence[int] | None = None,
) -> list[TokenHighlight]:
    """Per-token aggregated attention scores with top-10% highlighting.

    A token is highlighted when its score is among the top ceil(0.10 * n)
    of any inspected layer; ties break toward earlier positions and padding
    never highlights.
    """
    n_layers = len(enc.attentions)
    if layers_to_inspect is None:
        layers_to_inspect = min(6, n_layers)
    if layers_to_inspect > n_layers:
        raise DataError(f"cannot inspect {layers_to_inspect} of {n_layers} layers")

    n = len(tokens)
    pad_positions = (
        {i for i, t in enumerate(token_ids) if t == PAD} if token_ids is not None else set()
    )
    per_layer_scores: list[np.ndarray] = []
    highlighted: set[int] = set()
    k = top_fraction_count(n)
    for layer in range(layers_to_inspect):
        scores = enc.attentions[layer].sum(axis=(0, 1))  # sum over heads and source tokens
        per_layer_scores.append(scores)
        order = sorted(range(n), key=lambda i: (-scores[i], i))
        order = [i for i in order if i not in pad_positions]
        highlighted.update(order[:k])

    out = []
    for i, token in enumerate(tokens):
        token_side = side
        if side_boundary is not None:
            token_side = "left" if i <= side_boundary else "right"
        out.append(
            TokenHighlight(
                token=token,
                position=i,
                side=token_side,
                highlighted=i in highlighted,
                scores=[float(s[i]) for s in per_layer_scores],
            )
        )
    return out


@dataclass
class Explanation:
    pair_id: str
    prediction: str
    probabilities: list[float]
    heatmap: AttributeHeatmap
    highlights: list[TokenHighlight]

    def to_json(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "prediction": self.prediction,
            "probabilities": self.probabilities,
            "heatmap": self.heatmap.to_json(),
            "highlights": [h.to_json() for h in self.highlights],
        }


def explain_pair(model: MatchModel, pair, pair_id: str) -> Explanation:
    """Run one forward pass and assemble both explanation granularities."""
    probs, trace = forward(model, pair)
    return explanation_from_trace(model, trace, pair_id)


def explanation_from_trace(model: MatchModel, trace: ForwardTrace, pair_id: str) -> Explanation:
    left = {name: vec for name, (_, vec) in trace.left_anchors.items()}
    right = {name: vec for name, (_, vec) in trace.right_anchors.items()}
    heatmap = attribute_distance_matrix(left, right)

    highlights: list[TokenHighlight] = []
    if model.architecture == "sequenced":
        seq = trace.sequences[0]
        tokens = model.vocab.decode(list(seq.token_ids))
        highlights = word_level_highlights(
            trace.encodings[0],
            tokens,
            side_boundary=seq.side_boundary,
            token_ids=seq.token_ids,
        )
    else:
        for side, seq, enc in (
            ("left", trace.sequences[0], trace.encodings[0]),
            ("right", trace.sequences[1], trace.encodings[1]),
        ):
            tokens = model.vocab.decode(list(seq.token_ids))
            highlights.extend(
                word_level_highlights(enc, tokens, side=side, token_ids=seq.token_ids)
            )

    probs = trace.probabilities
    prediction = "match" if probs[1] > probs[0] else "nomatch"
    return Explanation(
        pair_id=pair_id,
        prediction=prediction,
        probabilities=[float(p) for p in probs],
        heatmap=heatmap,
        highlights=highlights,
    )


def render_explanation(explanation: Explanation, fmt: str = "json") -> str:
    """Machine-readable JSON or a static escaped HTML page."""
    if fmt == "json":
        return json.dumps(explanation.to_json(), indent=2)
    if fmt == "html":
        return _render_html(explanation)
    raise DataError(f"unknown explanation format {fmt!r}")


def _heat_color(value: float, max_value: float) -> str:
    """White-to-red scale, monotone in distance."""
    intensity = 0.0 if max_value <= 0 else min(1.0, value / max_value)
    other = int(round(255 * (1.0 - intensity)))
    return f"rgb(255,{other},{other})"


def _render_html(explanation: Explanation) -> str:
    esc = html_module.escape
    parts = [
        "<!doctype html><html><head><meta charset='utf-8'>",
        f"<title>Explanation {esc(explanation.pair_id)}</title>",
        "<style>body{font-family:sans-serif;margin:2em}mark{background:#ffd54d}"
        "table{border-collapse:collapse}td,th{border:1px solid #999;padding:4px 8px}"
        ".tok{margin-right:.25em}</style></head><body>",
        f"<h1>Pair {esc(explanation.pair_id)}</h1>",
        f"<p>Prediction: <b>{esc(explanation.prediction)}</b> "
        f"(nomatch {explanation.probabilities[0]:.3f}, match {explanation.probabilities[1]:.3f})</p>",
        "<h2>Attribute distances</h2><table><tr><th></th>",
    ]
    parts += [f"<th>{esc(c)}</th>" for c in explanation.heatmap.cols]
    parts.append("</tr>")
    max_value = float(explanation.heatmap.values.max()) if explanation.heatmap.values.size else 0.0
    for i, row in enumerate(explanation.heatmap.rows):
        parts.append(f"<tr><th>{esc(row)}</th>")
        for j in range(len(explanation.heatmap.cols)):
            value = float(explanation.heatmap.values[i, j])
            parts.append(
                f"<td style='background:{_heat_color(value, max_value)}'>{value:.3f}</td>"
            )
        parts.append("</tr>")
    parts.append("</table><h2>Token highlights</h2>")
    for side in ("left", "right"):
        tokens = [h for h in explanation.highlights if h.side == side]
        if not tokens:
            continue
        parts.append(f"<h3>{side}</h3><p>")
        for h in tokens:
            word = esc(h.token)
            parts.append(f"<mark class='tok'>{word}</mark>" if h.highlighted else f"<span class='tok'>{word}</span>")
        parts.append("</p>")
    parts.append("</body></html>")
    return "".join(parts)


__all__ = [
    "AttributeHeatmap",
    "Explanation",
    "TokenHighlight",
    "attribute_distance_matrix",
    "explain_pair",
    "explanation_from_trace",
    "render_explanation",
    "top_fraction_count",
    "word_level_highlights",
]
