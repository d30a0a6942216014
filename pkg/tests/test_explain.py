"""Explanations: distance heatmaps, attention highlights, rendering."""

import json
import math
import re

import numpy as np
import pytest

from gempipe.encoder import EncodedEntity, EncoderConfig, encode, init_encoder
from gempipe.errors import DataError
from gempipe.explain import (
    attribute_distance_matrix,
    render_explanation,
    top_fraction_count,
    word_level_highlights,
)
from gempipe.matcher import forward
from gempipe.serialization import PAD, SerializedSequence
from tests.test_matcher import make_model, small_entries


def fake_encoding(anchor_vectors, attentions=None, n=4, d=3):
    token_vectors = np.zeros((n, d))
    return EncodedEntity(
        token_vectors=token_vectors,
        cls_vector=token_vectors[0],
        anchor_vectors=anchor_vectors,
        attentions=attentions or [],
    )


class TestDistanceMatrix:
    def test_identical_vectors_distance_zero(self):
        v = np.array([1.0, 2.0, 3.0])
        heatmap = attribute_distance_matrix({"a": v}, {"b": v.copy()})
        assert heatmap.values[0, 0] == 0.0

    def test_pythagorean_example(self):
        heatmap = attribute_distance_matrix(
            {"a": np.array([3.0, 0.0])}, {"b": np.array([0.0, 4.0])}
        )
        assert heatmap.values[0, 0] == pytest.approx(5.0)

    def test_shape(self):
        rng = np.random.default_rng(0)
        left = {f"l{i}": rng.standard_normal(4) for i in range(3)}
        right = {f"r{j}": rng.standard_normal(4) for j in range(5)}
        heatmap = attribute_distance_matrix(left, right)
        assert heatmap.values.shape == (3, 5)
        assert heatmap.rows == list(left) and heatmap.cols == list(right)

    def test_swap_transposes(self):
        rng = np.random.default_rng(1)
        left = {f"l{i}": rng.standard_normal(4) for i in range(2)}
        right = {f"r{j}": rng.standard_normal(4) for j in range(3)}
        forward_map = attribute_distance_matrix(left, right)
        backward_map = attribute_distance_matrix(right, left)
        assert np.allclose(forward_map.values, backward_map.values.T)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        left = {f"l{i}": rng.standard_normal(6) for i in range(3)}
        right = {f"r{j}": rng.standard_normal(6) for j in range(2)}
        heatmap = attribute_distance_matrix(left, right)
        for i, a in enumerate(left.values()):
            for j, b in enumerate(right.values()):
                expected = math.sqrt(sum((a[k] - b[k]) ** 2 for k in range(6)))
                assert abs(heatmap.values[i, j] - expected) < 1e-9

    def test_triangle_inequality_spot_check(self):
        rng = np.random.default_rng(3)
        vectors = [rng.standard_normal(8) for _ in range(3)]
        d01 = np.linalg.norm(vectors[0] - vectors[1])
        d12 = np.linalg.norm(vectors[1] - vectors[2])
        d02 = np.linalg.norm(vectors[0] - vectors[2])
        assert d02 <= d01 + d12 + 1e-12

    def test_no_anchors_errors_with_hint(self):
        with pytest.raises(DataError, match="anchor tags"):
            attribute_distance_matrix({}, {"a": np.zeros(2)})

    def test_accepts_encoded_entities(self):
        enc_left = fake_encoding({"a": np.array([3.0, 0.0])})
        enc_right = fake_encoding({"b": np.array([0.0, 4.0])})
        assert attribute_distance_matrix(enc_left, enc_right).values[0, 0] == pytest.approx(5.0)


def uniform_attention(n_heads, n):
    return np.full((n_heads, n, n), 1.0 / n)


class TestWordHighlights:
    def test_uniform_attention_ties_break_earlier(self):
        n = 10
        enc = fake_encoding({}, attentions=[uniform_attention(2, n)], n=n)
        tokens = [f"t{i}" for i in range(n)]
        highlights = word_level_highlights(enc, tokens, layers_to_inspect=1)
        k = top_fraction_count(n)
        flagged = [h.position for h in highlights if h.highlighted]
        assert flagged == list(range(k))

    def test_highlight_budget_per_layer(self):
        rng = np.random.default_rng(5)
        n = 20
        layers = []
        for _ in range(2):
            raw = rng.random((4, n, n))
            layers.append(raw / raw.sum(axis=-1, keepdims=True))
        enc = fake_encoding({}, attentions=layers, n=n)
        highlights = word_level_highlights(enc, [f"t{i}" for i in range(n)])
        flagged = sum(h.highlighted for h in highlights)
        k = top_fraction_count(n)
        assert flagged <= k * len(layers)
        assert k == 2

    def test_scores_are_head_and_source_sums(self):
        rng = np.random.default_rng(6)
        n = 6
        raw = rng.random((3, n, n))
        attn = raw / raw.sum(axis=-1, keepdims=True)
        enc = fake_encoding({}, attentions=[attn], n=n)
        highlights = word_level_highlights(enc, [f"t{i}" for i in range(n)])
        for i, h in enumerate(highlights):
            assert h.scores[0] == pytest.approx(float(attn.sum(axis=(0, 1))[i]))

    def test_padding_never_highlighted(self):
        cfg = EncoderConfig(vocab_size=30, d_model=8, n_layers=1, n_heads=2, max_len=16, seed=2)
        params = init_encoder(cfg)
        ids = [2, 7, 8, 9, PAD, PAD]
        seq = SerializedSequence(token_ids=tuple(ids))
        enc = encode(params, seq)
        tokens = ["[CLS]", "a", "b", "c", "[PAD]", "[PAD]"]
        highlights = word_level_highlights(enc, tokens, token_ids=ids)
        for h in highlights:
            if h.token == "[PAD]":
                assert not h.highlighted

    def test_layer_bound_enforced(self):
        enc = fake_encoding({}, attentions=[uniform_attention(2, 4)], n=4)
        with pytest.raises(DataError):
            word_level_highlights(enc, list("abcd"), layers_to_inspect=3)


class TestRenderExplanation:
    @pytest.fixture
    def explanation(self):
        from gempipe.explain import explain_pair

        model = make_model()
        return explain_pair(model, small_entries(), "l::r")

    def test_json_round_trip(self, explanation):
        text = render_explanation(explanation, "json")
        obj = json.loads(text)
        assert obj["pair_id"] == "l::r"
        assert set(obj) == {"pair_id", "prediction", "probabilities", "heatmap", "highlights"}
        assert set(obj["heatmap"]) == {"rows", "cols", "values"}
        for h in obj["highlights"]:
            assert set(h) == {"token", "pos", "side", "highlighted", "scores"}
        assert sum(obj["probabilities"]) == pytest.approx(1.0)

    def test_html_escapes_entity_text(self):
        from gempipe.explain import explain_pair
        from gempipe.entities import EntityEntry
        from gempipe.matcher import ModelTemplate, build_model
        from gempipe.serialization import build_vocabulary, serialize_entry

        left = EntityEntry(id="l", attributes={"title": "<script>alert(1)</script>"})
        right = EntityEntry(id="r", attributes={"title": "safe"})
        vocab = build_vocabulary(
            [serialize_entry(left, True), serialize_entry(right, True)], anchor_names=["title"]
        )
        template = ModelTemplate(
            architecture="sequenced", schema_mode="homo", alignment=("title",),
            d_model=8, n_layers=1, n_heads=2,
        )
        model = build_model(template, vocab, max_len=32, seed=0)
        html = render_explanation(explain_pair(model, (left, right), "p"), "html")
        assert "<script>" not in html

    def test_heatmap_coloring_monotone(self, explanation):
        html = render_explanation(explanation, "html")
        cells = re.findall(r"background:rgb\(255,(\d+),\d+\)'>([0-9.]+)<", html)
        pairs = [(int(g), float(v)) for g, v in cells]
        # larger distance -> smaller green component (darker red), monotonically
        pairs.sort(key=lambda x: x[1])
        greens = [g for g, _ in pairs]
        assert all(greens[i] >= greens[i + 1] for i in range(len(greens) - 1))

    def test_unknown_format_rejected(self, explanation):
        with pytest.raises(DataError):
            render_explanation(explanation, "pdf")


class TestExplainForward:
    def test_sequenced_highlights_cover_joint_sequence(self):
        from gempipe.explain import explanation_from_trace

        model = make_model()
        _, trace = forward(model, small_entries())
        explanation = explanation_from_trace(model, trace, "p")
        boundary = trace.sequences[0].side_boundary
        sides = {h.position: h.side for h in explanation.highlights}
        assert sides[0] == "left"
        assert sides[boundary + 1] == "right"
        assert len(explanation.highlights) == len(trace.sequences[0].token_ids)

    def test_siamese_highlights_per_entity(self):
        from gempipe.explain import explanation_from_trace

        model = make_model("siamese")
        _, trace = forward(model, small_entries())
        explanation = explanation_from_trace(model, trace, "p")
        lefts = [h for h in explanation.highlights if h.side == "left"]
        rights = [h for h in explanation.highlights if h.side == "right"]
        assert len(lefts) == len(trace.sequences[0].token_ids)
        assert len(rights) == len(trace.sequences[1].token_ids)
