"""Shared fixtures: small entries, vocabularies, and encoders."""

from __future__ import annotations

import numpy as np
import pytest

from gempipe.encoder import EncoderConfig, init_encoder
from gempipe.entities import EntityEntry
from gempipe.serialization import Vocabulary, build_vocabulary, serialize_entry


@pytest.fixture
def job_entry() -> EntityEntry:
    return EntityEntry(id="j1", attributes={"title": "nurse", "city": "austin"})


@pytest.fixture
def resume_entry() -> EntityEntry:
    return EntityEntry(
        id="r1",
        attributes={
            "Name": "jordan pine",
            "Contact": "jordan@example.com",
            "Education": [{"School": "state university", "Date": "2014-2018"}],
            "Experience": [
                {"Company": "mercy clinic", "Date": "2018-2021", "Work": ["triage", "charting"]}
            ],
            "Skills": ["nursing", "bls"],
        },
    )


def make_vocab(entries, use_anchor_tags: bool = False, anchor_names=None) -> Vocabulary:
    corpus = [serialize_entry(e, use_anchor_tags) for e in entries]
    return build_vocabulary(corpus, anchor_names or [])


@pytest.fixture
def tiny_encoder():
    cfg = EncoderConfig(vocab_size=64, d_model=8, n_layers=2, n_heads=2, max_len=32, seed=11)
    return init_encoder(cfg)


def random_vectors(rng: np.random.Generator, names: list[str], d: int) -> dict[str, np.ndarray]:
    return {name: rng.standard_normal(d) for name in names}
