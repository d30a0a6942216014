"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`.  The end-to-end learning
check trains two models and dominates the runtime (a few minutes on CPU).
"""

from __future__ import annotations

import math
import time

import numpy as np

from gempipe.blocking import ExactMatchRule, QGramRule, compose_blockers, estimate_recall
from gempipe.dataset import (
    LabelStore,
    LabeledPair,
    SplitSpec,
    generate_synthetic,
    split_dataset,
)
from gempipe.encoder import EncoderConfig, encode, init_encoder
from gempipe.entities import EntityEntry, entry_from_json
from gempipe.explain import attribute_distance_matrix, top_fraction_count, word_level_highlights
from gempipe.knowledge import (
    NONE_LABEL,
    KeywordRuleSet,
    RuleBasedClassifier,
    classify_sentence,
    default_rule_set,
    restructure_collection,
    restructure_document,
    split_sentences,
)
from gempipe.matcher import (
    ModelTemplate,
    TrainConfig,
    ablate,
    build_model,
    evaluate,
    forward,
    loss_and_gradients,
    train,
)
from gempipe.pooling import pooling_heter, pooling_homo
from gempipe.serialization import (
    CLS,
    SEP,
    SerializedSequence,
    build_vocabulary,
    serialize_entry,
    serialize_pair,
)


def report(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


# --- 1. gradient correctness -------------------------------------------------


def _grad_pair():
    left = EntityEntry(id="l", attributes={"alpha": "red stone wall", "beta": "tall gate"})
    right = EntityEntry(id="r", attributes={"alpha": "red brick wall", "gamma": "old gate"})
    return left, right


def _grad_model(architecture: str, schema: str, pooling: bool):
    left, right = _grad_pair()
    vocab = build_vocabulary(
        [serialize_entry(left, True), serialize_entry(right, True)],
        anchor_names=["alpha", "beta", "gamma"],
    )
    template = ModelTemplate(
        architecture=architecture,
        schema_mode=schema,
        alignment=("alpha", "beta"),
        d_model=8,
        n_layers=1,
        n_heads=2,
        structure_pooling=pooling,
    )
    return build_model(template, vocab, max_len=32, seed=13)


def test_gradient_correctness():
    """Analytical loss gradients match central finite differences for every
    parameter, across architectures x pooling variants x pooling-off."""
    start = time.monotonic()
    pair = _grad_pair()
    combos = [
        ("sequenced", "homo", True),
        ("sequenced", "heter", True),
        ("sequenced", "homo", False),
        ("siamese", "homo", True),
        ("siamese", "heter", True),
        ("siamese", "homo", False),
    ]
    eps = 1e-4
    for architecture, schema, pooling in combos:
        model = _grad_model(architecture, schema, pooling)
        batch = [(pair[0], pair[1], "match")]
        _, grads = loss_and_gradients(model, batch)

        def loss() -> float:
            probs, _ = forward(model, pair)
            return -float(np.log(probs[1]))

        worst = 0.0
        for name, tensor in model.tensors().items():
            flat = tensor.reshape(-1)
            gflat = grads[name].reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                up = loss()
                flat[i] = original - eps
                down = loss()
                flat[i] = original
                fd = (up - down) / (2 * eps)
                worst = max(worst, abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-8))
        assert worst < 1e-4, f"{architecture}/{schema}/pooling={pooling}: {worst:.2e}"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    report("gradient correctness")


# --- 2. pooling oracle equivalence -------------------------------------------


def brute_force_homo(left, right, alignment, d):
    out = []
    for attr in alignment:
        va = left.get(attr, np.zeros(d))
        vb = right.get(attr, np.zeros(d))
        for k in range(d):
            out.append(va[k] * vb[k])
    return np.array(out)


def brute_force_heter(left, right, d):
    out = []
    for va in left.values():
        for k in range(d):
            best = -np.inf
            for vb in right.values():
                best = max(best, va[k] * vb[k])
            out.append(best)
    return np.array(out)


def test_pooling_oracle_equivalence():
    """Both pooling variants agree bitwise with explicit-loop evaluators on
    1,000 random instances; Eq-style symmetry and permutation invariance hold."""
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        d = int(rng.integers(1, 17))
        left = {f"l{i}": rng.standard_normal(d) for i in range(n)}
        right_aligned = {f"l{i}": rng.standard_normal(d) for i in range(n)}
        alignment = list(left)
        homo = pooling_homo(left, right_aligned, alignment)
        assert np.array_equal(homo, brute_force_homo(left, right_aligned, alignment, d))
        assert np.array_equal(homo, pooling_homo(right_aligned, left, alignment))

        right = {f"r{j}": rng.standard_normal(d) for j in range(m)}
        heter = pooling_heter(left, right)
        assert np.array_equal(heter, brute_force_heter(left, right, d))
        names = list(right)
        perm = [names[i] for i in rng.permutation(m)]
        assert np.array_equal(heter, pooling_heter(left, {k: right[k] for k in perm}))
    report("pooling oracle equivalence")


# --- 3. serialization conformance --------------------------------------------


def test_serialization_conformance():
    """The published resume template is reproduced token-for-token, and pair
    serialization always yields exactly one [CLS] and one [SEP]."""
    resume = entry_from_json(
        {
            "id": "r1",
            "Name": "<candidate name>",
            "Contact": "<candidate contact>",
            "Education": [{"School": "<school name>", "Date": "<StartAndEndYear>"}],
            "Experience": [
                {
                    "Company": "<companyName1>",
                    "Date": "<StartAndEndDate1>",
                    "Work": ["<work duty 1>", "<work duty 2>"],
                }
            ],
            "Skills": ["<skill 1>", "<skill 2>"],
        }
    )
    expected = (
        "[COL] Name [VAL] <candidate name> "
        "[COL] Contact [VAL] <candidate contact> "
        "[COL] Education [VAL] [COL] School [VAL] <school name> [COL] Date [VAL] <StartAndEndYear> "
        "[COL] Experience [VAL] [COL] Company [VAL] <companyName1> [COL] Date [VAL] <StartAndEndDate1> "
        "[COL] Work [VAL] <work duty 1> <work duty 2> "
        "[COL] Skills [VAL] <skill 1> <skill 2>"
    )
    assert serialize_entry(resume) == expected

    rng = np.random.default_rng(5)
    job = EntityEntry(id="j", attributes={"title": "nurse", "content": "word " * 300})
    vocab = build_vocabulary([serialize_entry(job), serialize_entry(resume)])
    for _ in range(1000):
        max_len = int(rng.integers(8, 600))
        seq = serialize_pair(job, resume, vocab, max_len=max_len)
        ids = list(seq.token_ids)
        assert ids.count(CLS) == 1
        assert ids.count(SEP) == 1
        assert len(ids) <= max_len
    report("serialization conformance")


# --- 4. knowledge-injection partition ----------------------------------------


def _fuzz_sentences(rng: np.random.Generator, rules: KeywordRuleSet, count: int) -> list[str]:
    """Random sentences mixing topic keywords with neutral filler words.

    Each sentence starts with a capitalized Latin word so the deterministic
    splitter can recover the original boundaries."""
    filler = ["gentle", "rivers", "carry", "stones", "toward", "quiet", "valleys", "embers"]
    all_keywords = sorted({kw for kws in rules.keywords.values() for kw in kws})
    sentences = []
    for i in range(count):
        words = [str(rng.choice(filler)) for _ in range(int(rng.integers(1, 6)))]
        for _ in range(int(rng.integers(0, 3))):
            words.insert(1 + int(rng.integers(len(words))), str(rng.choice(all_keywords)))
        words[0] = words[0].capitalize()
        sentences.append(" ".join(words) + ".")
    return sentences


def test_knowledge_injection_partition():
    """Every fuzz sentence lands in exactly one topic attribute or is dropped;
    the published benefit keywords classify the example sentence."""
    rules = default_rule_set()
    assert {"insurance", "salary", "wage"} <= rules.keywords["benefit"]
    assert classify_sentence("Health insurance and competitive salary.", rules) == "benefit"

    rng = np.random.default_rng(123)
    sentences = _fuzz_sentences(rng, rules, 500)
    doc = " ".join(sentences)
    entry = EntityEntry(id="fuzz", attributes={"content": doc})
    classifier = RuleBasedClassifier(rules)
    out = restructure_document(entry, "content", classifier)

    recovered = split_sentences(doc)
    assert len(recovered) == 500
    topic_text = {topic: out.attributes.get(topic, "") for topic in rules.topics}
    for sentence in recovered:
        label = classifier.classify(sentence)
        owners = [t for t, text in topic_text.items() if sentence in text]
        if label == NONE_LABEL:
            assert owners == [], f"dropped sentence found in {owners}"
        else:
            assert owners == [label], f"{sentence!r}: {owners} != [{label}]"
    report("knowledge-injection partition")


# --- 5. blocking recall -------------------------------------------------------


def test_blocking_recall():
    """Exact-title AND default q-gram content blocking keeps every gold match
    while shrinking the candidate set below 10% of the cross product."""
    start = time.monotonic()
    left, right, labels, _ = generate_synthetic("jobjob", 500, noise=0.1, seed=7)
    gold = {tuple(r.pair_id.split("::")) for r in labels if r.label == "match"}
    blocker = compose_blockers(
        [
            ExactMatchRule(name="title_exact", field_path="title"),
            QGramRule(name="content_qgram", field_path="content", q=3),
        ],
        mode="intersection",
    )
    pairs = blocker(left, right)
    recall = estimate_recall(pairs, gold)
    fraction = len(pairs) / (len(left.entries) * len(right.entries))
    elapsed = time.monotonic() - start
    assert recall == 1.0, f"recall {recall}"
    assert fraction < 0.10, f"candidate fraction {fraction:.3f}"
    assert elapsed < 30.0, f"blocking took {elapsed:.1f}s"
    report(f"blocking recall (recall=1.0, candidates={fraction:.2%} of cross product)")


# --- 6. end-to-end learning ----------------------------------------------------


ALIGNMENT = ("title", "qualification", "benefit", "duty", "time", "location", "company")


def _examples(labels, left_by, right_by):
    out = []
    for record in labels:
        lid, rid = record.pair_id.split("::")
        out.append((left_by[lid], right_by[rid], record.label))
    return out


def test_end_to_end_learning():
    """Sequenced + knowledge injection + heterogeneous pooling reaches test F1
    >= 0.95 in 30 epochs at lr 1e-3; the knowledge-off/pooling-off ablation
    scores strictly lower on the same split."""
    start = time.monotonic()
    left_raw, right, labels, _ = generate_synthetic("jobresume", 600, noise=0.1, seed=7)
    train_l, val_l, test_l = split_dataset(
        labels, SplitSpec(ratios=(400 / 600, 100 / 600, 100 / 600), seed=7)
    )
    assert (len(train_l), len(val_l), len(test_l)) == (400, 100, 100)

    left_injected = restructure_collection(left_raw, "content", RuleBasedClassifier())
    cfg = TrainConfig(
        learning_rates=(1e-3,), max_lens=(48,), epoch_counts=(30,), batch_size=4, seed=7
    )
    scores = {}
    for name, collection, template in (
        (
            "full",
            left_injected,
            ModelTemplate(
                architecture="sequenced", schema_mode="heter", alignment=ALIGNMENT,
                d_model=64, n_layers=2, n_heads=8,
            ),
        ),
        (
            "ablation",
            left_raw,
            ablate(
                ModelTemplate(
                    architecture="sequenced", schema_mode="heter", alignment=ALIGNMENT,
                    d_model=64, n_layers=2, n_heads=8,
                ),
                knowledge="off",
                structure_pooling=False,
            ),
        ),
    ):
        left_by, right_by = collection.by_id(), right.by_id()
        corpus = [serialize_entry(e, True) for e in collection.entries] + [
            serialize_entry(e, True) for e in right.entries
        ]
        anchor_names = sorted(
            {n for e in collection.entries for n in e.attributes}
            | {n for e in right.entries for n in e.attributes}
        )
        vocab = build_vocabulary(corpus, anchor_names)
        model = build_model(template, vocab, max_len=48, seed=7)
        model, _ = train(
            model, _examples(train_l, left_by, right_by), _examples(val_l, left_by, right_by), cfg
        )
        scores[name] = evaluate(model, _examples(test_l, left_by, right_by)).f1

    elapsed = time.monotonic() - start
    assert scores["full"] >= 0.95, f"full model test F1 {scores['full']:.3f}"
    assert scores["ablation"] < scores["full"], f"ablation {scores['ablation']:.3f} not lower"
    assert elapsed < 300.0, f"end-to-end suite took {elapsed:.0f}s"
    report(
        f"end-to-end learning (full F1={scores['full']:.3f}, "
        f"ablation F1={scores['ablation']:.3f}, {elapsed:.0f}s)"
    )


# --- 7. explanation invariants --------------------------------------------------


def test_explanation_invariants():
    """Attention rows are distributions, highlights respect the 10% budget,
    and heatmap distances match a brute-force Euclidean oracle."""
    rng = np.random.default_rng(31)
    cfg = EncoderConfig(vocab_size=50, d_model=8, n_layers=2, n_heads=2, max_len=40, seed=17)
    params = init_encoder(cfg)
    for _ in range(100):
        n = int(rng.integers(4, 40))
        ids = [int(x) for x in rng.integers(6, 50, size=n)]
        anchor_count = int(rng.integers(1, min(4, n) + 1))
        positions = sorted(rng.choice(n, size=anchor_count, replace=False))
        anchors = tuple((f"attr{k}", int(p)) for k, p in enumerate(positions))
        seq = SerializedSequence(token_ids=tuple(ids), anchors=anchors)
        enc = encode(params, seq)

        for attn in enc.attentions:
            assert np.abs(attn.sum(axis=-1) - 1.0).max() <= 1e-6

        tokens = [f"t{i}" for i in range(n)]
        highlights = word_level_highlights(enc, tokens)
        k = top_fraction_count(n)
        for layer_index in range(len(enc.attentions)):
            scores = enc.attentions[layer_index].sum(axis=(0, 1))
            order = sorted(range(n), key=lambda i: (-scores[i], i))[:k]
            flagged_this_layer = [h.position for h in highlights if h.position in order]
            assert len(flagged_this_layer) <= k

        other = {f"o{j}": rng.standard_normal(cfg.d_model) for j in range(int(rng.integers(1, 4)))}
        heatmap = attribute_distance_matrix(enc.anchor_vectors, other)
        for i, a in enumerate(enc.anchor_vectors.values()):
            for j, b in enumerate(other.values()):
                expected = math.sqrt(sum((a[k2] - b[k2]) ** 2 for k2 in range(cfg.d_model)))
                assert abs(heatmap.values[i, j] - expected) <= 1e-9
    report("explanation invariants")


# --- 8. split and label-store properties ----------------------------------------


def test_split_and_label_store_properties(tmp_path):
    """Stratified splits are exact partitions within one pair per class, and
    the label store recovers every complete record after a torn write."""
    rng = np.random.default_rng(41)
    for case in range(200):
        n_match = int(rng.integers(5, 40))
        n_nomatch = int(rng.integers(5, 40))
        pairs = [
            LabeledPair(
                pair_id=f"c{case}p{i}",
                label="match" if i < n_match else "nomatch",
                annotator="t",
                timestamp=float(i),
                source="human",
            )
            for i in range(n_match + n_nomatch)
        ]
        raw = rng.dirichlet(np.ones(3))
        ratios = (float(raw[0]), float(raw[1]), float(1.0 - raw[0] - raw[1]))
        spec = SplitSpec(ratios=ratios, seed=int(rng.integers(10_000)))
        splits = split_dataset(pairs, spec)
        together = sorted(p.pair_id for s in splits for p in s)
        assert together == sorted(p.pair_id for p in pairs)
        global_ratio = n_match / (n_match + n_nomatch)
        for split in splits:
            if split:
                positives = sum(1 for p in split if p.label == "match")
                assert abs(positives - global_ratio * len(split)) <= 1.0 + 1e-9

    path = tmp_path / "labels.jsonl"
    store = LabelStore(path)
    for i in range(20):
        store.append(
            LabeledPair(
                pair_id=f"p{i}", label="match", annotator="t", timestamp=float(i), source="human"
            )
        )
    raw_text = path.read_text()
    path.write_text(raw_text[:-25])  # crash mid-record
    recovered = LabelStore(path)
    assert set(recovered.current()) == {f"p{i}" for i in range(19)}
    report("split and label-store properties")
