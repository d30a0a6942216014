"""Command-line pipeline: one subcommand per stage.

Reports go to stdout as JSON, logs to stderr; every failure exits nonzero
with a one-line machine-parseable error.  All flags can be supplied through
GEM_-prefixed environment variables.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .errors import ConfigError, DataError, GemError

CONTEXT_SETTINGS = {"auto_envvar_prefix": "GEM", "help_option_names": ["-h", "--help"]}


def _emit(report: dict) -> None:
    click.echo(json.dumps(report))


def _log(message: str) -> None:
    click.echo(message, err=True)


@click.group(context_settings=CONTEXT_SETTINGS)
@click.option("--threads", type=int, default=None, help="Cap numeric worker threads.")
def cli(threads: int | None) -> None:
    """End-to-end generalized entity matching pipeline."""
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--name", default=None, help="Collection name (defaults to the file stem).")
@click.option("--dedup-q", default=3, show_default=True, help="Character q-gram size.")
@click.option("--dedup-threshold", default=0.9, show_default=True, help="Jaccard threshold.")
@click.option("--spam-min-chars", default=40, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def process(input_path, output_path, name, dedup_q, dedup_threshold, spam_min_chars, report_path):
    """Clean a collection: spam filtering then near-duplicate removal."""
    from .entities import parse_collection, write_collection
    from .processing import dedup_collection, default_spam_rules, spam_filter

    collection = parse_collection(input_path, name or Path(input_path).stem)
    total = len(collection)
    collection, removed_spam = spam_filter(collection, default_spam_rules(spam_min_chars))
    collection, dedup_report = dedup_collection(collection, q=dedup_q, threshold=dedup_threshold)
    dedup_report.removed_spam = removed_spam
    write_collection(collection, output_path)
    if report_path:
        Path(report_path).write_text(json.dumps(dedup_report.to_json(), indent=2), encoding="utf-8")
    _emit(
        {
            "input": total,
            "kept": len(collection),
            "removed_spam": len(removed_spam),
            "removed_duplicates": sum(len(r) for _, r in dedup_report.clusters),
            "output": str(output_path),
        }
    )


@cli.command()
@click.argument("collection_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("collection_b", type=click.Path(exists=True, dir_okay=False))
@click.argument("rules_config", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--gold", "gold_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--report-recall", is_flag=True, help="Report recall against --gold.")
def block(collection_a, collection_b, rules_config, output_path, gold_path, report_recall):
    """Generate candidate pairs from two collections via composed blocking rules."""
    from .blocking import compose_blockers, estimate_recall, load_rules_config, write_pairs
    from .entities import parse_collection
    from .service import read_gold

    a = parse_collection(collection_a, "A")
    b = parse_collection(collection_b, "B")
    rules, mode = load_rules_config(rules_config)
    pairs = compose_blockers(rules, mode)(a, b)
    write_pairs(pairs, output_path)
    report = {
        "pairs": len(pairs),
        "mode": mode,
        "rules": [rule.name for rule in rules],
        "cross_product": len(a) * len(b),
        "output": str(output_path),
    }
    if report_recall:
        if not gold_path:
            raise ConfigError("--report-recall requires --gold")
        report["recall"] = estimate_recall(set(pairs), read_gold(gold_path))
    _emit(report)


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--text-field", required=True, help="Dotted path of the long text field.")
@click.option("--rules", "rules_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--classifier", "classifier_spec", default=None, help="external:<addr> scorer.")
def inject(input_path, output_path, text_field, rules_dir, classifier_spec):
    """Restructure a long text field into topic attributes."""
    from .entities import parse_collection, write_collection
    from .knowledge import ExternalClassifier, RuleBasedClassifier, load_rule_set, restructure_collection

    if classifier_spec:
        if not classifier_spec.startswith("external:"):
            raise ConfigError(f"unknown classifier {classifier_spec!r} (want external:<addr>)")
        classifier = ExternalClassifier(classifier_spec[len("external:") :])
    else:
        classifier = RuleBasedClassifier(load_rule_set(rules_dir) if rules_dir else None)

    collection = parse_collection(input_path, Path(input_path).stem)
    restructured = restructure_collection(collection, text_field, classifier)
    write_collection(restructured, output_path)
    injected = sum(
        1 for before, after in zip(collection.entries, restructured.entries) if before != after
    )
    _emit({"entries": len(collection), "restructured": injected, "output": str(output_path)})


@cli.command("sample-negatives")
@click.argument("collection_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("collection_b", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--title-path", required=True)
@click.option("-k", "count", type=int, required=True)
@click.option("--seed", default=0, show_default=True)
def sample_negatives_cmd(collection_a, collection_b, output_path, title_path, count, seed):
    """Sample disjoint-title pairs as negative labels."""
    from .dataset import sample_negatives, write_labels
    from .entities import parse_collection

    a = parse_collection(collection_a, "A")
    b = parse_collection(collection_b, "B")
    records = sample_negatives(a, b, title_path, count, seed=seed)
    write_labels(records, output_path)
    _emit({"sampled": len(records), "output": str(output_path)})


@cli.command()
@click.argument("labels_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("pairs_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("manifest_path", type=click.Path(dir_okay=False))
@click.option("--ratios", default="0.6,0.2,0.2", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--balance/--no-balance", default=True, show_default=True)
@click.option("--collection-a", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--collection-b", type=click.Path(exists=True, dir_okay=False), default=None)
def split(labels_path, pairs_path, manifest_path, ratios, seed, balance, collection_a, collection_b):
    """Stratified train/val/test split over the current label view."""
    from .dataset import LabelStore, SplitSpec, split_dataset

    from .blocking import pair_id_parts, read_pairs
    from .entities import parse_collection

    parts = [float(x) for x in ratios.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"--ratios needs three numbers, got {ratios!r}")
    store = LabelStore(labels_path)
    current = [r for r in store.current().values() if r.label in ("match", "nomatch")]

    # Keep labels for blocked candidates plus sampler negatives; when the
    # collections are known, also drop pairs whose entries were cleaned away.
    blocked = {pair.pair_id for pair in read_pairs(pairs_path).values()}
    usable = [r for r in current if r.pair_id in blocked or r.source == "sampler"]
    if collection_a and collection_b:
        ids_a = {e.id for e in parse_collection(collection_a, "A").entries}
        ids_b = {e.id for e in parse_collection(collection_b, "B").entries}
        usable = [
            r
            for r in usable
            if pair_id_parts(r.pair_id)[0] in ids_a and pair_id_parts(r.pair_id)[1] in ids_b
        ]
    dropped = len(current) - len(usable)
    if dropped:
        _log(f"dropped {dropped} labels without usable candidate pairs")

    spec = SplitSpec(ratios=(parts[0], parts[1], parts[2]), seed=seed, balance=balance)
    train_split, val_split, test_split = split_dataset(usable, spec)
    manifest = {
        "labels": str(Path(labels_path).resolve()),
        "pairs": str(Path(pairs_path).resolve()),
        "collection_a": str(Path(collection_a).resolve()) if collection_a else None,
        "collection_b": str(Path(collection_b).resolve()) if collection_b else None,
        "ratios": parts,
        "seed": seed,
        "balance": balance,
        "train": [r.pair_id for r in train_split],
        "val": [r.pair_id for r in val_split],
        "test": [r.pair_id for r in test_split],
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    _emit(
        {
            "train": len(train_split),
            "val": len(val_split),
            "test": len(test_split),
            "manifest": str(manifest_path),
        }
    )


def _load_manifest(manifest_path: str) -> dict:
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    for key in ("labels", "train", "val", "test"):
        if key not in manifest:
            raise DataError(f"manifest is missing {key!r}")
    return manifest


def _load_examples(manifest: dict, knowledge: str, text_field: str | None, rules_dir: str | None):
    """Resolve manifest pair ids into (left entry, right entry, label) triples."""
    from .blocking import pair_id_parts, read_pairs
    from .dataset import LabelStore
    from .entities import parse_collection
    from .knowledge import RuleBasedClassifier, load_rule_set, restructure_collection

    if not manifest.get("collection_a") or not manifest.get("collection_b"):
        raise DataError("manifest must record collection_a and collection_b paths")
    left = parse_collection(manifest["collection_a"], "left")
    right = parse_collection(manifest["collection_b"], "right")
    if knowledge in ("on", "rule_only") and text_field:
        classifier = RuleBasedClassifier(load_rule_set(rules_dir) if rules_dir else None)
        left = restructure_collection(left, text_field, classifier)
        right = restructure_collection(right, text_field, classifier)
    left_by, right_by = left.by_id(), right.by_id()
    labels = {r.pair_id: r.label for r in LabelStore(manifest["labels"]).current().values()}
    pair_index = {
        pair.pair_id: (pair.left_id, pair.right_id)
        for pair in read_pairs(manifest["pairs"]).values()
    } if manifest.get("pairs") and Path(manifest["pairs"]).exists() else {}

    def resolve(pair_id: str):
        left_id, right_id = pair_index.get(pair_id) or pair_id_parts(pair_id)
        if left_id not in left_by or right_id not in right_by:
            raise DataError(f"pair {pair_id!r} references unknown entries")
        return left_by[left_id], right_by[right_id], labels[pair_id]

    splits = {}
    for name in ("train", "val", "test"):
        splits[name] = [resolve(pair_id) for pair_id in manifest[name]]
    return splits, left, right


@cli.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("checkpoint_path", type=click.Path(dir_okay=False))
@click.option("--arch", type=click.Choice(["sequenced", "siamese"]), default="sequenced", show_default=True)
@click.option("--schema", type=click.Choice(["homo", "heter"]), default="heter", show_default=True)
@click.option("--alignment", default=None, help="Comma-separated attribute names.")
@click.option("--lr", "learning_rates", multiple=True, type=float, default=(1e-3,), show_default=True)
@click.option("--max-len", "max_lens", multiple=True, type=int, default=(128,), show_default=True)
@click.option("--epochs", "epoch_counts", multiple=True, type=int, default=(30,), show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--d-model", default=64, show_default=True)
@click.option("--n-layers", default=2, show_default=True)
@click.option("--n-heads", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--knowledge", type=click.Choice(["on", "off", "rule_only"]), default="on", show_default=True)
@click.option("--text-field", default="content", show_default=True)
@click.option("--rules", "rules_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--no-pooling", is_flag=True, help="Ablation: entity vectors only.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None)
@click.option("--curves", "curves_path", type=click.Path(dir_okay=False), default=None)
def train(
    manifest_path, checkpoint_path, arch, schema, alignment, learning_rates, max_lens,
    epoch_counts, batch_size, d_model, n_layers, n_heads, seed, knowledge, text_field,
    rules_dir, no_pooling, log_path, curves_path,
):
    """Train a matcher (grid search over any multi-valued option) and save a checkpoint."""
    from .checkpoint import save_model
    from .figures import save_training_curves
    from .matcher import ModelTemplate, TrainConfig, build_model
    from .matcher import grid_search as run_grid
    from .matcher import train as run_train
    from .serialization import build_vocabulary, serialize_entry

    manifest = _load_manifest(manifest_path)
    splits, left, right = _load_examples(manifest, knowledge, text_field, rules_dir)

    if alignment:
        aligned = tuple(a.strip() for a in alignment.split(",") if a.strip())
    elif schema == "homo":
        first = left.entries[0].attributes if left.entries else {}
        right_names = set(right.entries[0].attributes) if right.entries else set()
        aligned = tuple(name for name in first if name in right_names)
    else:
        aligned = tuple(left.entries[0].attributes) if left.entries else ()

    corpus = [serialize_entry(e, True) for e in left.entries] + [
        serialize_entry(e, True) for e in right.entries
    ]
    anchor_names = sorted(
        {n for e in left.entries for n in e.attributes}
        | {n for e in right.entries for n in e.attributes}
    )
    vocab = build_vocabulary(corpus, anchor_names)

    template = ModelTemplate(
        architecture=arch,
        schema_mode=schema,
        alignment=aligned,
        d_model=d_model,
        n_layers=n_layers,
        n_heads=n_heads,
        structure_pooling=not no_pooling,
        knowledge=knowledge,
    )
    cfg = TrainConfig(
        learning_rates=tuple(learning_rates),
        max_lens=tuple(max_lens),
        epoch_counts=tuple(epoch_counts),
        batch_size=batch_size,
        seed=seed,
    )
    grid_report = None
    if max(len(cfg.learning_rates), len(cfg.max_lens), len(cfg.epoch_counts)) > 1:
        _log(f"grid search over {len(cfg.learning_rates) * len(cfg.max_lens) * len(cfg.epoch_counts)} cells")
        model, logs, grid_report = run_grid(
            lambda max_len, s: build_model(template, vocab, max_len, s),
            splits["train"], splits["val"], cfg,
        )
    else:
        model = build_model(template, vocab, cfg.max_lens[0], seed)
        model, logs = run_train(model, splits["train"], splits["val"], cfg)

    model.knowledge = knowledge
    model.text_field = text_field if knowledge != "off" else None
    save_model(model, checkpoint_path)

    log_path = log_path or str(Path(checkpoint_path).with_suffix(".log.jsonl"))
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in logs:
            line = json.dumps(entry.to_json())
            fh.write(line + "\n")
            _log(line)
    curves_path = curves_path or str(Path(checkpoint_path).with_suffix(".curves.png"))
    save_training_curves(logs, curves_path)

    report = {
        "checkpoint": str(checkpoint_path),
        "best_val_f1": max((entry.f1 for entry in logs), default=0.0),
        "epochs_run": len(logs),
        "log": log_path,
        "curves": curves_path,
    }
    if grid_report is not None:
        report["grid"] = grid_report
    _emit(report)


@cli.command("eval")
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--rules", "rules_dir", type=click.Path(exists=True, file_okay=False), default=None)
def eval_cmd(checkpoint_path, manifest_path, split_name, rules_dir):
    """Evaluate a checkpoint on one split of a manifest; prints P/R/F1 as JSON."""
    from .checkpoint import load_model
    from .matcher import evaluate

    model = load_model(checkpoint_path)
    manifest = _load_manifest(manifest_path)
    splits, _, _ = _load_examples(manifest, model.knowledge, model.text_field, rules_dir)
    result = evaluate(model, splits[split_name])
    _emit(result.to_json())


@cli.command()
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("pair_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--collection-a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--collection-b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "html"]), default="json", show_default=True)
@click.option("--rules", "rules_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--limit", type=int, default=None, help="Explain at most this many pairs.")
def explain(checkpoint_path, pair_file, out_dir, collection_a, collection_b, fmt, rules_dir, limit):
    """Write per-pair explanation documents plus heatmap figures."""
    from .blocking import read_pairs
    from .checkpoint import load_model
    from .entities import parse_collection
    from .explain import explain_pair, render_explanation
    from .figures import save_heatmap_figure
    from .knowledge import RuleBasedClassifier, load_rule_set, restructure_collection

    model = load_model(checkpoint_path)
    left = parse_collection(collection_a, "left")
    right = parse_collection(collection_b, "right")
    if model.knowledge in ("on", "rule_only") and model.text_field:
        classifier = RuleBasedClassifier(load_rule_set(rules_dir) if rules_dir else None)
        left = restructure_collection(left, model.text_field, classifier)
        right = restructure_collection(right, model.text_field, classifier)
    left_by, right_by = left.by_id(), right.by_id()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for (left_id, right_id), pair in sorted(read_pairs(pair_file).items()):
        if limit is not None and written >= limit:
            break
        if left_id not in left_by or right_id not in right_by:
            raise DataError(f"pair {pair.pair_id!r} references unknown entries")
        explanation = explain_pair(model, (left_by[left_id], right_by[right_id]), pair.pair_id)
        stem = pair.pair_id.replace("::", "__")
        (out / f"{stem}.{fmt}").write_text(render_explanation(explanation, fmt), encoding="utf-8")
        save_heatmap_figure(explanation.heatmap, out / f"{stem}_heatmap.png", title=pair.pair_id)
        written += 1
    _emit({"explained": written, "out_dir": str(out)})


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def serve(config_path):
    """Start the labeling service."""
    from .service import ServiceConfig, run_service

    config = ServiceConfig.load(config_path)
    _log(f"serving on {config.listen}")
    run_service(config)


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--task", type=click.Choice(["jobjob", "jobresume"]), required=True)
@click.option("-n", "n_pairs", type=int, required=True)
@click.option("--noise", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
def synth(out_dir, task, n_pairs, noise, seed):
    """Generate a synthetic corpus: collections, gold labels, and candidate pairs."""
    from .blocking import write_pairs
    from .dataset import generate_synthetic
    from .entities import write_collection

    left, right, labels, pairs = generate_synthetic(task, n_pairs, noise=noise, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_collection(left, out / "a.jsonl")
    write_collection(right, out / "b.jsonl")
    write_pairs(pairs, out / "pairs.jsonl")
    with (out / "gold.jsonl").open("w", encoding="utf-8") as fh:
        for record in labels:
            obj = record.to_json()
            obj["left_id"], obj["right_id"] = record.pair_id.split("::", 1)
            fh.write(json.dumps(obj) + "\n")
    _emit(
        {
            "task": task,
            "pairs": n_pairs,
            "collection_a": str(out / "a.jsonl"),
            "collection_b": str(out / "b.jsonl"),
            "gold": str(out / "gold.jsonl"),
            "candidates": str(out / "pairs.jsonl"),
        }
    )


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes: 1 usage, 2 data, 3 internal."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo(json.dumps({"error": "aborted", "kind": "usage"}), err=True)
        return 1
    except (click.exceptions.UsageError, ConfigError) as exc:
        click.echo(json.dumps({"error": str(exc), "kind": "usage"}), err=True)
        return 1
    except click.exceptions.ClickException as exc:
        click.echo(json.dumps({"error": exc.format_message(), "kind": "usage"}), err=True)
        return 1
    except (DataError, FileNotFoundError) as exc:
        click.echo(json.dumps({"error": str(exc), "kind": "data"}), err=True)
        return 2
    except GemError as exc:
        click.echo(json.dumps({"error": str(exc), "kind": "internal"}), err=True)
        return 3
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports everything
        click.echo(json.dumps({"error": f"{type(exc).__name__}: {exc}", "kind": "internal"}), err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
