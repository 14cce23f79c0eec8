"""Command line interface (`xsense ...`)."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import alignment, anchors as anchors_mod, evaluation, pipeline
from .errors import XsenseError
from .store import inspect_lines, read_store


@click.group()
def main():
    """Cross-lingual embedding alignment, sparse sense coding and WSD."""


# -- store ---------------------------------------------------------------------


@main.group()
def store():
    """Inspect embedding store files."""


@store.command("inspect")
@click.argument("path", type=click.Path(exists=True))
@click.option("-n", "records", default=5, show_default=True, help="Records to print.")
def store_inspect(path, records):
    """Print a store header and its first records as JSON lines."""
    for line in inspect_lines(read_store(path), records):
        click.echo(line)


# -- anchors -------------------------------------------------------------------


@main.group()
def anchors():
    """Mine and split contextual translation anchors."""


@anchors.command("mine")
@click.option("--parallel", required=True, type=click.Path(exists=True),
              help="TSV: pair_id, source sentence, target sentence.")
@click.option("--lexicon", required=True, type=click.Path(exists=True),
              help="TSV: source_word, target_word.")
@click.option("--out", required=True, type=click.Path())
@click.option("--train-cap", default=20000, show_default=True)
@click.option("--test-fraction", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
def anchors_mine(parallel, lexicon, out, train_cap, test_fraction, seed):
    """Mine mutual-translation anchors and write a split TSV."""
    sentences = anchors_mod.read_parallel_tsv(parallel)
    lex = anchors_mod.BilingualLexicon.from_tsv(lexicon)
    pairs = anchors_mod.mine_anchors(sentences, lex)
    anchor_set = anchors_mod.split_anchors(pairs, train_cap, test_fraction, seed)
    anchors_mod.write_anchors(anchor_set, out)
    click.echo(json.dumps({
        "mined": len(pairs),
        "train": len(anchor_set.train),
        "test": len(anchor_set.test),
    }))


# -- maps ----------------------------------------------------------------------


def _anchor_matrices(x_store_path, y_store_path, anchors_path, split):
    x_store = read_store(x_store_path)
    y_store = read_store(y_store_path)
    anchor_set = anchors_mod.read_anchors(anchors_path)
    pairs = anchor_set.train if split == "train" else anchor_set.test
    tgt_ids, src_ids = anchors_mod.resolve_pairs(pairs, y_store, x_store)
    return x_store.subset(tgt_ids).matrix(), y_store.subset(src_ids).matrix()


@main.group("map")
def map_group():
    """Fit and evaluate linear alignment maps."""


@map_group.command("fit")
@click.option("--kind", default="procrustes", show_default=True,
              type=click.Choice(["lstsq", "procrustes", "rcsls", "identity"]))
@click.option("--x-store", required=True, type=click.Path(exists=True),
              help="Target-language anchor store (.cemb).")
@click.option("--y-store", required=True, type=click.Path(exists=True),
              help="Source-language anchor store (.cemb).")
@click.option("--anchors", "anchors_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--src-layer", default=None, type=int,
              help="Expected source store layer (checked when given).")
@click.option("--tgt-layer", default=None, type=int,
              help="Expected target store layer (checked when given).")
@click.option("--normalize-anchors", is_flag=True, default=False)
@click.option("--k-nn", default=10, show_default=True, help="RCSLS neighborhood.")
@click.option("--steps", default=50, show_default=True, help="RCSLS ascent steps.")
def map_fit(kind, x_store, y_store, anchors_path, out, src_layer, tgt_layer,
            normalize_anchors, k_nn, steps):
    """Fit a map on the train anchors and write a .map file."""
    for path, expected, side in ((x_store, tgt_layer, "target"),
                                 (y_store, src_layer, "source")):
        if expected is not None:
            actual = read_store(path).layer
            if actual != expected:
                raise click.ClickException(
                    f"{side} store holds layer {actual}, expected {expected}")
    X, Y = _anchor_matrices(x_store, y_store, anchors_path, "train")
    aligner = alignment.EmbeddingAligner(
        kind=kind, k_nn=k_nn, steps=steps, normalize_anchors=normalize_anchors)
    aligner.fit(X, Y)
    alignment.write_map(aligner.map_, out)
    click.echo(json.dumps({"kind": aligner.map_.kind, "d_s": aligner.map_.d_s,
                           "d_t": aligner.map_.d_t,
                           "residual": aligner.map_.residual}))


@map_group.command("eval")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--x-store", required=True, type=click.Path(exists=True))
@click.option("--y-store", required=True, type=click.Path(exists=True))
@click.option("--anchors", "anchors_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "test"]))
def map_eval(map_path, x_store, y_store, anchors_path, split):
    """Translation retrieval accuracy@1 of a map on held-out anchors."""
    linear_map = alignment.read_map(map_path)
    X, Y = _anchor_matrices(x_store, y_store, anchors_path, split)
    result = alignment.eval_retrieval(linear_map, X, Y)
    click.echo(json.dumps({"accuracy_at_1": result.accuracy_at_1,
                           "ties": result.ties, "n": result.n}))


# -- runs ----------------------------------------------------------------------


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run_cmd(config_path):
    """Execute one end-to-end configuration."""
    config = pipeline.parse_config_file(config_path)
    result = pipeline.run(config)
    click.echo(json.dumps(result.summary(), indent=2))


@main.command("grid")
@click.option("--configs", "config_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", default=None, type=click.Path(), help="Write report JSON here.")
def grid_cmd(config_dir, out):
    """Run every config file in a directory and select on dev F1."""
    paths = sorted(Path(config_dir).glob("*.cfg")) + sorted(
        Path(config_dir).glob("*.toml"))
    configs = [pipeline.parse_config_file(p) for p in paths]
    report = pipeline.run_grid(configs)
    text = report.to_json()
    if out:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text)


# -- scoring and statistics ------------------------------------------------------


@main.command("score")
@click.option("--pred", required=True, type=click.Path(exists=True), multiple=True)
@click.option("--gold", required=True, type=click.Path(exists=True), multiple=True)
def score_cmd(pred, gold):
    """F-score predictions against gold keys.

    With several --pred/--gold pairs, also reports micro (pooled counts) and
    macro (mean over pairs) aggregates, labeled as such.
    """
    if len(pred) != len(gold):
        raise click.ClickException("--pred and --gold must come in pairs")
    scores = [
        evaluation.f_score(evaluation.read_predictions(p), evaluation.read_gold(g))
        for p, g in zip(pred, gold)
    ]
    payload = {
        "pairs": [
            {"pred": p, "gold": g, "precision": s.precision, "recall": s.recall,
             "f1": s.f1, "correct": s.correct, "attempted": s.attempted,
             "total": s.total}
            for p, g, s in zip(pred, gold, scores)
        ]
    }
    agg = evaluation.aggregate_scores(scores)
    micro = agg["micro"]
    payload["micro"] = {"precision": micro.precision, "recall": micro.recall,
                        "f1": micro.f1}
    payload["macro"] = agg["macro"]
    click.echo(json.dumps(payload, indent=2))


@main.group()
def stats():
    """Significance tests."""


@stats.command("mcnemar")
@click.option("--a", "preds_a", required=True, type=click.Path(exists=True))
@click.option("--b", "preds_b", required=True, type=click.Path(exists=True))
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--correction/--no-correction", default=True, show_default=True)
def stats_mcnemar(preds_a, preds_b, gold, correction):
    """McNemar's test between two prediction files."""
    pair = evaluation.ContingencyPair.from_predictions(
        evaluation.read_predictions(preds_a),
        evaluation.read_predictions(preds_b),
        evaluation.read_gold(gold),
    )
    result = evaluation.mcnemar(pair, correction=correction)
    click.echo(json.dumps({"b": pair.b, "c": pair.c,
                           "statistic": result.statistic,
                           "p_value": result.p_value}))


@stats.command("ttest")
@click.option("--a", "sample_a", required=True, help="Comma-separated sample.")
@click.option("--b", "sample_b", required=True, help="Comma-separated sample.")
def stats_ttest(sample_a, sample_b):
    """Welch's unpaired t-test between two comma-separated samples."""
    result = evaluation.unpaired_t_test(
        [float(v) for v in sample_a.split(",")],
        [float(v) for v in sample_b.split(",")],
    )
    click.echo(json.dumps({"t": result.t, "dof": result.dof,
                           "p_value": result.p_value}))


def entry():
    try:
        main(standalone_mode=True)
    except XsenseError as exc:  # pragma: no cover - exercised via CliRunner
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entry()
