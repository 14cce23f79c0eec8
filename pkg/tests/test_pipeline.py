import dataclasses
import json

import numpy as np
import pytest

from conftest import build_world, world_config
from xsense.errors import ConfigContradiction, EmptyGrid, UnknownId
from xsense.pipeline import (
    RunConfig,
    enumerate_grid,
    parse_config_file,
    run,
    run_grid,
    write_config_file,
)
from xsense.store import read_store


def nearest_centroid_oracle(world, split):
    """Cosine nearest-centroid accuracy computed straight from the raw data."""
    train = world["train_store"].matrix()
    sense_ids = world["sense_ids"]
    labels = world["train_senses"]
    centroids = np.stack(
        [train[[l == s for l in labels]].mean(axis=0) for s in sense_ids]
    )
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    X = world["source_vectors"][split]
    gold = world[f"{split}_gold_senses"]
    hits = 0
    for x, g in zip(X, gold):
        sims = centroids @ (x / np.linalg.norm(x))
        hits += sense_ids[int(np.argmax(sims))] == g
    return hits / len(gold)


def test_multi_regime_identity_world(tmp_path):
    world = build_world(
        tmp_path, seed=5, n_senses=3, dim=8, tokens_per_sense=20,
        n_anchors=80, n_eval=25, noise=0.0, identity_world=True,
    )
    config = world_config(world, regime="multi", map_kind="identity", track="dense")
    result = run(config)
    assert result.retrieval_acc == 1.0
    # with a noiseless identity world the pipeline must reproduce plain
    # nearest-centroid inference on the source vectors
    assert result.test_f1 == pytest.approx(nearest_centroid_oracle(world, "test"))
    assert result.dev_f1 == pytest.approx(nearest_centroid_oracle(world, "dev"))


def test_mono_mono_dense_track(tiny_world):
    result = run(world_config(tiny_world, track="dense"))
    assert result.retrieval_acc == 1.0
    assert result.test_f1 >= 0.95


def test_mono_mono_sparse_track_close_to_dense(tiny_world):
    dense = run(world_config(tiny_world, track="dense"))
    sparse = run(
        world_config(
            tiny_world, track="sparse", normalized_pmi=False,
            k=12, lam=0.05, epochs=4, batch=32,
        )
    )
    assert sparse.test_f1 >= dense.test_f1 - 0.02


def test_rcsls_map_kind_runs(tiny_world):
    result = run(world_config(tiny_world, map_kind="rcsls", rcsls_steps=5))
    assert result.test_f1 >= 0.9


def test_run_is_deterministic(tiny_world, tmp_path):
    out_a = tmp_path / "a.txt"
    out_b = tmp_path / "b.txt"
    run(world_config(tiny_world, predictions_out=str(out_a)))
    run(world_config(tiny_world, predictions_out=str(out_b)))
    assert out_a.read_bytes() == out_b.read_bytes()
    assert out_a.stat().st_size > 0


def test_missing_instance_record_raises(tiny_world, tmp_path):
    # a dev store whose (sentence, token) positions match no instance
    from xsense.store import EmbeddingStore, write_store

    stray = EmbeddingStore(
        dim=8, record_ids=[0], sentence_ids=[999], token_indices=[7],
        surfaces=["w"], lemmas=[None], layer=-1,
        vectors=np.zeros((1, 8), np.float32),
    )
    path = tmp_path / "stray.cemb"
    write_store(stray, path)
    with pytest.raises(UnknownId):
        run(world_config(tiny_world, dev_store=str(path)))


def test_store_layer_consistency_checked(tiny_world, tmp_path):
    store = read_store(tiny_world["paths"]["source_train_store"])
    store.layer = -3  # stores are layer -1 in the fixture
    from xsense.store import write_store

    moved = tmp_path / "wrong_layer.cemb"
    write_store(store, moved)
    with pytest.raises(ConfigContradiction):
        run(world_config(tiny_world, source_train_store=str(moved)))


# -- config validation -------------------------------------------------------------


def test_regime_constraints():
    with pytest.raises(ConfigContradiction):
        RunConfig(regime="multi", track="dense", map_kind="isometric")
    with pytest.raises(ConfigContradiction):
        RunConfig(
            regime="multi", track="dense", map_kind="identity",
            source_layer=-1, target_layer=-2,
        )
    with pytest.raises(ConfigContradiction):
        RunConfig(regime="warp", track="dense")
    with pytest.raises(ConfigContradiction):
        RunConfig(regime="mono_mono", track="both")
    with pytest.raises(ConfigContradiction):
        RunConfig(regime="mono_mono", track="dense", source_layer=-9)


def test_track_normalization_constraints():
    with pytest.raises(ConfigContradiction):
        RunConfig(regime="mono_mono", track="dense", normalized_pmi=True)
    with pytest.raises(ConfigContradiction):
        RunConfig(regime="mono_mono", track="sparse", normalized_pmi=None)
    RunConfig(regime="mono_mono", track="sparse", normalized_pmi=False)  # fine


def test_layer_path_templating():
    config = RunConfig(
        regime="mono_mono", track="dense",
        source_layer=-2, target_layer=-4,
        source_train_store="s/train_L{layer}.cemb",
        dev_store="t/dev_L{layer}.cemb",
    )
    assert config.path("source_train_store") == "s/train_L-2.cemb"
    assert config.path("dev_store") == "t/dev_L-4.cemb"


# -- grids --------------------------------------------------------------------


def test_grid_cardinalities():
    dense_base = RunConfig(regime="mono_mono", track="dense")
    sparse_base = RunConfig(
        regime="mono_mono", track="sparse", normalized_pmi=False
    )
    dense_grid = enumerate_grid(dense_base)
    sparse_grid = enumerate_grid(sparse_base)
    assert len(dense_grid) == 32
    assert len(sparse_grid) == 64
    assert len({(c.target_layer, c.source_layer, c.map_kind) for c in dense_grid}) == 32
    assert all(c.normalized_pmi is None for c in dense_grid)
    assert {c.map_kind for c in dense_grid} == {"isometric", "rcsls"}

    multi_dense = enumerate_grid(RunConfig(regime="multi", track="dense", map_kind="identity"))
    multi_sparse = enumerate_grid(
        RunConfig(regime="multi", track="sparse", map_kind="identity", normalized_pmi=False)
    )
    assert len(multi_dense) == 4
    assert len(multi_sparse) == 8
    assert all(c.map_kind == "identity" for c in multi_dense)


def test_run_grid_selects_on_dev(tiny_world):
    base = world_config(tiny_world, rcsls_steps=3)
    configs = [
        dataclasses.replace(base, map_kind="isometric"),
        dataclasses.replace(base, map_kind="rcsls"),
    ]
    report = run_grid(configs)
    assert len(report.table) == 2
    assert report.selected in {r.config for r in report.table}
    selected_row = next(r for r in report.table if r.config == report.selected)
    assert selected_row.dev_f1 == max(r.dev_f1 for r in report.table)
    assert report.selected_result is selected_row
    payload = json.loads(report.to_json())
    assert {row["map_kind"] for row in payload["table"]} == {"isometric", "rcsls"}
    assert payload["selected"]["test_f1"] in [row["test_f1"] for row in payload["table"]]


def test_run_grid_rejects_mixed_grids(tiny_world):
    a = world_config(tiny_world)
    b = world_config(
        tiny_world, track="sparse", normalized_pmi=False, k=12, epochs=1
    )
    with pytest.raises(ConfigContradiction):
        run_grid([a, b])
    with pytest.raises(EmptyGrid):
        run_grid([])


# -- config files ----------------------------------------------------------------


def test_config_file_roundtrip(tmp_path):
    config = RunConfig(
        regime="mono_multi", track="sparse", map_kind="rcsls",
        source_layer=-3, target_layer=-2, normalized_pmi=True,
        k=48, lam=0.1, epochs=7, seed=99,
        source_train_store="x/train_{layer}.cemb",
        inventory="inv.tsv",
    )
    path = tmp_path / "run.cfg"
    write_config_file(config, path)
    assert parse_config_file(path) == config


def test_config_file_comments_and_errors(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(
        "# a comment\n"
        'regime = "mono_mono"\n'
        "track = dense  # inline comment\n"
        "seed = 3\n",
        encoding="utf-8",
    )
    config = parse_config_file(path)
    assert config.regime == "mono_mono"
    assert config.track == "dense"
    assert config.seed == 3

    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        parse_config_file(bad)
