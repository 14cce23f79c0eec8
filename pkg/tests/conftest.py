"""Shared fixtures: synthetic two-language worlds written as real artifact files.

A "world" plants sense clusters in the source space, rotates them (plus noise)
into a synthetic target language, and writes every file the pipeline consumes:
anchor stores, the anchor split TSV, the sense-annotated training store with
labels, the inventory, and dev/test evaluation corpora (XML + gold + stores).
"""

import numpy as np
import pytest

from xsense import anchors as anchors_mod
from xsense.pipeline import RunConfig
from xsense.store import EmbeddingStore, write_store


def _make_store(vectors, language, tmp_path, name, layer=-1, sentence_ids=None,
                token_indices=None, surfaces=None):
    n, dim = vectors.shape
    store = EmbeddingStore(
        dim=dim,
        record_ids=np.arange(n, dtype=np.uint64),
        sentence_ids=np.asarray(
            sentence_ids if sentence_ids is not None else np.arange(n), dtype=np.uint64
        ),
        token_indices=np.asarray(
            token_indices if token_indices is not None else np.zeros(n), dtype=np.uint32
        ),
        surfaces=list(surfaces) if surfaces is not None else ["w"] * n,
        lemmas=["w"] * n,
        layer=layer,
        vectors=vectors.astype(np.float32),
        language=language,
        encoder_tag="synthetic",
    )
    path = tmp_path / name
    write_store(store, path)
    return path, store


def _write_eval_corpus(tmp_path, prefix, vectors, senses, rotation, noise, rng, layer=-1):
    """XML + gold + target-side store for one evaluation split."""
    xml_lines = ["<corpus><text>"]
    gold_lines = []
    for i, s in enumerate(senses):
        iid = f"{prefix}.s{i:03d}.t000"
        xml_lines.append(
            f'<sentence id="{prefix}.s{i:03d}">'
            f'<instance id="{iid}" lemma="w" pos="n">word</instance>'
            "</sentence>"
        )
        gold_lines.append(f"{iid} {s}")
    xml_lines.append("</text></corpus>")
    xml_path = tmp_path / f"{prefix}.xml"
    gold_path = tmp_path / f"{prefix}.gold.txt"
    xml_path.write_text("\n".join(xml_lines), encoding="utf-8")
    gold_path.write_text("\n".join(gold_lines) + "\n", encoding="utf-8")

    target_vecs = vectors @ rotation + noise * rng.standard_normal(vectors.shape)
    store_path, _ = _make_store(
        target_vecs, "tgt", tmp_path, f"{prefix}_store.cemb", layer=layer
    )
    return xml_path, gold_path, store_path


def build_world(
    tmp_path,
    seed=0,
    n_senses=5,
    dim=16,
    tokens_per_sense=40,
    n_anchors=200,
    n_eval=40,
    noise=0.05,
    cluster_spread=0.25,
    identity_world=False,
    layer=-1,
):
    """Write a full synthetic run's files under tmp_path; returns paths + truth.

    Senses are Gaussian clusters around orthogonal centers in the source
    space; the target space is an orthogonal rotation of it plus noise.  With
    `identity_world` the "two languages" share one space (for the multi
    regime).
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    centers = 3.0 * basis[:, :n_senses].T
    sense_ids = [f"s{i:02d}" for i in range(n_senses)]

    if identity_world:
        rotation = np.eye(dim)
    else:
        rotation, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    # target rows are X = Y @ rotation (+ noise); apply_map computes X @ W.T,
    # so the ideal map matrix is W = rotation itself (X @ rotation.T = Y).

    def sample(sense_row, count):
        return centers[sense_row] + cluster_spread * rng.standard_normal((count, dim))

    # anchor sides
    anchor_senses = rng.integers(0, n_senses, size=n_anchors)
    Y_anchor = np.vstack([sample(s, 1) for s in anchor_senses])
    X_anchor = Y_anchor @ rotation + noise * rng.standard_normal(Y_anchor.shape)
    src_anchor_path, _ = _make_store(Y_anchor, "src", tmp_path, "src_anchor.cemb", layer)
    tgt_anchor_path, _ = _make_store(X_anchor, "tgt", tmp_path, "tgt_anchor.cemb", layer)

    n_train = int(0.8 * n_anchors)
    pairs = [anchors_mod.AnchorPair(i, 0, 0) for i in range(n_anchors)]
    anchor_set = anchors_mod.AnchorSet(train=pairs[:n_train], test=pairs[n_train:])
    anchors_path = tmp_path / "anchors.tsv"
    anchors_mod.write_anchors(anchor_set, anchors_path)

    # sense-annotated source training store
    train_senses = [s for s in range(n_senses) for _ in range(tokens_per_sense)]
    Y_train = np.vstack([sample(s, 1) for s in train_senses])
    train_path, train_store = _make_store(Y_train, "src", tmp_path, "src_train.cemb", layer)
    labels_path = tmp_path / "labels.tsv"
    labels_path.write_text(
        "".join(f"{i}\t{sense_ids[s]}\n" for i, s in enumerate(train_senses)),
        encoding="utf-8",
    )
    inventory_path = tmp_path / "inventory.tsv"
    inventory_path.write_text(f"w\tn\t{','.join(sense_ids)}\n", encoding="utf-8")

    # evaluation splits (target language)
    dev_senses_rows = rng.integers(0, n_senses, size=n_eval)
    test_senses_rows = rng.integers(0, n_senses, size=n_eval)
    dev_gold_senses = [sense_ids[s] for s in dev_senses_rows]
    test_gold_senses = [sense_ids[s] for s in test_senses_rows]
    Y_dev = np.vstack([sample(s, 1) for s in dev_senses_rows])
    Y_test = np.vstack([sample(s, 1) for s in test_senses_rows])
    dev_xml, dev_gold, dev_store = _write_eval_corpus(
        tmp_path, "dev", Y_dev, dev_gold_senses, rotation, noise, rng, layer)
    test_xml, test_gold, test_store = _write_eval_corpus(
        tmp_path, "test", Y_test, test_gold_senses, rotation, noise, rng, layer)

    return {
        "dim": dim,
        "sense_ids": sense_ids,
        "centers": centers,
        "rotation": rotation,
        "train_store": train_store,
        "train_senses": [sense_ids[s] for s in train_senses],
        "dev_gold_senses": dev_gold_senses,
        "test_gold_senses": test_gold_senses,
        "source_vectors": {"dev": Y_dev, "test": Y_test},
        "paths": {
            "target_anchor_store": str(tgt_anchor_path),
            "source_anchor_store": str(src_anchor_path),
            "anchors": str(anchors_path),
            "source_train_store": str(train_path),
            "source_train_labels": str(labels_path),
            "inventory": str(inventory_path),
            "dev_xml": str(dev_xml),
            "dev_gold": str(dev_gold),
            "dev_store": str(dev_store),
            "test_xml": str(test_xml),
            "test_gold": str(test_gold),
            "test_store": str(test_store),
        },
    }


def world_config(world, **overrides) -> RunConfig:
    params = dict(
        regime="mono_mono",
        track="dense",
        map_kind="isometric",
        source_layer=-1,
        target_layer=-1,
        seed=0,
    )
    params.update(world["paths"])
    params.update(overrides)
    return RunConfig(**params)


@pytest.fixture
def tiny_world(tmp_path):
    """Small world for fast module tests: 3 senses in 8 dimensions."""
    return build_world(
        tmp_path, seed=11, n_senses=3, dim=8, tokens_per_sense=20,
        n_anchors=80, n_eval=20,
    )
