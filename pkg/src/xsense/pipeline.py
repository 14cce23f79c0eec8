"""End-to-end orchestration: regimes, layer grids, dense vs sparse tracks.

A run never touches a neural encoder; every embedding arrives as a `.cemb`
file.  Store paths may contain a ``{layer}`` placeholder so one config
template can serve the whole last-four-layers grid (target-side paths are
formatted with the target layer, source-side paths with the source layer).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Sequence

from . import anchors as anchors_mod
from . import evaluation, sensemodel, sparsecode
from .alignment import (
    IDENTITY,
    ISOMETRIC,
    RCSLS,
    EmbeddingAligner,
    LinearMap,
    apply_map,
    canonical_kind,
    eval_retrieval,
)
from .errors import ConfigContradiction, EmptyGrid, UnknownId
from .sparsecode import nn_lasso_batch
from .store import read_store

REGIMES = ("multi", "multi_multi", "multi_mono", "mono_multi", "mono_mono")
TRACKS = ("dense", "sparse")
LAST_FOUR = (-4, -3, -2, -1)


@dataclass(frozen=True)
class RunConfig:
    regime: str
    track: str
    map_kind: str = ISOMETRIC
    source_layer: int = -1
    target_layer: int = -1
    normalized_pmi: Optional[bool] = None
    k: int = 3000
    lam: float = 0.05
    epochs: int = 5
    batch: int = 256
    seed: int = 0
    smoothing: float = 1.0
    binary_cooc: bool = False
    rcsls_k_nn: int = 10
    rcsls_steps: int = 50
    rcsls_step_size: float = 10.0
    normalize_anchors: bool = False
    # file paths; {layer} is replaced by the relevant relative layer index
    target_anchor_store: str = ""
    source_anchor_store: str = ""
    anchors: str = ""
    source_train_store: str = ""
    source_train_labels: str = ""
    inventory: str = ""
    dictionary_store: str = ""
    dev_xml: str = ""
    dev_gold: str = ""
    dev_store: str = ""
    test_xml: str = ""
    test_gold: str = ""
    test_store: str = ""
    predictions_out: str = ""

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigContradiction(f"unknown regime {self.regime!r}")
        if self.track not in TRACKS:
            raise ConfigContradiction(f"unknown track {self.track!r}")
        object.__setattr__(self, "map_kind", canonical_kind(self.map_kind))
        if self.source_layer not in LAST_FOUR or self.target_layer not in LAST_FOUR:
            raise ConfigContradiction(
                f"layers must be in {LAST_FOUR}, got "
                f"({self.target_layer}, {self.source_layer})"
            )
        if self.regime == "multi":
            if self.map_kind != IDENTITY:
                raise ConfigContradiction("multi regime requires the identity map")
            if self.source_layer != self.target_layer:
                raise ConfigContradiction("multi regime requires equal layers")
        if self.track == "dense" and self.normalized_pmi is not None:
            raise ConfigContradiction("normalized_pmi must stay unset on the dense track")
        if self.track == "sparse" and self.normalized_pmi is None:
            raise ConfigContradiction("sparse track requires normalized_pmi true/false")

    def path(self, name: str) -> str:
        """Resolve a store path field, substituting its side's layer."""
        value = getattr(self, name)
        layer = (
            self.source_layer
            if name in ("source_anchor_store", "source_train_store", "dictionary_store")
            else self.target_layer
        )
        return value.replace("{layer}", str(layer))


@dataclass
class RunResult:
    config: RunConfig
    predictions: Dict[str, str]
    dev_predictions: Dict[str, str]
    retrieval_acc: float
    retrieval_ties: int
    dev_f1: float
    test_f1: float

    def summary(self) -> dict:
        return {
            "regime": self.config.regime,
            "track": self.config.track,
            "map_kind": self.config.map_kind,
            "target_layer": self.config.target_layer,
            "source_layer": self.config.source_layer,
            "normalized_pmi": self.config.normalized_pmi,
            "retrieval_acc": self.retrieval_acc,
            "dev_f1": self.dev_f1,
            "test_f1": self.test_f1,
        }


def read_labels_tsv(path) -> Dict[int, list]:
    """record_id <TAB> sense1[,sense2...] per line."""
    labels: Dict[int, list] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rid, senses = line.split("\t")[:2]
            labels[int(rid)] = senses.split(",")
    return labels


def _load_store(config: RunConfig, name: str, layer: int):
    store = read_store(config.path(name))
    if store.count and store.layer != layer:
        raise ConfigContradiction(
            f"{name} holds layer {store.layer}, config expects {layer}"
        )
    return store


def _fit_map(config: RunConfig, X_train, Y_train) -> LinearMap:
    if config.regime == "multi":
        if X_train.shape[1] != Y_train.shape[1]:
            raise ConfigContradiction("multi regime needs equal store dimensions")
        return LinearMap.identity(X_train.shape[1])
    aligner = EmbeddingAligner(
        kind=config.map_kind,
        k_nn=config.rcsls_k_nn,
        steps=config.rcsls_steps,
        step_size=config.rcsls_step_size,
        normalize_anchors=config.normalize_anchors,
    )
    return aligner.fit(X_train, Y_train).map_


def _predict_split(config, linear_map, model_state, xml_path, gold_path, store_path):
    instances, gold = evaluation.parse_xlwsd(xml_path, gold_path)
    inventory = model_state["inventory"]
    instances = evaluation.resolve_candidates(instances, inventory)
    store = read_store(store_path)
    positions = store.position_index()
    ids = []
    for inst in instances:
        key = (inst.sentence_id, inst.token_index)
        if key not in positions:
            raise UnknownId(
                f"instance {inst.instance_id} at {key} has no embedding record"
            )
        ids.append(positions[key])
    X = store.subset(ids).matrix()

    predictions: Dict[str, str] = {}
    if config.track == "dense":
        bank = model_state["bank"]
        for inst, x in zip(instances, X):
            predictions[inst.instance_id] = sensemodel.infer_dense(
                x, bank, linear_map, inst.candidates
            )
    else:
        dictionary = model_state["dictionary"]
        phi = model_state["phi"]
        codes = nn_lasso_batch(apply_map(linear_map, X), dictionary)
        for inst, row in zip(instances, codes):
            code = sparsecode.SparseCode.from_dense(row, dictionary.k)
            predictions[inst.instance_id] = sensemodel.infer_sparse(
                code, phi, inst.candidates
            )
    return predictions, evaluation.f_score(predictions, gold)


def run(config: RunConfig) -> RunResult:
    """Execute one configuration end to end.

    Fits (or short-circuits, for the multi regime) the alignment map on the
    train anchors, measures retrieval accuracy@1 on the test anchors, builds
    the sense model from the source-language annotated store, disambiguates
    the dev and test corpora, and scores them.  Deterministic given the
    config, including its seed.
    """
    target_anchor = _load_store(config, "target_anchor_store", config.target_layer)
    source_anchor = _load_store(config, "source_anchor_store", config.source_layer)
    anchor_set = anchors_mod.read_anchors(config.path("anchors"))

    tgt_train, src_train = anchors_mod.resolve_pairs(
        anchor_set.train, source_anchor, target_anchor
    )
    tgt_test, src_test = anchors_mod.resolve_pairs(
        anchor_set.test, source_anchor, target_anchor
    )
    X_train = target_anchor.subset(tgt_train).matrix()
    Y_train = source_anchor.subset(src_train).matrix()
    X_test = target_anchor.subset(tgt_test).matrix()
    Y_test = source_anchor.subset(src_test).matrix()

    linear_map = _fit_map(config, X_train, Y_train)
    retrieval = eval_retrieval(linear_map, X_test, Y_test)

    source_train = _load_store(config, "source_train_store", config.source_layer)
    by_record = read_labels_tsv(config.path("source_train_labels"))
    labels = []
    for rid in source_train.record_ids:
        rid = int(rid)
        if rid not in by_record:
            raise UnknownId(f"training record {rid} has no sense label")
        labels.append(by_record[rid])
    inventory = sensemodel.SenseInventory.from_tsv(config.path("inventory"))

    model_state = {"inventory": inventory}
    if config.track == "dense":
        model_state["bank"] = sensemodel.build_dense_bank(
            source_train, labels, inventory
        )
    else:
        dict_source = (
            read_store(config.path("dictionary_store"))
            if config.dictionary_store
            else source_train
        )
        dictionary = sparsecode.learn_dictionary(
            dict_source,
            k=config.k,
            lam=config.lam,
            epochs=config.epochs,
            batch=config.batch,
            seed=config.seed,
        )
        codes = sparsecode.encode_store(source_train, dictionary)
        model_state["dictionary"] = dictionary
        model_state["phi"] = sensemodel.build_phi(
            codes,
            labels,
            inventory,
            normalized=bool(config.normalized_pmi),
            smoothing=config.smoothing,
            binary_cooc=config.binary_cooc,
        )

    dev_predictions, dev_score = _predict_split(
        config, linear_map, model_state,
        config.path("dev_xml"), config.path("dev_gold"), config.path("dev_store"),
    )
    test_predictions, test_score = _predict_split(
        config, linear_map, model_state,
        config.path("test_xml"), config.path("test_gold"), config.path("test_store"),
    )
    if config.predictions_out:
        evaluation.write_predictions(test_predictions, config.predictions_out)
    return RunResult(
        config=config,
        predictions=test_predictions,
        dev_predictions=dev_predictions,
        retrieval_acc=retrieval.accuracy_at_1,
        retrieval_ties=retrieval.ties,
        dev_f1=dev_score.f1,
        test_f1=test_score.f1,
    )


def enumerate_grid(base: RunConfig) -> list:
    """All configurations of the hyperparameter sweep for `base`'s regime/track.

    Mapping regimes pair every combination of the last four layers on both
    sides with the two learned map kinds (isometric and RCSLS): 16 x 2 = 32
    configs on the dense track, doubled to 64 by the PMI-normalization switch
    on the sparse track.  The multi regime only sweeps the shared layer.
    """
    norms = [False, True] if base.track == "sparse" else [None]
    configs = []
    if base.regime == "multi":
        for layer in LAST_FOUR:
            for norm in norms:
                configs.append(
                    replace(
                        base,
                        source_layer=layer,
                        target_layer=layer,
                        map_kind=IDENTITY,
                        normalized_pmi=norm,
                    )
                )
        return configs
    for target_layer in LAST_FOUR:
        for source_layer in LAST_FOUR:
            for kind in (ISOMETRIC, RCSLS):
                for norm in norms:
                    configs.append(
                        replace(
                            base,
                            target_layer=target_layer,
                            source_layer=source_layer,
                            map_kind=kind,
                            normalized_pmi=norm,
                        )
                    )
    return configs


@dataclass
class GridReport:
    selected: RunConfig
    selected_result: RunResult
    table: list

    def to_json(self) -> str:
        rows = [r.summary() for r in self.table]
        return json.dumps(
            {"selected": self.selected_result.summary(), "table": rows}, indent=2
        )


def run_grid(
    configs: Sequence[RunConfig],
    dev_gold: Optional[str] = None,
    test_gold: Optional[str] = None,
) -> GridReport:
    """Run every config, select on dev F1, report the winner's test score.

    All configs must share one regime and track; `dev_gold`/`test_gold`
    override the respective path on every config when given.
    """
    configs = list(configs)
    if not configs:
        raise EmptyGrid("no configurations to run")
    if len({(c.regime, c.track) for c in configs}) != 1:
        raise ConfigContradiction("grid configs must share regime and track")
    overrides = {}
    if dev_gold is not None:
        overrides["dev_gold"] = dev_gold
    if test_gold is not None:
        overrides["test_gold"] = test_gold
    if overrides:
        configs = [replace(c, **overrides) for c in configs]

    results = [run(c) for c in configs]
    dev_scores = {r.config: r.dev_f1 for r in results}
    winner = evaluation.select_hyperparams(dev_scores)
    selected_result = next(r for r in results if r.config == winner)
    return GridReport(selected=winner, selected_result=selected_result, table=results)


# -- config files ----------------------------------------------------------------

_BOOL_WORDS = {"true": True, "false": False}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low in _BOOL_WORDS:
        return _BOOL_WORDS[low]
    if low in ("none", ""):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_file(path) -> RunConfig:
    """Flat `key = value` text: strings (optionally quoted), ints, floats,
    true/false, none; `#` starts a comment."""
    values = {}
    valid = {f.name for f in fields(RunConfig)}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in valid:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(raw)
    return RunConfig(**values)


def write_config_file(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(RunConfig):
            value = getattr(config, f.name)
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif value is None:
                rendered = "none"
            elif isinstance(value, str):
                rendered = f'"{value}"'
            else:
                rendered = str(value)
            fh.write(f"{f.name} = {rendered}\n")
