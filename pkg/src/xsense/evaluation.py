"""WSD corpus parsing, F-score computation and significance tests.

The corpus format is the usual WSD evaluation one: sentences of <wf> and
<instance> elements (one element per pre-tokenized word), gold keys in a
text file of `instance_id key [key ...]` lines.  Tail probabilities come
from the complementary error function (chi-square with one degree of
freedom) and the regularized incomplete beta function (Student t).
"""

from __future__ import annotations

import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, Optional, Sequence

import numpy as np
from scipy.special import betainc

from .errors import (
    DegenerateTable,
    EmptyGrid,
    InsufficientSample,
    MalformedXml,
    MissingGold,
    ZeroVariance,
)
from .sensemodel import SenseInventory

GoldKeys = Dict[str, FrozenSet[str]]


@dataclass(frozen=True)
class WsdInstance:
    instance_id: str
    lemma: str
    pos: str
    sentence_id: int
    token_index: int
    candidates: Optional[tuple] = None


def read_gold(path) -> GoldKeys:
    gold: GoldKeys = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise MissingGold(f"gold line without keys: {line.rstrip()!r}")
            gold[parts[0]] = frozenset(parts[1:])
    return gold


def parse_xlwsd(xml_path, gold_path) -> tuple:
    """(instances in document order, gold keys).

    Sentences are numbered 0.. in document order; a token's index is its
    element position within the sentence, matching how the extractor indexes
    embedded words.  Instances without a gold entry raise MissingGold; gold
    entries without an instance only warn.
    """
    try:
        root = ET.parse(xml_path).getroot()
    except ET.ParseError as exc:
        raise MalformedXml(f"{xml_path}: {exc}") from exc
    gold = read_gold(gold_path)

    instances = []
    sentence_ordinal = -1
    for sentence in root.iter("sentence"):
        sentence_ordinal += 1
        token_index = -1
        for elem in sentence:
            if elem.tag not in ("wf", "instance"):
                continue
            token_index += 1
            if elem.tag != "instance":
                continue
            instance_id = elem.get("id")
            if instance_id is None:
                raise MalformedXml(f"{xml_path}: instance without id attribute")
            if instance_id not in gold:
                raise MissingGold(f"instance {instance_id} has no gold key")
            instances.append(
                WsdInstance(
                    instance_id=instance_id,
                    lemma=elem.get("lemma", ""),
                    pos=elem.get("pos", ""),
                    sentence_id=sentence_ordinal,
                    token_index=token_index,
                )
            )
    seen = {inst.instance_id for inst in instances}
    dangling = sorted(set(gold) - seen)
    if dangling:
        warnings.warn(f"{len(dangling)} gold keys without instances, e.g. {dangling[0]}")
    return instances, gold


def resolve_candidates(
    instances: Sequence[WsdInstance], inventory: SenseInventory
) -> list:
    """Fill each instance's candidate senses from the inventory."""
    return [
        replace(inst, candidates=tuple(inventory.candidates(inst.lemma, inst.pos)))
        for inst in instances
    ]


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float
    correct: int
    attempted: int
    total: int


def f_score(predictions: Dict[str, str], gold: GoldKeys) -> Score:
    """Precision over attempted, recall over all gold instances, harmonic F1.

    A prediction is correct when it hits any gold key; when every instance is
    attempted, precision = recall = F1.
    """
    total = len(gold)
    attempted = sum(1 for iid in predictions if iid in gold)
    correct = sum(
        1 for iid, sense in predictions.items() if sense in gold.get(iid, frozenset())
    )
    precision = correct / attempted if attempted else 0.0
    recall = correct / total if total else 0.0
    if precision == recall:
        f1 = precision  # harmonic mean degenerates; keeps P = R = F1 exact
    elif precision + recall > 0.0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return Score(precision, recall, f1, correct, attempted, total)


def aggregate_scores(scores: Sequence[Score]) -> dict:
    """Micro (pooled counts) and macro (arithmetic mean) aggregation."""
    correct = sum(s.correct for s in scores)
    attempted = sum(s.attempted for s in scores)
    total = sum(s.total for s in scores)
    precision = correct / attempted if attempted else 0.0
    recall = correct / total if total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "micro": Score(precision, recall, f1, correct, attempted, total),
        "macro": {
            "precision": float(np.mean([s.precision for s in scores])),
            "recall": float(np.mean([s.recall for s in scores])),
            "f1": float(np.mean([s.f1 for s in scores])),
        },
    }


# -- significance tests --------------------------------------------------------


@dataclass(frozen=True)
class ContingencyPair:
    """Paired-system disagreement counts for McNemar's test."""

    b: int  # A correct, B wrong
    c: int  # A wrong, B correct
    agree_correct: int = 0
    agree_wrong: int = 0

    def __post_init__(self):
        if min(self.b, self.c, self.agree_correct, self.agree_wrong) < 0:
            raise ValueError("contingency counts must be nonnegative")

    @classmethod
    def from_predictions(
        cls, preds_a: Dict[str, str], preds_b: Dict[str, str], gold: GoldKeys
    ) -> "ContingencyPair":
        b = c = agree_c = agree_w = 0
        for iid, keys in gold.items():
            a_ok = preds_a.get(iid) in keys
            b_ok = preds_b.get(iid) in keys
            if a_ok and b_ok:
                agree_c += 1
            elif a_ok:
                b += 1
            elif b_ok:
                c += 1
            else:
                agree_w += 1
        return cls(b=b, c=c, agree_correct=agree_c, agree_wrong=agree_w)


def chi2_sf_1dof(x: float) -> float:
    """Survival function of chi-square with 1 dof, via erfc."""
    return math.erfc(math.sqrt(x / 2.0)) if x > 0.0 else 1.0


@dataclass(frozen=True)
class McNemarResult:
    statistic: float
    p_value: float


def mcnemar(pair: ContingencyPair, correction: bool = True) -> McNemarResult:
    """McNemar's chi-square test on the disagreement counts.

    The default applies the continuity correction (|b - c| - 1)^2 / (b + c);
    `correction=False` uses the uncorrected statistic.
    """
    b, c = pair.b, pair.c
    if b + c == 0:
        raise DegenerateTable("no disagreements (b + c = 0)")
    num = (abs(b - c) - 1.0) if correction else float(abs(b - c))
    statistic = num**2 / (b + c)
    return McNemarResult(statistic=statistic, p_value=chi2_sf_1dof(statistic))


def student_t_sf(t: float, dof: float) -> float:
    """Survival function of Student's t, via the incomplete beta function."""
    if t < 0.0:
        return 1.0 - student_t_sf(-t, dof)
    return 0.5 * float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: float
    p_value: float


def unpaired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Welch's unequal-variance two-sided t-test.

    Degrees of freedom follow Welch-Satterthwaite; identical samples give
    t = 0 and p = 1 exactly.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSample("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    sa, sb = va / len(a), vb / len(b)
    if sa + sb == 0.0:
        raise ZeroVariance("both samples are constant")
    t = float((a.mean() - b.mean()) / math.sqrt(sa + sb))
    dof = float(
        (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    )
    p = 2.0 * student_t_sf(abs(t), dof)
    return TTestResult(t=t, dof=dof, p_value=min(p, 1.0))


# -- model selection -----------------------------------------------------------


def config_order_key(config):
    """Documented total order on configurations used for tie-breaking:
    layer pair (target, source) ascending, then map kind alphabetically,
    then PMI normalization with False before True.
    """
    norm = getattr(config, "normalized_pmi", None)
    return (
        getattr(config, "target_layer", 0),
        getattr(config, "source_layer", 0),
        str(getattr(config, "map_kind", "")),
        -1 if norm is None else int(bool(norm)),
    )


def select_hyperparams(dev_scores: dict):
    """Config with maximal dev F1; ties resolved by `config_order_key`."""
    if not dev_scores:
        raise EmptyGrid("no configurations to select from")
    best_f1 = max(dev_scores.values())
    tied = [c for c, f1 in dev_scores.items() if f1 == best_f1]
    return min(tied, key=config_order_key)


# -- predictions files -----------------------------------------------------------


def read_predictions(path) -> Dict[str, str]:
    preds: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ValueError(f"prediction line without a key: {line.rstrip()!r}")
            preds[parts[0]] = parts[1]
    return preds


def write_predictions(predictions: Dict[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for iid, sense in predictions.items():
            fh.write(f"{iid} {sense}\n")
