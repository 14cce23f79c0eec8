"""Mining contextualized translation pairs from parallel sentences.

A source/target token pair is an anchor when the two words are mutual
translations under the bilingual lexicon.  Token positions refer to plain
whitespace tokens so that the embedding extractor and this miner agree on
indexing; punctuation is stripped only from the *form* used for lexicon
lookup, never from the positions.
"""

from __future__ import annotations

import math
import random
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import InsufficientAnchors
from .store import EmbeddingStore

TRAIN = "train"
TEST = "test"


def tokenize(text: str) -> list[str]:
    """Whitespace tokens; positions are what anchor indices refer to."""
    return text.split()


def match_form(token: str) -> str:
    """Token form used for lexicon lookup: boundary punctuation stripped."""
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


@dataclass(frozen=True)
class ParallelSentence:
    pair_id: int
    source_tokens: tuple
    target_tokens: tuple

    @classmethod
    def from_text(cls, pair_id: int, source: str, target: str) -> "ParallelSentence":
        return cls(pair_id, tuple(tokenize(source)), tuple(tokenize(target)))


class BilingualLexicon:
    """Word translation lists in both directions.

    Lookup policy: exact form first, then lowercase, on both the key and the
    translation-set side (lexica are usually lowercased, corpora are not).
    """

    def __init__(self, pairs: Iterable[tuple]):
        fwd, bwd = {}, {}
        for src, tgt in pairs:
            fwd.setdefault(src, set()).add(tgt)
            bwd.setdefault(tgt, set()).add(src)
        self.fwd = {k: frozenset(v) for k, v in fwd.items()}
        self.bwd = {k: frozenset(v) for k, v in bwd.items()}
        self._pairs = tuple(sorted({(s, t) for s, t in pairs}))

    @classmethod
    def from_tsv(cls, path) -> "BilingualLexicon":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                src, tgt = line.split("\t")[:2]
                pairs.append((src, tgt))
        return cls(pairs)

    def transpose(self) -> "BilingualLexicon":
        return BilingualLexicon([(t, s) for s, t in self._pairs])

    @staticmethod
    def _lookup(table, word):
        hit = table.get(word)
        if hit is None:
            hit = table.get(word.lower())
        return hit or frozenset()

    @staticmethod
    def _member(translations, word):
        return word in translations or word.lower() in translations

    def mutual(self, source_word: str, target_word: str) -> bool:
        """True iff the words translate to each other in both directions."""
        return self._member(
            self._lookup(self.fwd, source_word), target_word
        ) and self._member(self._lookup(self.bwd, target_word), source_word)


@dataclass(frozen=True)
class AnchorPair:
    pair_id: int
    src_index: int
    tgt_index: int


@dataclass
class AnchorSet:
    train: list
    test: list

    def all_pairs(self):
        return list(self.train) + list(self.test)


def mine_anchors(
    sentences: Sequence[ParallelSentence], lexicon: BilingualLexicon
) -> list:
    """Extract mutual-translation token pairs from each parallel sentence.

    A pair is kept only when it is unambiguous within its sentence pair: the
    word type (lowercased lookup form) occurs once on its side, and neither
    position participates in more than one mutual match.
    """
    out = []
    for sent in sentences:
        src_forms = [match_form(t) for t in sent.source_tokens]
        tgt_forms = [match_form(t) for t in sent.target_tokens]
        cands = [
            (i, j)
            for i, ws in enumerate(src_forms)
            if ws
            for j, wt in enumerate(tgt_forms)
            if wt and lexicon.mutual(ws, wt)
        ]
        src_types = Counter(f.lower() for f in src_forms if f)
        tgt_types = Counter(f.lower() for f in tgt_forms if f)
        cands = [
            (i, j)
            for i, j in cands
            if src_types[src_forms[i].lower()] == 1
            and tgt_types[tgt_forms[j].lower()] == 1
        ]
        src_degree = Counter(i for i, _ in cands)
        tgt_degree = Counter(j for _, j in cands)
        out.extend(
            AnchorPair(sent.pair_id, i, j)
            for i, j in cands
            if src_degree[i] == 1 and tgt_degree[j] == 1
        )
    return out


def split_anchors(
    pairs: Sequence[AnchorPair],
    train_cap: int,
    test_fraction: float,
    seed: int,
) -> AnchorSet:
    """Deterministic disjoint train/test split.

    Test size is ceil(n * test_fraction); train takes the remainder up to
    `train_cap`, anything beyond the cap is dropped.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    pairs = list(pairs)
    n = len(pairs)
    if n < 2:
        raise InsufficientAnchors(f"need at least 2 anchors, got {n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    n_test = math.ceil(n * test_fraction - 1e-9)
    test_rows = sorted(order[:n_test])
    train_rows = sorted(order[n_test : n_test + min(train_cap, n - n_test)])
    return AnchorSet(
        train=[pairs[r] for r in train_rows], test=[pairs[r] for r in test_rows]
    )


# -- file formats -------------------------------------------------------------


def read_parallel_tsv(path) -> list:
    """One sentence pair per line: pair_id <TAB> source <TAB> target."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            pair_id, source, target = line.split("\t")[:3]
            sentences.append(ParallelSentence.from_text(int(pair_id), source, target))
    return sentences


def write_anchors(anchors: AnchorSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for split, pairs in ((TRAIN, anchors.train), (TEST, anchors.test)):
            for p in pairs:
                fh.write(f"{p.pair_id}\t{p.src_index}\t{p.tgt_index}\t{split}\n")


def read_anchors(path) -> AnchorSet:
    train, test = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            pair_id, src_idx, tgt_idx, split = line.split("\t")[:4]
            pair = AnchorPair(int(pair_id), int(src_idx), int(tgt_idx))
            (train if split == TRAIN else test).append(pair)
    return AnchorSet(train=train, test=test)


def resolve_pairs(
    pairs: Sequence[AnchorPair],
    source_store: EmbeddingStore,
    target_store: EmbeddingStore,
) -> tuple:
    """Record ids (target_ids, source_ids) for anchors present in both stores.

    Anchors whose token was not embedded on either side are skipped (long
    sentences may have been truncated at extraction time).
    """
    src_pos = source_store.position_index()
    tgt_pos = target_store.position_index()
    target_ids, source_ids = [], []
    for p in pairs:
        src_rec = src_pos.get((p.pair_id, p.src_index))
        tgt_rec = tgt_pos.get((p.pair_id, p.tgt_index))
        if src_rec is None or tgt_rec is None:
            continue
        target_ids.append(tgt_rec)
        source_ids.append(src_rec)
    return target_ids, source_ids
