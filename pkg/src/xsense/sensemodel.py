"""Sense representations over sparse coordinates, plus the dense baseline.

The sparse route accumulates a weighted co-occurrence table between gold
senses and nonzero code coordinates, turns it into (normalized) PMI scores,
and disambiguates by scoring candidate rows against a token's code.  The
dense route keeps one centroid per sense and uses cosine nearest-neighbor.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .alignment import LinearMap, apply_map
from .errors import (
    EmptyCandidates,
    LengthMismatch,
    MalformedHeader,
    TruncatedFile,
    UnknownSense,
)
from .sparsecode import SparseCode
from .store import EmbeddingStore

PHI_MAGIC = b"XPHI"
BANK_MAGIC = b"XBNK"


@dataclass
class SenseInventory:
    """Sense ids plus the candidate lists keyed by (lemma, pos).

    Candidate order matters: the first-listed sense is the backoff prediction
    when scores tie or no candidate was seen in training.
    """

    senses: list
    lemma_index: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.senses)) != len(self.senses):
            raise ValueError("duplicate sense ids in inventory")
        self.row = {s: i for i, s in enumerate(self.senses)}
        for key, cands in self.lemma_index.items():
            if not cands:
                raise ValueError(f"empty candidate list for {key}")
            for c in cands:
                if c not in self.row:
                    raise UnknownSense(f"candidate {c!r} of {key} not in inventory")

    def candidates(self, lemma: str, pos: str) -> list:
        try:
            return self.lemma_index[(lemma, pos)]
        except KeyError:
            raise UnknownSense(f"no candidates for ({lemma!r}, {pos!r})") from None

    @classmethod
    def from_tsv(cls, path) -> "SenseInventory":
        """Lines `lemma <TAB> pos <TAB> sense1,sense2,...`, candidate order kept."""
        lemma_index = {}
        senses = []
        seen = set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                lemma, pos, cands = line.split("\t")[:3]
                cand_list = cands.split(",")
                lemma_index[(lemma, pos)] = cand_list
                for c in cand_list:
                    if c not in seen:
                        seen.add(c)
                        senses.append(c)
        return cls(senses=senses, lemma_index=lemma_index)


def _label_lists(labels) -> list:
    """Normalize per-token labels to lists (tokens may carry several senses)."""
    out = []
    for item in labels:
        if isinstance(item, str):
            out.append([item])
        else:
            out.append(list(item))
    return out


@dataclass
class SenseMatrix:
    """(senses, k) matrix of (normalized) PMI scores, rows in inventory order."""

    phi: np.ndarray
    sense_ids: list
    normalized: bool
    smoothing: float = 1.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.shape[0] != len(self.sense_ids):
            raise LengthMismatch("phi rows must match sense id count")
        self.row = {s: i for i, s in enumerate(self.sense_ids)}

    @property
    def k(self) -> int:
        return self.phi.shape[1]


def build_phi(
    codes: Sequence[SparseCode],
    labels,
    inventory: SenseInventory,
    normalized: bool = False,
    smoothing: float = 1.0,
    binary_cooc: bool = False,
) -> SenseMatrix:
    """Co-occurrence of gold senses with nonzero code coordinates, as (N)PMI.

    Cell (s, j) accumulates the coordinate value alpha_j over tokens labeled
    s (or 1 per nonzero when `binary_cooc`).  Probabilities are taken from the
    table plus `smoothing` added to every cell, but cells with zero raw mass
    stay 0 in the output.  NPMI divides by -log p(s, j), which maps scores
    into [-1, 1].
    """
    codes = list(codes)
    labels = _label_lists(labels)
    if len(codes) != len(labels):
        raise LengthMismatch(f"{len(codes)} codes vs {len(labels)} label lists")
    n_senses = len(inventory.senses)
    if not codes:
        return SenseMatrix(
            np.zeros((n_senses, 0)), list(inventory.senses), normalized, smoothing
        )
    k = codes[0].k
    counts = np.zeros((n_senses, k))
    for code, token_senses in zip(codes, labels):
        if code.k != k:
            raise LengthMismatch("codes disagree on ambient width k")
        weights = np.ones(code.nnz) if binary_cooc else code.values
        for s in token_senses:
            if s not in inventory.row:
                raise UnknownSense(f"label {s!r} not in inventory")
            counts[inventory.row[s], code.indices] += weights

    smoothed = counts + smoothing
    total = smoothed.sum()
    p_joint = smoothed / total
    p_sense = p_joint.sum(axis=1, keepdims=True)
    p_coord = p_joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.log(p_joint / (p_sense * p_coord))
        if normalized:
            denom = -np.log(p_joint)
            phi = np.where(denom > 0.0, phi / np.where(denom > 0.0, denom, 1.0), 0.0)
    phi[counts == 0.0] = 0.0
    return SenseMatrix(phi, list(inventory.senses), normalized, smoothing)


def infer_sparse(code: SparseCode, phi: SenseMatrix, candidates: Sequence[str]) -> str:
    """Candidate maximizing the phi-row score of the code; ties go first-listed."""
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no candidate senses")
    rows = []
    for c in candidates:
        if c not in phi.row:
            raise UnknownSense(f"candidate {c!r} not in sense matrix")
        rows.append(phi.row[c])
    scores = phi.phi[rows] @ code.dense()
    return candidates[int(np.argmax(scores))]


@dataclass
class DenseSenseBank:
    """Per-sense centroid vectors with their supporting token counts."""

    sense_ids: list
    centroids: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.sense_ids) != self.centroids.shape[0] or len(
            self.sense_ids
        ) != len(self.counts):
            raise LengthMismatch("bank columns disagree")
        self.row = {s: i for i, s in enumerate(self.sense_ids)}

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def build_dense_bank(store, labels, inventory: SenseInventory) -> DenseSenseBank:
    """Arithmetic mean of token vectors per sense; unseen senses are absent."""
    X = store.matrix() if isinstance(store, EmbeddingStore) else np.asarray(store, float)
    labels = _label_lists(labels)
    if X.shape[0] != len(labels):
        raise LengthMismatch(f"{X.shape[0]} vectors vs {len(labels)} label lists")
    sums: dict = {}
    counts: dict = {}
    for vec, token_senses in zip(X, labels):
        for s in token_senses:
            if s not in inventory.row:
                raise UnknownSense(f"label {s!r} not in inventory")
            if s in sums:
                sums[s] += vec
                counts[s] += 1
            else:
                sums[s] = vec.astype(np.float64).copy()
                counts[s] = 1
    seen = [s for s in inventory.senses if s in sums]
    centroids = (
        np.stack([sums[s] / counts[s] for s in seen])
        if seen
        else np.zeros((0, X.shape[1]))
    )
    return DenseSenseBank(
        sense_ids=seen,
        centroids=centroids,
        counts=np.array([counts[s] for s in seen], dtype=np.int64),
    )


def infer_dense(
    x,
    bank: DenseSenseBank,
    linear_map: Optional[LinearMap] = None,
    candidates: Sequence[str] = (),
) -> str:
    """Candidate whose centroid is cosine-nearest to (W x or x).

    Candidates without a centroid score -inf; if none was seen in training,
    fall back to the first-listed candidate.
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no candidate senses")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if linear_map is not None:
        x = apply_map(linear_map, x)
    known = [c for c in candidates if c in bank.row]
    if not known:
        return candidates[0]
    C = bank.centroids[[bank.row[c] for c in known]]
    xn = x[0] / (np.linalg.norm(x[0]) or 1.0)
    norms = np.linalg.norm(C, axis=1)
    sims = (C @ xn) / np.where(norms == 0.0, 1.0, norms)
    best = known[int(np.argmax(sims))]
    return best


class SparseSenseModel(BaseEstimator):
    """fit(codes, labels, inventory) builds phi; predict scores candidates."""

    def __init__(self, normalized=False, smoothing=1.0, binary_cooc=False):
        self.normalized = normalized
        self.smoothing = smoothing
        self.binary_cooc = binary_cooc

    def fit(self, codes, labels, inventory: SenseInventory):
        self.phi_ = build_phi(
            codes,
            labels,
            inventory,
            normalized=self.normalized,
            smoothing=self.smoothing,
            binary_cooc=self.binary_cooc,
        )
        return self

    def predict(self, codes, candidates_per_instance):
        check_is_fitted(self, "phi_")
        return [
            infer_sparse(code, self.phi_, cands)
            for code, cands in zip(codes, candidates_per_instance)
        ]


class DenseSenseModel(BaseEstimator):
    """fit(X, labels, inventory) stores centroids; predict is cosine 1-NN."""

    def fit(self, X, labels, inventory: SenseInventory):
        self.bank_ = build_dense_bank(X, labels, inventory)
        return self

    def predict(self, X, candidates_per_instance, linear_map: Optional[LinearMap] = None):
        check_is_fitted(self, "bank_")
        X = X.matrix() if isinstance(X, EmbeddingStore) else np.asarray(X, float)
        return [
            infer_dense(x, self.bank_, linear_map, cands)
            for x, cands in zip(X, candidates_per_instance)
        ]


# -- serialization -----------------------------------------------------------


def _pack_ids(ids) -> bytes:
    parts = []
    for s in ids:
        raw = s.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    return b"".join(parts)


def _unpack_ids(buf: bytes, off: int, n: int, path):
    ids = []
    for _ in range(n):
        if off + 2 > len(buf):
            raise TruncatedFile(f"{path}: sense id table past end of file")
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        if off + ln > len(buf):
            raise TruncatedFile(f"{path}: sense id payload past end of file")
        ids.append(buf[off : off + ln].decode("utf-8"))
        off += ln
    return ids, off


def write_phi(matrix: SenseMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(PHI_MAGIC)
        fh.write(
            struct.pack(
                "<IIB", len(matrix.sense_ids), matrix.k, 1 if matrix.normalized else 0
            )
        )
        fh.write(np.ascontiguousarray(matrix.phi, dtype="<f8").tobytes())
        fh.write(_pack_ids(matrix.sense_ids))


def read_phi(path) -> SenseMatrix:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != PHI_MAGIC:
        raise MalformedHeader(f"{path}: not a XPHI file")
    n, k, norm = struct.unpack("<IIB", buf[4:13])
    need = 13 + 8 * n * k
    if len(buf) < need:
        raise TruncatedFile(f"{path}: needed {need} bytes, file has {len(buf)}")
    phi = np.frombuffer(buf[13:need], dtype="<f8").reshape(n, k).copy()
    ids, _ = _unpack_ids(buf, need, n, path)
    return SenseMatrix(phi, ids, normalized=bool(norm))


def write_bank(bank: DenseSenseBank, path) -> None:
    with open(path, "wb") as fh:
        fh.write(BANK_MAGIC)
        fh.write(struct.pack("<II", len(bank.sense_ids), bank.dim))
        fh.write(np.ascontiguousarray(bank.centroids, dtype="<f8").tobytes())
        fh.write(bank.counts.astype("<u8").tobytes())
        fh.write(_pack_ids(bank.sense_ids))


def read_bank(path) -> DenseSenseBank:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != BANK_MAGIC:
        raise MalformedHeader(f"{path}: not a XBNK file")
    n, d = struct.unpack("<II", buf[4:12])
    need = 12 + 8 * n * d + 8 * n
    if len(buf) < need:
        raise TruncatedFile(f"{path}: needed {need} bytes, file has {len(buf)}")
    centroids = np.frombuffer(buf[12 : 12 + 8 * n * d], dtype="<f8").reshape(n, d).copy()
    counts = np.frombuffer(buf[12 + 8 * n * d : need], dtype="<u8").astype(np.int64)
    ids, _ = _unpack_ids(buf, need, n, path)
    return DenseSenseBank(ids, centroids, counts)
