"""Nonnegative sparse coding against a column-norm-capped dictionary.

The source-language dictionary D (d, k) is learned online: minibatch sparse
coding followed by a block-coordinate column update from accumulated
sufficient statistics, with every column projected back onto the unit ball.
Target-language vectors are coded against the frozen dictionary after linear
mapping, which is what makes the codes comparable across languages.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .alignment import LinearMap, apply_map
from .errors import (
    DimensionMismatch,
    InvalidHyperparameter,
    MalformedHeader,
    NonFinite,
    TruncatedFile,
)
from .store import EmbeddingStore

DICT_MAGIC = b"XDCT"
CODES_MAGIC = b"XSPC"

#: coordinate descent stops when no coordinate moves more than this
CD_TOL = 1e-7
CD_MAX_SWEEPS = 10_000


@dataclass
class Dictionary:
    """Atoms as columns of a (d, k) matrix, every column norm at most 1."""

    atoms: np.ndarray
    lam: float

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2:
            raise DimensionMismatch("dictionary atoms must form a 2-d matrix")
        if not np.all(np.isfinite(self.atoms)):
            raise NonFinite("dictionary contains NaN/Inf")
        norms = np.linalg.norm(self.atoms, axis=0)
        if np.any(norms > 1.0 + 1e-9):
            raise ValueError(f"column norm {norms.max():.12f} exceeds the unit ball")

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def k(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class SparseCode:
    """Nonnegative code stored sparse: sorted indices with positive values."""

    indices: np.ndarray
    values: np.ndarray
    k: int

    @classmethod
    def from_dense(cls, vec: np.ndarray, k: Optional[int] = None) -> "SparseCode":
        vec = np.asarray(vec, dtype=np.float64)
        idx = np.nonzero(vec > 0.0)[0]
        return cls(
            indices=idx.astype(np.uint32),
            values=vec[idx],
            k=int(k if k is not None else vec.shape[0]),
        )

    def dense(self) -> np.ndarray:
        out = np.zeros(self.k)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def l1(self) -> float:
        return float(np.sum(self.values))


def _as_rows(Y) -> np.ndarray:
    if isinstance(Y, EmbeddingStore):
        return Y.matrix()
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[None, :]
    if not np.all(np.isfinite(Y)):
        raise NonFinite("data contains NaN/Inf")
    return Y


def nn_lasso_batch(Y, dictionary: Dictionary) -> np.ndarray:
    """Row-wise argmin over a >= 0 of 0.5||y - Da||^2 + lam * sum(a).

    Cyclic coordinate descent with nonnegative soft-thresholding, vectorized
    over rows; Gram products are maintained incrementally.  Returns dense
    (n, k) codes.
    """
    Y = _as_rows(Y)
    D = dictionary.atoms
    if Y.shape[1] != dictionary.dim:
        raise DimensionMismatch(
            f"data dim {Y.shape[1]} != dictionary dim {dictionary.dim}"
        )
    lam = dictionary.lam
    G = D.T @ D
    diag = np.diag(G).copy()
    C = Y @ D
    n, k = Y.shape[0], dictionary.k
    codes = np.zeros((n, k))
    S = np.zeros((n, k))  # codes @ G, kept incrementally
    live = np.nonzero(diag > 0.0)[0]
    for _ in range(CD_MAX_SWEEPS):
        max_delta = 0.0
        for j in live:
            new = np.maximum(0.0, codes[:, j] + (C[:, j] - S[:, j] - lam) / diag[j])
            delta = new - codes[:, j]
            step = np.max(np.abs(delta))
            if step > 0.0:
                S += delta[:, None] * G[j][None, :]
                codes[:, j] = new
                max_delta = max(max_delta, step)
        if max_delta < CD_TOL:
            break
    return codes


def lasso_nn(y, dictionary: Dictionary) -> SparseCode:
    """Sparse code of a single vector (see `nn_lasso_batch`)."""
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    codes = nn_lasso_batch(y, dictionary)
    return SparseCode.from_dense(codes[0], dictionary.k)


def kkt_gaps(y, dictionary: Dictionary, code: SparseCode):
    """(active gap, inactive gap) of the first-order optimality conditions.

    Active coordinates must satisfy d_j'(y - Da) = lam; inactive ones
    d_j'(y - Da) <= lam.  Both gaps should be ~0 at an exact solution.
    """
    y = np.asarray(y, dtype=np.float64)
    D = dictionary.atoms
    corr = D.T @ (y - D @ code.dense())
    active = np.zeros(dictionary.k, dtype=bool)
    active[code.indices] = True
    active_gap = float(np.max(np.abs(corr[active] - dictionary.lam))) if active.any() else 0.0
    inactive_gap = float(np.max(corr[~active] - dictionary.lam)) if (~active).any() else 0.0
    return active_gap, inactive_gap


def coding_objective(Y, dictionary: Dictionary, codes: Optional[np.ndarray] = None) -> float:
    """Full value of the sparse-coding objective over all rows of Y."""
    Y = _as_rows(Y)
    if codes is None:
        codes = nn_lasso_batch(Y, dictionary)
    resid = Y - codes @ dictionary.atoms.T
    return float(0.5 * np.sum(resid**2) + dictionary.lam * np.sum(codes))


def _update_columns(D: np.ndarray, A: np.ndarray, B: np.ndarray) -> None:
    """One block-coordinate pass over dictionary columns, in place.

    Column j moves to its quadratic-surrogate minimizer given the others,
    then is projected onto the unit ball; columns with no accumulated usage
    are left untouched.
    """
    for j in range(D.shape[1]):
        if A[j, j] <= 1e-10:
            continue
        u = D[:, j] + (B[:, j] - D @ A[:, j]) / A[j, j]
        D[:, j] = u / max(1.0, float(np.linalg.norm(u)))


def learn_dictionary(
    Y,
    k: int,
    lam: float,
    epochs: int = 10,
    batch: int = 256,
    seed: int = 0,
    history: Optional[list] = None,
) -> Dictionary:
    """Online dictionary learning with nonnegative codes.

    Initialization samples k data vectors without replacement (random unit
    vectors fill in when the data has fewer rows than k).  Each epoch shuffles
    the data, alternates minibatch sparse coding with the sufficient-statistics
    column update, and reseeds atoms that went unused for the whole epoch from
    the worst-reconstructed sample.  The full objective is evaluated at every
    epoch boundary; an epoch that would increase it is rolled back and replaced
    by one full-batch refinement pass from the previous dictionary, so the
    epoch-boundary objective is non-increasing.

    When `history` is passed a list, the initial and per-epoch-boundary
    objective values are appended to it.
    """
    if k < 1:
        raise InvalidHyperparameter(f"k must be >= 1, got {k}")
    if not lam > 0.0:
        raise InvalidHyperparameter(f"lambda must be > 0, got {lam}")
    Ymat = _as_rows(Y)
    n, d = Ymat.shape
    if n < 1:
        raise InvalidHyperparameter("need at least one data vector")
    rng = np.random.default_rng(seed)

    D = np.empty((d, k))
    picked = rng.choice(n, size=min(k, n), replace=False)
    for col, row in enumerate(picked):
        v = Ymat[row]
        D[:, col] = v / max(1.0, float(np.linalg.norm(v)))
    for col in range(min(k, n), k):
        v = rng.standard_normal(d)
        D[:, col] = v / np.linalg.norm(v)

    dictionary = Dictionary(D, lam)
    if epochs == 0:
        return dictionary

    A = np.zeros((k, k))
    B = np.zeros((d, k))
    prev_obj = coding_objective(Ymat, dictionary)
    if history is not None:
        history.append(prev_obj)
    prev_D = D.copy()
    minibatches_seen = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        used = np.zeros(k, dtype=bool)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            Yb = Ymat[rows]
            codes = nn_lasso_batch(Yb, dictionary)
            used |= (codes > 0.0).any(axis=0)
            # rescale past statistics so stale codes fade (minibatch forgetting)
            minibatches_seen += 1
            t, eta = minibatches_seen, max(len(rows), 1)
            theta = t * eta if t < eta else eta**2 + t - eta
            beta = (theta + 1.0 - eta) / (theta + 1.0)
            A = beta * A + codes.T @ codes
            B = beta * B + Yb.T @ codes
            _update_columns(D, A, B)

        full_codes = nn_lasso_batch(Ymat, dictionary)
        residuals = Ymat - full_codes @ D.T
        if not used.all():
            worst = int(np.argmax(np.sum(residuals**2, axis=1)))
            v = Ymat[worst]
            nv = float(np.linalg.norm(v))
            for j in np.nonzero(~used)[0]:
                D[:, j] = v / nv if nv > 0 else 0.0
                A[j, :] = A[:, j] = 0.0
                B[:, j] = 0.0
            full_codes = nn_lasso_batch(Ymat, dictionary)

        obj = coding_objective(Ymat, dictionary, full_codes)
        if obj > prev_obj:
            # roll back and take a guaranteed-descent full-batch step instead
            D[:] = prev_D
            full_codes = nn_lasso_batch(Ymat, dictionary)
            A = full_codes.T @ full_codes
            B = Ymat.T @ full_codes
            _update_columns(D, A, B)
            obj = coding_objective(Ymat, dictionary)
        if history is not None:
            history.append(obj)
        prev_obj = obj
        prev_D = D.copy()
    return dictionary


def encode_store(
    store, dictionary: Dictionary, linear_map: Optional[LinearMap] = None
) -> list:
    """Sparse-code every record (optionally mapped first), order preserved."""
    X = _as_rows(store)
    if linear_map is not None:
        X = apply_map(linear_map, X)
    codes = nn_lasso_batch(X, dictionary)
    return [SparseCode.from_dense(codes[i], dictionary.k) for i in range(len(codes))]


def codes_to_csr(codes: Sequence[SparseCode]) -> sp.csr_matrix:
    if not codes:
        return sp.csr_matrix((0, 0))
    k = codes[0].k
    indptr = np.cumsum([0] + [c.nnz for c in codes])
    indices = np.concatenate([c.indices for c in codes]) if indptr[-1] else np.empty(0, np.uint32)
    data = np.concatenate([c.values for c in codes]) if indptr[-1] else np.empty(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(codes), k))


class NonnegativeDictionaryLearner(TransformerMixin, BaseEstimator):
    """Estimator facade: fit learns the dictionary, transform sparse-codes.

    `transform` returns a scipy CSR matrix of shape (n_samples, k).
    """

    def __init__(self, k=3000, lam=0.05, epochs=10, batch=256, seed=0):
        self.k = k
        self.lam = lam
        self.epochs = epochs
        self.batch = batch
        self.seed = seed

    def fit(self, X, y=None):
        self.dictionary_ = learn_dictionary(
            X, k=self.k, lam=self.lam, epochs=self.epochs, batch=self.batch,
            seed=self.seed,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        codes = nn_lasso_batch(_as_rows(X), self.dictionary_)
        return sp.csr_matrix(codes)


# -- serialization -----------------------------------------------------------


def write_dictionary(dictionary: Dictionary, path) -> None:
    with open(path, "wb") as fh:
        fh.write(DICT_MAGIC)
        fh.write(struct.pack("<IId", dictionary.dim, dictionary.k, dictionary.lam))
        fh.write(np.asfortranarray(dictionary.atoms, dtype="<f8").tobytes(order="F"))


def read_dictionary(path) -> Dictionary:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != DICT_MAGIC:
        raise MalformedHeader(f"{path}: not a XDCT file")
    d, k, lam = struct.unpack("<IId", buf[4:20])
    need = 20 + 8 * d * k
    if len(buf) < need:
        raise TruncatedFile(f"{path}: needed {need} bytes, file has {len(buf)}")
    atoms = np.frombuffer(buf[20:need], dtype="<f8").reshape((d, k), order="F").copy()
    return Dictionary(atoms, lam)


def write_codes(codes: Sequence[SparseCode], k: int, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<IQ", k, len(codes)))
        for c in codes:
            fh.write(struct.pack("<I", c.nnz))
            for idx, val in zip(c.indices, c.values):
                fh.write(struct.pack("<Id", int(idx), float(val)))


def read_codes(path) -> list:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != CODES_MAGIC:
        raise MalformedHeader(f"{path}: not a XSPC file")
    k, count = struct.unpack("<IQ", buf[4:16])
    off = 16
    out = []
    for _ in range(count):
        if off + 4 > len(buf):
            raise TruncatedFile(f"{path}: code header past end of file")
        (nnz,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + 12 * nnz > len(buf):
            raise TruncatedFile(f"{path}: code payload past end of file")
        indices = np.empty(nnz, dtype=np.uint32)
        values = np.empty(nnz)
        for i in range(nnz):
            indices[i], values[i] = struct.unpack_from("<Id", buf, off)
            off += 12
        out.append(SparseCode(indices=indices, values=values, k=k))
    return out
