"""Linear maps between contextual embedding spaces.

Conventions: anchor matrices are row-stacked, X holds target-language vectors
(n, d_t), Y holds source-language vectors (n, d_s), and a map W sends target
to source space, y ~= W x.  Everything is computed in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    DimensionMismatch,
    EmptyTestSet,
    MalformedHeader,
    NonFinite,
    TruncatedFile,
)

LEAST_SQUARES = "least_squares"
ISOMETRIC = "isometric"
RCSLS = "rcsls"
IDENTITY = "identity"

KINDS = (IDENTITY, LEAST_SQUARES, ISOMETRIC, RCSLS)
KIND_ALIASES = {"lstsq": LEAST_SQUARES, "procrustes": ISOMETRIC}

_KIND_CODES = {IDENTITY: 0, LEAST_SQUARES: 1, ISOMETRIC: 2, RCSLS: 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

MAP_MAGIC = b"XMAP"


def canonical_kind(kind: str) -> str:
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown map kind {kind!r}, expected one of {KINDS}")
    return kind


@dataclass
class LinearMap:
    """A (d_s, d_t) matrix sending target-space vectors to source space."""

    matrix: np.ndarray
    kind: str
    source_layer: int = -1
    target_layer: int = -1
    residual: Optional[float] = None
    rank: Optional[int] = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.kind = canonical_kind(self.kind)
        if self.matrix.ndim != 2:
            raise DimensionMismatch("map matrix must be 2-d")
        if self.kind == ISOMETRIC:
            gap = np.max(np.abs(self.matrix.T @ self.matrix - np.eye(self.d_t)))
            if gap > 1e-6:
                raise ValueError(f"isometric map violates W'W = I by {gap:.2e}")
        if self.kind == IDENTITY:
            if self.d_s != self.d_t or not np.array_equal(
                self.matrix, np.eye(self.d_t)
            ):
                raise ValueError("identity map must carry the identity matrix")

    @property
    def d_s(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_t(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, dim: int, source_layer=-1, target_layer=-1) -> "LinearMap":
        return cls(np.eye(dim), IDENTITY, source_layer, target_layer)


def _as_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got {X.ndim}-d")
    if not np.all(np.isfinite(X)):
        raise NonFinite(f"{name} contains NaN/Inf")
    return X


def _unit_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(norms == 0.0, 1.0, norms)


def apply_map(linear_map: LinearMap, X) -> np.ndarray:
    """Rows W x_i; the identity kind passes the input through unchanged."""
    X = _as_matrix(X)
    if X.shape[1] != linear_map.d_t:
        raise DimensionMismatch(
            f"map expects dim {linear_map.d_t}, got {X.shape[1]}"
        )
    if linear_map.kind == IDENTITY:
        return X
    return X @ linear_map.matrix.T


def fit_least_squares(X, Y) -> LinearMap:
    """Unconstrained minimizer of sum ||W x_i - y_i||^2.

    Solved by SVD-backed least squares, so rank-deficient anchor sets fall
    back to the pseudoinverse solution; the map carries the achieved residual
    and the effective rank of X.
    """
    X, Y = _as_matrix(X), _as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch("X and Y must have the same number of rows")
    B, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
    residual = float(np.sum((X @ B - Y) ** 2))
    return LinearMap(B.T, LEAST_SQUARES, residual=residual, rank=int(rank))


def fit_procrustes(X, Y) -> LinearMap:
    """Best isometric map: W = U V' from the SVD of Y'X.

    Among all orthogonal W this minimizes sum ||W x_i - y_i||^2; requires
    d_t = d_s.
    """
    X, Y = _as_matrix(X), _as_matrix(Y, "Y")
    if X.shape != Y.shape:
        raise DimensionMismatch(
            f"procrustes needs equal shapes, got {X.shape} and {Y.shape}"
        )
    u, _, vh = np.linalg.svd(Y.T @ X)
    W = u @ vh
    residual = float(np.sum((X @ W.T - Y) ** 2))
    return LinearMap(W, ISOMETRIC, residual=residual)


def rcsls_objective(W, X, Y, k_nn: int):
    """Value of the retrieval-oriented criterion at W (higher is better).

    Per anchor i: 2 cos(W x_i, y_i), minus the mean cosine of W x_i to its
    k_nn nearest target vectors, minus the mean cosine of y_i to its k_nn
    nearest mapped vectors; averaged over anchors.

    Returns (value, coefficient matrix K, cosine matrix C, mapped unit rows,
    mapped norms); the extras feed the gradient computation.
    """
    n = X.shape[0]
    k = min(k_nn, n)
    U = X @ W.T
    norms = np.linalg.norm(U, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    Un = U / safe[:, None]
    Yn = _unit_rows(Y)
    C = Un @ Yn.T

    K = np.zeros((n, n))
    K[np.diag_indices(n)] += 2.0
    # k nearest target vectors of each mapped anchor (rows) and k nearest
    # mapped vectors of each target anchor (columns)
    row_nn = np.argpartition(-C, k - 1, axis=1)[:, :k]
    col_nn = np.argpartition(-C, k - 1, axis=0)[:k, :]
    rows = np.repeat(np.arange(n), k)
    np.subtract.at(K, (rows, row_nn.reshape(-1)), 1.0 / k)
    np.subtract.at(K, (col_nn.T.reshape(-1), rows), 1.0 / k)

    value = float(np.sum(K * C) / n)
    return value, K, C, Un, safe, Yn


def _rcsls_gradient(X, K, C, Un, norms, Yn):
    # d cos(u_i, yhat_j)/dW = ((yhat_j - c_ij uhat_i) / ||u_i||) x_i'
    q = np.sum(K * C, axis=1)
    M = (K @ Yn - q[:, None] * Un) / norms[:, None]
    return M.T @ X / X.shape[0]


def fit_rcsls(
    X,
    Y,
    k_nn: int = 10,
    init: Optional[LinearMap] = None,
    steps: int = 50,
    step_size: float = 10.0,
) -> LinearMap:
    """Refine a map by full-batch ascent on the RCSLS criterion.

    Neighbor sets are recomputed at every candidate point; a backtracking
    line search halves the step until the objective improves, so accepted
    iterates are non-decreasing in the objective.  `steps=0` returns the
    initial map unchanged.
    """
    X, Y = _as_matrix(X), _as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch("X and Y must have the same number of rows")
    if k_nn < 1:
        raise ValueError("k_nn must be >= 1")
    if init is None:
        init = fit_procrustes(X, Y)
    if init.d_t != X.shape[1] or init.d_s != Y.shape[1]:
        raise DimensionMismatch("init map incompatible with anchor dimensions")
    if steps == 0:
        return init

    W = init.matrix.copy()
    value, K, C, Un, norms, Yn = rcsls_objective(W, X, Y, k_nn)
    eta = float(step_size)
    for _ in range(steps):
        G = _rcsls_gradient(X, K, C, Un, norms, Yn)
        accepted = False
        trial = eta
        for _ in range(40):
            W_new = W + trial * G
            new_value, *state = rcsls_objective(W_new, X, Y, k_nn)
            if new_value > value:
                W, value = W_new, new_value
                K, C, Un, norms, Yn = state
                eta = min(trial * 2.0, float(step_size))
                accepted = True
                break
            trial /= 2.0
        if not accepted:
            break
    return LinearMap(W, RCSLS, source_layer=init.source_layer,
                     target_layer=init.target_layer)


@dataclass(frozen=True)
class RetrievalResult:
    accuracy_at_1: float
    ties: int
    n: int


def eval_retrieval(linear_map: LinearMap, X_test, Y_test, metric="cosine") -> RetrievalResult:
    """accuracy@1 of translation retrieval: row i of X must retrieve row i of Y.

    Ties are broken toward the lowest index and counted in the result.
    """
    if metric != "cosine":
        raise ValueError(f"unsupported metric {metric!r}")
    X_test, Y_test = _as_matrix(X_test), _as_matrix(Y_test, "Y_test")
    if X_test.shape[0] == 0:
        raise EmptyTestSet("no test rows")
    if X_test.shape[0] != Y_test.shape[0]:
        raise DimensionMismatch("X_test and Y_test must be row-aligned")
    sims = _unit_rows(apply_map(linear_map, X_test)) @ _unit_rows(Y_test).T
    predictions = np.argmax(sims, axis=1)
    best = sims[np.arange(len(sims)), predictions]
    ties = int(np.sum(np.sum(sims == best[:, None], axis=1) > 1))
    accuracy = float(np.mean(predictions == np.arange(len(sims))))
    return RetrievalResult(accuracy_at_1=accuracy, ties=ties, n=len(sims))


class EmbeddingAligner(TransformerMixin, BaseEstimator):
    """Estimator wrapper: fit a map on anchor pairs, transform target vectors.

    Parameters
    ----------
    kind : {"identity", "least_squares", "isometric", "rcsls"} or an alias
        ("lstsq", "procrustes").  RCSLS is initialized from the isometric
        solution, which keeps fitting deterministic.
    k_nn, steps, step_size : RCSLS hyperparameters.
    normalize_anchors : unit-normalize anchor rows before fitting (off by
        default; retrieval normalizes internally either way).
    """

    def __init__(self, kind=ISOMETRIC, k_nn=10, steps=50, step_size=10.0,
                 normalize_anchors=False):
        self.kind = kind
        self.k_nn = k_nn
        self.steps = steps
        self.step_size = step_size
        self.normalize_anchors = normalize_anchors

    def fit(self, X, Y):
        kind = canonical_kind(self.kind)
        X, Y = _as_matrix(X), _as_matrix(Y, "Y")
        if self.normalize_anchors:
            X, Y = _unit_rows(X), _unit_rows(Y)
        if kind == IDENTITY:
            if X.shape[1] != Y.shape[1]:
                raise DimensionMismatch("identity map needs d_t = d_s")
            self.map_ = LinearMap.identity(X.shape[1])
        elif kind == LEAST_SQUARES:
            self.map_ = fit_least_squares(X, Y)
        elif kind == ISOMETRIC:
            self.map_ = fit_procrustes(X, Y)
        else:
            self.map_ = fit_rcsls(X, Y, k_nn=self.k_nn, steps=self.steps,
                                  step_size=self.step_size)
        return self

    def transform(self, X):
        check_is_fitted(self, "map_")
        return apply_map(self.map_, X)

    def score(self, X, Y):
        check_is_fitted(self, "map_")
        return eval_retrieval(self.map_, X, Y).accuracy_at_1


# -- serialization -----------------------------------------------------------


def write_map(linear_map: LinearMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC)
        fh.write(
            struct.pack(
                "<BII", _KIND_CODES[linear_map.kind], linear_map.d_s, linear_map.d_t
            )
        )
        fh.write(np.ascontiguousarray(linear_map.matrix, dtype="<f8").tobytes())


def read_map(path) -> LinearMap:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != MAP_MAGIC:
        raise MalformedHeader(f"{path}: not a XMAP file")
    if len(buf) < 13:
        raise TruncatedFile(f"{path}: header incomplete")
    code, d_s, d_t = struct.unpack("<BII", buf[4:13])
    if code not in _CODE_KINDS:
        raise MalformedHeader(f"{path}: unknown kind code {code}")
    need = 13 + 8 * d_s * d_t
    if len(buf) < need:
        raise TruncatedFile(f"{path}: needed {need} bytes, file has {len(buf)}")
    matrix = np.frombuffer(buf[13:need], dtype="<f8").reshape(d_s, d_t).copy()
    return LinearMap(matrix, _CODE_KINDS[code])
