"""Cross-lingual embedding alignment, sparse sense coding and zero-shot WSD."""

from .alignment import (
    EmbeddingAligner,
    LinearMap,
    apply_map,
    eval_retrieval,
    fit_least_squares,
    fit_procrustes,
    fit_rcsls,
    read_map,
    write_map,
)
from .anchors import (
    AnchorPair,
    AnchorSet,
    BilingualLexicon,
    ParallelSentence,
    mine_anchors,
    split_anchors,
)
from .evaluation import (
    ContingencyPair,
    f_score,
    mcnemar,
    parse_xlwsd,
    select_hyperparams,
    unpaired_t_test,
)
from .pipeline import GridReport, RunConfig, RunResult, enumerate_grid, run, run_grid
from .sensemodel import (
    DenseSenseBank,
    DenseSenseModel,
    SenseInventory,
    SenseMatrix,
    SparseSenseModel,
    build_dense_bank,
    build_phi,
    infer_dense,
    infer_sparse,
)
from .sparsecode import (
    Dictionary,
    NonnegativeDictionaryLearner,
    SparseCode,
    encode_store,
    lasso_nn,
    learn_dictionary,
)
from .store import EmbeddingRecord, EmbeddingStore, read_store, write_store

__version__ = "0.1.0"
