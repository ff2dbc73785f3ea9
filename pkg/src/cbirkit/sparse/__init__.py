"""Sparse representation: dictionary learning and coefficient learning."""

from .dictionary import (
    Dictionary,
    build_dict_kmeans,
    build_dict_ksvd,
    build_dict_ksvd_with_trace,
    load_dictionary,
    save_dictionary,
)
from .solvers import (
    ClSpec,
    EncodeReport,
    SparseCode,
    encode_set,
    kkt_violation,
    lambda_max,
    solve,
    solve_elastic_net,
    solve_homotopy,
    solve_lasso,
    solve_ssf,
    sparse_omp,
    sr_objective,
)

__all__ = [
    "ClSpec",
    "Dictionary",
    "EncodeReport",
    "SparseCode",
    "build_dict_kmeans",
    "build_dict_ksvd",
    "build_dict_ksvd_with_trace",
    "encode_set",
    "kkt_violation",
    "lambda_max",
    "load_dictionary",
    "save_dictionary",
    "solve",
    "solve_elastic_net",
    "solve_homotopy",
    "solve_lasso",
    "solve_ssf",
    "sparse_omp",
    "sr_objective",
]
