"""cbirkit: content-based image retrieval with sparse-coded features.

Feature extraction (Gabor/histogram/HOG), feature transforms (DCT, z-score,
PCA, Haar wavelet, value-distribution histograms), dictionary learning
(K-means, K-SVD) with four coefficient learners (homotopy, lasso, elastic
net, SSF), four distance metrics, and MAP/PR/ER evaluation under holdout or
leave-one-out protocols.
"""

from .data import (
    FeatureSet,
    FeatureVector,
    SplitSpec,
    load_feature_set,
    load_manifest,
    save_feature_set,
    save_manifest,
    stratified_split,
)
from .errors import (
    CbirError,
    DataError,
    DimensionError,
    EvaluationError,
    FormatError,
    ManifestError,
    PipelineError,
    SpecError,
    SplitError,
)
from .evaluate import (
    EvalReport,
    PrCurve,
    average_precision,
    error_rate,
    error_rate_curve,
    mean_average_precision,
    mean_interpolated_pr,
    pr_curve,
    run_experiment,
)
from .features import (
    GaborSpec,
    ImageBuffer,
    color_histogram,
    gabor_features,
    gabor_kernel,
    hog_features,
    load_image,
)
from .metrics import MetricKind, canberra, distance, distances_to, euclidean, hassanat, manhattan
from .reduce import (
    DctSpec,
    PcaModel,
    PdfSpec,
    ZScoreParams,
    dct_forward,
    dct_inverse,
    dct_keep,
    haar_level,
    haar_reduce,
    pca_fit,
    pca_project,
    pdf_reduce,
    pdf_reduce_with_stats,
    zscore_apply,
    zscore_fit,
)
from .retrieval import (
    DwtSpec,
    PcaSpec,
    RankedResult,
    SparseSpec,
    TransformPipeline,
    ZscoreSpec,
    apply_pipeline,
    fit_pipeline,
    rank_query,
    transform_set,
)
from .sparse import (
    ClSpec,
    Dictionary,
    EncodeReport,
    SparseCode,
    build_dict_kmeans,
    build_dict_ksvd,
    build_dict_ksvd_with_trace,
    encode_set,
    kkt_violation,
    lambda_max,
    load_dictionary,
    save_dictionary,
    solve,
    solve_elastic_net,
    solve_homotopy,
    solve_lasso,
    solve_ssf,
    sparse_omp,
    sr_objective,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # data
    "FeatureSet", "FeatureVector", "SplitSpec",
    "load_feature_set", "load_manifest", "save_feature_set", "save_manifest", "stratified_split",
    # errors
    "CbirError", "DataError", "DimensionError", "EvaluationError", "FormatError",
    "ManifestError", "PipelineError", "SpecError", "SplitError",
    # metrics
    "MetricKind", "canberra", "distance", "distances_to", "euclidean", "hassanat", "manhattan",
    # reduce
    "DctSpec", "PcaModel", "PdfSpec", "ZScoreParams",
    "dct_forward", "dct_inverse", "dct_keep", "haar_level", "haar_reduce",
    "pca_fit", "pca_project", "pdf_reduce", "pdf_reduce_with_stats", "zscore_apply", "zscore_fit",
    # features
    "GaborSpec", "ImageBuffer", "color_histogram", "gabor_features", "gabor_kernel",
    "hog_features", "load_image",
    # sparse
    "ClSpec", "Dictionary", "EncodeReport", "SparseCode",
    "build_dict_kmeans", "build_dict_ksvd", "build_dict_ksvd_with_trace", "encode_set",
    "kkt_violation", "lambda_max", "load_dictionary", "save_dictionary",
    "solve", "solve_elastic_net", "solve_homotopy", "solve_lasso", "solve_ssf",
    "sparse_omp", "sr_objective",
    # retrieval
    "DwtSpec", "PcaSpec", "RankedResult", "SparseSpec", "TransformPipeline", "ZscoreSpec",
    "apply_pipeline", "fit_pipeline", "rank_query", "transform_set",
    # evaluation
    "EvalReport", "PrCurve", "average_precision", "error_rate", "error_rate_curve",
    "mean_average_precision", "mean_interpolated_pr", "pr_curve", "run_experiment",
]
