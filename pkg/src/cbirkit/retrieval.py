"""Transform pipelines and gallery ranking.

A pipeline is an ordered list of fitted transforms. Stateless stages (DCT,
wavelet, PDF) are recorded as-is; stateful ones (z-score, PCA, sparse
dictionaries) are fitted on the training set only and carry a fingerprint
of the training ids so leakage is checkable after the fact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import reduce as red
from .data import FeatureSet
from .errors import DimensionError, PipelineError
from .metrics import MetricKind, distances_to
from .sparse import ClSpec, Dictionary, build_dict_kmeans, build_dict_ksvd, solve

# ---------------------------------------------------------------------------
# Stage specs (what to fit) — reduce.DctSpec and reduce.PdfSpec are reused.


@dataclass(frozen=True)
class ZscoreSpec:
    pass


@dataclass(frozen=True)
class PcaSpec:
    k: int


@dataclass(frozen=True)
class DwtSpec:
    levels: int


@dataclass(frozen=True)
class SparseSpec:
    """Dictionary-learning + coding stage.

    When `dictionary` is provided it is used as-is; otherwise one is learned
    on the training set with `method` (kmeans or ksvd). sparsity_T defaults
    to max(2, size // 10) for ksvd. cl may be left None and supplied later
    by the experiment runner.
    """

    cl: Optional[ClSpec] = None
    method: str = "ksvd"
    size: int = 50
    sparsity_T: Optional[int] = None
    iters: int = 50
    seed: int = 0
    dictionary: Optional[Dictionary] = None


StageSpec = object  # union of the config dataclasses above plus red.DctSpec / red.PdfSpec


def _ids_fingerprint(ids: Sequence[str]) -> str:
    digest = hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()
    return digest[:16]


# ---------------------------------------------------------------------------
# Fitted stages — each applies to an (n, d) matrix and names itself.


class _Stage:
    name: str = "stage"
    fingerprint: Optional[str] = None  # set for stages fitted on data

    def apply_matrix(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


@dataclass
class _DctStage(_Stage):
    spec: red.DctSpec
    name: str = "dct"

    def apply_matrix(self, X):
        return np.vstack([red.dct_keep(red.dct_forward(row), self.spec) for row in X])

    def describe(self):
        return f"dct({self.spec.keep if self.spec.keep is not None else 'all'})"


@dataclass
class _ZscoreStage(_Stage):
    params: red.ZScoreParams
    fingerprint: Optional[str] = None
    name: str = "zscore"

    def apply_matrix(self, X):
        return np.vstack([red.zscore_apply(self.params, row) for row in X])


@dataclass
class _PcaStage(_Stage):
    model: red.PcaModel
    fingerprint: Optional[str] = None
    name: str = "pca"

    def apply_matrix(self, X):
        return np.vstack([red.pca_project(self.model, row) for row in X])

    def describe(self):
        return f"pca({self.model.k})"


@dataclass
class _DwtStage(_Stage):
    levels: int
    name: str = "dwt"

    def apply_matrix(self, X):
        return np.vstack([red.haar_reduce(row, self.levels) for row in X])

    def describe(self):
        return f"dwt({self.levels})"


@dataclass
class _PdfStage(_Stage):
    spec: red.PdfSpec
    name: str = "pdf"

    def apply_matrix(self, X):
        return np.vstack([red.pdf_reduce(row, self.spec) for row in X])

    def describe(self):
        return f"pdf({self.spec.bins})"


@dataclass
class _SparseStage(_Stage):
    dictionary: Dictionary
    cl: ClSpec
    fingerprint: Optional[str] = None
    name: str = "sparse"

    def apply_matrix(self, X):
        codes = np.empty((X.shape[0], self.dictionary.size))
        for i, row in enumerate(X):
            codes[i] = solve(self.dictionary, row, self.cl).coefficients
        return codes

    def describe(self):
        return f"sparse({self.dictionary.learner}:{self.dictionary.size}:{self.cl.algorithm})"


@dataclass(frozen=True)
class TransformPipeline:
    stages: tuple
    input_dim: int
    output_dim: int
    fingerprint: str  # hash of the training ids every stateful stage saw

    def describe(self) -> str:
        return "+".join(s.describe() for s in self.stages) if self.stages else "identity"


def _fit_stage(spec, train_matrix: np.ndarray, fingerprint: str) -> _Stage:
    if isinstance(spec, red.DctSpec):
        return _DctStage(spec)
    if isinstance(spec, ZscoreSpec):
        return _ZscoreStage(red.zscore_fit(train_matrix), fingerprint)
    if isinstance(spec, PcaSpec):
        return _PcaStage(red.pca_fit(train_matrix, spec.k), fingerprint)
    if isinstance(spec, DwtSpec):
        return _DwtStage(spec.levels)
    if isinstance(spec, red.PdfSpec):
        return _PdfStage(spec)
    if isinstance(spec, SparseSpec):
        if spec.cl is None:
            raise PipelineError("sparse stage has no coefficient-learning spec")
        dictionary = spec.dictionary
        if dictionary is None:
            if spec.method == "kmeans":
                dictionary = build_dict_kmeans(train_matrix, spec.size, spec.seed, max(spec.iters, 1))
            elif spec.method == "ksvd":
                T = spec.sparsity_T if spec.sparsity_T is not None else max(2, spec.size // 10)
                dictionary = build_dict_ksvd(train_matrix, spec.size, T, spec.iters, spec.seed)
            else:
                raise PipelineError(f"unknown dictionary method {spec.method!r}")
        return _SparseStage(dictionary, spec.cl, fingerprint)
    raise PipelineError(f"unknown stage spec {type(spec).__name__}")


def fit_pipeline(stages: Sequence, train: FeatureSet) -> TransformPipeline:
    """Fit stage specs in order against the training set.

    Each stage is fitted on the training data as transformed by the stages
    before it. Dimension breaks surface as PipelineError naming the stage.
    """
    fingerprint = _ids_fingerprint(train.ids)
    X = train.matrix
    fitted = []
    for i, spec in enumerate(stages):
        try:
            stage = _fit_stage(spec, X, fingerprint)
            X = stage.apply_matrix(X)
        except PipelineError:
            raise
        except Exception as exc:
            name = type(spec).__name__
            raise PipelineError(f"stage {i} ({name}): {exc}") from exc
        fitted.append(stage)
    return TransformPipeline(tuple(fitted), train.dim, X.shape[1], fingerprint)


def apply_pipeline(pipeline: TransformPipeline, v) -> np.ndarray:
    """Run one vector through the pipeline."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (pipeline.input_dim,):
        raise DimensionError(f"vector shape {v.shape} != pipeline input dim {pipeline.input_dim}")
    X = v[None, :]
    for stage in pipeline.stages:
        X = stage.apply_matrix(X)
    return X[0]


def transform_set(pipeline: TransformPipeline, fs: FeatureSet) -> FeatureSet:
    """Run a whole FeatureSet through the pipeline, keeping ids and labels."""
    if fs.dim != pipeline.input_dim:
        raise DimensionError(f"feature dim {fs.dim} != pipeline input dim {pipeline.input_dim}")
    X = fs.matrix
    for stage in pipeline.stages:
        X = stage.apply_matrix(X)
    return FeatureSet(fs.ids, X, fs.labels)


# ---------------------------------------------------------------------------
# Ranking


@dataclass(frozen=True)
class RankedResult:
    query_id: str
    entries: tuple  # ((id, distance), ...) ascending by distance, then id

    def ids(self) -> list:
        return [e[0] for e in self.entries]


def rank_query(gallery: FeatureSet, q, q_id: str, metric: MetricKind) -> RankedResult:
    """Exhaustive scan: every gallery item (except q_id) sorted by distance.

    Ties are broken by id so rankings are reproducible across platforms.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (gallery.dim,):
        raise DimensionError(f"query shape {q.shape} != gallery dim {gallery.dim}")
    dists = distances_to(metric, gallery.matrix, q)
    order = sorted(
        (i for i, gid in enumerate(gallery.ids) if gid != q_id),
        key=lambda i: (dists[i], gallery.ids[i]),
    )
    entries = tuple((gallery.ids[i], float(dists[i])) for i in order)
    return RankedResult(q_id, entries)
