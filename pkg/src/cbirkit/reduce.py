"""Feature transforms and dimensionality reduction.

dct_forward is the orthonormal DCT-II (norm-preserving, first coefficient is
the DC term), so keeping a prefix keeps the DC plus lowest-frequency AC
coefficients. haar_level is one level of the Haar approximation with an odd
tail that contributes twice (the last element is paired with itself). PDF
binning turns a vector into a probability vector over equal-width bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.fft import dct as _scipy_dct, idct as _scipy_idct

from .errors import DimensionError, SpecError

if TYPE_CHECKING:
    from .data import FeatureSet


@dataclass(frozen=True)
class DctSpec:
    """Number of retained DCT coefficients; keep=None retains all."""

    keep: Optional[int] = None

    def __post_init__(self):
        if self.keep is not None and self.keep < 1:
            raise SpecError("keep must be >= 1 (or None for all)")


@dataclass(frozen=True)
class ZScoreParams:
    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        stddev = np.asarray(self.stddev, dtype=np.float64)
        if mean.shape != stddev.shape or mean.ndim != 1:
            raise DimensionError("mean and stddev must be 1-D of equal length")
        if np.any(stddev < 0):
            raise SpecError("stddev must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", stddev)


@dataclass(frozen=True)
class PcaModel:
    """Mean vector plus top-k principal axes (rows) and their variances."""

    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    variances: np.ndarray  # k, nonincreasing

    def __post_init__(self):
        components = np.asarray(self.components, dtype=np.float64)
        gram = components @ components.T
        if not np.allclose(gram, np.eye(components.shape[0]), atol=1e-8):
            raise SpecError("PCA components must be orthonormal")
        variances = np.asarray(self.variances, dtype=np.float64)
        if np.any(np.diff(variances) > 1e-12) or np.any(variances < -1e-12):
            raise SpecError("variances must be nonnegative and nonincreasing")

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class PdfSpec:
    """Histogram size and range; range=None means per-vector min/max."""

    bins: int
    range: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.bins < 1:
            raise SpecError("bins must be >= 1")
        if self.range is not None:
            lo, hi = self.range
            if not lo < hi:
                raise SpecError(f"range requires lo < hi, got [{lo}, {hi}]")


def dct_forward(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DimensionError("dct_forward requires a nonempty 1-D input")
    return _scipy_dct(x, type=2, norm="ortho")


def dct_inverse(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 1 or coeffs.size < 1:
        raise DimensionError("dct_inverse requires a nonempty 1-D input")
    return _scipy_idct(coeffs, type=2, norm="ortho")


def dct_keep(coeffs: np.ndarray, spec: DctSpec) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if spec.keep is None:
        return coeffs
    if spec.keep > coeffs.size:
        raise SpecError(f"keep={spec.keep} exceeds coefficient count {coeffs.size}")
    return coeffs[: spec.keep].copy()


def zscore_fit(train: "FeatureSet | np.ndarray") -> ZScoreParams:
    """Per-dimension mean and population (1/n) standard deviation."""
    matrix = train if isinstance(train, np.ndarray) else train.matrix
    if matrix.shape[0] < 2:
        raise SpecError("zscore_fit needs at least 2 vectors")
    return ZScoreParams(matrix.mean(axis=0), matrix.std(axis=0))


def zscore_apply(params: ZScoreParams, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != params.mean.shape:
        raise DimensionError(f"vector length {v.shape} != params length {params.mean.shape}")
    out = v - params.mean
    # Constant dimensions carry no information; map them to 0 rather than inf.
    nonzero = params.stddev > 0
    out[nonzero] /= params.stddev[nonzero]
    out[~nonzero] = 0.0
    return out


def pca_fit(train: "FeatureSet | np.ndarray", k: int) -> PcaModel:
    """Top-k principal axes via SVD of the centered data matrix.

    Population (1/n) variance convention. Sign fixed so the largest-magnitude
    entry of each component is positive, making the model deterministic.
    """
    matrix = train if isinstance(train, np.ndarray) else train.matrix
    n, d = matrix.shape
    if not 1 <= k <= min(n - 1, d):
        raise SpecError(f"k={k} out of range for {n} x {d} training data")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k]
    variances = (s[:k] ** 2) / n
    flip = components[np.arange(k), np.argmax(np.abs(components), axis=1)] < 0
    components = np.where(flip[:, None], -components, components)
    return PcaModel(mean, components, variances)


def pca_project(model: PcaModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != model.mean.shape:
        raise DimensionError(f"vector length {v.shape} != model length {model.mean.shape}")
    return model.components @ (v - model.mean)


def haar_level(x: np.ndarray) -> np.ndarray:
    """One Haar approximation level: pair sums over sqrt(2), odd tail doubled."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DimensionError("haar_level requires a nonempty 1-D input")
    n = x.size
    even = n - (n % 2)
    out = (x[0:even:2] + x[1:even:2]) / np.sqrt(2.0)
    if n % 2 != 0:
        out = np.append(out, 2.0 * x[-1] / np.sqrt(2.0))
    return out


def haar_reduce(x: np.ndarray, levels: int) -> np.ndarray:
    if levels < 1:
        raise SpecError("levels must be >= 1")
    out = np.asarray(x, dtype=np.float64)
    for _ in range(levels):
        out = haar_level(out)
    return out


def _pdf_counts(x: np.ndarray, spec: PdfSpec) -> tuple[np.ndarray, int]:
    """Bin counts plus the number of values clamped into the end bins."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DimensionError("pdf_reduce requires a nonempty 1-D input")
    if spec.range is None:
        lo, hi = float(x.min()), float(x.max())
        if lo == hi:
            counts = np.zeros(spec.bins)
            counts[0] = x.size
            return counts, 0
        clamped = 0
    else:
        lo, hi = spec.range
        clamped = int(np.count_nonzero((x < lo) | (x > hi)))
        x = np.clip(x, lo, hi)
    width = (hi - lo) / spec.bins
    idx = np.floor((x - lo) / width).astype(np.intp)
    # Right edge of the last bin is inclusive.
    np.clip(idx, 0, spec.bins - 1, out=idx)
    return np.bincount(idx, minlength=spec.bins).astype(np.float64), clamped


def pdf_reduce(x: np.ndarray, spec: PdfSpec) -> np.ndarray:
    """Normalized histogram of `x`; the output always sums to 1."""
    counts, _ = _pdf_counts(x, spec)
    return counts / counts.sum()


def pdf_reduce_with_stats(x: np.ndarray, spec: PdfSpec) -> tuple[np.ndarray, int]:
    """Like pdf_reduce but also reports how many values were clamped."""
    counts, clamped = _pdf_counts(x, spec)
    return counts / counts.sum(), clamped
