"""Vector distances used to rank gallery items against a query.

Four metrics: Euclidean, Manhattan, Hassanat, Canberra. The Hassanat and
Canberra distances are bounded per dimension, which makes them robust to
outliers and scale differences. All accumulation happens in float64 so
4096-term sums stay stable.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DimensionError, SpecError


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    HASSANAT = "hassanat"
    CANBERRA = "canberra"

    @classmethod
    def parse(cls, name: str) -> "MetricKind":
        """Accept full names or the CLI short codes ed/md/hd/cd."""
        aliases = {
            "ed": cls.EUCLIDEAN,
            "md": cls.MANHATTAN,
            "hd": cls.HASSANAT,
            "cd": cls.CANBERRA,
        }
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise SpecError(f"unknown metric {name!r}") from None


def _check_pair(v1, v2) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(v1, dtype=np.float64)
    b = np.asarray(v2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"vector shapes differ: {a.shape} vs {b.shape}")
    return a, b


def euclidean(v1, v2) -> float:
    a, b = _check_pair(v1, v2)
    d = a - b
    return float(np.sqrt(np.dot(d, d)))


def manhattan(v1, v2) -> float:
    a, b = _check_pair(v1, v2)
    return float(np.abs(a - b).sum())


def hassanat_terms(v1, v2) -> np.ndarray:
    """Per-dimension Hassanat terms, each in [0, 1).

    For min(a,b) >= 0 the term is 1 - (1+min)/(1+max); otherwise both values
    are shifted up by |min| first, which collapses the numerator to 1.
    """
    a, b = _check_pair(v1, v2)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    shift = np.where(lo < 0, -lo, 0.0)
    return 1.0 - (1.0 + lo + shift) / (1.0 + hi + shift)


def hassanat(v1, v2) -> float:
    return float(hassanat_terms(v1, v2).sum())


def canberra_terms(v1, v2) -> np.ndarray:
    """Per-dimension |a-b|/(|a|+|b|) with the 0/0 term defined as 0."""
    a, b = _check_pair(v1, v2)
    num = np.abs(a - b)
    den = np.abs(a) + np.abs(b)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def canberra(v1, v2) -> float:
    return float(canberra_terms(v1, v2).sum())


_DISPATCH = {
    MetricKind.EUCLIDEAN: euclidean,
    MetricKind.MANHATTAN: manhattan,
    MetricKind.HASSANAT: hassanat,
    MetricKind.CANBERRA: canberra,
}


def distance(kind: MetricKind | str, v1, v2) -> float:
    if not isinstance(kind, MetricKind):
        kind = MetricKind.parse(kind)
    return _DISPATCH[kind](v1, v2)


def distances_to(kind: MetricKind | str, matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Distance from `q` to every row of `matrix`, vectorized.

    Agrees with `distance` applied row by row; used by the retrieval scan
    where per-pair calls would dominate runtime.
    """
    if not isinstance(kind, MetricKind):
        kind = MetricKind.parse(kind)
    m = np.asarray(matrix, dtype=np.float64)
    v = np.asarray(q, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"matrix {m.shape} incompatible with query {v.shape}")
    if kind is MetricKind.EUCLIDEAN:
        d = m - v
        return np.sqrt(np.einsum("ij,ij->i", d, d))
    if kind is MetricKind.MANHATTAN:
        return np.abs(m - v).sum(axis=1)
    if kind is MetricKind.HASSANAT:
        lo = np.minimum(m, v)
        hi = np.maximum(m, v)
        shift = np.where(lo < 0, -lo, 0.0)
        return (1.0 - (1.0 + lo + shift) / (1.0 + hi + shift)).sum(axis=1)
    num = np.abs(m - v)
    den = np.abs(m) + np.abs(v)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return terms.sum(axis=1)
