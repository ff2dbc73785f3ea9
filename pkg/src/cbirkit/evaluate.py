"""Retrieval quality: average precision, PR curves, error rate, experiments.

An item is relevant to a query when it shares the query's label. AP follows
the standard sum-of-precision-at-relevant-ranks / R definition; the 11-point
interpolated reading is reported alongside so either convention of the
headline numbers can be compared.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .data import FeatureSet, SplitSpec, stratified_split
from .errors import EvaluationError
from .metrics import MetricKind
from .retrieval import RankedResult, TransformPipeline, apply_pipeline, fit_pipeline, rank_query, transform_set

ELEVEN_LEVELS = tuple(np.round(np.linspace(0.0, 1.0, 11), 1))
ER_CURVE_MAX_RANK = 99


@dataclass(frozen=True)
class PrCurve:
    """Precision and recall at every rank k = 1..n of one ranking."""

    points: tuple  # ((recall, precision), ...)

    def interpolated(self, levels: Sequence[float] = ELEVEN_LEVELS) -> np.ndarray:
        """Max precision at recall >= level, for each requested level."""
        recalls = np.array([p[0] for p in self.points])
        precisions = np.array([p[1] for p in self.points])
        out = np.empty(len(levels))
        for i, level in enumerate(levels):
            at_or_above = precisions[recalls >= level - 1e-12]
            out[i] = at_or_above.max() if at_or_above.size else 0.0
        return out


def _relevance(r: RankedResult, labels: Mapping[str, str], query_label: str) -> np.ndarray:
    rel = np.array([labels[e[0]] == query_label for e in r.entries], dtype=bool)
    if not rel.any():
        raise EvaluationError(f"query {r.query_id!r}: no relevant item in gallery")
    return rel


def average_precision(r: RankedResult, labels: Mapping[str, str], query_label: str) -> float:
    rel = _relevance(r, labels, query_label)
    ranks = np.arange(1, rel.size + 1)
    precision_at = np.cumsum(rel) / ranks
    return float(precision_at[rel].sum() / rel.sum())


def mean_average_precision(results: Sequence[RankedResult], labels: Mapping[str, str]) -> float:
    if not results:
        raise EvaluationError("no queries to average")
    aps = [average_precision(r, labels, labels[r.query_id]) for r in results]
    return float(np.mean(aps))


def pr_curve(r: RankedResult, labels: Mapping[str, str], query_label: str) -> PrCurve:
    rel = _relevance(r, labels, query_label)
    ranks = np.arange(1, rel.size + 1)
    hits = np.cumsum(rel)
    precision = hits / ranks
    recall = hits / rel.sum()
    return PrCurve(tuple(zip(recall.tolist(), precision.tolist())))


def mean_interpolated_pr(curves: Sequence[PrCurve], levels: Sequence[float] = ELEVEN_LEVELS) -> np.ndarray:
    if not curves:
        raise EvaluationError("no curves to average")
    return np.mean([c.interpolated(levels) for c in curves], axis=0)


def error_rate(results: Sequence[RankedResult], labels: Mapping[str, str]) -> float:
    """Fraction of queries whose first retrieved item has the wrong label."""
    if not results:
        raise EvaluationError("no queries to score")
    wrong = sum(1 for r in results if labels[r.entries[0][0]] != labels[r.query_id])
    return wrong / len(results)


def error_rate_curve(
    results: Sequence[RankedResult], labels: Mapping[str, str], max_rank: int = ER_CURVE_MAX_RANK
) -> np.ndarray:
    """1 - mean precision at each rank 1..max_rank (clipped to ranking length)."""
    if not results:
        raise EvaluationError("no queries to score")
    depth = min(max_rank, min(len(r.entries) for r in results))
    curve = np.zeros(depth)
    for r in results:
        rel = np.array([labels[e[0]] == labels[r.query_id] for e in r.entries[:depth]])
        curve += np.cumsum(rel) / np.arange(1, depth + 1)
    return 1.0 - curve / len(results)


@dataclass
class EvalReport:
    map: float
    er: float
    map_11pt: float
    per_class_map: dict
    mean_pr: list  # [(recall level, mean interpolated precision), ...]
    er_curve: list  # [(rank, er), ...]
    per_query_ap: dict
    config: dict
    wall_clock_s: float = field(default=0.0, compare=False)
    results: Optional[list] = field(default=None, compare=False, repr=False)


def _score(
    results: Sequence[RankedResult], labels: Mapping[str, str], config: dict, keep_results: bool
) -> EvalReport:
    per_query_ap = {}
    curves = []
    by_class: dict = {}
    for r in results:
        qlabel = labels[r.query_id]
        ap = average_precision(r, labels, qlabel)
        per_query_ap[r.query_id] = ap
        by_class.setdefault(qlabel, []).append(ap)
        curves.append(pr_curve(r, labels, qlabel))
    mean_pr = mean_interpolated_pr(curves)
    er_curve_vals = error_rate_curve(results, labels)
    return EvalReport(
        map=float(np.mean(list(per_query_ap.values()))),
        er=error_rate(results, labels),
        map_11pt=float(np.mean([c.interpolated().mean() for c in curves])),
        per_class_map={c: float(np.mean(v)) for c, v in sorted(by_class.items())},
        mean_pr=[(float(lv), float(p)) for lv, p in zip(ELEVEN_LEVELS, mean_pr)],
        er_curve=[(k + 1, float(v)) for k, v in enumerate(er_curve_vals)],
        per_query_ap=per_query_ap,
        config=config,
        results=list(results) if keep_results else None,
    )


def run_experiment(
    fs: FeatureSet,
    split: SplitSpec,
    stages: Sequence,
    metric: MetricKind,
    clspec=None,
    strict_loocv: bool = False,
    keep_results: bool = False,
) -> EvalReport:
    """Run one full configuration and score it.

    holdout: stages are fitted on the training part only; training items form
    the gallery and each test item queries it. loocv: stages are fitted once
    on the full set and every item queries the remaining n-1 (strict_loocv
    refits the pipeline per query, leaving the query out of the fit).
    """
    if clspec is not None:
        from dataclasses import replace

        from .retrieval import SparseSpec

        stages = [
            replace(s, cl=clspec) if isinstance(s, SparseSpec) and s.cl is None else s
            for s in stages
        ]
    start = time.perf_counter()
    results = []
    if split.mode == "holdout":
        train, test = stratified_split(fs, split)
        pipeline = fit_pipeline(stages, train)
        gallery = transform_set(pipeline, train)
        queries = transform_set(pipeline, test)
        for qv in queries:
            results.append(rank_query(gallery, qv.values, qv.id, metric))
        pipeline_desc = pipeline.describe()
    else:
        if strict_loocv:
            pipeline_desc = None
            for qid in fs.ids:
                rest = fs.subset([i for i in fs.ids if i != qid])
                pipeline = fit_pipeline(stages, rest)
                gallery = transform_set(pipeline, rest)
                idx = fs.ids.index(qid)
                q = apply_pipeline(pipeline, fs.matrix[idx])
                results.append(rank_query(gallery, q, qid, metric))
                pipeline_desc = pipeline.describe()
        else:
            pipeline = fit_pipeline(stages, fs)
            gallery = transform_set(pipeline, fs)
            for qv in gallery:
                results.append(rank_query(gallery, qv.values, qv.id, metric))
            pipeline_desc = pipeline.describe()
    config = {
        "pipeline": pipeline_desc,
        "metric": metric.value,
        "split": split.mode,
        "test_per_class": split.test_per_class,
        "seed": split.seed,
        "strict_loocv": bool(strict_loocv),
        "n_items": len(fs),
        "n_queries": len(results),
    }
    report = _score(results, fs.labels, config, keep_results)
    report.wall_clock_s = time.perf_counter() - start
    return report
