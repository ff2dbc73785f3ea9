"""cbirkit command line: extract, learn-dict, encode, reduce, query,
evaluate, report, sweep.

Every run writes a small JSON run-manifest beside its outputs recording the
exact arguments, input hashes, and tool version, so a run can be replayed
bit-for-bit. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import reduce as red
from .data import (
    FeatureSet,
    SplitSpec,
    load_feature_set,
    load_manifest,
    save_feature_set,
)
from .errors import CbirError
from .evaluate import run_experiment
from .features import GaborSpec, color_histogram, gabor_features, hog_features, load_image
from .metrics import MetricKind
from .report import (
    aggregate_runs,
    flat_line,
    format_table,
    render_map_bars,
    render_sweep_figure,
    write_eval_outputs,
    write_rows_csv,
)
from .retrieval import DwtSpec, PcaSpec, SparseSpec, ZscoreSpec, fit_pipeline, rank_query, transform_set
from .sparse import ClSpec, build_dict_kmeans, build_dict_ksvd, encode_set, load_dictionary, save_dictionary

_CL_NAMES = {"homotopy": "homotopy", "lasso": "lasso", "en": "elastic_net", "ssf": "ssf"}
_METRIC_CHOICES = ["ed", "md", "hd", "cd"]


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _StageAction(argparse.Action):
    """Records transform flags in the order they appear on the command line."""

    def __call__(self, parser, namespace, values, option_string=None):
        stages = list(getattr(namespace, "stage_order", None) or [])
        stages.append((self.dest, values))
        namespace.stage_order = stages


def _add_stage_flags(p: argparse.ArgumentParser, with_sparse: bool = False):
    g = p.add_argument_group("transforms (applied in flag order)")
    g.add_argument("--dct", dest="dct", action=_StageAction, nargs="?", const=None, type=int,
                   metavar="KEEP", help="cosine transform, optionally keeping the first KEEP coefficients")
    g.add_argument("--zscore", dest="zscore", action=_StageAction, nargs=0,
                   help="per-dimension standardization fitted on the training part")
    g.add_argument("--pca", dest="pca", action=_StageAction, type=int, metavar="K",
                   help="project onto the top K principal axes of the training part")
    g.add_argument("--dwt", dest="dwt", action=_StageAction, type=int, metavar="LEVELS",
                   help="Haar wavelet approximation, LEVELS halvings")
    g.add_argument("--pdf", dest="pdf", action=_StageAction, type=int, metavar="BINS",
                   help="per-vector value-distribution histogram with BINS bins")
    g.add_argument("--pdf-range", nargs=2, type=float, metavar=("LO", "HI"),
                   help="fixed histogram range for --pdf (default: per-vector min/max)")
    if with_sparse:
        g.add_argument("--sparse", dest="sparse", action=_StageAction, metavar="METHOD:K",
                       help="dictionary coding stage, e.g. ksvd:50 or kmeans:10")
        _add_cl_flags(p)
        d = p.add_argument_group("dictionary learning (for --sparse)")
        d.add_argument("--sparsity", type=int, default=None, metavar="T",
                       help="nonzeros per signal during ksvd training (default max(2, K//10))")
        d.add_argument("--dict-iters", type=int, default=50, help="dictionary learning iterations")
        d.add_argument("--dict-seed", type=int, default=0, help="dictionary learning seed")


def _add_cl_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("coefficient learning")
    g.add_argument("--cl", choices=sorted(_CL_NAMES), default="homotopy",
                   help="coefficient learner for sparse coding")
    g.add_argument("--lambda", dest="lambda1", type=float, default=0.1,
                   help="l1 weight (fraction of each signal's own maximum unless --absolute-lambda)")
    g.add_argument("--lambda2", type=float, default=None,
                   help="l2 weight for en (default: same as --lambda)")
    g.add_argument("--absolute-lambda", action="store_true",
                   help="treat --lambda/--lambda2 as absolute values, not per-signal fractions")
    g.add_argument("--max-iter", type=int, default=10_000, help="solver iteration cap")
    g.add_argument("--tol", type=float, default=1e-7, help="solver convergence tolerance")


def _clspec(ns, algorithm: str | None = None) -> ClSpec:
    algo = _CL_NAMES[algorithm or ns.cl]
    lam2 = 0.0
    if algo == "elastic_net":
        lam2 = ns.lambda2 if ns.lambda2 is not None else ns.lambda1
    return ClSpec(
        algorithm=algo,
        lambda1=ns.lambda1,
        lambda2=lam2,
        relative_lambda=not ns.absolute_lambda,
        max_iter=ns.max_iter,
        tol=ns.tol,
    )


def _build_stages(ns) -> list:
    stages = []
    for kind, value in getattr(ns, "stage_order", None) or []:
        if kind == "dct":
            stages.append(red.DctSpec(value))
        elif kind == "zscore":
            stages.append(ZscoreSpec())
        elif kind == "pca":
            stages.append(PcaSpec(value))
        elif kind == "dwt":
            stages.append(DwtSpec(value))
        elif kind == "pdf":
            rng = tuple(ns.pdf_range) if getattr(ns, "pdf_range", None) else None
            stages.append(red.PdfSpec(value, range=rng))
        elif kind == "sparse":
            method, _, size = value.partition(":")
            if method not in ("kmeans", "ksvd") or not size.isdigit():
                raise CbirError(f"--sparse expects METHOD:K with METHOD in kmeans/ksvd, got {value!r}")
            stages.append(
                SparseSpec(
                    cl=_clspec(ns),
                    method=method,
                    size=int(size),
                    sparsity_T=ns.sparsity,
                    iters=ns.dict_iters,
                    seed=ns.dict_seed,
                )
            )
    return stages


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_run_manifest(dest: Path, ns, argv: list, inputs: list) -> None:
    flags = {}
    for key, value in sorted(vars(ns).items()):
        if key in ("func", "argv"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        flags[key] = value
    data = {
        "tool": "cbirkit",
        "version": __version__,
        "subcommand": ns.subcommand,
        "argv": argv,
        "flags": flags,
        "inputs": {str(p): _hash_file(Path(p)) for p in inputs if Path(p).is_file()},
    }
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _manifest_beside(out_path: Path) -> Path:
    return out_path.with_name(out_path.name + ".run.json")


def _load_set(features: str, manifest: str) -> FeatureSet:
    return load_feature_set(features, manifest)


def _save_features(fs: FeatureSet, out: Path, fmt: str) -> None:
    save_feature_set(fs, out, format="binary" if fmt == "bin" else fmt)


# ---------------------------------------------------------------------------
# extract


def _extract_worker(task):
    kind, image_path, params = task
    img = load_image(image_path)
    if kind == "gabor":
        spec = GaborSpec(scales=params["scales"], orientations=params["orients"],
                         kernel_radius=params["radius"])
        return gabor_features(img, spec)
    if kind == "hist":
        return color_histogram(img, params["bins"])
    return hog_features(img, cell=params["cell"], bins=params["bins"])


def _cmd_extract(ns, argv):
    labels = load_manifest(ns.indir_manifest)
    ids = sorted(labels)
    bins = ns.bins if ns.bins is not None else (9 if ns.kind == "hog" else 8)
    params = {"scales": ns.scales, "orients": ns.orients, "radius": ns.radius,
              "bins": bins, "cell": ns.cell}
    tasks = [(ns.kind, str(Path(ns.indir) / image_id), params) for image_id in ids]
    jobs = ns.jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_extract_worker, tasks))
    else:
        rows = [_extract_worker(t) for t in tasks]
    fs = FeatureSet(ids, np.vstack(rows), labels)
    out = Path(ns.out)
    _save_features(fs, out, ns.format)
    _write_run_manifest(_manifest_beside(out), ns, argv, [ns.indir_manifest])
    print(f"extracted {len(fs)} x {fs.dim} {ns.kind} features -> {out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# learn-dict / encode / reduce / query


def _cmd_learn_dict(ns, argv):
    fs = _load_set(ns.features, ns.manifest)
    if ns.method == "kmeans":
        iters = ns.iters if ns.iters is not None else 100
        dictionary = build_dict_kmeans(fs, ns.size, seed=ns.seed, iters=iters)
    else:
        iters = ns.iters if ns.iters is not None else 50
        T = ns.sparsity if ns.sparsity is not None else max(2, ns.size // 10)
        dictionary = build_dict_ksvd(fs, ns.size, T, iters=iters, seed=ns.seed)
    out = Path(ns.out)
    save_dictionary(dictionary, out)
    _write_run_manifest(_manifest_beside(out), ns, argv, [ns.features, ns.manifest])
    print(f"learned {dictionary.learner} dictionary {dictionary.dim}x{dictionary.size} -> {out}",
          file=sys.stderr)
    return 0


def _cmd_encode(ns, argv):
    fs = _load_set(ns.features, ns.manifest)
    dictionary = load_dictionary(ns.dict)
    spec = _clspec(ns)
    jobs = ns.jobs or os.cpu_count() or 1
    codes, rep = encode_set(dictionary, fs, spec, jobs=jobs)
    out = Path(ns.out)
    _save_features(codes, out, ns.format)
    _write_run_manifest(_manifest_beside(out), ns, argv, [ns.features, ns.manifest, ns.dict])
    print(f"encoded {rep.total} vectors with {rep.algorithm}: {rep.converged} converged"
          + (f", unconverged ids: {','.join(rep.failed_ids[:5])}" if rep.failed_ids else ""),
          file=sys.stderr)
    return 0


def _cmd_reduce(ns, argv):
    fs = _load_set(ns.features, ns.manifest)
    stages = _build_stages(ns)
    pipeline = fit_pipeline(stages, fs)
    out = Path(ns.out)
    _save_features(transform_set(pipeline, fs), out, ns.format)
    _write_run_manifest(_manifest_beside(out), ns, argv, [ns.features, ns.manifest])
    print(f"{pipeline.describe()}: {fs.dim} -> {pipeline.output_dim} dims -> {out}", file=sys.stderr)
    return 0


def _cmd_query(ns, argv):
    fs = _load_set(ns.gallery, ns.manifest)
    if ns.query_id not in fs.ids:
        raise CbirError(f"query id {ns.query_id!r} not present in {ns.gallery}")
    stages = _build_stages(ns)
    pipeline = fit_pipeline(stages, fs)
    gallery = transform_set(pipeline, fs)
    q = gallery.matrix[list(gallery.ids).index(ns.query_id)]
    ranked = rank_query(gallery, q, ns.query_id, MetricKind.parse(ns.metric))
    top = ranked.entries[: ns.top] if ns.top else ranked.entries
    for item_id, dist in top:
        print(f"{item_id},{dist:.9g}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / report / sweep


def _split_spec(ns) -> SplitSpec:
    return SplitSpec(ns.split, test_per_class=ns.test_per_class, seed=ns.seed)


def _cmd_evaluate(ns, argv):
    fs = _load_set(ns.features, ns.manifest)
    stages = _build_stages(ns)
    report = run_experiment(fs, _split_spec(ns), stages, MetricKind.parse(ns.metric),
                            strict_loocv=ns.strict_loocv)
    out_dir = Path(ns.out_dir)
    write_eval_outputs(report, out_dir, figures=not ns.no_figures)
    _write_run_manifest(out_dir / "run.json", ns, argv, [ns.features, ns.manifest])
    print(flat_line(report))
    print(f"wall clock: {report.wall_clock_s:.2f}s", file=sys.stderr)
    return 0


def _cmd_report(ns, argv):
    paths = []
    for entry in ns.runs:
        p = Path(entry)
        if p.is_dir():
            paths.extend(sorted(p.rglob("report.json")))
        else:
            paths.append(p)
    if not paths:
        raise CbirError("no report.json files found under the given paths")
    rows = aggregate_runs(paths)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["pipeline", "metric", "split", "seed", "map", "map_11pt", "er"]
    write_rows_csv(rows, out_dir / "summary.csv", columns + ["source"])
    if not ns.no_figures:
        render_map_bars(rows, out_dir / "summary.png")
    _write_run_manifest(out_dir / "run.json", ns, argv, paths)
    print(format_table(
        [{**r, "map": f"{r['map']:.4f}", "map_11pt": f"{r['map_11pt']:.4f}", "er": f"{r['er']:.4f}"}
         for r in rows],
        columns,
    ))
    return 0


def _cmd_sweep(ns, argv):
    fs = _load_set(ns.features, ns.manifest)
    sizes = [int(s) for s in ns.sizes.split(",")]
    cls = ns.cls.split(",")
    metrics = ns.metrics.split(",")
    for name in cls:
        if name not in _CL_NAMES:
            raise CbirError(f"unknown coefficient learner {name!r}")
    for name in metrics:
        if name not in _METRIC_CHOICES:
            raise CbirError(f"unknown metric {name!r}")
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pre_stages = _build_stages(ns)
    rows = []
    for size in sizes:
        for cl_name in cls:
            stage = SparseSpec(cl=_clspec(ns, cl_name), method=ns.method, size=size,
                               sparsity_T=ns.sparsity, iters=ns.dict_iters, seed=ns.dict_seed)
            for metric in metrics:
                report = run_experiment(fs, _split_spec(ns), pre_stages + [stage],
                                        MetricKind.parse(metric))
                run_dir = out_dir / f"run_{ns.method}{size}_{cl_name}_{metric}"
                write_eval_outputs(report, run_dir, figures=not ns.no_figures)
                rows.append({"size": size, "cl": cl_name, "metric": metric,
                             "map": report.map, "map_11pt": report.map_11pt, "er": report.er})
                print(flat_line(report))
    write_rows_csv(rows, out_dir / "sweep_summary.csv",
                   ["size", "cl", "metric", "map", "map_11pt", "er"])
    if not ns.no_figures:
        render_sweep_figure(rows, out_dir / "sweep_map.png")
    _write_run_manifest(out_dir / "run.json", ns, argv, [ns.features, ns.manifest])
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cbirkit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"cbirkit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="compute image features into a feature file")
    p.add_argument("--kind", choices=["gabor", "hist", "hog"], required=True)
    p.add_argument("--in", dest="indir", required=True, metavar="DIR", help="image directory")
    p.add_argument("--manifest", dest="indir_manifest", required=True, help="id,label CSV")
    p.add_argument("--out", required=True, help="output feature file")
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--scales", type=int, default=5, help="gabor: filter scales")
    p.add_argument("--orients", type=int, default=5, help="gabor: filter orientations")
    p.add_argument("--radius", type=int, default=15, help="gabor: kernel radius in pixels")
    p.add_argument("--bins", type=int, default=None,
                   help="hist: bins per channel (default 8); hog: angle bins (default 9)")
    p.add_argument("--cell", type=int, default=8, help="hog: cell side in pixels")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("learn-dict", help="learn a dictionary from a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=["kmeans", "ksvd"], required=True)
    p.add_argument("--size", type=int, required=True, metavar="K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=None, help="default: 100 kmeans, 50 ksvd")
    p.add_argument("--sparsity", type=int, default=None, metavar="T",
                   help="ksvd nonzeros per signal (default max(2, K//10))")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_learn_dict)

    p = sub.add_parser("encode", help="sparse-code a feature file against a dictionary")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--dict", required=True)
    _add_cl_flags(p)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("reduce", help="apply feature transforms (fitted on this same file)")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    _add_stage_flags(p)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("query", help="rank gallery items against one query image")
    p.add_argument("--gallery", required=True, help="feature file holding gallery and query")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", choices=_METRIC_CHOICES, default="ed")
    p.add_argument("--query-id", required=True)
    p.add_argument("--top", type=int, default=None)
    _add_stage_flags(p)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("evaluate", help="run one retrieval experiment and write the report bundle")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", choices=_METRIC_CHOICES, default="ed")
    p.add_argument("--split", choices=["holdout", "loocv"], default="loocv")
    p.add_argument("--test-per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict-loocv", action="store_true",
                   help="refit the pipeline for every query (slow, leakage-free)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_stage_flags(p, with_sparse=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate evaluate runs into a summary table")
    p.add_argument("--runs", nargs="+", required=True, help="run directories or report.json files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("sweep", help="cross-product dictionary sizes x learners x metrics")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=["kmeans", "ksvd"], default="ksvd")
    p.add_argument("--sizes", default="10,20,30,40,50,256,512")
    p.add_argument("--cls", default="homotopy,lasso,en,ssf", help="comma-separated learners")
    p.add_argument("--metrics", default="ed", help="comma-separated metrics")
    p.add_argument("--split", choices=["holdout", "loocv"], default="holdout")
    p.add_argument("--test-per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_stage_flags(p, with_sparse=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns, argv)
    except CbirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
