import json

import numpy as np
import pytest

from cbirkit.cli import main
from cbirkit.data import FeatureSet, load_feature_set, save_feature_set, save_manifest
from cbirkit.sparse import load_dictionary


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Feature CSV + manifest for a small, well-separated 3-class set."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(31)
    centers = rng.standard_normal((3, 12)) * 4.0
    ids, rows, labels = [], [], {}
    for c in range(3):
        for i in range(8):
            iid = f"c{c}_{i:02d}"
            ids.append(iid)
            rows.append(centers[c] + 0.3 * rng.standard_normal(12))
            labels[iid] = f"class{c}"
    fs = FeatureSet(ids, np.vstack(rows), labels)
    features = root / "features.csv"
    manifest = root / "manifest.csv"
    save_feature_set(fs, features, format="csv")
    save_manifest(labels, manifest)
    return {"features": str(features), "manifest": str(manifest), "fs": fs}


@pytest.fixture(scope="module")
def image_dir(tmp_path_factory):
    from PIL import Image

    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(32)
    labels = {}
    for c, base in enumerate([(200, 30, 30), (30, 30, 200)]):
        for i in range(3):
            arr = np.clip(
                np.array(base, dtype=float) + rng.normal(0, 12, size=(24, 24, 3)),
                0,
                255,
            ).astype(np.uint8)
            name = f"img_{c}{i}.png"
            Image.fromarray(arr, "RGB").save(root / name)
            labels[name] = f"class{c}"
    manifest = root / "manifest.csv"
    save_manifest(labels, manifest)
    return {"dir": str(root), "manifest": str(manifest), "n": 6}


# ---------------------------------------------------------------- exit codes


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "extract" in capsys.readouterr().out


def test_version_exits_zero(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.startswith("cbirkit ")


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == 1


def test_unknown_flag_is_usage_error():
    assert main(["query", "--no-such-flag"]) == 1


def test_missing_required_flag_is_usage_error():
    assert main(["learn-dict", "--features", "x.csv"]) == 1


def test_missing_input_file_is_data_error(tmp_path, capsys):
    code = main(
        ["learn-dict", "--features", str(tmp_path / "nope.csv"), "--manifest",
         str(tmp_path / "nope2.csv"), "--method", "kmeans", "--size", "4",
         "--out", str(tmp_path / "d.bin")]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_corrupt_dictionary_is_data_error(corpus, tmp_path, capsys):
    bad = tmp_path / "bad.dict"
    bad.write_bytes(b"JUNKJUNKJUNK")
    code = main(
        ["encode", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--dict", str(bad), "--jobs", "1", "--out", str(tmp_path / "codes.csv")]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_query_id_is_data_error(corpus, capsys):
    code = main(
        ["query", "--gallery", corpus["features"], "--manifest", corpus["manifest"],
         "--query-id", "ghost"]
    )
    assert code == 2
    assert "ghost" in capsys.readouterr().err


# ---------------------------------------------------------------- extract


def test_extract_hist_writes_features_and_manifest(image_dir, tmp_path):
    out = tmp_path / "hist.csv"
    code = main(
        ["extract", "--kind", "hist", "--in", image_dir["dir"], "--manifest",
         image_dir["manifest"], "--out", str(out), "--bins", "4", "--jobs", "1"]
    )
    assert code == 0
    fs = load_feature_set(out, image_dir["manifest"])
    assert len(fs) == image_dir["n"]
    assert fs.dim == 64  # 4^3 joint RGB bins
    np.testing.assert_allclose(fs.matrix.sum(axis=1), np.ones(len(fs)), atol=1e-6)
    run = json.loads((tmp_path / "hist.csv.run.json").read_text())
    assert run["subcommand"] == "extract"
    assert image_dir["manifest"] in run["inputs"]


def test_extract_gabor_parallel_matches_serial(image_dir, tmp_path):
    args = ["extract", "--kind", "gabor", "--in", image_dir["dir"], "--manifest",
            image_dir["manifest"], "--scales", "2", "--orients", "2", "--radius", "5"]
    serial = tmp_path / "gabor1.csv"
    parallel = tmp_path / "gabor2.csv"
    assert main(args + ["--out", str(serial), "--jobs", "1"]) == 0
    assert main(args + ["--out", str(parallel), "--jobs", "2"]) == 0
    a = load_feature_set(serial, image_dir["manifest"])
    b = load_feature_set(parallel, image_dir["manifest"])
    assert a.dim == 8  # 2 scales x 2 orients x (mean, std)
    assert list(a.ids) == list(b.ids)
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_extract_hog_binary_format(image_dir, tmp_path):
    out = tmp_path / "hog.bin"
    code = main(
        ["extract", "--kind", "hog", "--in", image_dir["dir"], "--manifest",
         image_dir["manifest"], "--out", str(out), "--format", "bin", "--jobs", "1"]
    )
    assert code == 0
    assert out.read_bytes()[:4] == b"CBFV"
    fs = load_feature_set(out, image_dir["manifest"])
    assert fs.dim == 144  # 24x24, cell 8 -> 2x2 blocks of 4 cells x 9 bins


# ------------------------------------------------- learn-dict / encode


def test_learn_dict_and_encode_round_trip(corpus, tmp_path, capsys):
    dpath = tmp_path / "dict.bin"
    code = main(
        ["learn-dict", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--method", "kmeans", "--size", "3", "--seed", "1", "--out", str(dpath)]
    )
    assert code == 0
    d = load_dictionary(dpath)
    assert (d.dim, d.size, d.learner, d.seed) == (12, 3, "kmeans", 1)
    assert (tmp_path / "dict.bin.run.json").exists()

    codes_path = tmp_path / "codes.csv"
    code = main(
        ["encode", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--dict", str(dpath), "--cl", "lasso", "--lambda", "0.1", "--jobs", "1",
         "--out", str(codes_path)]
    )
    assert code == 0
    codes = load_feature_set(codes_path, corpus["manifest"])
    assert codes.dim == 3
    assert list(codes.ids) == list(corpus["fs"].ids)
    assert "encoded 24 vectors with lasso" in capsys.readouterr().err


def test_learn_dict_ksvd(corpus, tmp_path):
    dpath = tmp_path / "ksvd.bin"
    code = main(
        ["learn-dict", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--method", "ksvd", "--size", "4", "--sparsity", "2", "--iters", "5",
         "--out", str(dpath)]
    )
    assert code == 0
    assert load_dictionary(dpath).learner == "ksvd"


# ---------------------------------------------------------------- reduce


def test_reduce_respects_flag_order(corpus, tmp_path):
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    base = ["reduce", "--features", corpus["features"], "--manifest", corpus["manifest"]]
    assert main(base + ["--zscore", "--pdf", "5", "--out", str(out_a)]) == 0
    assert main(base + ["--pdf", "5", "--zscore", "--out", str(out_b)]) == 0
    a = load_feature_set(out_a, corpus["manifest"])
    b = load_feature_set(out_b, corpus["manifest"])
    assert a.dim == b.dim == 5
    assert not np.allclose(a.matrix, b.matrix)
    # pdf ran last in run A: rows are distributions; zscore last in run B: columns centered
    np.testing.assert_allclose(a.matrix.sum(axis=1), np.ones(len(a)), atol=1e-6)
    np.testing.assert_allclose(b.matrix.mean(axis=0), np.zeros(5), atol=1e-7)
    assert not np.allclose(b.matrix.sum(axis=1), np.ones(len(b)), atol=1e-6)


def test_reduce_bare_dct_keeps_dim(corpus, tmp_path):
    out = tmp_path / "dct_all.csv"
    base = ["reduce", "--features", corpus["features"], "--manifest", corpus["manifest"]]
    assert main(base + ["--dct", "--out", str(out)]) == 0
    fs = load_feature_set(out, corpus["manifest"])
    assert fs.dim == 12
    assert not np.allclose(fs.matrix, corpus["fs"].matrix)
    np.testing.assert_allclose(
        np.linalg.norm(fs.matrix, axis=1),
        np.linalg.norm(corpus["fs"].matrix, axis=1),
        rtol=1e-6,
    )


def test_reduce_chain_dims(corpus, tmp_path):
    out = tmp_path / "r.csv"
    code = main(
        ["reduce", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--dct", "8", "--dwt", "1", "--out", str(out)]
    )
    assert code == 0
    assert load_feature_set(out, corpus["manifest"]).dim == 4


def test_reduce_pdf_with_range(corpus, tmp_path):
    out = tmp_path / "pdf.csv"
    code = main(
        ["reduce", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--pdf", "5", "--pdf-range", "-20", "20", "--out", str(out)]
    )
    assert code == 0
    fs = load_feature_set(out, corpus["manifest"])
    assert fs.dim == 5
    np.testing.assert_allclose(fs.matrix.sum(axis=1), np.ones(len(fs)), atol=1e-6)


# ---------------------------------------------------------------- query


def test_query_ranks_duplicate_first(tmp_path, capsys):
    ids = ["orig", "twin", "far"]
    mat = np.array([[1.0, 2.0], [1.0, 2.0], [9.0, -4.0]])
    labels = {i: "x" for i in ids}
    fs = FeatureSet(ids, mat, labels)
    features = tmp_path / "f.csv"
    manifest = tmp_path / "m.csv"
    save_feature_set(fs, features, format="csv")
    save_manifest(labels, manifest)
    code = main(
        ["query", "--gallery", str(features), "--manifest", str(manifest),
         "--query-id", "orig", "--metric", "md"]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "twin,0"
    assert lines[1].startswith("far,")
    assert len(lines) == 2


def test_query_top_limits_output(corpus, capsys):
    code = main(
        ["query", "--gallery", corpus["features"], "--manifest", corpus["manifest"],
         "--query-id", "c0_00", "--top", "5", "--metric", "hd"]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5
    top_ids = [ln.split(",")[0] for ln in lines]
    assert all(i.startswith("c0_") for i in top_ids)  # same-class neighbors first


# ---------------------------------------------------------------- evaluate


def test_evaluate_writes_bundle(corpus, tmp_path, capsys):
    out_dir = tmp_path / "run1"
    code = main(
        ["evaluate", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--metric", "ed", "--split", "loocv", "--out-dir", str(out_dir)]
    )
    assert code == 0
    for name in ("report.json", "pr_curve.csv", "er_curve.csv", "pr_curve.png",
                 "er_curve.png", "run.json"):
        assert (out_dir / name).exists(), name
    line = capsys.readouterr().out.strip()
    assert line.startswith("config=identity|euclidean|loocv|seed0,map=")
    data = json.loads((out_dir / "report.json").read_text())
    assert data["map"] == pytest.approx(1.0)  # classes are far apart
    assert data["config"]["n_queries"] == 24


def test_evaluate_no_figures(corpus, tmp_path):
    out_dir = tmp_path / "run2"
    code = main(
        ["evaluate", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--split", "holdout", "--test-per-class", "2", "--seed", "3",
         "--no-figures", "--out-dir", str(out_dir)]
    )
    assert code == 0
    assert (out_dir / "report.json").exists()
    assert not (out_dir / "pr_curve.png").exists()
    data = json.loads((out_dir / "report.json").read_text())
    assert data["config"]["split"] == "holdout"
    assert data["config"]["n_queries"] == 6


def test_evaluate_with_transform_and_sparse(corpus, tmp_path, capsys):
    out_dir = tmp_path / "run3"
    code = main(
        ["evaluate", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--zscore", "--sparse", "kmeans:3", "--cl", "ssf", "--dict-iters", "10",
         "--split", "loocv", "--no-figures", "--out-dir", str(out_dir)]
    )
    assert code == 0
    data = json.loads((out_dir / "report.json").read_text())
    assert data["config"]["pipeline"] == "zscore+sparse(kmeans:3:ssf)"
    capsys.readouterr()


def test_evaluate_replay_is_bit_exact(corpus, tmp_path, capsys):
    out_dir = tmp_path / "replay"
    argv = ["evaluate", "--features", corpus["features"], "--manifest", corpus["manifest"],
            "--metric", "cd", "--split", "holdout", "--test-per-class", "2",
            "--no-figures", "--out-dir", str(out_dir)]
    assert main(argv) == 0
    capsys.readouterr()
    first_report = (out_dir / "report.json").read_bytes()
    first_run = (out_dir / "run.json").read_bytes()
    recorded = json.loads(first_run)["argv"]
    (out_dir / "report.json").unlink()
    assert main(recorded) == 0
    capsys.readouterr()
    assert (out_dir / "report.json").read_bytes() == first_report
    assert (out_dir / "run.json").read_bytes() == first_run


# ---------------------------------------------------------------- report


def test_report_aggregates_runs(corpus, tmp_path, capsys):
    runs = []
    for metric in ("ed", "md"):
        out_dir = tmp_path / f"r_{metric}"
        main(["evaluate", "--features", corpus["features"], "--manifest", corpus["manifest"],
              "--metric", metric, "--no-figures", "--out-dir", str(out_dir)])
        runs.append(str(out_dir))
    capsys.readouterr()
    summary_dir = tmp_path / "summary"
    assert main(["report", "--runs", *runs, "--out-dir", str(summary_dir)]) == 0
    table = capsys.readouterr().out
    assert "euclidean" in table and "manhattan" in table
    lines = (summary_dir / "summary.csv").read_text().splitlines()
    assert lines[0].startswith("pipeline,metric,split,seed,map")
    assert len(lines) == 3
    assert (summary_dir / "summary.png").stat().st_size > 500


def test_report_with_no_matches_is_data_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", "--runs", str(empty), "--out-dir", str(tmp_path / "s")]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------- sweep


def test_sweep_grid(corpus, tmp_path, capsys):
    out_dir = tmp_path / "sweep"
    code = main(
        ["sweep", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--method", "kmeans", "--sizes", "3,4", "--cls", "lasso", "--metrics", "ed",
         "--split", "holdout", "--test-per-class", "2", "--dict-iters", "10",
         "--out-dir", str(out_dir)]
    )
    assert code == 0
    flat = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("config=")]
    assert len(flat) == 2
    for size in (3, 4):
        run = out_dir / f"run_kmeans{size}_lasso_ed"
        assert (run / "report.json").exists()
    lines = (out_dir / "sweep_summary.csv").read_text().splitlines()
    assert lines[0] == "size,cl,metric,map,map_11pt,er"
    assert len(lines) == 3
    assert (out_dir / "sweep_map.png").stat().st_size > 500


def test_sweep_rejects_unknown_learner(corpus, tmp_path):
    assert main(
        ["sweep", "--features", corpus["features"], "--manifest", corpus["manifest"],
         "--cls", "bogus", "--out-dir", str(tmp_path / "x")]
    ) == 2
