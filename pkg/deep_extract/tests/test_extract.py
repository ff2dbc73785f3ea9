import struct

import numpy as np
import pytest
from PIL import Image

from deep_extract import (
    FEATURE_DIM,
    ExtractError,
    ExtractSpec,
    extract_deep,
    extract_directory,
    read_manifest,
    write_feature_file,
)


def parse_feature_file(path):
    """Independent reader for the binary interchange format."""
    blob = path.read_bytes()
    assert blob[:4] == b"CBFV"
    version, n, d = struct.unpack_from("<III", blob, 4)
    assert version == 1
    offset = 16
    ids, rows = [], []
    for _ in range(n):
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        ids.append(blob[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        rows.append(np.frombuffer(blob[offset : offset + 4 * d], dtype="<f4"))
        offset += 4 * d
    assert offset == len(blob)
    return ids, np.vstack(rows) if rows else np.empty((0, d))


@pytest.fixture(scope="module")
def sample(tmp_path_factory):
    root = tmp_path_factory.mktemp("sample")
    img_dir = root / "imgs"
    img_dir.mkdir()
    rng = np.random.default_rng(5)
    names = []
    for i in range(10):
        arr = rng.integers(0, 256, size=(40, 56, 3), dtype=np.uint8)
        name = f"img{i:02d}.png"
        Image.fromarray(arr, "RGB").save(img_dir / name)
        names.append(name)
    # img03 appears twice in the manifest under a second id pointing at a copy
    twin = img_dir / "twin.png"
    twin.write_bytes((img_dir / names[3]).read_bytes())
    manifest = root / "manifest.csv"
    lines = [f"{n},class{i % 2}" for i, n in enumerate(names)]
    lines.append("twin.png,class1")
    manifest.write_text("\n".join(lines) + "\n")
    return {"images": img_dir, "manifest": manifest, "names": names}


# ---------------------------------------------------------------- plumbing


def test_spec_validation(tmp_path):
    with pytest.raises(ExtractError, match="model"):
        ExtractSpec("resnet", "fc6", "m.csv", "imgs", "out.cbfv")
    with pytest.raises(ExtractError, match="layer"):
        ExtractSpec("vgg16", "conv5", "m.csv", "imgs", "out.cbfv")
    with pytest.raises(ExtractError, match="batch"):
        ExtractSpec("vgg16", "fc6", "m.csv", "imgs", "out.cbfv", batch_size=0)


def test_read_manifest_order_and_errors(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("b.png,x\na.png,y\n")
    assert read_manifest(m) == [("b.png", "x"), ("a.png", "y")]
    m.write_text("only-one-field\n")
    with pytest.raises(ExtractError, match="row 0"):
        read_manifest(m)
    m.write_text("")
    with pytest.raises(ExtractError, match="empty"):
        read_manifest(m)


def test_write_feature_file_round_trip(tmp_path):
    ids = ["a.png", "b.png", "面.png"]
    mat = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
    path = tmp_path / "f.cbfv"
    write_feature_file(path, ids, mat)
    back_ids, back = parse_feature_file(path)
    assert back_ids == ids
    np.testing.assert_array_equal(back, mat)


def test_write_feature_file_rejects_bad_input(tmp_path):
    path = tmp_path / "f.cbfv"
    with pytest.raises(ExtractError, match="disagree"):
        write_feature_file(path, ["a"], np.zeros((2, 3), dtype=np.float32))
    with pytest.raises(ExtractError, match="non-finite"):
        write_feature_file(path, ["a"], np.array([[np.nan, 0.0]], dtype=np.float32))
    with pytest.raises(ExtractError, match="bad id"):
        write_feature_file(path, [""], np.zeros((1, 3), dtype=np.float32))


# ---------------------------------------------------------------- extraction


def test_all_six_model_layer_pairs(sample, tmp_path):
    """Every model/layer pair emits 4096-d rows for the 10-image sample."""
    for model in ("alexnet", "vgg16", "vgg19"):
        for layer in ("fc6", "fc7"):
            out = tmp_path / f"{model}_{layer}.cbfv"
            summary = extract_directory(
                sample["images"], sample["manifest"], out,
                model=model, layer=layer, pretrained=False, batch_size=6,
            )
            assert summary["written"] == 11
            assert summary["dim"] == FEATURE_DIM
            ids, mat = parse_feature_file(out)
            assert mat.shape == (11, FEATURE_DIM)
            assert np.all(np.isfinite(mat))
            assert np.all(mat >= 0)  # post-activation features
            assert ids[:10] == sample["names"]  # manifest order preserved


def test_identical_images_get_identical_rows(sample, tmp_path):
    out = tmp_path / "alex.cbfv"
    extract_directory(sample["images"], sample["manifest"], out,
                      model="alexnet", layer="fc6", pretrained=False)
    ids, mat = parse_feature_file(out)
    np.testing.assert_array_equal(mat[3], mat[ids.index("twin.png")])
    # and distinct images differ
    assert not np.array_equal(mat[0], mat[1])


def test_repeat_runs_are_byte_identical(sample, tmp_path):
    a, b = tmp_path / "a.cbfv", tmp_path / "b.cbfv"
    for out in (a, b):
        extract_directory(sample["images"], sample["manifest"], out,
                          model="alexnet", layer="fc7", pretrained=False, batch_size=3)
    assert a.read_bytes() == b.read_bytes()


def test_batch_size_does_not_change_output(sample, tmp_path):
    a, b = tmp_path / "a.cbfv", tmp_path / "b.cbfv"
    extract_directory(sample["images"], sample["manifest"], a,
                      model="alexnet", layer="fc6", pretrained=False, batch_size=1)
    extract_directory(sample["images"], sample["manifest"], b,
                      model="alexnet", layer="fc6", pretrained=False, batch_size=11)
    _, ma = parse_feature_file(a)
    _, mb = parse_feature_file(b)
    np.testing.assert_allclose(ma, mb, atol=2e-4)


def test_unreadable_image_is_skipped(sample, tmp_path, capsys):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    good = sample["images"] / sample["names"][0]
    (img_dir / "good.png").write_bytes(good.read_bytes())
    (img_dir / "broken.png").write_bytes(b"not an image at all")
    manifest = tmp_path / "m.csv"
    manifest.write_text("good.png,a\nbroken.png,a\nmissing.png,a\n")
    out = tmp_path / "f.cbfv"
    summary = extract_directory(img_dir, manifest, out,
                                model="alexnet", layer="fc6", pretrained=False)
    assert summary["written"] == 1
    assert summary["skipped"] == ["broken.png", "missing.png"]
    ids, mat = parse_feature_file(out)
    assert ids == ["good.png"]
    err = capsys.readouterr().err
    assert "broken.png" in err and "missing.png" in err


def test_no_readable_images_is_fatal(tmp_path):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    manifest = tmp_path / "m.csv"
    manifest.write_text("ghost.png,a\n")
    spec = ExtractSpec("alexnet", "fc6", str(manifest), str(img_dir),
                       str(tmp_path / "f.cbfv"), pretrained=False)
    with pytest.raises(ExtractError, match="no readable images"):
        extract_deep(spec)


def test_missing_pretrained_weights_is_fatal(sample, tmp_path, monkeypatch):
    import torchvision.models as models

    def boom(*args, **kwargs):
        raise RuntimeError("download blocked")

    monkeypatch.setattr(models, "alexnet", boom)
    spec = ExtractSpec("alexnet", "fc6", str(sample["manifest"]),
                       str(sample["images"]), str(tmp_path / "f.cbfv"), pretrained=True)
    with pytest.raises(ExtractError, match="pretrained weights"):
        extract_deep(spec)


# ---------------------------------------------------------------- CLI


def test_cli_round_trip(sample, tmp_path, capsys):
    from deep_extract.cli import main

    out = tmp_path / "cli.cbfv"
    code = main(["--model", "alexnet", "--layer", "fc7", "--manifest",
                 str(sample["manifest"]), "--images", str(sample["images"]),
                 "--out", str(out), "--random-weights", "--batch-size", "4"])
    assert code == 0
    assert "alexnet/fc7: wrote 11 x 4096" in capsys.readouterr().err
    ids, mat = parse_feature_file(out)
    assert mat.shape == (11, FEATURE_DIM)


def test_cli_missing_manifest_exits_2(tmp_path, capsys):
    from deep_extract.cli import main

    code = main(["--model", "alexnet", "--layer", "fc6", "--manifest",
                 str(tmp_path / "none.csv"), "--images", str(tmp_path),
                 "--out", str(tmp_path / "f.cbfv"), "--random-weights"])
    assert code == 2
    assert "error:" in capsys.readouterr().err
