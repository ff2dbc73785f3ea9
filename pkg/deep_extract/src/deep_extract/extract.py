"""Batch extraction of FC6/FC7 activations into the CBFV feature file format.

The on-disk format is the retrieval engine's binary interchange format,
written here independently so this package has no import dependency on it:

    magic "CBFV" | version u32=1 | n u32 | d u32 |
    n * [id length u16 | id bytes UTF-8 | d little-endian float32]

All integers little-endian. One record per manifest row, in manifest order.

Features are taken after the ReLU that follows each fully connected layer
(post-activation), so vectors are nonnegative and match what the frozen
graphs propagate forward. Inference runs in eval mode under no_grad, so
output is deterministic for a given weight set.
"""

from __future__ import annotations

import csv
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CBFV"
FORMAT_VERSION = 1
FEATURE_DIM = 4096

MODELS = ("alexnet", "vgg16", "vgg19")
LAYERS = ("fc6", "fc7")

# classifier-sequence index up to and including the ReLU after each FC layer
_TRUNCATE = {
    ("alexnet", "fc6"): 3,  # Dropout, Linear, ReLU
    ("alexnet", "fc7"): 6,  # ... Dropout, Linear, ReLU
    ("vgg16", "fc6"): 2,    # Linear, ReLU
    ("vgg16", "fc7"): 5,    # ... Dropout, Linear, ReLU
    ("vgg19", "fc6"): 2,
    ("vgg19", "fc7"): 5,
}

_RANDOM_WEIGHTS_SEED = 0


class ExtractError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractSpec:
    model: str
    layer: str
    manifest: str
    images: str
    out: str
    batch_size: int = 16
    pretrained: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise ExtractError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.layer not in LAYERS:
            raise ExtractError(f"unknown layer {self.layer!r}; expected one of {LAYERS}")
        if self.batch_size < 1:
            raise ExtractError("batch_size must be >= 1")


def _build_model(name: str, layer: str, pretrained: bool):
    import torch
    from torchvision import models

    ctor = {"alexnet": models.alexnet, "vgg16": models.vgg16, "vgg19": models.vgg19}[name]
    if pretrained:
        weights = {
            "alexnet": models.AlexNet_Weights.IMAGENET1K_V1,
            "vgg16": models.VGG16_Weights.IMAGENET1K_V1,
            "vgg19": models.VGG19_Weights.IMAGENET1K_V1,
        }[name]
        try:
            net = ctor(weights=weights)
        except Exception as exc:  # download failure, checksum mismatch, ...
            raise ExtractError(
                f"pretrained weights for {name} unavailable: {exc}. "
                "Provide a torch hub cache or run with random weights "
                "(--random-weights) for format/smoke testing only."
            ) from exc
    else:
        # seeded so repeated runs produce identical (if meaningless) features
        torch.manual_seed(_RANDOM_WEIGHTS_SEED)
        net = ctor(weights=None)
    net.classifier = net.classifier[: _TRUNCATE[(name, layer)]]
    net.eval()
    return net


def _preprocess():
    from torchvision import transforms

    return transforms.Compose(
        [
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
        ]
    )


def read_manifest(path: str | Path) -> list[tuple[str, str]]:
    """Return (id, label) pairs in file order."""
    entries: list[tuple[str, str]] = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 2:
                raise ExtractError(f"{path}: row {i}: expected 'id,label', got {row!r}")
            entries.append((row[0], row[1]))
    if not entries:
        raise ExtractError(f"{path}: empty manifest")
    return entries


def write_feature_file(path: str | Path, ids: list[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ExtractError("ids and feature rows disagree")
    if not np.all(np.isfinite(matrix)):
        raise ExtractError("refusing to write non-finite features")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, len(ids), matrix.shape[1]))
        for image_id, row in zip(ids, matrix):
            raw = image_id.encode("utf-8")
            if not raw or len(raw) > 0xFFFF:
                raise ExtractError(f"bad id {image_id!r}")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(row.astype("<f4").tobytes())


def extract_deep(spec: ExtractSpec) -> dict:
    """Run the extraction described by `spec`; returns a summary dict.

    Unreadable images are skipped with their ids logged to stderr and listed
    in the summary; missing pretrained weights abort.
    """
    import torch
    from PIL import Image

    entries = read_manifest(spec.manifest)
    net = _build_model(spec.model, spec.layer, spec.pretrained)
    prep = _preprocess()
    images_dir = Path(spec.images)

    kept_ids: list[str] = []
    skipped: list[str] = []
    tensors = []
    for image_id, _label in entries:
        try:
            with Image.open(images_dir / image_id) as img:
                tensors.append(prep(img.convert("RGB")))
            kept_ids.append(image_id)
        except (OSError, ValueError) as exc:
            skipped.append(image_id)
            print(f"deep-extract: skipping {image_id!r}: {exc}", file=sys.stderr)
    if not kept_ids:
        raise ExtractError("no readable images")

    rows = np.empty((len(kept_ids), FEATURE_DIM), dtype=np.float32)
    with torch.no_grad():
        for start in range(0, len(tensors), spec.batch_size):
            batch = torch.stack(tensors[start : start + spec.batch_size])
            out = net(batch)
            if out.shape[1] != FEATURE_DIM:
                raise ExtractError(f"unexpected feature width {out.shape[1]}")
            rows[start : start + out.shape[0]] = out.numpy()

    write_feature_file(spec.out, kept_ids, rows)
    return {
        "model": spec.model,
        "layer": spec.layer,
        "written": len(kept_ids),
        "dim": FEATURE_DIM,
        "skipped": skipped,
        "out": str(spec.out),
    }


def extract_directory(images, manifest, out, *, model="vgg16", layer="fc7",
                      pretrained=True, batch_size=16) -> dict:
    """Convenience wrapper building an ExtractSpec from keyword arguments."""
    return extract_deep(
        ExtractSpec(model=model, layer=layer, manifest=str(manifest),
                    images=str(images), out=str(out), batch_size=batch_size,
                    pretrained=pretrained)
    )
