"""Feature-vector containers, file formats, dataset manifests, and split generation.

Two interchange formats are supported:

* CSV: one row per image, first field is the id, remaining fields are
  decimal reals (9 significant digits on write), no header.
* Binary: magic ``CBFV``, version u32=1, n u32, d u32, then n records of
  [id length u16, id bytes UTF-8, d little-endian float32 values].
  All integer fields are little-endian.

Manifests map ids to class labels: ``id,label`` per row, no header.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, FormatError, ManifestError, SpecError, SplitError

MAGIC = b"CBFV"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureVector:
    """One image descriptor: an opaque id plus a finite real vector."""

    id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise DataError(f"feature vector {self.id!r} must be 1-D with d >= 1")
        if not np.all(np.isfinite(values)):
            raise DataError(f"feature vector {self.id!r} contains non-finite values")
        object.__setattr__(self, "values", values)


class FeatureSet:
    """Ordered collection of equal-length feature vectors with class labels.

    Order is load order and is preserved by all operations. The set is
    immutable after construction and safe for concurrent reads.
    """

    def __init__(self, ids: Iterable[str], matrix: np.ndarray, labels: dict[str, str]):
        self.ids: list[str] = list(ids)
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DataError("feature matrix must be 2-D (n x d)")
        if matrix.shape[0] != len(self.ids):
            raise DataError(
                f"{len(self.ids)} ids but {matrix.shape[0]} feature rows"
            )
        if matrix.shape[0] > 0 and matrix.shape[1] < 1:
            raise DataError("feature dimension must be >= 1")
        if not np.all(np.isfinite(matrix)):
            bad = int(np.argwhere(~np.isfinite(matrix).all(axis=1))[0][0])
            raise DataError(f"non-finite value in row {bad} (id {self.ids[bad]!r})")
        if len(set(self.ids)) != len(self.ids):
            seen: set[str] = set()
            dup = next(i for i in self.ids if i in seen or seen.add(i))
            raise DataError(f"duplicate id {dup!r}")
        missing = [i for i in self.ids if i not in labels]
        if missing:
            raise ManifestError(f"id {missing[0]!r} has no label in manifest")
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self.labels: dict[str, str] = {i: labels[i] for i in self.ids}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __iter__(self) -> Iterator[FeatureVector]:
        for i, image_id in enumerate(self.ids):
            yield FeatureVector(image_id, self.matrix[i])

    def label_of(self, image_id: str) -> str:
        return self.labels[image_id]

    def classes(self) -> list[str]:
        """Distinct labels in sorted order."""
        return sorted(set(self.labels.values()))

    def subset(self, ids: Iterable[str]) -> "FeatureSet":
        """New set restricted to `ids`, preserving this set's order."""
        wanted = set(ids)
        index = {image_id: i for i, image_id in enumerate(self.ids)}
        unknown = wanted - set(index)
        if unknown:
            raise DataError(f"unknown id {sorted(unknown)[0]!r}")
        keep = [i for i, image_id in enumerate(self.ids) if image_id in wanted]
        rows = self.matrix[keep]
        kept_ids = [self.ids[i] for i in keep]
        return FeatureSet(kept_ids, rows, {i: self.labels[i] for i in kept_ids})

    def with_matrix(self, matrix: np.ndarray) -> "FeatureSet":
        """Same ids/labels, new per-row features (for transform outputs)."""
        return FeatureSet(self.ids, matrix, self.labels)


@dataclass(frozen=True)
class SplitSpec:
    """Evaluation split: holdout draws test_per_class items per class."""

    mode: str  # "holdout" or "loocv"
    test_per_class: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("holdout", "loocv"):
            raise SpecError(f"unknown split mode {self.mode!r}")
        if self.mode == "holdout" and self.test_per_class < 1:
            raise SpecError("holdout requires test_per_class >= 1")
        if not 0 <= self.seed < 2**64:
            raise SpecError("seed must fit in u64")


def load_manifest(path: str | Path) -> dict[str, str]:
    """Read ``id,label`` rows. Duplicate ids must agree on the label."""
    labels: dict[str, str] = {}
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 2:
                raise ManifestError(f"manifest row {i}: expected 'id,label', got {row!r}")
            image_id, label = row[0], row[1]
            if image_id in labels and labels[image_id] != label:
                raise ManifestError(f"manifest row {i}: conflicting label for {image_id!r}")
            labels[image_id] = label
    return labels


def save_manifest(labels: dict[str, str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for image_id, label in labels.items():
            writer.writerow([image_id, label])


def _load_csv(path: Path) -> tuple[list[str], np.ndarray]:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    dim = None
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not a feature file (binary junk, bad magic?)") from exc
    try:
        parsed = list(csv.reader(text.splitlines()))
    except csv.Error as exc:
        raise FormatError(f"{path}: unparsable CSV: {exc}") from exc
    if any("\x00" in field for row in parsed for field in row):
        raise FormatError(f"{path}: not a feature file (binary junk, bad magic?)")
    for i, row in enumerate(parsed):
        if not row:
            continue
        if len(row) < 2:
            raise FormatError(f"{path}: row {i} has no feature values")
        if dim is None:
            dim = len(row) - 1
        elif len(row) - 1 != dim:
            raise FormatError(
                f"{path}: row {i} has {len(row) - 1} values, expected {dim}"
            )
        try:
            values = np.array([float(v) for v in row[1:]], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from exc
        if not np.all(np.isfinite(values)):
            raise DataError(f"{path}: row {i} (id {row[0]!r}) has non-finite value")
        ids.append(row[0])
        rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no feature rows")
    return ids, np.vstack(rows)


def _load_binary(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic bytes")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    version, n, d = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    offset = 16
    ids: list[str] = []
    matrix = np.empty((n, d), dtype=np.float64)
    for i in range(n):
        if offset + 2 > len(blob):
            raise FormatError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        image_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        end = offset + 4 * d
        if end > len(blob):
            raise FormatError(f"{path}: truncated values at record {i}")
        matrix[i] = np.frombuffer(blob[offset:end], dtype="<f4")
        offset = end
        ids.append(image_id)
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    if not np.all(np.isfinite(matrix)):
        bad = int(np.argwhere(~np.isfinite(matrix).all(axis=1))[0][0])
        raise DataError(f"{path}: record {bad} (id {ids[bad]!r}) non-finite")
    return ids, matrix


def load_feature_set(path: str | Path, manifest: str | Path | dict[str, str]) -> FeatureSet:
    """Load features (binary or CSV, sniffed by magic bytes) plus manifest labels.

    `manifest` may be a path to an ``id,label`` CSV or an already-loaded mapping.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"feature file not found: {path}")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        ids, matrix = _load_binary(path)
    else:
        ids, matrix = _load_csv(path)
    labels = dict(manifest) if isinstance(manifest, dict) else load_manifest(manifest)
    missing = [i for i in ids if i not in labels]
    if missing:
        raise ManifestError(f"{path}: id {missing[0]!r} missing from manifest")
    return FeatureSet(ids, matrix, labels)


def save_feature_set(fs: FeatureSet, path: str | Path, format: str = "binary") -> None:
    """Write `fs` so that a reload reproduces it (binary exact, CSV to 9 digits)."""
    if any(not image_id for image_id in fs.ids):
        raise FormatError("ids are required: empty id cannot be saved")
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for i, image_id in enumerate(fs.ids):
                writer.writerow([image_id] + [f"{v:.9g}" for v in fs.matrix[i]])
    elif format == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<III", FORMAT_VERSION, len(fs), fs.dim))
            for i, image_id in enumerate(fs.ids):
                raw = image_id.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise FormatError(f"id {image_id!r} longer than 65535 bytes")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(fs.matrix[i].astype("<f4").tobytes())
    else:
        raise SpecError(f"unknown format {format!r}")


def stratified_split(fs: FeatureSet, spec: SplitSpec) -> tuple[FeatureSet, FeatureSet]:
    """Seeded per-class draw without replacement; returns (train, test).

    Test contains exactly spec.test_per_class items of each class; train is
    the complement. Both preserve the input ordering. Deterministic in seed.
    """
    if spec.mode != "holdout":
        raise SpecError("stratified_split requires a holdout SplitSpec")
    by_class: dict[str, list[str]] = {}
    for image_id in fs.ids:
        by_class.setdefault(fs.labels[image_id], []).append(image_id)
    rng = np.random.default_rng(spec.seed)
    test_ids: set[str] = set()
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) <= spec.test_per_class:
            raise SplitError(
                f"class {label!r} has {len(members)} items, "
                f"cannot hold out {spec.test_per_class}"
            )
        chosen = rng.choice(len(members), size=spec.test_per_class, replace=False)
        test_ids.update(members[i] for i in chosen)
    train_ids = [i for i in fs.ids if i not in test_ids]
    return fs.subset(train_ids), fs.subset(test_ids)
