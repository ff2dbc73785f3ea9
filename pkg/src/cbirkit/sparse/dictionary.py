"""Dictionary learning: K-means and K-SVD, plus the on-disk atom format.

Atoms live in a d x K matrix with unit-norm columns. K-means treats the
normalized centroids as atoms; K-SVD alternates OMP coding with exact
rank-1 SVD updates of one atom at a time. Both are deterministic given
the seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, FormatError, SpecError
from .solvers import _omp_batch

MAGIC = b"CBDC"
FORMAT_VERSION = 1
LEARNERS = ("kmeans", "ksvd")
_LEARNER_TAGS = {"kmeans": 1, "ksvd": 2}
_TAG_LEARNERS = {v: k for k, v in _LEARNER_TAGS.items()}
_HEADER = struct.Struct("<4sIIIBQ")


@dataclass(frozen=True)
class Dictionary:
    """Immutable learned dictionary: unit-norm atoms as columns."""

    atoms: np.ndarray
    learner: str
    seed: int

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim != 2:
            raise SpecError("atoms must be a d x K matrix")
        if atoms.shape[1] < 2:
            raise SpecError(f"need at least 2 atoms, got {atoms.shape[1]}")
        if not np.all(np.isfinite(atoms)):
            raise SpecError("atoms contain non-finite values")
        norms = np.linalg.norm(atoms, axis=0)
        off = np.abs(norms - 1.0)
        if off.max() > 1e-9:
            bad = int(np.argmax(off))
            raise SpecError(f"atom {bad} has norm {norms[bad]!r}, expected 1")
        if self.learner not in LEARNERS:
            raise SpecError(f"unknown learner {self.learner!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise SpecError(f"seed {self.seed!r} out of u64 range")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def size(self) -> int:
        return self.atoms.shape[1]


def _train_matrix(train) -> np.ndarray:
    X = getattr(train, "matrix", train)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SpecError("training data must be an n x d matrix")
    return X


def _normalize_columns(atoms: np.ndarray, context: str) -> np.ndarray:
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms == 0):
        bad = int(np.argmin(norms))
        raise DataError(f"{context}: column {bad} is all-zero, cannot normalize")
    return atoms / norms


def build_dict_kmeans(train, K: int, seed: int = 0, iters: int = 100) -> Dictionary:
    """Lloyd's K-means with k-means++ seeding; centroids normalized at the end.

    Empty clusters are reseeded to the point farthest from its assigned
    centroid. Stops early once centroid movement drops below 1e-9.
    """
    X = _train_matrix(train)
    n = X.shape[0]
    if not 2 <= K <= n:
        raise SpecError(f"K={K} must satisfy 2 <= K <= n={n}")
    if iters < 1:
        raise SpecError("iters must be >= 1")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((K, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    closest = np.einsum("ij,ij->i", X - centroids[0], X - centroids[0])
    for c in range(1, K):
        total = closest.sum()
        if total > 0:
            pick = int(rng.choice(n, p=closest / total))
        else:
            pick = int(rng.integers(n))
        centroids[c] = X[pick]
        d2 = np.einsum("ij,ij->i", X - centroids[c], X - centroids[c])
        np.minimum(closest, d2, out=closest)

    for _ in range(iters):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        nearest = d2[np.arange(n), assign]
        new = np.empty_like(centroids)
        for c in range(K):
            members = assign == c
            if not np.any(members):
                far = int(np.argmax(nearest))
                new[c] = X[far]
                nearest = nearest.copy()
                nearest[far] = -1.0  # one reseed per point
            else:
                new[c] = X[members].mean(axis=0)
        moved = float(np.linalg.norm(new - centroids, axis=1).max())
        centroids = new
        if moved < 1e-9:
            break

    atoms = _normalize_columns(centroids.T, "k-means centroid")
    return Dictionary(atoms, "kmeans", seed)


def _init_atoms_from_signals(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    usable = np.flatnonzero(norms > 0)
    if usable.size < K:
        raise DataError(f"only {usable.size} nonzero training vectors, need {K}")
    chosen = usable[rng.choice(usable.size, size=K, replace=False)]
    return X[chosen].T / norms[chosen]


def build_dict_ksvd_with_trace(
    train, K: int, sparsity_T: int, iters: int = 50, seed: int = 0
) -> tuple[Dictionary, np.ndarray]:
    """K-SVD returning the dictionary and its per-iteration objective trace.

    Each iteration codes the signals with OMP (keeping a signal's previous
    code when it fits the updated dictionary better, so the objective never
    climbs), then refits each atom and its coefficients from the rank-1 SVD
    of the residual restricted to the signals using that atom. Atoms that end
    an iteration unused are replaced by the worst-represented signal.
    """
    X = _train_matrix(train).T  # d x n
    d, n = X.shape
    if not 2 <= K <= n:
        raise SpecError(f"K={K} must satisfy 2 <= K <= n={n}")
    if not 1 <= sparsity_T <= K:
        raise SpecError(f"sparsity_T={sparsity_T} must satisfy 1 <= T <= K={K}")
    if iters < 0:
        raise SpecError("iters must be >= 0")
    rng = np.random.default_rng(seed)
    atoms = _init_atoms_from_signals(X.T, K, rng)
    codes = np.zeros((K, n))
    trace = []

    for _ in range(iters):
        new_codes = _omp_batch(atoms, X, sparsity_T)
        old_err = np.einsum("ij,ij->j", X - atoms @ codes, X - atoms @ codes)
        new_err = np.einsum("ij,ij->j", X - atoms @ new_codes, X - atoms @ new_codes)
        keep_old = old_err < new_err
        new_codes[:, keep_old] = codes[:, keep_old]
        codes = new_codes

        for k in range(K):
            used = np.flatnonzero(codes[k])
            if used.size == 0:
                continue
            # Residual without atom k's contribution, restricted to its users.
            E = X[:, used] - atoms @ codes[:, used] + np.outer(atoms[:, k], codes[k, used])
            U, s, Vt = np.linalg.svd(E, full_matrices=False)
            u = U[:, 0]
            if u[np.argmax(np.abs(u))] < 0:
                u = -u
                Vt = -Vt
            atoms[:, k] = u
            codes[k, used] = s[0] * Vt[0]

        resid = np.einsum("ij,ij->j", X - atoms @ codes, X - atoms @ codes)
        for k in range(K):
            if np.any(codes[k]):
                continue
            order = np.argsort(-resid, kind="stable")
            for cand in order:
                norm = np.linalg.norm(X[:, cand])
                if norm > 0 and resid[cand] >= 0:
                    atoms[:, k] = X[:, cand] / norm
                    resid[cand] = -1.0  # each signal seeds at most one atom
                    break

        err = X - atoms @ codes
        trace.append(float(np.einsum("ij,ij->", err, err)))

    return Dictionary(atoms, "ksvd", seed), np.asarray(trace)


def build_dict_ksvd(train, K: int, sparsity_T: int, iters: int = 50, seed: int = 0) -> Dictionary:
    dictionary, _ = build_dict_ksvd_with_trace(train, K, sparsity_T, iters, seed)
    return dictionary


def save_dictionary(dictionary: Dictionary, path) -> None:
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        dictionary.dim,
        dictionary.size,
        _LEARNER_TAGS[dictionary.learner],
        dictionary.seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dictionary.atoms.astype("<f8").tobytes(order="F"))


def load_dictionary(path) -> Dictionary:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: too short for a dictionary header")
    magic, version, d, K, tag, seed = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if tag not in _TAG_LEARNERS:
        raise FormatError(f"{path}: unknown learner tag {tag}")
    expected = _HEADER.size + d * K * 8
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    atoms = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape((d, K), order="F")
    if not np.all(np.isfinite(atoms)):
        raise DataError(f"{path}: atoms contain non-finite values")
    return Dictionary(atoms, _TAG_LEARNERS[tag], seed)
