"""Coefficient learning: solvers for min 0.5*||x - D a||^2 + lam1*||a||_1.

Four routes to the same optimum: coordinate descent (lasso), the LARS
homotopy path, elastic net (adds a ridge term, reduces to lasso at lam2=0),
and SSF iterative shrinkage. Plus greedy OMP, which targets a nonzero count
instead of a penalty and feeds the K-SVD coding stage.

Solvers accept a Dictionary or a plain d x K array. With relative_lambda
(the default) the penalty is lambda1 * ||D^T x||_inf per signal, so one
setting serves feature vectors of any scale and dimension.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ..errors import DimensionError, SpecError

if TYPE_CHECKING:
    from ..data import FeatureSet

CL_ALGORITHMS = ("homotopy", "lasso", "elastic_net", "ssf")


@dataclass(frozen=True)
class ClSpec:
    """Coefficient-learning configuration.

    lambda1 is the l1 weight; with relative_lambda=True it is interpreted as
    a fraction of lambda_max(x) per signal (and so is lambda2).
    """

    algorithm: str
    lambda1: float = 0.1
    lambda2: float = 0.0
    relative_lambda: bool = True
    max_iter: int = 10_000
    tol: float = 1e-7

    def __post_init__(self):
        if self.algorithm not in CL_ALGORITHMS:
            raise SpecError(f"unknown CL algorithm {self.algorithm!r}")
        if self.lambda1 <= 0:
            raise SpecError("lambda1 must be positive")
        if self.lambda2 < 0:
            raise SpecError("lambda2 must be nonnegative")
        if self.lambda2 != 0 and self.algorithm != "elastic_net":
            raise SpecError("lambda2 is used only by elastic_net")
        if self.max_iter < 1:
            raise SpecError("max_iter must be >= 1")
        if self.tol <= 0:
            raise SpecError("tol must be positive")


@dataclass(frozen=True)
class SparseCode:
    coefficients: np.ndarray
    converged: bool = True

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if not np.all(np.isfinite(coeffs)):
            raise DimensionError("sparse code contains non-finite values")
        object.__setattr__(self, "coefficients", coeffs)


@dataclass
class EncodeReport:
    algorithm: str
    total: int = 0
    converged: int = 0
    failed_ids: list[str] = field(default_factory=list)


def _atoms(D) -> np.ndarray:
    atoms = getattr(D, "atoms", D)
    atoms = np.asarray(atoms, dtype=np.float64)
    if atoms.ndim != 2:
        raise DimensionError("dictionary must be a d x K matrix")
    return atoms


def _check_signal(A: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[0],):
        raise DimensionError(f"signal length {x.shape} != dictionary d {A.shape[0]}")
    return x


def lambda_max(D, x) -> float:
    """Smallest l1 penalty for which the lasso solution is all-zero."""
    A = _atoms(D)
    x = _check_signal(A, x)
    return float(np.abs(A.T @ x).max())


def _effective_lambdas(A: np.ndarray, x: np.ndarray, spec: ClSpec) -> tuple[float, float]:
    if spec.relative_lambda:
        lm = float(np.abs(A.T @ x).max())
        return spec.lambda1 * lm, spec.lambda2 * lm
    return spec.lambda1, spec.lambda2


def _soft(v: float, t: float) -> float:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


def sr_objective(D, x, alpha, lambda1: float) -> float:
    """0.5*||x - D a||^2 + lambda1*||a||_1."""
    A = _atoms(D)
    x = _check_signal(A, x)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (A.shape[1],):
        raise DimensionError(f"code length {alpha.shape} != dictionary K {A.shape[1]}")
    r = x - A @ alpha
    return float(0.5 * np.dot(r, r) + lambda1 * np.abs(alpha).sum())


def kkt_violation(D, x, alpha, lambda1: float, lambda2: float = 0.0) -> float:
    """Max deviation from the subgradient optimality conditions.

    Zero coordinates need |d_j^T r| <= lambda1; nonzero coordinates need
    d_j^T r - lambda2*a_j = lambda1 * sign(a_j). Returns the worst excess.
    """
    A = _atoms(D)
    x = _check_signal(A, x)
    alpha = np.asarray(alpha, dtype=np.float64)
    grad = A.T @ (x - A @ alpha) - lambda2 * alpha
    nz = alpha != 0
    worst = 0.0
    if np.any(~nz):
        worst = max(worst, float(np.abs(grad[~nz]).max() - lambda1))
    if np.any(nz):
        worst = max(worst, float(np.abs(grad[nz] - lambda1 * np.sign(alpha[nz])).max()))
    return worst


def sparse_omp(D, x, T: int) -> SparseCode:
    """Orthogonal matching pursuit: at most T nonzeros, greedy atom picks.

    After every pick the coefficients re-solve least squares on the support,
    so the residual is orthogonal to all selected atoms.
    """
    A = _atoms(D)
    x = _check_signal(A, x)
    K = A.shape[1]
    if not 1 <= T <= K:
        raise SpecError(f"T={T} out of range for K={K}")
    gram = A.T @ A
    corr0 = A.T @ x
    alpha = np.zeros(K)
    support: list[int] = []
    coeffs = np.zeros(0)
    corr = corr0.copy()
    for _ in range(T):
        j = int(np.argmax(np.abs(corr)))
        if abs(corr[j]) < 1e-12:
            break
        support.append(j)
        sub = gram[np.ix_(support, support)]
        try:
            coeffs = np.linalg.solve(sub, corr0[support])
        except np.linalg.LinAlgError:
            coeffs, *_ = np.linalg.lstsq(sub, corr0[support], rcond=None)
        corr = corr0 - gram[:, support] @ coeffs
    alpha[support] = coeffs
    return SparseCode(alpha)


def _omp_batch(A: np.ndarray, X: np.ndarray, T: int) -> np.ndarray:
    """OMP codes for every column of X (d x n); returns K x n."""
    gram = A.T @ A
    corr0 = A.T @ X
    K, n = corr0.shape
    codes = np.zeros((K, n))
    for i in range(n):
        corr = corr0[:, i].copy()
        support: list[int] = []
        coeffs = np.zeros(0)
        for _ in range(T):
            j = int(np.argmax(np.abs(corr)))
            if abs(corr[j]) < 1e-12:
                break
            support.append(j)
            sub = gram[np.ix_(support, support)]
            try:
                coeffs = np.linalg.solve(sub, corr0[support, i])
            except np.linalg.LinAlgError:
                coeffs, *_ = np.linalg.lstsq(sub, corr0[support, i], rcond=None)
            corr = corr0[:, i] - gram[:, support] @ coeffs
        codes[support, i] = coeffs
    return codes


def _coordinate_descent(
    A: np.ndarray, x: np.ndarray, lam1: float, lam2: float, max_iter: int, tol: float
) -> tuple[np.ndarray, bool]:
    """Cyclic coordinate descent on the elastic-net objective (lam2=0: lasso)."""
    K = A.shape[1]
    col_sq = np.einsum("ij,ij->j", A, A)
    denom = col_sq + lam2
    corr0 = A.T @ x
    gram = A.T @ A
    alpha = np.zeros(K)
    grad = corr0.copy()  # A^T (x - A alpha), maintained incrementally
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(K):
            if denom[j] <= 0:
                continue
            rho = grad[j] + col_sq[j] * alpha[j]
            new = _soft(rho, lam1) / denom[j]
            delta = new - alpha[j]
            if delta != 0.0:
                grad -= delta * gram[:, j]
                alpha[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            return alpha, True
    return alpha, False


def solve_lasso(D, x, spec: ClSpec) -> SparseCode:
    if spec.algorithm != "lasso":
        raise SpecError(f"spec algorithm is {spec.algorithm!r}, expected 'lasso'")
    A = _atoms(D)
    x = _check_signal(A, x)
    lam1, _ = _effective_lambdas(A, x, spec)
    alpha, ok = _coordinate_descent(A, x, lam1, 0.0, spec.max_iter, spec.tol)
    return SparseCode(alpha, converged=ok)


def solve_elastic_net(D, x, spec: ClSpec) -> SparseCode:
    if spec.algorithm != "elastic_net":
        raise SpecError(f"spec algorithm is {spec.algorithm!r}, expected 'elastic_net'")
    A = _atoms(D)
    x = _check_signal(A, x)
    lam1, lam2 = _effective_lambdas(A, x, spec)
    alpha, ok = _coordinate_descent(A, x, lam1, lam2, spec.max_iter, spec.tol)
    return SparseCode(alpha, converged=ok)


def solve_homotopy(D, x, spec: ClSpec) -> SparseCode:
    """LARS homotopy: follow the lasso path from lambda_max down to the target.

    Correlations are recomputed from the residual at every breakpoint, which
    keeps the path numerically honest on long runs. Ties are broken toward
    the lowest atom index.
    """
    if spec.algorithm != "homotopy":
        raise SpecError(f"spec algorithm is {spec.algorithm!r}, expected 'homotopy'")
    A = _atoms(D)
    x = _check_signal(A, x)
    lam_target, _ = _effective_lambdas(A, x, spec)
    K = A.shape[1]
    alpha = np.zeros(K)
    corr = A.T @ x
    lam = float(np.abs(corr).max())
    if lam_target >= lam or lam == 0.0:
        return SparseCode(alpha)
    active = [int(np.argmax(np.abs(corr)))]
    for _ in range(max(spec.max_iter, 8 * K)):
        A_act = A[:, active]
        signs = np.sign(corr[active])
        gram_act = A_act.T @ A_act
        try:
            direction = np.linalg.solve(gram_act, signs)
        except np.linalg.LinAlgError:
            direction, *_ = np.linalg.lstsq(gram_act, signs, rcond=None)
        # Correlation velocities: c_j(lam - step) = c_j - step * vel_j.
        vel = A.T @ (A_act @ direction)
        limit = lam - lam_target

        step = limit
        event = ("target", -1)
        inactive = np.setdiff1d(np.arange(K), active, assume_unique=False)
        if inactive.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                plus = (lam - corr[inactive]) / (1.0 - vel[inactive])
                minus = (lam + corr[inactive]) / (1.0 + vel[inactive])
            for cand in (plus, minus):
                cand[~np.isfinite(cand)] = np.inf
                cand[cand <= 1e-12] = np.inf
            joined = np.minimum(plus, minus)
            jbest = int(np.argmin(joined))  # lowest atom index wins ties
            if joined[jbest] < step - 1e-15:
                step = float(joined[jbest])
                event = ("join", int(inactive[jbest]))
        drops = -alpha[active] / np.where(direction != 0, direction, np.nan)
        drops[~np.isfinite(drops)] = np.inf
        drops[drops <= 1e-12] = np.inf
        dbest = int(np.argmin(drops))
        if drops[dbest] < step - 1e-15:
            step = float(drops[dbest])
            event = ("drop", dbest)

        alpha[active] += step * direction
        lam -= step
        if event[0] == "target" or lam <= lam_target + 1e-15:
            return SparseCode(alpha)
        if event[0] == "join":
            active.append(event[1])
        else:
            alpha[active[event[1]]] = 0.0
            active.pop(event[1])
            if not active:
                return SparseCode(alpha)
        corr = A.T @ (x - A[:, active] @ alpha[active])
        lam = float(np.abs(corr[active]).max()) if active else float(np.abs(corr).max())
    return SparseCode(alpha, converged=False)


def _spectral_bound(A: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """Largest eigenvalue of A^T A by power iteration (deterministic start)."""
    K = A.shape[1]
    rng = np.random.default_rng(7)
    v = rng.standard_normal(K)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(iters):
        w = A @ v
        est = float(np.dot(w, w))
        v = A.T @ w
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0
        v /= norm
        if abs(est - prev) <= tol * max(est, 1.0):
            break
        prev = est
    return est


def solve_ssf(D, x, spec: ClSpec) -> SparseCode:
    """Iterative shrinkage: gradient step with 1/c scaling, then soft threshold.

    c is the power-iteration bound on the largest eigenvalue of D^T D with a
    1.01 safety factor, so every iteration is a descent step.
    """
    if spec.algorithm != "ssf":
        raise SpecError(f"spec algorithm is {spec.algorithm!r}, expected 'ssf'")
    A = _atoms(D)
    x = _check_signal(A, x)
    lam1, _ = _effective_lambdas(A, x, spec)
    c = _spectral_bound(A) * 1.01
    if c == 0.0:
        return SparseCode(np.zeros(A.shape[1]))
    alpha = np.zeros(A.shape[1])
    thresh = lam1 / c
    for _ in range(spec.max_iter):
        grad = A.T @ (x - A @ alpha)
        updated = alpha + grad / c
        new = np.sign(updated) * np.maximum(np.abs(updated) - thresh, 0.0)
        change = float(np.linalg.norm(new - alpha))
        alpha = new
        if change < spec.tol:
            return SparseCode(alpha)
    return SparseCode(alpha, converged=False)


_SOLVERS = {
    "lasso": solve_lasso,
    "homotopy": solve_homotopy,
    "elastic_net": solve_elastic_net,
    "ssf": solve_ssf,
}


def solve(D, x, spec: ClSpec) -> SparseCode:
    return _SOLVERS[spec.algorithm](D, x, spec)


def _encode_chunk(args) -> list[tuple[np.ndarray, bool]]:
    atoms, rows, spec = args
    out = []
    for row in rows:
        code = solve(atoms, row, spec)
        out.append((code.coefficients, code.converged))
    return out


def encode_set(D, fs: "FeatureSet", spec: ClSpec, jobs: int = 1) -> tuple["FeatureSet", EncodeReport]:
    """Encode every vector of `fs` against D; ids and labels are preserved.

    Returns the coded FeatureSet (dimension K) and a convergence report.
    Work is split across processes when jobs > 1; output order never changes.
    """
    from ..data import FeatureSet

    A = _atoms(D)
    if fs.dim != A.shape[0]:
        raise DimensionError(f"feature dim {fs.dim} != dictionary d {A.shape[0]}")
    report = EncodeReport(algorithm=spec.algorithm, total=len(fs))
    n = len(fs)
    codes = np.zeros((n, A.shape[1]))
    if n == 0:
        return FeatureSet(fs.ids, codes, fs.labels), report
    if jobs > 1:
        bounds = np.array_split(np.arange(n), min(jobs, n))
        tasks = [(A, fs.matrix[b], spec) for b in bounds if b.size]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_encode_chunk, tasks))
        flat = [item for chunk in results for item in chunk]
    else:
        flat = _encode_chunk((A, fs.matrix, spec))
    for i, (coeffs, converged) in enumerate(flat):
        codes[i] = coeffs
        if converged:
            report.converged += 1
        else:
            report.failed_ids.append(fs.ids[i])
    return FeatureSet(fs.ids, codes, fs.labels), report
