"""Stage-one dimension reduction: Lasso path, cross-validated and adaptive
Lasso, and the screeners that turn their fits into candidate variable sets.

All Lasso-family fits standardize columns to zero mean / unit standard
deviation internally and report coefficients back on the original scale.
The screened set is kept small enough for least squares on the testing
half (see cap_screened_set).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._descent import cd_solve

#: Convergence: largest coordinate change below tol * max(1, max |beta|).
CD_TOLERANCE = 1e-7
CD_MAX_ITER = 100_000
PATH_GRID_SIZE = 100
DEFAULT_CV_FOLDS = 10


class LassoConvergenceError(RuntimeError):
    """Coordinate descent exhausted its iteration budget."""

    def __init__(self, lam, iterations, last_delta):
        self.lam = float(lam)
        self.iterations = int(iterations)
        self.last_delta = float(last_delta)
        super().__init__(
            f"coordinate descent did not converge at lambda={lam:.6g} "
            f"after {iterations} passes (last max change {last_delta:.3e})"
        )


@dataclass(frozen=True)
class Standardization:
    """Per-column centering/scaling used inside a Lasso fit."""

    mean: np.ndarray
    scale: np.ndarray  # zero-variance columns keep scale 0 and are excluded


def standardize(x: np.ndarray):
    """Center and scale columns to zero mean, unit (population) std.

    Zero-variance columns become all-zero and are skipped by the solver.
    Returns (x_std, Standardization).
    """
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    safe = np.where(scale > 0.0, scale, 1.0)
    x_std = (x - mean) / safe
    x_std[:, scale == 0.0] = 0.0
    return x_std, Standardization(mean, scale)


def lambda_max(x_std: np.ndarray, y: np.ndarray, weights=None) -> float:
    """Smallest penalty with an all-zero solution: max_j |x_j'y| / (n w_j)."""
    n = x_std.shape[0]
    corr = np.abs(x_std.T @ y) / n
    if weights is not None:
        with np.errstate(divide="ignore"):
            corr = np.where(weights > 0, corr / weights, 0.0)
    return float(corr.max()) if corr.size else 0.0


def lasso_coordinate_descent(
    x_std: np.ndarray,
    y: np.ndarray,
    lam: float,
    warm_start=None,
    *,
    weights=None,
    tol: float = CD_TOLERANCE,
    max_iter: int = CD_MAX_ITER,
) -> np.ndarray:
    """Minimize (1/2n)||y - X b||^2 + lam * sum_j w_j |b_j| on a standardized design.

    ``x_std`` must have zero-mean columns on unit scale (see standardize);
    ``weights`` gives optional per-coordinate penalty factors. Raises
    LassoConvergenceError when the pass budget is exhausted.
    """
    if lam <= 0.0:
        raise ValueError(f"penalty must be positive, got {lam}")
    x_std = np.ascontiguousarray(x_std, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    n, p = x_std.shape
    col_nrm = np.einsum("ij,ij->j", x_std, x_std) / n
    w = np.ones(p) if weights is None else np.ascontiguousarray(weights, dtype=float)
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    iters, converged, last_delta = cd_solve(
        x_std, y, col_nrm, float(lam), w, beta, int(max_iter), float(tol)
    )
    if not converged:
        raise LassoConvergenceError(lam, iters, last_delta)
    return beta


@dataclass(frozen=True)
class LassoPath:
    """Coefficients along a decreasing penalty grid, on the original scale."""

    lambdas: np.ndarray
    coef_matrix: np.ndarray  # p x grid_size
    standardization: Standardization
    flags: tuple = ()


def _lambda_grid(lam_max: float, grid_size: int, ratio: float) -> np.ndarray:
    return np.geomspace(lam_max, lam_max * ratio, grid_size)


def default_lambda_min_ratio(n: int, p: int) -> float:
    return 0.01 if n > p else 0.05


def lasso_path(
    x: np.ndarray,
    y: np.ndarray,
    grid_size: int = PATH_GRID_SIZE,
    lambda_min_ratio=None,
) -> LassoPath:
    """Warm-started Lasso solutions on a log-spaced penalty grid.

    The grid runs from lambda_max (all-zero solution) down to
    lambda_max * lambda_min_ratio. A response uncorrelated with every
    column yields an all-zero path, flagged "zero-lambda-max".
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = x.shape
    if lambda_min_ratio is None:
        lambda_min_ratio = default_lambda_min_ratio(n, p)
    x_std, std = standardize(x)
    yc = y - y.mean()
    lam_max = lambda_max(x_std, yc)
    flags = ()
    if lam_max <= 0.0:
        # degenerate: zero vector is optimal at any positive penalty
        flags = ("zero-lambda-max",)
        lam_max = 1.0
    lambdas = _lambda_grid(lam_max, grid_size, lambda_min_ratio)
    coefs = np.zeros((p, grid_size))
    beta = np.zeros(p)
    for g, lam in enumerate(lambdas):
        beta = lasso_coordinate_descent(x_std, yc, lam, warm_start=beta)
        coefs[:, g] = beta
    safe = np.where(std.scale > 0.0, std.scale, 1.0)
    coefs /= safe[:, None]
    return LassoPath(lambdas, coefs, std, flags)


def cv_fold_assignment(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold label per row: random permutation cut into nearly equal blocks."""
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.intp)
    sizes = np.full(folds, n // folds)
    sizes[: n % folds] += 1
    start = 0
    for k, size in enumerate(sizes):
        labels[perm[start : start + size]] = k
        start += size
    return labels


@dataclass(frozen=True)
class CvLassoFit:
    """Cross-validated Lasso fit refit on all data at the chosen penalty."""

    lambda_cv: float
    coefficients: np.ndarray  # original scale
    lambdas: np.ndarray
    cv_errors: np.ndarray
    flags: tuple = ()


def _weighted_path_coefs(x_std, yc, lambdas, weights):
    """Standardized-scale coefficients along a fixed grid with warm starts."""
    p = x_std.shape[1]
    coefs = np.zeros((p, lambdas.size))
    beta = np.zeros(p)
    for g, lam in enumerate(lambdas):
        beta = lasso_coordinate_descent(x_std, yc, lam, warm_start=beta, weights=weights)
        coefs[:, g] = beta
    return coefs


def _std_weights(orig_weights, std: Standardization):
    """Original-scale penalty factors expressed on a standardized design."""
    if orig_weights is None:
        return None
    safe = np.where(std.scale > 0.0, std.scale, 1.0)
    return orig_weights / safe


def _cv_lasso_core(x, y, folds, rng, orig_weights=None, grid_size=PATH_GRID_SIZE):
    """Shared CV machinery for the plain and reweighted Lasso.

    Builds the grid from the full data, scores it by pooled out-of-fold
    squared prediction error (predictions include the implicit intercept of
    the standardized fit), and refits on all data at the winning penalty.
    ``orig_weights`` are per-coordinate penalty factors on the original
    coefficient scale.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = x.shape
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if n < 2 * folds:
        raise ValueError(f"need n >= 2 * folds, got n={n}, folds={folds}")

    x_std, std = standardize(x)
    ybar = y.mean()
    yc = y - ybar
    weights = _std_weights(orig_weights, std)
    lam_max = lambda_max(x_std, yc, weights)
    if lam_max <= 0.0:
        flags = ("zero-lambda-max",)
        lambdas = _lambda_grid(1.0, grid_size, default_lambda_min_ratio(n, p))
        return CvLassoFit(float(lambdas[0]), np.zeros(p), lambdas, np.zeros(grid_size), flags)
    lambdas = _lambda_grid(lam_max, grid_size, default_lambda_min_ratio(n, p))

    labels = cv_fold_assignment(n, folds, rng)
    sse = np.zeros(grid_size)
    for k in range(folds):
        val = labels == k
        x_tr, y_tr = x[~val], y[~val]
        x_tr_std, std_tr = standardize(x_tr)
        ybar_tr = y_tr.mean()
        coefs = _weighted_path_coefs(
            x_tr_std, y_tr - ybar_tr, lambdas, _std_weights(orig_weights, std_tr)
        )
        safe = np.where(std_tr.scale > 0.0, std_tr.scale, 1.0)
        x_val_std = (x[val] - std_tr.mean) / safe
        x_val_std[:, std_tr.scale == 0.0] = 0.0
        pred = x_val_std @ coefs + ybar_tr
        sse += np.square(y[val, None] - pred).sum(axis=0)
    cv_errors = sse / n
    best = int(np.argmin(cv_errors))  # first minimum = largest penalty on ties

    coefs = _weighted_path_coefs(x_std, yc, lambdas[: best + 1], weights)
    beta_std = coefs[:, -1]
    safe = np.where(std.scale > 0.0, std.scale, 1.0)
    return CvLassoFit(float(lambdas[best]), beta_std / safe, lambdas, cv_errors)


def cv_lasso(x, y, folds: int = DEFAULT_CV_FOLDS, rng=None) -> CvLassoFit:
    """Lasso with the penalty chosen by K-fold cross-validation.

    Deterministic given the fold-assignment generator.
    """
    if rng is None:
        raise ValueError("cv_lasso needs a generator for the fold assignment")
    return _cv_lasso_core(x, y, folds, rng)


@dataclass(frozen=True)
class AdaptiveLassoFit:
    """Two-stage fit: CV-Lasso initial estimate, then reweighted CV-Lasso."""

    coefficients: np.ndarray
    initial: CvLassoFit
    lambda_cv: float
    flags: tuple = ()


def adaptive_lasso(x, y, folds: int = DEFAULT_CV_FOLDS, rng=None) -> AdaptiveLassoFit:
    """Adaptive Lasso with CV-chosen penalties in both stages.

    Stage-two penalty weights are 1/|initial coefficient|; variables with a
    zero initial coefficient are excluded outright. An all-zero initial fit
    short-circuits to an all-zero result, flagged.
    """
    if rng is None:
        raise ValueError("adaptive_lasso needs a generator for the fold assignments")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    p = x.shape[1]
    initial = cv_lasso(x, y, folds, rng)
    support = np.nonzero(initial.coefficients)[0]
    if support.size == 0:
        return AdaptiveLassoFit(np.zeros(p), initial, 0.0, ("initial-fit-zero",))

    weights = 1.0 / np.abs(initial.coefficients[support])
    stage2 = _cv_lasso_core(x[:, support], y, folds, rng, orig_weights=weights)
    coefficients = np.zeros(p)
    coefficients[support] = stage2.coefficients
    return AdaptiveLassoFit(coefficients, initial, stage2.lambda_cv, stage2.flags)


@dataclass(frozen=True)
class ScreenedSet:
    """Candidate variables from stage one, ranked, with capping metadata.

    ``scores`` aligns with ``indices`` and carries the magnitude used for
    rank repairs and capping (activation counts for the fixed screener,
    |coefficient| otherwise).
    """

    indices: np.ndarray
    method: str
    scores: np.ndarray
    meta: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.intp))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))

    @property
    def size(self) -> int:
        return self.indices.size


def fixed_target_size(n_full: int) -> int:
    """Screened-set size for the fixed screener: floor(n / 6) of the full sample."""
    return n_full // 6


def screen_fixed(path: LassoPath, target_size: int) -> ScreenedSet:
    """Keep the variables that are active at the most penalty grid points.

    Ties break by earlier first activation (larger penalty), then by lower
    index. If fewer than ``target_size`` variables ever activate, all
    ever-active ones are returned and the set is flagged undersized.
    """
    if target_size < 1:
        raise ValueError(f"target_size must be >= 1, got {target_size}")
    active = path.coef_matrix != 0.0
    counts = active.sum(axis=1)
    grid_size = path.lambdas.size
    first = np.where(active.any(axis=1), np.argmax(active, axis=1), grid_size)
    candidates = np.nonzero(counts > 0)[0]
    order = sorted(candidates, key=lambda j: (-counts[j], first[j], j))
    flags = ()
    if len(order) < target_size:
        flags = ("undersized-fixed-screen",)
    chosen = np.asarray(order[:target_size], dtype=np.intp)
    return ScreenedSet(
        chosen,
        "fixed",
        counts[chosen].astype(float),
        meta={"target_size": target_size, "ever_active": len(order)},
        flags=flags,
    )


def _support_set(coefficients, method, meta, flags) -> ScreenedSet:
    support = np.nonzero(coefficients)[0]
    if support.size == 0:
        flags = flags + ("empty-screen",)
    return ScreenedSet(support, method, np.abs(coefficients[support]), meta, flags)


def screen_cv(x_in, y_in, rng, folds: int = DEFAULT_CV_FOLDS) -> ScreenedSet:
    """Nonzero support of the cross-validated Lasso on the screening half."""
    fit = cv_lasso(x_in, y_in, folds, rng)
    return _support_set(fit.coefficients, "cv", {"lambda_cv": fit.lambda_cv}, fit.flags)


def screen_adap(x_in, y_in, rng, folds: int = DEFAULT_CV_FOLDS) -> ScreenedSet:
    """Nonzero support of the adaptive Lasso on the screening half."""
    fit = adaptive_lasso(x_in, y_in, folds, rng)
    meta = {"lambda_cv": fit.lambda_cv, "lambda_initial": fit.initial.lambda_cv}
    return _support_set(fit.coefficients, "adap", meta, fit.flags)


def screen_random(p: int, size: int, rng) -> ScreenedSet:
    """Uniformly random screened set of a forced size (null calibration tool)."""
    if not 1 <= size <= p:
        raise ValueError(f"forced screen size must be in 1..{p}, got {size}")
    idx = np.sort(rng.permutation(p)[:size])
    return ScreenedSet(idx, "random", np.ones(size), meta={"forced_size": size})


def cap_screened_set(screened: ScreenedSet, coefficients, n_out: int) -> ScreenedSet:
    """Enforce the sparsity bound |S| <= floor(n_out / 2).

    Oversized sets keep the floor(n_out / 2) entries of largest
    |coefficient| (ties to the lower index) and are flagged.
    """
    cap = n_out // 2
    if screened.size <= cap:
        return screened
    coefficients = np.asarray(coefficients, dtype=float)
    order = sorted(range(screened.size), key=lambda i: (-abs(coefficients[i]), screened.indices[i]))
    keep = order[:cap]
    return ScreenedSet(
        screened.indices[keep],
        screened.method,
        screened.scores[keep],
        dict(screened.meta, cap=cap),
        screened.flags + ("capped",),
    )
