"""Dense least-squares fitting and per-coefficient p-values for the testing half."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

#: Reciprocal condition estimate below this declares the design rank deficient.
RCOND_TOLERANCE = 1e-10


class RankDeficiencyError(np.linalg.LinAlgError):
    """Fitted subset design is numerically rank deficient."""

    def __init__(self, columns, rcond):
        self.columns = tuple(int(c) for c in columns)
        self.rcond = float(rcond)
        super().__init__(
            f"rank-deficient design (rcond={rcond:.3e}); offending columns: {self.columns}"
        )


@dataclass(frozen=True)
class OlsFit:
    """Least-squares estimate with its classical inference quantities.

    ``subset`` records which variable indices the columns refer to; degrees
    of freedom are n_fit - k.
    """

    coefficients: np.ndarray
    standard_errors: np.ndarray
    sigma_hat_sq: float
    df: int
    subset: np.ndarray


def ols_fit(x: np.ndarray, y: np.ndarray, subset=None) -> OlsFit:
    """Fit y on the given columns by QR-based ordinary least squares.

    The model has no intercept. Requires n_fit >= k + 1 and a numerically
    full-rank design; deficiency (reciprocal condition < 1e-10) raises
    RankDeficiencyError naming the offending columns.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.ndim != 2:
        raise ValueError("design must be 2-dimensional")
    n, k = x.shape
    if k < 1:
        raise ValueError("need at least one column to fit")
    if n < k + 1:
        raise ValueError(f"need n >= k + 1 rows for inference, got n={n}, k={k}")
    subset = np.arange(k) if subset is None else np.asarray(subset, dtype=np.intp)

    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    scale = diag.max() if diag.size else 0.0
    svals = scipy.linalg.svdvals(r)
    rcond = 0.0 if scale == 0.0 else svals[-1] / svals[0]
    if rcond < RCOND_TOLERANCE:
        # identify the columns past the numerical rank via pivoted QR
        _, rp, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
        dp = np.abs(np.diag(rp))
        rank = int(np.sum(dp > RCOND_TOLERANCE * dp.max())) if dp.size and dp.max() > 0 else 0
        raise RankDeficiencyError(subset[piv[rank:]], rcond)

    coef = scipy.linalg.solve_triangular(r, q.T @ y)
    resid = y - x @ coef
    rss = float(resid @ resid)
    df = n - k
    sigma_hat_sq = rss / df
    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    xtx_inv_diag = np.einsum("ij,ij->i", r_inv, r_inv)
    se = np.sqrt(np.maximum(sigma_hat_sq * xtx_inv_diag, 0.0))
    return OlsFit(coef, se, sigma_hat_sq, df, subset)


def coefficient_pvalues(fit: OlsFit, approximation: str = "normal"):
    """Two-sided p-values for each fitted coefficient.

    ``approximation`` is "normal" (default) or "student-t" with the fit's
    residual degrees of freedom. Returns (pvalues, flags); entries are
    clamped into (0, 1] and degenerate zero-standard-error cases are
    flagged rather than raised.
    """
    if approximation not in ("normal", "student-t"):
        raise ValueError(f"unknown approximation {approximation!r}")
    coef = fit.coefficients
    se = fit.standard_errors
    pvals = np.empty_like(coef)
    flags = []
    tiny = np.finfo(float).tiny
    zero_se = se == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(zero_se, 0.0, coef / np.where(zero_se, 1.0, se))
    if approximation == "normal":
        pvals = 2.0 * stats.norm.sf(np.abs(t))
    else:
        pvals = 2.0 * stats.t.sf(np.abs(t), fit.df)
    pvals = np.clip(pvals, tiny, 1.0)
    for j in np.nonzero(zero_se)[0]:
        if coef[j] != 0.0:
            pvals[j] = tiny
            flags.append(f"zero-se-nonzero-coef:{int(fit.subset[j])}")
        else:
            pvals[j] = 1.0
            flags.append(f"zero-se-zero-coef:{int(fit.subset[j])}")
    return pvals, flags
