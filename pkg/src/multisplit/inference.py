"""Multi-split inference: per-split adjusted p-values, quantile aggregation
across splits, and FWER / FDR / expected-false-positive selection rules.

Each random split screens variables on one half of the data, computes
least-squares p-values on the other half, and Bonferroni-adjusts them by
the screened-set size. Aggregation takes empirical quantiles of the
per-split values; the adaptive aggregate searches the quantile level and
pays a (1 - log gamma_min) correction for doing so.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import screening
from .model import Dataset, RngSpec, SplitPlan, make_split, make_splits
from .regression import RankDeficiencyError, coefficient_pvalues, ols_fit

DEFAULT_GAMMA_MIN = 0.05
SCREENERS = ("fixed", "cv", "adap", "random")


def adjust_split_pvalues(raw: np.ndarray, screened_size: int, cap: bool = True) -> np.ndarray:
    """Bonferroni-adjust one split's raw p-values by the screened-set size.

    With ``cap`` the values are clipped at 1; without it they may exceed 1
    (used by the uncapped aggregation that feeds the expected-false-positive
    and FDR rules, whose thresholds can exceed 1). A degenerate empty screen
    carries no evidence: its capped row is all ones, its uncapped row all
    infinity, so it can never trigger a rejection.
    """
    if screened_size == 0:
        return np.ones_like(raw) if cap else np.full_like(raw, np.inf)
    adjusted = raw * screened_size
    return np.minimum(adjusted, 1.0) if cap else adjusted


@dataclass(frozen=True)
class SplitPValues:
    """Adjusted p-values from a single split (capped and uncapped variants)."""

    values: np.ndarray
    uncapped: np.ndarray
    screened_size: int
    split_id: int
    flags: tuple = ()


def split_pvalues(
    dataset: Dataset,
    plan: SplitPlan,
    screener: str,
    rng: RngSpec,
    *,
    pvalue_mode: str = "normal",
    folds: int = screening.DEFAULT_CV_FOLDS,
    fixed_target: int = None,
    random_size: int = None,
) -> SplitPValues:
    """Screen on the in-half, test on the out-half, adjust for multiplicity.

    Unscreened variables get p-value 1. An empty screened set yields an
    all-ones row. Rank-deficient screened designs are repaired by dropping
    the lowest-score columns until least squares is solvable; a split is
    never aborted.
    """
    if screener not in SCREENERS:
        raise ValueError(f"unknown screener {screener!r}")
    x_in = dataset.x[plan.in_indices]
    y_in = dataset.y[plan.in_indices]
    x_out = dataset.x[plan.out_indices]
    y_out = dataset.y[plan.out_indices]
    n_out = plan.out_indices.size
    b = plan.split_id

    if screener == "fixed":
        path = screening.lasso_path(x_in, y_in)
        target = screening.fixed_target_size(dataset.n) if fixed_target is None else fixed_target
        sset = screening.screen_fixed(path, target)
    elif screener == "cv":
        sset = screening.screen_cv(x_in, y_in, rng.stream("cv-folds", b), folds)
    elif screener == "adap":
        sset = screening.screen_adap(x_in, y_in, rng.stream("cv-folds", b), folds)
    else:
        if random_size is None:
            raise ValueError("random screener needs random_size")
        sset = screening.screen_random(dataset.p, random_size, rng.stream("screening-random", b))

    sset = screening.cap_screened_set(sset, sset.scores, n_out)
    flags = tuple(sset.flags)

    raw = np.ones(dataset.p)
    if sset.size == 0:
        return SplitPValues(
            adjust_split_pvalues(raw, 0, cap=True),
            adjust_split_pvalues(raw, 0, cap=False),
            0,
            b,
            flags,
        )

    # OLS on the testing half; repair rank deficiency by shedding the
    # lowest-score offending columns, never aborting the split.
    kept = np.sort(sset.indices)
    scores = dict(zip(sset.indices.tolist(), sset.scores.tolist()))
    fit = None
    while kept.size > 0:
        try:
            fit = ols_fit(x_out[:, kept], y_out, subset=kept)
            break
        except RankDeficiencyError as err:
            pool = [j for j in err.columns if j in scores and j in kept] or kept.tolist()
            drop = min(pool, key=lambda j: (abs(scores[j]), -j))
            kept = kept[kept != drop]
            flags = flags + (f"rank-repair-dropped:{int(drop)}",)
    if fit is None:
        return SplitPValues(
            adjust_split_pvalues(raw, 0, cap=True),
            adjust_split_pvalues(raw, 0, cap=False),
            0,
            b,
            flags + ("rank-repair-emptied",),
        )

    pvals, pflags = coefficient_pvalues(fit, "student-t" if pvalue_mode == "t" else "normal")
    flags = flags + tuple(pflags)
    raw[kept] = pvals
    k = sset.size  # multiplicity factor stays the screened-set size
    return SplitPValues(
        adjust_split_pvalues(raw, k, cap=True),
        adjust_split_pvalues(raw, k, cap=False),
        k,
        b,
        flags,
    )


@dataclass(frozen=True)
class PValueMatrix:
    """B x p adjusted p-values, one row per split, the input to aggregation."""

    values: np.ndarray
    screened_sizes: np.ndarray
    uncapped: np.ndarray
    split_flags: tuple = ()

    @property
    def n_splits(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def pvalue_matrix(
    dataset: Dataset,
    screener: str,
    n_splits: int,
    rng: RngSpec,
    *,
    workers: int = 1,
    **split_kwargs,
) -> PValueMatrix:
    """Assemble the full B x p matrix; rows are computed independently.

    Identical results for any worker count: every split draws from its own
    substream of the master seed.
    """
    plans = make_splits(dataset.n, n_splits, rng)

    def one(plan):
        return split_pvalues(dataset, plan, screener, rng, **split_kwargs)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, plans))
    else:
        rows = [one(plan) for plan in plans]
    return PValueMatrix(
        np.vstack([r.values for r in rows]),
        np.asarray([r.screened_size for r in rows], dtype=np.intp),
        np.vstack([r.uncapped for r in rows]),
        tuple(r.flags for r in rows),
    )


def empirical_quantile(sorted_values: np.ndarray, gamma: float) -> float:
    """Left-continuous order-statistic quantile: the value at rank ceil(gamma * B)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    B = len(sorted_values)
    if B < 1:
        raise ValueError("need at least one value")
    k = min(max(math.ceil(gamma * B), 1), B)
    return float(sorted_values[k - 1])


@dataclass(frozen=True)
class AggregatedPValues:
    """Final per-variable p-values after aggregation across splits."""

    values: np.ndarray
    mode: str  # "fixed_gamma" or "adaptive"
    parameter: float  # gamma, or gamma_min for the adaptive mode
    capped: bool = True


def aggregate_fixed_gamma(matrix: PValueMatrix, gamma: float) -> AggregatedPValues:
    """Scaled empirical gamma-quantile per variable: min(1, q_gamma / gamma).

    gamma = 0.5 gives twice the median of each variable's per-split values.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    B = matrix.n_splits
    k = min(max(math.ceil(gamma * B), 1), B)
    kth = np.sort(matrix.values, axis=0)[k - 1]
    return AggregatedPValues(np.minimum(kth / gamma, 1.0), "fixed_gamma", gamma)


def _adaptive_from_columns(values: np.ndarray, gamma_min: float, capped: bool) -> np.ndarray:
    B = values.shape[0]
    k_min = int(math.floor(gamma_min * B)) + 1
    if k_min > B:
        k_min = B
    srt = np.sort(values, axis=0)
    ranks = np.arange(k_min, B + 1)
    candidates = srt[k_min - 1 :] * (B / ranks)[:, None]
    agg = (1.0 - math.log(gamma_min)) * candidates.min(axis=0)
    return np.minimum(agg, 1.0) if capped else agg


def aggregate_adaptive(
    matrix: PValueMatrix, gamma_min: float = DEFAULT_GAMMA_MIN, *, capped: bool = True
) -> AggregatedPValues:
    """Adaptive aggregate: (1 - log gamma_min) * inf over gamma of the scaled quantile.

    Under the order-statistic quantile the infimum over gamma in
    (gamma_min, 1) has the closed form min over ranks k >= floor(gamma_min*B)+1
    of P_(k) * B / k. With ``capped`` False the computation runs on the
    uncapped per-split values and skips the final clip at 1.
    """
    if not 0.0 < gamma_min < 1.0:
        raise ValueError(f"gamma_min must be in (0, 1), got {gamma_min}")
    values = matrix.values if capped else matrix.uncapped
    agg = _adaptive_from_columns(values, gamma_min, capped)
    return AggregatedPValues(agg, "adaptive", gamma_min, capped)


@dataclass(frozen=True)
class SelectionReport:
    """Chosen variable set plus the rule and p-values that produced it."""

    selected: np.ndarray
    rule: dict
    pvalues: AggregatedPValues = None
    flags: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "selected", np.asarray(self.selected, dtype=np.intp))


def fwer_select(agg: AggregatedPValues, alpha: float) -> SelectionReport:
    """Family-wise error control: select exactly {j : P_j <= alpha}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    selected = np.nonzero(agg.values <= alpha)[0]
    return SelectionReport(selected, {"name": "fwer", "alpha": alpha}, agg)


def harmonic_number(p: int) -> float:
    return float(np.sum(1.0 / np.arange(1, p + 1)))


def step_up_select(pvalues: np.ndarray, slope: float):
    """Step-up rule: keep the h smallest values where h = max{i : P_(i) <= i * slope}.

    Ties sort by variable index. Returns (selected indices ascending, h).
    """
    p = len(pvalues)
    order = np.lexsort((np.arange(p), pvalues))
    ok = pvalues[order] <= slope * np.arange(1, p + 1)
    if not ok.any():
        return np.empty(0, dtype=np.intp), 0
    h = int(np.nonzero(ok)[0].max()) + 1
    return np.sort(order[:h]), h


def fdr_select(
    agg: AggregatedPValues,
    q: float,
    corrected: bool = False,
    uncapped_agg: AggregatedPValues = None,
) -> SelectionReport:
    """False-discovery-rate control via the step-up rule on aggregated p-values.

    The plain rule (corrected=False) compares P_(i) <= i*q and controls FDR
    at q * sum_i 1/i; with ``corrected`` the slope shrinks to q / sum_i 1/i
    for control at q itself.

    Because the step-up thresholds i*q can exceed 1, the rule degenerates on
    values capped at 1 (everything passes once i >= 1/q). Pass the uncapped
    aggregate whenever p is large enough for that to bite; the capped one is
    still the reported p-value vector.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    values = agg.values if uncapped_agg is None else uncapped_agg.values
    slope = q / harmonic_number(len(values)) if corrected else q
    selected, h = step_up_select(values, slope)
    rule = {"name": "fdr", "q": q, "corrected": corrected, "slope": slope}
    return SelectionReport(selected, rule, agg, meta={"h": h})


def ev_select(
    agg: AggregatedPValues,
    alpha: float,
    k_factor: float,
    uncapped_agg: AggregatedPValues,
) -> SelectionReport:
    """Expected-false-positive control: select {j : P_j / K <= alpha}.

    Selection runs on the uncapped aggregate (the capped one is carried for
    reporting); the expected number of false selections is bounded by
    alpha * K.
    """
    if k_factor < 1.0:
        raise ValueError(f"correction factor K must be >= 1, got {k_factor}")
    if uncapped_agg.capped:
        raise ValueError("ev_select needs the uncapped aggregate")
    selected = np.nonzero(uncapped_agg.values / k_factor <= alpha)[0]
    rule = {"name": "ev", "alpha": alpha, "k_factor": k_factor, "ev_target": alpha * k_factor}
    return SelectionReport(selected, rule, agg, meta={"uncapped": uncapped_agg})


def single_split_select(
    dataset: Dataset,
    screener: str,
    alpha: float,
    rng: RngSpec,
    **split_kwargs,
) -> SelectionReport:
    """One-shot baseline: a single random split, thresholded at alpha.

    Results depend on the arbitrary split; rerunning with another seed can
    select a different set.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    plan = make_split(dataset.n, 1, rng.stream("splitting", 1))
    row = split_pvalues(dataset, plan, screener, rng, **split_kwargs)
    selected = np.nonzero(row.values <= alpha)[0]
    agg = AggregatedPValues(row.values, "single_split", alpha)
    return SelectionReport(
        selected,
        {"name": "single_split", "alpha": alpha},
        agg,
        flags=row.flags,
        meta={"screened_size": row.screened_size},
    )


def ecdf_table(column: np.ndarray) -> np.ndarray:
    """Empirical distribution points of one variable's per-split p-values.

    Returns an array of (value, fraction at or below value) rows, one per
    split, in ascending value order.
    """
    srt = np.sort(np.asarray(column, dtype=float))
    B = srt.size
    return np.column_stack([srt, np.arange(1, B + 1) / B])


def crossing_bound(pgrid: np.ndarray, alpha: float, gamma_min: float = DEFAULT_GAMMA_MIN) -> np.ndarray:
    """Rejection bound f(p) = max(gamma_min, ((1 - log gamma_min) / alpha) * p)."""
    factor = (1.0 - math.log(gamma_min)) / alpha
    return np.maximum(gamma_min, factor * np.asarray(pgrid, dtype=float))


def ecdf_crossing_check(column: np.ndarray, alpha: float, gamma_min: float = DEFAULT_GAMMA_MIN):
    """Does the column's empirical distribution cross the rejection bound?

    Equivalent to the adaptive aggregate of the column being <= alpha: the
    variable is selected iff some rank k >= floor(gamma_min*B)+1 has
    P_(k) <= alpha * (k/B) / (1 - log gamma_min). The verdict is computed
    from the aggregate itself so the two can never disagree.

    Returns (crossing, ecdf table).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    column = np.asarray(column, dtype=float).reshape(-1, 1)
    aggregate = _adaptive_from_columns(column, gamma_min, capped=True)[0]
    return bool(aggregate <= alpha), ecdf_table(column[:, 0])
