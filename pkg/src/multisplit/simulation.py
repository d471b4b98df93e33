"""Simulation designs, coefficient sampling, noise calibration, comparator
methods, and the experiment harness that measures error control and power.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import inference, screening
from .model import Dataset, RngSpec, make_dataset
from .regression import coefficient_pvalues, ols_fit

BETA_MODES = ("uniform", "varying_strength")

#: Method identifiers understood by run_experiment.
METHODS = (
    "multi-fwer",
    "multi-fdr",
    "multi-fdr-corrected",
    "multi-ev",
    "single-split",
    "adaptive-lasso",
    "classic-bh",
)

_MULTI = {"multi-fwer", "multi-fdr", "multi-fdr-corrected", "multi-ev"}


class FullModelInfeasibleError(ValueError):
    """Full-design least squares is impossible (p >= n); the standard method breaks down."""


@dataclass(frozen=True)
class SimulationConfig:
    """One cell of a simulation grid."""

    n: int = 100
    p: int = 100
    rho: float = 0.5
    s: int = 5
    beta_mode: str = "uniform"
    snr: float = 1.0
    reps: int = 50
    n_splits: int = 50
    screener: str = "adap"
    alpha: float = 0.05
    q: float = 0.05
    gamma_min: float = inference.DEFAULT_GAMMA_MIN
    k_factor: float = 20.0
    pvalue_mode: str = "normal"
    folds: int = 10
    fixed_target: int = None
    random_size: int = None
    design_source: str = "toeplitz"
    design_path: str = None
    name: str = ""

    def validate(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if not 0 <= self.s <= self.p:
            raise ValueError(f"s must be in 0..p, got s={self.s}, p={self.p}")
        if self.snr <= 0.0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"unknown beta_mode {self.beta_mode!r}")
        if self.screener not in inference.SCREENERS:
            raise ValueError(f"unknown screener {self.screener!r}")
        if self.design_source not in ("toeplitz", "external_csv"):
            raise ValueError(f"unknown design_source {self.design_source!r}")
        if self.design_source == "external_csv" and not self.design_path:
            raise ValueError("external_csv design needs design_path")
        return self


@dataclass(frozen=True)
class RunMetrics:
    """Selection quality of one method on one simulated data set."""

    true_positives: int
    false_positives: int
    fwer_indicator: int  # 1 iff at least one false selection
    fdp: float  # V / max(1, R)
    selected_count: int


def toeplitz_design(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Rows i.i.d. centered Gaussian with covariance rho^|j-k|.

    Realized by the AR(1) recursion x_1 = z_1, x_j = rho x_{j-1} +
    sqrt(1 - rho^2) z_j, which reproduces that covariance exactly.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    z = rng.standard_normal((n, p))
    if rho == 0.0:
        return z
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return x


def sample_beta(p: int, s: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Sparse coefficient vector on a uniformly random size-s support.

    "uniform" puts 1 on every active coordinate; "varying_strength" puts
    the values 1..s (assigned in ascending index order of the support).
    """
    if not 0 <= s <= p:
        raise ValueError(f"s must be in 0..p, got s={s}, p={p}")
    if mode not in BETA_MODES:
        raise ValueError(f"unknown beta mode {mode!r}")
    beta = np.zeros(p)
    if s == 0:
        return beta
    support = np.sort(rng.permutation(p)[:s])
    beta[support] = 1.0 if mode == "uniform" else np.arange(1, s + 1, dtype=float)
    return beta


def signal_variance(beta: np.ndarray, rho: float) -> float:
    """Quadratic form beta' Sigma beta under the analytic Toeplitz covariance."""
    support = np.nonzero(beta)[0]
    if support.size == 0:
        return 0.0
    b = beta[support]
    gaps = np.abs(support[:, None] - support[None, :])
    return float(b @ (rho**gaps) @ b)


def sigma_for_snr(beta: np.ndarray, rho: float, snr: float) -> float:
    """Noise variance that holds the signal-to-noise ratio at ``snr``.

    Uses the analytic Toeplitz covariance, not a sample estimate. The
    population R-squared is snr / (1 + snr).
    """
    if snr <= 0.0:
        raise ValueError(f"snr must be positive, got {snr}")
    sv = signal_variance(beta, rho)
    if sv <= 0.0:
        raise ValueError("zero signal: beta' Sigma beta must be positive")
    return sv / snr


def empirical_signal_variance(x: np.ndarray, beta: np.ndarray) -> float:
    """Sample variance of the linear signal, for externally supplied designs."""
    f = x @ beta
    return float(np.mean((f - f.mean()) ** 2))


def classic_bh_select(dataset: Dataset, q: float, pvalue_mode: str = "normal"):
    """Full-model least squares once, then the classic step-up rule with the i/p factor.

    Only feasible for p < n; otherwise the standard method breaks down and
    FullModelInfeasibleError is raised.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    if dataset.p >= dataset.n:
        raise FullModelInfeasibleError(
            f"standard method breaks down for p >= n (p={dataset.p}, n={dataset.n})"
        )
    fit = ols_fit(dataset.x, dataset.y)
    pvals, flags = coefficient_pvalues(fit, "student-t" if pvalue_mode == "t" else "normal")
    selected, h = inference.step_up_select(pvals, q / dataset.p)
    agg = inference.AggregatedPValues(pvals, "raw_full_ols", q)
    rule = {"name": "classic_bh", "q": q}
    return inference.SelectionReport(selected, rule, agg, tuple(flags), meta={"h": h})


def adaptive_lasso_select(dataset: Dataset, rng: RngSpec, folds: int = 10):
    """Comparator: the adaptive Lasso's nonzero support on the full data.

    A pure point selection; it carries no p-values.
    """
    fit = screening.adaptive_lasso(dataset.x, dataset.y, folds, rng.stream("cv-folds", 0))
    selected = np.nonzero(fit.coefficients)[0]
    return inference.SelectionReport(
        selected, {"name": "adaptive_lasso"}, None, tuple(fit.flags)
    )


def evaluate_selection(selected: np.ndarray, beta: np.ndarray) -> RunMetrics:
    """Compare a selected set against the true support."""
    truth = set(np.nonzero(beta)[0].tolist())
    sel = set(np.asarray(selected, dtype=int).tolist())
    tp = len(sel & truth)
    fp = len(sel - truth)
    r = len(sel)
    return RunMetrics(tp, fp, int(fp > 0), fp / max(1, r), r)


def simulate_dataset(config: SimulationConfig, rep: int, rng: RngSpec, external_x=None):
    """Draw one simulated data set: fresh design (unless external), fresh
    coefficients, fresh noise at the calibrated variance.

    Returns (dataset, beta, sigma_sq). A zero coefficient vector falls back
    to unit noise variance.
    """
    if external_x is not None:
        x = external_x
    else:
        x = toeplitz_design(config.n, config.p, config.rho, rng.stream("design", rep))
    beta = sample_beta(config.p, config.s, config.beta_mode, rng.stream("beta-sampling", rep))
    if beta.any():
        if external_x is not None:
            sv = empirical_signal_variance(x, beta)
            sigma_sq = sv / config.snr if sv > 0 else 1.0
        else:
            sigma_sq = sigma_for_snr(beta, config.rho, config.snr)
    else:
        sigma_sq = 1.0
    noise = rng.stream("simulation-noise", rep).standard_normal(x.shape[0])
    y = x @ beta + math.sqrt(sigma_sq) * noise
    return make_dataset(y, x), beta, sigma_sq


def _split_kwargs(config: SimulationConfig) -> dict:
    return {
        "pvalue_mode": config.pvalue_mode,
        "folds": config.folds,
        "fixed_target": config.fixed_target,
        "random_size": config.random_size,
    }


def run_methods_once(config: SimulationConfig, methods, dataset: Dataset, rng: RngSpec) -> dict:
    """Apply every requested method to one data set; share the p-value
    matrix across the multi-split rules.

    Returns {method: SelectionReport}, with an exception object in place of
    a report for methods that fail on this data set.
    """
    reports = {}
    kwargs = _split_kwargs(config)
    matrix = None
    if any(m in _MULTI for m in methods):
        matrix = inference.pvalue_matrix(
            dataset, config.screener, config.n_splits, rng, **kwargs
        )
        agg = inference.aggregate_adaptive(matrix, config.gamma_min)
        uncapped = inference.aggregate_adaptive(matrix, config.gamma_min, capped=False)
    for method in methods:
        try:
            if method == "multi-fwer":
                reports[method] = inference.fwer_select(agg, config.alpha)
            elif method == "multi-fdr":
                reports[method] = inference.fdr_select(agg, config.q, False, uncapped)
            elif method == "multi-fdr-corrected":
                reports[method] = inference.fdr_select(agg, config.q, True, uncapped)
            elif method == "multi-ev":
                reports[method] = inference.ev_select(agg, config.alpha, config.k_factor, uncapped)
            elif method == "single-split":
                reports[method] = inference.single_split_select(
                    dataset, config.screener, config.alpha, rng, **kwargs
                )
            elif method == "adaptive-lasso":
                reports[method] = adaptive_lasso_select(dataset, rng, config.folds)
            elif method == "classic-bh":
                reports[method] = classic_bh_select(dataset, config.q, config.pvalue_mode)
            else:
                raise ValueError(f"unknown method {method!r}")
        except (FullModelInfeasibleError, screening.LassoConvergenceError) as exc:
            reports[method] = exc
    return reports


@dataclass(frozen=True)
class ExperimentResult:
    """Per-rep metric rows plus per-method summaries for one config."""

    config: SimulationConfig
    rows: tuple  # (rep, method, RunMetrics-or-None, error-or-None)
    summary: dict  # method -> {mean_tp, mean_fp, fwer, fdr, se_*, errors, reps}


def summarize(rows, methods, reps: int) -> dict:
    """Means with standard errors per method; failed reps are counted, not averaged."""
    summary = {}
    for method in methods:
        tp, fp, fw, fdp = [], [], [], []
        errors = 0
        for _, m, metrics, err in rows:
            if m != method:
                continue
            if err is not None:
                errors += 1
                continue
            tp.append(metrics.true_positives)
            fp.append(metrics.false_positives)
            fw.append(metrics.fwer_indicator)
            fdp.append(metrics.fdp)
        k = len(tp)

        def mean_se(v):
            if not v:
                return float("nan"), float("nan")
            a = np.asarray(v, dtype=float)
            se = a.std(ddof=1) / math.sqrt(len(a)) if len(a) > 1 else 0.0
            return float(a.mean()), float(se)

        m_tp, se_tp = mean_se(tp)
        m_fp, se_fp = mean_se(fp)
        m_fw, se_fw = mean_se(fw)
        m_fdp, se_fdp = mean_se(fdp)
        summary[method] = {
            "reps": reps,
            "evaluated": k,
            "errors": errors,
            "mean_tp": m_tp,
            "se_tp": se_tp,
            "mean_fp": m_fp,
            "se_fp": se_fp,
            "fwer": m_fw,
            "se_fwer": se_fw,
            "fdr": m_fdp,
            "se_fdr": se_fdp,
        }
    return summary


def run_experiment(
    config: SimulationConfig,
    methods,
    rng: RngSpec,
    *,
    workers: int = 1,
    external_x=None,
) -> ExperimentResult:
    """Monte-Carlo evaluation of the requested methods under one config.

    Every rep draws its own data from dedicated substreams, so results are
    a pure function of (config, methods, master seed) for any worker count.
    Per-rep failures are recorded and never abort the batch.
    """
    config.validate()
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    if config.design_source == "external_csv" and external_x is None:
        external_x = np.loadtxt(config.design_path, delimiter=",")

    def one_rep(rep: int):
        rep_rng = rng.child("replication", rep)
        dataset, beta, _ = simulate_dataset(config, rep, rng, external_x)
        out = []
        for method, report in run_methods_once(config, methods, dataset, rep_rng).items():
            if isinstance(report, Exception):
                out.append((rep, method, None, str(report)))
            else:
                out.append((rep, method, evaluate_selection(report.selected, beta), None))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(one_rep, range(1, config.reps + 1)))
    else:
        chunks = [one_rep(r) for r in range(1, config.reps + 1)]
    rows = tuple(row for chunk in chunks for row in chunk)
    return ExperimentResult(config, rows, summarize(rows, methods, config.reps))
