"""Multi-split p-values and error-controlled variable selection for
(possibly p >> n) linear regression.

The pipeline: repeatedly split the sample, screen variables with a
Lasso-family method on one half, compute least-squares p-values on the
other, Bonferroni-adjust by the screened-set size, and aggregate the
per-split p-values through empirical quantiles. The aggregated p-values
support family-wise error, false-discovery-rate, and expected-false-
positive controlled selection.
"""

__version__ = "0.1.0"

from .model import (
    Dataset,
    RngSpec,
    SplitPlan,
    ValidationError,
    load_csv,
    make_dataset,
    make_splits,
    validate_dataset,
)
from .regression import OlsFit, RankDeficiencyError, coefficient_pvalues, ols_fit
from .screening import (
    AdaptiveLassoFit,
    CvLassoFit,
    LassoConvergenceError,
    LassoPath,
    ScreenedSet,
    adaptive_lasso,
    cap_screened_set,
    cv_lasso,
    lasso_coordinate_descent,
    lasso_path,
    screen_adap,
    screen_cv,
    screen_fixed,
    screen_random,
)
from .inference import (
    AggregatedPValues,
    PValueMatrix,
    SelectionReport,
    SplitPValues,
    aggregate_adaptive,
    aggregate_fixed_gamma,
    ecdf_crossing_check,
    empirical_quantile,
    ev_select,
    fdr_select,
    fwer_select,
    pvalue_matrix,
    single_split_select,
    split_pvalues,
)
from .simulation import (
    FullModelInfeasibleError,
    RunMetrics,
    SimulationConfig,
    adaptive_lasso_select,
    classic_bh_select,
    run_experiment,
    sample_beta,
    sigma_for_snr,
    toeplitz_design,
)

__all__ = [
    "AdaptiveLassoFit",
    "AggregatedPValues",
    "CvLassoFit",
    "Dataset",
    "FullModelInfeasibleError",
    "LassoConvergenceError",
    "LassoPath",
    "OlsFit",
    "PValueMatrix",
    "RankDeficiencyError",
    "RngSpec",
    "RunMetrics",
    "ScreenedSet",
    "SelectionReport",
    "SimulationConfig",
    "SplitPlan",
    "SplitPValues",
    "ValidationError",
    "adaptive_lasso",
    "adaptive_lasso_select",
    "aggregate_adaptive",
    "aggregate_fixed_gamma",
    "cap_screened_set",
    "classic_bh_select",
    "coefficient_pvalues",
    "cv_lasso",
    "ecdf_crossing_check",
    "empirical_quantile",
    "ev_select",
    "fdr_select",
    "fwer_select",
    "lasso_coordinate_descent",
    "lasso_path",
    "load_csv",
    "make_dataset",
    "make_splits",
    "ols_fit",
    "pvalue_matrix",
    "run_experiment",
    "sample_beta",
    "screen_adap",
    "screen_cv",
    "screen_fixed",
    "screen_random",
    "sigma_for_snr",
    "single_split_select",
    "split_pvalues",
    "toeplitz_design",
    "validate_dataset",
]
