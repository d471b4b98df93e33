import math

import numpy as np
import pytest
from scipy import integrate

from multisplit import RankDeficiencyError, coefficient_pvalues, ols_fit


def normal_equations_oracle(x, y):
    """Independent check: solve (X'X) b = X'y directly."""
    return np.linalg.solve(x.T @ x, x.T @ y)


class TestOlsFit:
    def test_noiseless_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((10, 1))
        fit = ols_fit(x, 2.0 * x[:, 0])
        assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-12)
        assert fit.sigma_hat_sq == pytest.approx(0.0, abs=1e-20)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        fit = ols_fit(x, y)
        np.testing.assert_allclose(fit.coefficients, normal_equations_oracle(x, y), atol=1e-10)
        assert fit.df == 27

    def test_standard_errors_match_covariance_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((40, 4))
        y = rng.standard_normal(40)
        fit = ols_fit(x, y)
        resid = y - x @ fit.coefficients
        s2 = resid @ resid / (40 - 4)
        se = np.sqrt(np.diag(s2 * np.linalg.inv(x.T @ x)))
        np.testing.assert_allclose(fit.standard_errors, se, rtol=1e-10)

    def test_duplicated_column_raises_named(self):
        rng = np.random.default_rng(1)
        col = rng.standard_normal((20, 1))
        x = np.hstack([col, rng.standard_normal((20, 1)), col])
        with pytest.raises(RankDeficiencyError) as err:
            ols_fit(x, rng.standard_normal(20), subset=np.array([7, 8, 9]))
        assert set(err.value.columns) & {7, 9}

    def test_residuals_orthogonal_to_columns(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            x = rng.standard_normal((25, 5))
            y = rng.standard_normal(25)
            fit = ols_fit(x, y)
            resid = y - x @ fit.coefficients
            scale = np.abs(x).max() * np.abs(y).max()
            assert np.abs(x.T @ resid).max() < 1e-8 * max(scale, 1.0)

    def test_needs_spare_degree_of_freedom(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError, match="k \\+ 1"):
            ols_fit(rng.standard_normal((3, 3)), rng.standard_normal(3))


def t_density(x, df):
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def make_fit(coefs, ses, df=10):
    from multisplit.regression import OlsFit

    coefs = np.asarray(coefs, dtype=float)
    ses = np.asarray(ses, dtype=float)
    return OlsFit(coefs, ses, 1.0, df, np.arange(coefs.size))


class TestCoefficientPvalues:
    def test_zero_statistic_gives_one(self):
        pvals, flags = coefficient_pvalues(make_fit([0.0], [1.0]))
        assert pvals[0] == 1.0 and not flags

    def test_normal_quantile_point(self):
        # |t| at the upper 2.5% point of the standard normal
        pvals, _ = coefficient_pvalues(make_fit([1.959964], [1.0]))
        assert abs(pvals[0] - 0.05) < 1e-4

    def test_student_t_matches_quadrature_oracle(self):
        pvals, _ = coefficient_pvalues(make_fit([2.0], [1.0], df=10), "student-t")
        tail, _ = integrate.quad(t_density, 2.0, np.inf, args=(10,))
        assert abs(pvals[0] - 2 * tail) < 1e-6

    def test_monotone_decreasing_in_t(self):
        ts = np.linspace(0, 6, 40)
        pvals, _ = coefficient_pvalues(make_fit(ts, np.ones_like(ts)))
        assert np.all(np.diff(pvals) < 0)

    def test_normal_and_t_agree_for_large_df(self):
        # the true max gap between the two distributions at df=200 is
        # 1.58e-3 (at |t| ~ 1.56); it halves by df=500 and keeps shrinking
        ts = np.linspace(0.1, 4.0, 25)
        gaps = []
        for df in (200, 500, 1000):
            fit = make_fit(ts, np.ones_like(ts), df=df)
            p_norm, _ = coefficient_pvalues(fit, "normal")
            p_t, _ = coefficient_pvalues(fit, "student-t")
            gaps.append(np.abs(p_norm - p_t).max())
        assert gaps[0] < 2e-3
        assert gaps[1] < 1e-3
        assert gaps[0] > gaps[1] > gaps[2]

    def test_zero_se_nonzero_coef_clamped_and_flagged(self):
        pvals, flags = coefficient_pvalues(make_fit([2.0], [0.0]))
        assert pvals[0] == np.finfo(float).tiny
        assert any("zero-se-nonzero-coef" in f for f in flags)

    def test_zero_se_zero_coef_is_one_and_flagged(self):
        pvals, flags = coefficient_pvalues(make_fit([0.0], [0.0]))
        assert pvals[0] == 1.0
        assert any("zero-se-zero-coef" in f for f in flags)

    def test_unknown_approximation_rejected(self):
        with pytest.raises(ValueError):
            coefficient_pvalues(make_fit([1.0], [1.0]), "chi2")

    def test_values_stay_positive_for_huge_t(self):
        pvals, _ = coefficient_pvalues(make_fit([60.0], [1.0]))
        assert 0.0 < pvals[0] <= 1.0
