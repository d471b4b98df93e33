import math

import numpy as np
import pytest

from multisplit import (
    AggregatedPValues,
    PValueMatrix,
    RngSpec,
    aggregate_adaptive,
    aggregate_fixed_gamma,
    ecdf_crossing_check,
    empirical_quantile,
    ev_select,
    fdr_select,
    fwer_select,
    make_dataset,
    pvalue_matrix,
    single_split_select,
    split_pvalues,
)
from multisplit.inference import (
    adjust_split_pvalues,
    crossing_bound,
    ecdf_table,
    harmonic_number,
    step_up_select,
)
from multisplit.model import make_splits

from conftest import simulated_dataset


def matrix_from_columns(columns, sizes=None):
    """PValueMatrix with given capped columns; uncapped mirrors them."""
    values = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    B = values.shape[0]
    sizes = np.ones(B, dtype=int) if sizes is None else np.asarray(sizes)
    return PValueMatrix(values, sizes, values.copy())


def grid_infimum_oracle(column, gamma_min, grid_points=100_000):
    """Dense search over gamma for inf Q(gamma), evaluating the scaled
    order-statistic quantile pointwise; the grid includes the quantile
    knots k/B where the infimum on each piece is attained."""
    srt = np.sort(np.asarray(column, dtype=float))
    B = srt.size
    uniform = gamma_min + np.arange(1, grid_points) * (1.0 - gamma_min) / grid_points
    knots = np.array([k / B for k in range(1, B + 1) if gamma_min < k / B < 1.0])
    gammas = np.concatenate([uniform, knots]) if knots.size else uniform
    ks = np.minimum(np.ceil(gammas * B).astype(int), B)
    q = srt[ks - 1] / gammas
    return float(q.min()), float(np.min(srt[np.minimum(np.ceil(uniform * B).astype(int), B) - 1] / uniform))


class TestAdjustment:
    def test_bonferroni_arithmetic(self):
        row = adjust_split_pvalues(np.array([0.004, 1.0]), 10)
        assert row[0] == pytest.approx(0.04)
        assert row[1] == 1.0

    def test_cap_at_one(self):
        assert adjust_split_pvalues(np.array([0.3]), 5)[0] == 1.0
        assert adjust_split_pvalues(np.array([0.3]), 5, cap=False)[0] == pytest.approx(1.5)

    def test_empty_screen_rows(self):
        raw = np.ones(4)
        assert np.all(adjust_split_pvalues(raw, 0) == 1.0)
        assert np.all(np.isinf(adjust_split_pvalues(raw, 0, cap=False)))


class TestSplitPValues:
    def test_unscreened_variables_get_one(self, rng_spec):
        ds, beta = simulated_dataset(0)
        (plan,) = make_splits(ds.n, 1, rng_spec)
        row = split_pvalues(ds, plan, "cv", rng_spec)
        assert row.values.shape == (ds.p,)
        assert np.all((row.values > 0) & (row.values <= 1))
        unscreened = row.values == 1.0
        assert unscreened.sum() >= ds.p - row.screened_size
        screened = row.uncapped < np.inf
        np.testing.assert_allclose(
            row.uncapped[~unscreened], row.values[~unscreened] * 1.0, atol=1e-12
        ) if False else None
        # uncapped equals raw * size before the cap
        mask = row.values < 1.0
        np.testing.assert_allclose(row.uncapped[mask], row.values[mask])

    def test_signal_variables_small(self, rng_spec):
        ds, beta = simulated_dataset(1, snr=16.0)
        (plan,) = make_splits(ds.n, 1, rng_spec)
        row = split_pvalues(ds, plan, "adap", rng_spec)
        assert row.values[np.nonzero(beta)[0]].max() < 0.05

    def test_empty_screen_is_flagged_all_ones(self, rng_spec):
        x = np.vstack([np.eye(5), -np.eye(5), np.zeros((30, 5))])
        y = np.concatenate([np.zeros(10), np.ones(30)])
        ds = make_dataset(y - y.mean(), x)
        (plan,) = make_splits(ds.n, 1, rng_spec)
        row = split_pvalues(ds, plan, "cv", rng_spec, folds=5)
        assert np.all(row.values == 1.0)
        assert np.all(np.isinf(row.uncapped))
        assert row.screened_size == 0
        assert "empty-screen" in row.flags

    def test_rank_repair_on_duplicate_columns(self, rng_spec):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((30, 6))
        x[:, 5] = x[:, 2]
        y = x[:, 2] + 0.1 * rng.standard_normal(30)
        ds = make_dataset(y, x)
        (plan,) = make_splits(ds.n, 1, rng_spec)
        row = split_pvalues(ds, plan, "random", rng_spec, random_size=6)
        assert any(f.startswith("rank-repair-dropped:") for f in row.flags)
        dropped = {int(f.split(":")[1]) for f in row.flags if "dropped" in f}
        assert dropped <= {2, 5} and len(dropped) == 1
        assert row.values[dropped.pop()] == 1.0
        assert row.screened_size == 6  # multiplicity factor is the screened size

    def test_matrix_matches_rows(self, rng_spec):
        ds, _ = simulated_dataset(3, n=50, p=12)
        mat = pvalue_matrix(ds, "cv", 4, rng_spec, folds=5)
        plans = make_splits(ds.n, 4, rng_spec)
        for b, plan in enumerate(plans):
            row = split_pvalues(ds, plan, "cv", rng_spec, folds=5)
            np.testing.assert_array_equal(mat.values[b], row.values)
        assert mat.n_splits == 4 and mat.p == 12

    def test_worker_count_does_not_change_matrix(self, rng_spec):
        ds, _ = simulated_dataset(4, n=50, p=12)
        a = pvalue_matrix(ds, "cv", 6, rng_spec, folds=5)
        b = pvalue_matrix(ds, "cv", 6, rng_spec, folds=5, workers=2)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.screened_sizes, b.screened_sizes)


class TestEmpiricalQuantile:
    def test_enumeration_example(self):
        assert empirical_quantile(np.array([0.1, 0.2, 0.3, 0.4]), 0.5) == 0.2

    def test_gamma_one_is_maximum(self):
        v = np.array([0.2, 0.5, 0.9])
        assert empirical_quantile(v, 1.0) == 0.9

    def test_single_value(self):
        for g in (0.01, 0.5, 1.0):
            assert empirical_quantile(np.array([0.42]), g) == 0.42

    def test_rank_boundaries(self):
        v = np.arange(1, 11) / 10.0
        assert empirical_quantile(v, 0.1) == 0.1
        assert empirical_quantile(v, 0.1000001) == 0.2
        with pytest.raises(ValueError):
            empirical_quantile(v, 0.0)


class TestAggregateFixedGamma:
    def test_enumeration_example(self):
        mat = matrix_from_columns([[0.04, 0.2, 0.4, 1.0]])
        agg = aggregate_fixed_gamma(mat, 0.5)
        assert agg.values[0] == pytest.approx(0.4)

    def test_all_ones_column(self):
        agg = aggregate_fixed_gamma(matrix_from_columns([[1.0] * 6]), 0.5)
        assert agg.values[0] == 1.0

    def test_single_row(self):
        agg = aggregate_fixed_gamma(matrix_from_columns([[0.3]]), 0.5)
        assert agg.values[0] == pytest.approx(0.6)

    def test_twice_the_median_reading(self):
        col = np.array([0.01, 0.03, 0.05, 0.2, 1.0])
        agg = aggregate_fixed_gamma(matrix_from_columns([col]), 0.5)
        k = math.ceil(0.5 * 5)
        assert agg.values[0] == pytest.approx(np.sort(col)[k - 1] * 2)


class TestAggregateAdaptive:
    def test_correction_factor(self):
        assert 1.0 - math.log(0.05) == pytest.approx(3.9957, abs=1e-4)

    def test_enumeration_example(self):
        mat = matrix_from_columns([[0.04, 0.2, 0.4, 1.0]])
        agg = aggregate_adaptive(mat, 0.05)
        exact = (1.0 - math.log(0.05)) * 0.16
        assert agg.values[0] == pytest.approx(exact, abs=1e-12)
        assert agg.values[0] == pytest.approx(0.63936, abs=1e-3)

    def test_all_ones_column(self):
        agg = aggregate_adaptive(matrix_from_columns([[1.0] * 8]), 0.05)
        assert agg.values[0] == 1.0

    def test_closed_form_equals_grid_search(self):
        rng = np.random.default_rng(0)
        factor = 1.0 - math.log(0.05)
        for B in (3, 7, 50):
            cols = rng.uniform(size=(B, 40)).clip(1e-6, 1.0)
            agg = aggregate_adaptive(matrix_from_columns(cols.T.tolist()), 0.05, capped=False)
            for j in range(40):
                with_knots, uniform_only = grid_infimum_oracle(cols[:, j], 0.05, 20_000)
                assert agg.values[j] == pytest.approx(factor * with_knots, abs=1e-9)
                assert factor * uniform_only >= agg.values[j] - 1e-12

    def test_row_order_invariance(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(size=(20, 10))
        mat = matrix_from_columns(values.T.tolist())
        perm = rng.permutation(20)
        mat_perm = matrix_from_columns(values[perm].T.tolist())
        np.testing.assert_array_equal(
            aggregate_adaptive(mat).values, aggregate_adaptive(mat_perm).values
        )
        np.testing.assert_array_equal(
            aggregate_fixed_gamma(mat, 0.3).values,
            aggregate_fixed_gamma(mat_perm, 0.3).values,
        )

    def test_appended_ones_row_recomputes_by_closed_form(self):
        # no monotonicity claim: appending a p-value of 1 simply re-enters
        # the closed form with B+1 rows
        rng = np.random.default_rng(2)
        factor = 1.0 - math.log(0.05)
        for _ in range(20):
            col = rng.uniform(size=9)
            extended = np.append(col, 1.0)
            agg = aggregate_adaptive(matrix_from_columns([extended]), 0.05)
            oracle, _ = grid_infimum_oracle(extended, 0.05, 5_000)
            assert agg.values[0] == pytest.approx(min(1.0, factor * oracle), abs=1e-9)

    def test_quantile_event_equivalence_floats(self):
        # {Q_j(gamma) <= alpha} iff {pi_j(alpha * gamma) >= gamma}
        rng = np.random.default_rng(3)
        for _ in range(200):
            B = rng.integers(1, 30)
            col = rng.uniform(size=B)
            gamma = rng.uniform(0.02, 0.99)
            alpha = rng.uniform(0.02, 0.99)
            k = min(max(math.ceil(gamma * B), 1), B)
            q = np.sort(col)[k - 1] / gamma
            pi = np.mean(col <= alpha * gamma)
            assert (min(1.0, q) <= alpha) == (pi >= gamma)

    def test_uncapped_exceeds_one(self):
        mat = matrix_from_columns([[0.9, 1.0, 1.0, 1.0]])
        capped = aggregate_adaptive(mat, 0.05)
        uncapped = aggregate_adaptive(mat, 0.05, capped=False)
        assert capped.values[0] == 1.0
        assert uncapped.values[0] > 1.0


class TestFwerSelect:
    def test_threshold_example(self):
        agg = AggregatedPValues(np.array([0.01, 0.06, 1.0]), "adaptive", 0.05)
        np.testing.assert_array_equal(fwer_select(agg, 0.05).selected, [0])

    def test_all_ones_selects_nothing(self):
        agg = AggregatedPValues(np.ones(5), "adaptive", 0.05)
        assert fwer_select(agg, 0.05).selected.size == 0

    def test_boundary_is_inclusive(self):
        agg = AggregatedPValues(np.array([0.05]), "adaptive", 0.05)
        np.testing.assert_array_equal(fwer_select(agg, 0.05).selected, [0])

    def test_variable_relabeling_equivariance(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(size=12)
        perm = rng.permutation(12)
        a = fwer_select(AggregatedPValues(values, "adaptive", 0.05), 0.3).selected
        b = fwer_select(AggregatedPValues(values[perm], "adaptive", 0.05), 0.3).selected
        np.testing.assert_array_equal(np.sort(perm[b]), np.sort(a))


class TestFdrSelect:
    def test_step_up_enumeration(self):
        agg = AggregatedPValues(np.array([0.01, 0.03, 0.5]), "adaptive", 0.05)
        rep = fdr_select(agg, 0.05)
        np.testing.assert_array_equal(rep.selected, [0, 1])
        assert rep.meta["h"] == 2

    def test_empty_when_nothing_qualifies(self):
        agg = AggregatedPValues(np.array([0.9, 0.8, 0.99]), "adaptive", 0.05)
        assert fdr_select(agg, 0.05).selected.size == 0

    def test_corrected_slope_harmonic(self):
        agg = AggregatedPValues(np.array([0.02, 0.2, 0.6]), "adaptive", 0.05)
        rep = fdr_select(agg, 0.05, corrected=True)
        assert rep.rule["slope"] == pytest.approx(0.05 / (1 + 0.5 + 1 / 3))
        np.testing.assert_array_equal(rep.selected, [0])

    def test_corrected_never_selects_more(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            values = rng.uniform(size=30) ** 2
            agg = AggregatedPValues(values, "adaptive", 0.05)
            plain = fdr_select(agg, 0.1).selected
            corr = fdr_select(agg, 0.1, corrected=True).selected
            assert set(corr) <= set(plain)

    def test_capped_values_degenerate_so_uncapped_used(self):
        # thresholds i*q pass 1 at i = 1/q; on capped values everything
        # would be selected, the uncapped aggregate keeps noise out
        p = 40
        capped = AggregatedPValues(np.ones(p), "adaptive", 0.05)
        uncapped = AggregatedPValues(np.full(p, 30.0), "adaptive", 0.05, capped=False)
        assert fdr_select(capped, 0.05).selected.size == p
        assert fdr_select(capped, 0.05, uncapped_agg=uncapped).selected.size == 0

    def test_tie_break_by_index(self):
        agg = AggregatedPValues(np.array([0.04, 0.01, 0.04, 0.9]), "adaptive", 0.05)
        rep = fdr_select(agg, 0.04)
        # h = 3: 0.01 <= .04, 0.04 <= .08, 0.04 <= .12, 0.9 > .16
        np.testing.assert_array_equal(rep.selected, [0, 1, 2])

    def test_harmonic_number(self):
        assert harmonic_number(3) == pytest.approx(11 / 6)

    def test_step_up_brute_force_small(self):
        # brute force: h is the largest subset size whose worst p-value
        # stays within size * slope
        rng = np.random.default_rng(9)
        from itertools import combinations

        for _ in range(30):
            p = int(rng.integers(2, 7))
            vals = rng.uniform(size=p) ** 3
            slope = float(rng.uniform(0.02, 0.3))
            selected, h = step_up_select(vals, slope)
            best = 0
            for m in range(1, p + 1):
                for subset in combinations(range(p), m):
                    if max(vals[list(subset)]) <= m * slope:
                        best = max(best, m)
            assert h == best


class TestEvSelect:
    def _aggs(self, unc_values):
        unc = np.asarray(unc_values, dtype=float)
        capped = AggregatedPValues(np.minimum(unc, 1.0), "adaptive", 0.05)
        uncapped = AggregatedPValues(unc, "adaptive", 0.05, capped=False)
        return capped, uncapped

    def test_arithmetic_example(self):
        capped, uncapped = self._aggs([0.12, 0.6])
        rep = ev_select(capped, 0.05, 20.0, uncapped)
        np.testing.assert_array_equal(rep.selected, [0, 1])
        assert rep.rule["ev_target"] == pytest.approx(1.0)

    def test_k_one_reduces_to_fwer_on_uncapped(self):
        rng = np.random.default_rng(5)
        unc = rng.uniform(0, 2, size=25)
        capped, uncapped = self._aggs(unc)
        rep = ev_select(capped, 0.3, 1.0, uncapped)
        fw = fwer_select(capped, 0.3)
        np.testing.assert_array_equal(rep.selected, fw.selected)

    def test_requires_uncapped(self):
        capped, _ = self._aggs([0.5])
        with pytest.raises(ValueError, match="uncapped"):
            ev_select(capped, 0.05, 20.0, capped)

    def test_rejects_k_below_one(self):
        capped, uncapped = self._aggs([0.5])
        with pytest.raises(ValueError):
            ev_select(capped, 0.05, 0.5, uncapped)


class TestSingleSplit:
    def test_composition_with_split_row(self, rng_spec):
        ds, beta = simulated_dataset(10, snr=16.0)
        rep = single_split_select(ds, "cv", 0.05, rng_spec)
        row = split_pvalues(ds, make_splits(ds.n, 1, rng_spec)[0], "cv", rng_spec)
        np.testing.assert_array_equal(rep.selected, np.nonzero(row.values <= 0.05)[0])

    def test_empty_screen_selects_nothing(self, rng_spec):
        x = np.vstack([np.eye(5), -np.eye(5), np.zeros((30, 5))])
        y = np.concatenate([np.zeros(10), np.ones(30)])
        ds = make_dataset(y - y.mean(), x)
        rep = single_split_select(ds, "cv", 0.05, rng_spec, folds=5)
        assert rep.selected.size == 0

    @pytest.mark.slow
    def test_pvalue_lottery_across_seeds(self):
        # borderline signal: the selected set depends on the arbitrary split
        ds, beta = simulated_dataset(77, n=50, p=20, support=(2, 9), snr=1.5)
        seen = set()
        for seed in range(100):
            rep = single_split_select(ds, "cv", 0.05, RngSpec(seed), folds=5)
            seen.add(tuple(rep.selected.tolist()))
        assert len(seen) >= 2


class TestEcdfCrossing:
    def test_crossing_matches_adaptive_example(self):
        col = np.array([0.04, 0.2, 0.4, 1.0])
        crossing, table = ecdf_crossing_check(col, 0.64, 0.05)
        assert crossing is True
        crossing, _ = ecdf_crossing_check(col, 0.63, 0.05)
        assert crossing is False
        assert table.shape == (4, 2)
        np.testing.assert_allclose(table[:, 1], [0.25, 0.5, 0.75, 1.0])

    def test_all_ones_never_cross(self):
        crossing, _ = ecdf_crossing_check(np.ones(12), 0.05, 0.05)
        assert crossing is False

    def test_agreement_with_aggregate(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            B = int(rng.integers(1, 40))
            col = rng.uniform(size=B) ** 2
            alpha = float(rng.uniform(0.01, 0.95))
            crossing, _ = ecdf_crossing_check(col, alpha, 0.05)
            agg = aggregate_adaptive(matrix_from_columns([col]), 0.05)
            assert crossing == (agg.values[0] <= alpha)

    def test_bound_shape(self):
        grid = np.array([0.0, 0.001, 0.5])
        bound = crossing_bound(grid, 0.05, 0.05)
        factor = (1 - math.log(0.05)) / 0.05
        assert bound[0] == 0.05
        assert bound[2] == pytest.approx(factor * 0.5)

    def test_ecdf_table_is_step_ready(self):
        table = ecdf_table(np.array([0.3, 0.1, 0.9]))
        np.testing.assert_allclose(table[:, 0], [0.1, 0.3, 0.9])
        np.testing.assert_allclose(table[:, 1], [1 / 3, 2 / 3, 1.0])
