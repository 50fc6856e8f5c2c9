import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misslab.inference import (
    MetricsRecord,
    PooledEstimate,
    metrics_csv_rows,
    ols_fit,
    pool,
    predict_mse,
    replicate_metrics,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
variances = st.floats(0.0, 1e6, allow_nan=False)


class TestPool:
    def test_degenerate_between_variance(self):
        pe = pool([1.0, 1.0, 1.0], [0.04, 0.04, 0.04])
        assert pe.estimate == 1.0
        assert pe.between == 0.0
        assert pe.total == 0.04
        assert math.isinf(pe.df)
        z = 1.959963984540054
        assert abs(pe.ci_high - (1.0 + z * 0.2)) < 1e-12
        assert abs(pe.ci_low - (1.0 - z * 0.2)) < 1e-12

    def test_hand_computed_two_imputations(self):
        pe = pool([0.0, 2.0], [1.0, 1.0])
        assert abs(pe.estimate - 1.0) < 1e-12
        assert abs(pe.within - 1.0) < 1e-12
        assert abs(pe.between - 2.0) < 1e-12
        assert abs(pe.total - 4.0) < 1e-12
        assert abs(pe.df - (2 - 1) * (1 + 1.0 / 3.0) ** 2) < 1e-12

    def test_permutation_invariance(self):
        a = pool([0.3, -0.1, 0.9], [0.5, 0.2, 0.7])
        b = pool([0.9, 0.3, -0.1], [0.7, 0.5, 0.2])
        for field in ("estimate", "within", "between", "total", "df",
                      "ci_low", "ci_high"):
            assert getattr(a, field) == pytest.approx(getattr(b, field),
                                                      rel=1e-12, abs=1e-12)

    def test_single_imputation_rejected(self):
        with pytest.raises(ValueError, match="m >= 2"):
            pool([1.0], [1.0])

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            pool([1.0, 2.0], [1.0, -0.5])

    @given(
        st.lists(finite, min_size=2, max_size=10),
        st.floats(1e-6, 1e3),
    )
    @settings(max_examples=100, deadline=None)
    def test_total_dominates_within(self, estimates, u):
        pe = pool(estimates, [u] * len(estimates))
        assert pe.total >= pe.within - 1e-12
        assert (pe.total == pytest.approx(pe.within)) == (pe.between == pytest.approx(0.0))
        assert pe.ci_low <= pe.estimate <= pe.ci_high

    def test_interval_widens_with_between_variance(self):
        tight = pool([1.0, 1.01, 0.99], [0.1] * 3)
        loose = pool([0.5, 1.5, 1.0], [0.1] * 3)
        assert (loose.ci_high - loose.ci_low) > (tight.ci_high - tight.ci_low)


def _pe(estimate, half):
    return PooledEstimate(estimate, 0.0, 0.0, 0.0, 1.0,
                          estimate - half, estimate + half, 0.95, 2)


class TestReplicateMetrics:
    def test_single_exact_replicate(self):
        rec = replicate_metrics([_pe(3.0, 1.0)], truth=3.0)
        assert rec.bias == 0.0
        assert rec.coverage == 1.0
        assert rec.mse == 0.0

    def test_symmetric_estimates_have_zero_bias(self):
        rec = replicate_metrics([_pe(2.0, 0.1), _pe(4.0, 0.1)], truth=3.0)
        assert abs(rec.bias) < 1e-12
        assert rec.mse == pytest.approx(rec.variance)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=40),
           st.floats(-100, 100))
    @settings(max_examples=100, deadline=None)
    def test_mse_decomposition_identity(self, estimates, truth):
        rec = replicate_metrics([_pe(e, 1.0) for e in estimates], truth)
        scale = max(1.0, abs(rec.mse))
        assert abs(rec.mse - (rec.bias_sq + rec.variance)) < 1e-10 * scale

    def test_nominal_coverage_well_specified(self):
        # Full pipeline on the easiest well-specified problem: a normal
        # mean with cells missing completely at random, properly imputed.
        from misslab.impute import ImputationConfig, fcs_impute
        from misslab.tabular import DataMatrix, MissMask

        rng = np.random.default_rng(1234)
        n, m = 60, 10
        pooled = []
        for rep in range(1000):
            data = rng.normal(0.0, 1.0, size=(n, 1))
            bits = (rng.random((n, 1)) < 0.3).astype(np.uint8)
            if bits.sum() in (0, n):
                bits[0, 0] = 1 - bits[0, 0]
            d = DataMatrix(data.copy(), MissMask(bits), ("y",))
            res = fcs_impute(
                d, ImputationConfig(m=m, maxit=1, method="norm", seed=50_000 + rep)
            )
            ests = [float(c[:, 0].mean()) for c in res.completed]
            variances = [float(c[:, 0].var(ddof=1) / n) for c in res.completed]
            pooled.append(pool(ests, variances))
        rec = replicate_metrics(pooled, truth=0.0)
        assert 0.93 <= rec.coverage <= 0.97

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one replicate"):
            replicate_metrics([], truth=0.0)


class TestPredictMse:
    def test_perfect_predictions(self):
        truth = np.arange(5.0)
        assert predict_mse(np.tile(truth, (3, 1)), truth) == 0.0

    def test_zero_predictor_matches_response_variance(self):
        rng = np.random.default_rng(2)
        n = 200_000
        x = rng.normal(size=(n, 10))
        y = x.sum(axis=1) + 2.0 * rng.normal(size=n)
        mse = predict_mse(np.zeros((1, n)), y)
        assert abs(mse - 14.0) < 0.2

    def test_complete_data_linear_fit_error(self):
        # Expected test error sigma^2 * (1 + k/n_train) for a fresh fit.
        rng = np.random.default_rng(3)
        n_train, n_test, p = 100, 1000, 10
        mses = []
        for _ in range(200):
            x = rng.normal(size=(n_train + n_test, p))
            y = x.sum(axis=1) + 2.0 * rng.normal(size=n_train + n_test)
            fit = ols_fit(y[:n_train],
                          np.column_stack([np.ones(n_train), x[:n_train]]))
            pred = fit.predict(np.column_stack([np.ones(n_test), x[n_train:]]))
            mses.append(predict_mse(pred[None, :], y[n_train:]))
        assert abs(np.mean(mses) - 4.0 * (1 + 11 / 100)) < 0.15

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="truth has"):
            predict_mse(np.zeros((2, 4)), np.zeros(5))

    def test_pooling_averages_imputations(self):
        preds = np.array([[0.0, 0.0], [2.0, 2.0]])
        assert predict_mse(preds, np.array([1.0, 1.0])) == 0.0


class TestOlsFit:
    def test_recovers_coefficients(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5000, 3))
        y = 1.0 + x @ [2.0, -1.0, 0.5] + 0.1 * rng.normal(size=5000)
        fit = ols_fit(y, np.column_stack([np.ones(5000), x]))
        assert np.allclose(fit.coef, [1.0, 2.0, -1.0, 0.5], atol=0.02)
        assert fit.cov.shape == (4, 4)

    def test_metrics_csv_rows(self):
        rec = MetricsRecord("beta", 2.0, 2.1, 0.1, 0.95, 0.02, 0.01, 0.01, 100)
        rows = metrics_csv_rows([("scenario-a", rec)])
        assert rows[0][0] == "scenario"
        assert rows[1][0] == "scenario-a"
        assert rows[1][-1] == "100"
