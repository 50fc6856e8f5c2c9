import math

import numpy as np
import pytest

from misslab.builtins import (
    BUILTIN_NAMES,
    builtin_structures,
    expected_column_rates,
)
from misslab.mechanisms import SpecificationError, classify, simulate_mask
from misslab.tabular import pattern_summary


class TestCalibration:
    @pytest.mark.parametrize("name", [n for n in BUILTIN_NAMES if n != "complete"])
    def test_expected_overall_rate_hits_target(self, name):
        rates = expected_column_rates(name)
        assert abs(rates.mean() - 0.45) < 5e-4

    def test_complete_is_all_zero(self):
        assert expected_column_rates("complete").sum() == 0.0

    def test_climbing_rates_match_stated_sequence(self):
        assert np.allclose(
            expected_column_rates("mcar_u_2"), np.arange(10) / 10.0
        )

    def test_half_zero_half_ninety(self):
        rates = expected_column_rates("mcar_u_3")
        assert np.allclose(rates[:5], 0.0)
        assert np.allclose(rates[5:], 0.9)

    def test_first_column_spared(self):
        rates = expected_column_rates("mcar_u_4")
        assert rates[0] == 0.0
        assert np.allclose(rates[1:], 0.5)

    def test_alternate_target_rate(self):
        rates = expected_column_rates("mcar_ws_seq", rate=0.3)
        assert abs(rates.mean() - 0.3) < 5e-4

    def test_unachievable_target_rejected(self):
        with pytest.raises(SpecificationError):
            builtin_structures("mcar_u_2", rate=0.6)

    def test_unknown_name_rejected(self):
        with pytest.raises(SpecificationError, match="unknown builtin"):
            builtin_structures("mcar_u_99")


class TestSimulatedRates:
    @pytest.mark.parametrize("name", [n for n in BUILTIN_NAMES if n != "complete"])
    def test_simulated_overall_rate(self, name):
        x = np.random.default_rng(0).normal(size=(10_000, 10))
        mask = simulate_mask(builtin_structures(name), x, seed=1)
        assert abs(mask.overall_rate() - 0.45) < 0.01

    def test_per_column_rates_within_three_se(self):
        n = 10_000
        x = np.random.default_rng(0).normal(size=(n, 10))
        mask = simulate_mask(builtin_structures("mcar_u_2"), x, seed=1)
        expect = expected_column_rates("mcar_u_2")
        got = mask.column_rates()
        for j in range(10):
            se = math.sqrt(expect[j] * (1 - expect[j]) / n)
            assert abs(got[j] - expect[j]) <= 3 * se + 1e-12

    def test_dropout_builtin_is_monotone(self):
        x = np.random.default_rng(2).normal(size=(10_000, 10))
        mask = simulate_mask(builtin_structures("mcar_ss_seq"), x, seed=3)
        assert pattern_summary(mask).monotone

    def test_unit_block_rows_all_or_nothing(self):
        x = np.random.default_rng(4).normal(size=(5000, 10))
        mask = simulate_mask(builtin_structures("unit_block"), x, seed=5)
        per_row = mask.bits.sum(axis=1)
        assert set(np.unique(per_row)) <= {0, 10}

    def test_strong_block_drops_bank_jointly(self):
        x = np.random.default_rng(6).normal(size=(5000, 10))
        mask = simulate_mask(builtin_structures("mcar_ss_block"), x, seed=7)
        bank = mask.bits[:, 1:]
        assert set(np.unique(bank.sum(axis=1))) <= {0, 9}
        assert mask.bits[:, 0].sum() == 0


class TestDeclaredLabels:
    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_classify_matches_declared(self, name):
        spec = builtin_structures(name)
        assert classify(spec) == spec.declared_label
