import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misslab.tabular import (
    DataMatrix,
    MissMask,
    format_value,
    pattern_summary,
    read_csv,
    read_mask_csv,
    sort_for_display,
    split_obs_mis,
    write_csv,
    write_mask_csv,
)


def dm(values, bits, names=None):
    values = np.asarray(values, dtype=float)
    names = names or tuple(f"X{j+1}" for j in range(values.shape[1]))
    return DataMatrix(values, MissMask(np.asarray(bits, dtype=np.uint8)), names)


masks = st.integers(2, 6).flatmap(
    lambda p: st.integers(1, 8).flatmap(
        lambda n: st.lists(
            st.lists(st.integers(0, 1), min_size=p, max_size=p),
            min_size=n,
            max_size=n,
        )
    )
)


class TestSplitObsMis:
    def test_fully_observed(self):
        obs, mis = split_obs_mis(dm(np.arange(4.0).reshape(2, 2), np.zeros((2, 2))))
        assert len(obs) == 4 and mis == []

    def test_fully_missing(self):
        obs, mis = split_obs_mis(dm(np.zeros((2, 2)), np.ones((2, 2))))
        assert obs == [] and len(mis) == 4

    def test_checkerboard(self):
        obs, mis = split_obs_mis(dm(np.ones((2, 2)), [[0, 1], [1, 0]]))
        assert {(i, j) for i, j, _ in obs} == {(0, 0), (1, 1)}
        assert set(mis) == {(0, 1), (1, 0)}

    @given(masks)
    @settings(max_examples=50, deadline=None)
    def test_partition_covers_every_cell(self, bits):
        bits = np.array(bits, dtype=np.uint8)
        d = dm(np.zeros(bits.shape), bits)
        obs, mis = split_obs_mis(d)
        assert len(obs) + len(mis) == bits.size
        cells = {(i, j) for i, j, _ in obs} | set(mis)
        assert len(cells) == bits.size


class TestPatternSummary:
    def test_file_matching_pair(self):
        summary = pattern_summary(MissMask([[0, 1], [1, 0], [0, 1]]))
        assert summary.file_matching_pairs == ((0, 1),)

    def test_all_observed(self):
        summary = pattern_summary(MissMask(np.zeros((4, 3), dtype=np.uint8)))
        assert summary.monotone
        assert summary.file_matching_pairs == ()

    def test_counts_sum_to_n(self):
        summary = pattern_summary(MissMask([[0, 1], [0, 1], [1, 1]]))
        assert sum(c for _, c in summary.distinct_patterns) == 3
        assert summary.n_patterns() == 2

    def test_rates_match_column_means(self):
        bits = np.array([[0, 1, 1], [0, 0, 1]], dtype=np.uint8)
        summary = pattern_summary(MissMask(bits))
        assert np.allclose(summary.per_column_rate, bits.mean(axis=0))

    def test_monotone_requires_suffix(self):
        assert pattern_summary(MissMask([[0, 1, 1], [0, 0, 1]])).monotone
        assert not pattern_summary(MissMask([[1, 0, 1]])).monotone

    def test_monotone_respects_ordering(self):
        # Missing set {0} is a suffix only under the reversed order.
        m = MissMask([[1, 0, 0]])
        assert not pattern_summary(m).monotone
        assert pattern_summary(m, ordering=(2, 1, 0)).monotone

    @given(masks)
    @settings(max_examples=50, deadline=None)
    def test_row_permutation_leaves_pattern_multiset(self, bits):
        bits = np.array(bits, dtype=np.uint8)
        rng = np.random.default_rng(0)
        perm = rng.permutation(bits.shape[0])
        a = pattern_summary(MissMask(bits))
        b = pattern_summary(MissMask(bits[perm]))
        assert a.distinct_patterns == b.distinct_patterns


class TestSortForDisplay:
    def test_orders_columns_by_rate(self):
        bits = np.zeros((10, 3), dtype=np.uint8)
        bits[:9, 0] = 1  # 0.9
        bits[:1, 1] = 1  # 0.1
        bits[:5, 2] = 1  # 0.5
        _, cols = sort_for_display(MissMask(bits))
        assert list(cols) == [1, 2, 0]

    def test_stable_on_ties(self):
        bits = np.ones((4, 3), dtype=np.uint8)
        rows, cols = sort_for_display(MissMask(bits))
        assert list(cols) == [0, 1, 2]
        assert list(rows) == [0, 1, 2, 3]

    def test_increasing_rate_mask_maps_to_identity(self):
        from misslab.builtins import builtin_structures
        from misslab.mechanisms import simulate_mask

        x = np.random.default_rng(0).normal(size=(5000, 10))
        mask = simulate_mask(builtin_structures("mcar_u_2"), x, seed=1)
        _, cols = sort_for_display(mask)
        assert list(cols) == list(range(10))


class TestCsv:
    def test_round_trip(self, tmp_path):
        d = dm([[1.5, np.nan], [-2.25, 0.125]], [[0, 1], [0, 0]], ("a", "b"))
        path = tmp_path / "t.csv"
        write_csv(d, path)
        back = read_csv(path)
        assert back.col_names == ("a", "b")
        assert np.array_equal(back.missing.bits, d.missing.bits)
        obs = d.missing.bits == 0
        assert np.array_equal(back.values[obs], d.values[obs])

    def test_write_is_deterministic(self, tmp_path):
        d = dm([[0.1, 2.0]], [[0, 0]])
        write_csv(d, tmp_path / "a.csv")
        write_csv(d, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.csv").read_text() == "X1,X2\n0.1,2.0\n"

    def test_mask_round_trip(self, tmp_path):
        m = MissMask([[0, 1], [1, 1]])
        write_mask_csv(m, tmp_path / "m.csv", ("u", "v"))
        back, names = read_mask_csv(tmp_path / "m.csv")
        assert names == ("u", "v")
        assert np.array_equal(back.bits, m.bits)

    def test_ragged_row_rejected(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1.0\n")
        with pytest.raises(ValueError, match="expected 2 fields"):
            read_csv(tmp_path / "bad.csv")

    def test_format_value_round_trips(self):
        for v in (0.1, 1 / 3, -2.5e-17, 123456.789):
            assert float(format_value(v)) == v


class TestInvariants:
    def test_missing_cells_hold_no_value(self):
        d = dm([[1.0, 2.0]], [[0, 1]])
        assert np.isnan(d.values[0, 1])
        assert d.observed_column(1).size == 0

    def test_values_are_read_only(self):
        d = dm([[1.0, 2.0]], [[0, 0]])
        with pytest.raises(ValueError):
            d.values[0, 0] = 9.0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            DataMatrix(np.zeros((2, 2)), MissMask(np.zeros((2, 3), dtype=np.uint8)),
                       ("a", "b"))

    def test_ordering_must_be_permutation(self):
        with pytest.raises(ValueError, match="permutation"):
            DataMatrix(np.zeros((1, 2)), MissMask([[0, 0]]), ("a", "b"),
                       ordering=(0, 0))

    def test_logical_must_be_subset(self):
        with pytest.raises(ValueError, match="subset"):
            MissMask([[0, 1]], logical=[[1, 0]])
