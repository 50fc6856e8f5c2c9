import numpy as np
import pytest

from misslab.analyzer import (
    VERDICT_DATA,
    VERDICT_STRUCTURED,
    VERDICT_UNSTRUCTURED,
    mcar_structure_audit,
    pairwise_dependence,
    report_csv_rows,
    sequential_signature,
    summary_text,
)
from misslab.builtins import builtin_structures
from misslab.fixtures import sim3_spec
from misslab.mechanisms import (
    LogisticClause,
    MechanismRule,
    MechanismSpec,
    TableClause,
    data_col,
    simulate_mask,
)
from misslab.tabular import DataMatrix, MissMask


class TestPairwiseDependence:
    def test_type_one_error_rate_calibrated(self):
        rng = np.random.default_rng(12)
        bits = (rng.random((100_000, 20)) < 0.5).astype(np.uint8)
        report = pairwise_dependence(MissMask(bits), alpha=0.01)
        rejected = [p for p in report.pairs if p.p_value < 0.01]
        assert len(rejected) / len(report.pairs) <= 0.03

    def test_perfect_negative_dependence_flagged_degenerate(self):
        rng = np.random.default_rng(1)
        m1 = (rng.random(2000) < 0.5).astype(np.uint8)
        report = pairwise_dependence(MissMask(np.column_stack([m1, 1 - m1])))
        pair = report.pair(0, 1)
        assert pair.degenerate
        assert pair.sign == "negative"
        assert pair.odds_ratio < 1.0

    def test_positive_sign_for_low_q(self):
        x = np.random.default_rng(2).normal(size=(20_000, 3))
        mask = simulate_mask(sim3_spec(0.1), x, seed=3)
        report = pairwise_dependence(MissMask(mask.bits[:, 1:]))
        assert report.pair(0, 1).sign == "positive"

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        bits = (rng.random((500, 4)) < 0.3).astype(np.uint8)
        report = pairwise_dependence(MissMask(bits))
        assert report.pair(2, 1) is report.pair(1, 2)
        assert np.array_equal(report.sign_matrix, report.sign_matrix.T)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(5)
        bits = (rng.random((800, 3)) < 0.4).astype(np.uint8)
        a = pairwise_dependence(MissMask(bits))
        b = pairwise_dependence(MissMask(bits[rng.permutation(800)]))
        for pa, pb in zip(a.pairs, b.pairs):
            assert pa == pb

    def test_constant_column_undetermined(self):
        bits = np.zeros((100, 2), dtype=np.uint8)
        bits[:30, 1] = 1
        report = pairwise_dependence(MissMask(bits))
        assert report.pair(0, 1).flag == "undetermined"
        assert report.pair(0, 1).sign == "undetermined"

    def test_strong_coupling_never_a_quiet_finite_number(self):
        x = np.random.default_rng(6).normal(size=(5000, 10))
        mask = simulate_mask(builtin_structures("mcar_ss_block"), x, seed=7)
        report = pairwise_dependence(MissMask(mask.bits[:, 1:]))
        for p in report.pairs:
            assert p.degenerate  # identical columns leave empty off-cells

    def test_needs_two_rows(self):
        with pytest.raises(ValueError, match="two rows"):
            pairwise_dependence(MissMask([[0, 1]]))

    def test_csv_and_summary_render(self):
        rng = np.random.default_rng(8)
        bits = (rng.random((400, 3)) < 0.4).astype(np.uint8)
        report = pairwise_dependence(MissMask(bits))
        rows = report_csv_rows(report)
        assert rows[0] == ["col_j", "col_k", "odds_ratio", "chi2", "p_value",
                           "sign", "flag"]
        assert len(rows) == 1 + len(report.pairs)
        assert "pairwise dependence" in summary_text(report)


class TestSequentialSignature:
    def test_monotone_dropout_scores_one(self):
        x = np.random.default_rng(0).normal(size=(10_000, 10))
        mask = simulate_mask(builtin_structures("mcar_ss_seq"), x, seed=1)
        sig = sequential_signature(mask, range(10))
        assert sig.monotone_fraction == 1.0
        assert sig.forward_only

    def test_all_observed_vacuous(self):
        sig = sequential_signature(MissMask(np.zeros((50, 4), dtype=np.uint8)),
                                   range(4))
        assert sig.monotone_fraction == 1.0
        assert sig.forward_only

    def test_symmetric_block_not_forward_only(self):
        x = np.random.default_rng(2).normal(size=(5000, 10))
        mask = simulate_mask(builtin_structures("mcar_ss_block"), x, seed=3)
        sig = sequential_signature(MissMask(mask.bits[:, 1:]), range(9))
        assert not sig.forward_only

    def test_fraction_counts_suffix_rows(self):
        bits = np.array([[0, 0, 1], [0, 1, 0], [1, 1, 1], [0, 0, 0]],
                        dtype=np.uint8)
        sig = sequential_signature(MissMask(bits), range(3))
        assert sig.monotone_fraction == 0.75

    def test_bad_ordering_rejected(self):
        with pytest.raises(ValueError, match="permutation"):
            sequential_signature(MissMask(np.zeros((3, 2), dtype=np.uint8)), (0, 0))


def _masked_matrix(spec, n, seed):
    x = np.random.default_rng(seed).normal(size=(n, spec.p))
    mask = simulate_mask(spec, x, seed=seed + 1)
    return DataMatrix(x.copy(), mask, tuple(f"X{j+1}" for j in range(spec.p)))


class TestAudit:
    def test_unstructured_verdict_rate(self):
        spec = builtin_structures("mcar_u_1", p=5)
        verdicts = []
        for seed in range(200):
            d = _masked_matrix(spec, 1000, 10_000 + 7 * seed)
            verdicts.append(mcar_structure_audit(d).verdict)
        share = verdicts.count(VERDICT_UNSTRUCTURED) / len(verdicts)
        assert share >= 0.95

    def test_indicator_structure_detected(self):
        d = _masked_matrix(builtin_structures("mcar_ws_seq"), 10_000, 42)
        assert mcar_structure_audit(d).verdict == VERDICT_STRUCTURED

    def test_data_dependence_detected(self):
        spec = MechanismSpec(rules=(
            MechanismRule(0, (TableClause.bernoulli(0.0),)),
            MechanismRule(1, (LogisticClause(0.0, ((data_col(0), 2.0),)),)),
            MechanismRule(2, (TableClause.bernoulli(0.2),)),
        ))
        d = _masked_matrix(spec, 10_000, 43)
        report = mcar_structure_audit(d)
        assert report.verdict == VERDICT_DATA
        assert any("shifts observed values" in e for e in report.evidence)
