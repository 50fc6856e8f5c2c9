import numpy as np
import pytest

from misslab.experiments import (
    ExperimentConfig,
    run_experiment,
    run_sim1,
    run_sim2,
    run_sim3,
    _check_label,
)
from misslab.fixtures import sim2_spec, sim3_label
from misslab.mechanisms import SpecificationError, TaxonomyLabel


def tiny_sim2(**kw):
    defaults = dict(
        experiment="sim2", n_replicates=3, seed=9, n=200, m=3,
        q_grid=(0.0, 0.5), maxit_list=(2,),
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestConfigValidation:
    def test_unknown_experiment(self):
        with pytest.raises(ValueError, match="unknown experiment"):
            ExperimentConfig("sim9").validate()

    def test_rho_outside_positive_definite_range(self):
        with pytest.raises(ValueError, match="positive\\s*definite|positive "):
            ExperimentConfig("sim1", rho_list=(0.0, -0.2)).validate()

    def test_q_outside_unit_interval(self):
        with pytest.raises(ValueError, match="outside"):
            ExperimentConfig("sim2", q_grid=(0.5, 1.2)).validate()

    def test_default_grids(self):
        assert ExperimentConfig("sim2").effective_q_grid() == tuple(
            round(0.1 * i, 1) for i in range(11)
        )
        assert ExperimentConfig("sim3").effective_q_grid() == (
            0.0, 0.25, 0.5, 0.75, 1.0,
        )


class TestLabelValidation:
    def test_matching_label_passes(self):
        _check_label(sim2_spec(0.3), sim2_spec(0.3).declared_label, "ctx")

    def test_mismatch_raises(self):
        wrong = TaxonomyLabel("MCAR", "unstructured", "none", "probabilistic")
        with pytest.raises(SpecificationError, match="classifies as"):
            _check_label(sim2_spec(0.3), wrong, "ctx")

    def test_sim3_labels_cover_grid(self):
        for q in (0.0, 0.25, 0.5, 0.75, 1.0):
            assert sim3_label(q).data_dependence == "MNAR"


class TestDeterminismAndIndependence:
    def test_identical_runs_identical_rows(self):
        a = run_sim2(tiny_sim2())
        b = run_sim2(tiny_sim2())
        assert a.results == b.results
        assert a.summary == b.summary
        assert a.manifest == b.manifest

    def test_threading_does_not_change_rows(self):
        a = run_sim2(tiny_sim2(threads=1))
        b = run_sim2(tiny_sim2(threads=2))
        assert a.results == b.results

    def test_replicates_are_independent(self):
        few = run_sim2(tiny_sim2(n_replicates=2)).results
        more = run_sim2(tiny_sim2(n_replicates=4)).results
        few_rows = [r for r in more if r["replicate"] < 2]
        assert few_rows == few

    def test_seed_changes_rows(self):
        a = run_sim2(tiny_sim2()).results
        b = run_sim2(tiny_sim2(seed=10)).results
        assert a != b


class TestSim1Harness:
    def test_small_run_shape_and_paths(self, tmp_path):
        cfg = ExperimentConfig(
            "sim1", n_replicates=2, seed=5, n_test=50, out_dir=tmp_path,
            structures=("complete", "mcar_u_1", "unit_block"),
        )
        out = run_experiment(cfg)
        assert len(out.results) == 2 * 2 * 3 * 2  # rho x reps x structures x test
        assert all(np.isfinite(r["mse"]) for r in out.results)
        assert (tmp_path / "sim1_results.csv").exists()
        assert (tmp_path / "sim1_summary.csv").exists()
        header = (tmp_path / "sim1_results.csv").read_text().splitlines()[0]
        assert header == "rho,structure,test_missingness,replicate,mse"

    def test_complete_structure_error_level(self):
        cfg = ExperimentConfig(
            "sim1", n_replicates=6, seed=6, structures=("complete",),
            rho_list=(0.0,),
        )
        out = run_sim1(cfg)
        med = np.median([r["mse"] for r in out.results])
        assert 3.0 < med < 7.0

    def test_unit_block_complete_test_matches_subsampled_ols(self):
        cfg = ExperimentConfig(
            "sim1", n_replicates=4, seed=8, structures=("unit_block",),
            rho_list=(0.0,),
        )
        out = run_sim1(cfg)
        for r in out.results:
            assert r["mse"] < 12.0  # deletion, no imputation noise


class TestSim3Harness:
    def test_truth_note_recorded_in_manifest(self):
        out = run_sim3(ExperimentConfig(
            "sim3", n_replicates=2, seed=4, n=300, m=3, q_grid=(0.25,),
            sim3_maxit=3,
        ))
        assert "E[X2] = 1 + E[Z] + 2*E[X1] = 1" in out.manifest
        assert "inconsistent" in out.manifest

    def test_sign_column_tracks_q(self):
        out = run_sim3(ExperimentConfig(
            "sim3", n_replicates=3, seed=12, n=4000, m=2,
            q_grid=(0.1, 0.5, 0.9), sim3_maxit=2,
        ))
        by_q = {s["q"]: s for s in out.summary if s["approach"] == "fcs_on_values"}
        assert by_q[0.1]["modal_sign"] == "positive"
        assert by_q[0.5]["modal_sign"] == "none"
        assert by_q[0.9]["modal_sign"] == "negative"

    def test_indicator_route_has_two_approaches(self):
        out = run_sim3(ExperimentConfig(
            "sim3", n_replicates=2, seed=3, n=200, m=2, q_grid=(0.25,),
            sim3_maxit=2,
        ))
        approaches = {r["approach"] for r in out.results}
        assert approaches == {"fcs_on_values", "regress_on_indicator"}


class TestManifest:
    def test_config_echoed(self):
        out = run_sim2(tiny_sim2(seed=77))
        assert "seed: 77" in out.manifest
        assert "experiment: sim2" in out.manifest
        assert "q_grid: 0.0, 0.5" in out.manifest

    def test_output_files_byte_identical_across_runs(self, tmp_path):
        cfg_a = tiny_sim2(out_dir=tmp_path / "a")
        cfg_b = tiny_sim2(out_dir=tmp_path / "b")
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        for name in ("sim2_results.csv", "sim2_summary.csv", "manifest.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()
