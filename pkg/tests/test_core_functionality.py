"""Tests for the orchestration layer in reaction_learn/__init__.py."""

import json
from unittest.mock import patch

import numpy as np
import pytest

import reaction_learn.config as config
from reaction_learn import (
    MANIFEST_JSON,
    MEAN_CSV,
    FitReport,
    default_initial_state,
    fit_data,
    integrate_report,
    load_series,
    monomial_labels,
    prune_data,
    render_model,
    score_report,
    simulate_abm,
    to_zero_based,
)
from reaction_learn.abm import AbmConfig
from reaction_learn.eql import TUMOUR_COUPLED_1800
from reaction_learn.helpers import DimensionError, InputError, IOFailure
from reaction_learn.ode_sim import IntegrationConfig, integrate_rk4
from reaction_learn.series import TimeSeries
from reaction_learn.solvers import SolverOptions
from reaction_learn.utils import read_series, write_series


@pytest.fixture(scope="module")
def coupled_report(tmp_path_factory):
    """Coupled fit of the reference tumour trajectory"""
    path = tmp_path_factory.mktemp("data") / MEAN_CSV
    write_series(integrate_rk4(TUMOUR_COUPLED_1800, config.INITIAL_STATE), path)
    return fit_data(path, "coupled")


class TestFitReport:
    """Test the serializable fit report"""

    def test_coupled_fields(self, coupled_report):
        """Test a coupled report carries rates, library and scores"""
        assert coupled_report.mode == "coupled"
        assert coupled_report.dimension == 2
        assert len(coupled_report.library["reactions"]) == 17
        assert len(coupled_report.rates) == 17
        assert coupled_report.excluded == []
        assert set(coupled_report.active) == {j for j, k in enumerate(coupled_report.rates) if k > 0}
        assert coupled_report.monomials is None
        assert len(coupled_report.mse_trajectory) == 2
        assert coupled_report.tool_version == config.__version__

    def test_model_matches_reference(self, coupled_report):
        """Test the reported model is close to the generating model"""
        coefficients = coupled_report.model.coefficients
        reference = TUMOUR_COUPLED_1800.coefficients
        assert np.max(np.abs(coefficients - reference)) < 0.05 * np.max(np.abs(reference))

    def test_save_load(self, coupled_report, tmp_path):
        """Test a saved report loads back equal"""
        path = tmp_path / "fit.json"
        coupled_report.save(path)
        loaded = FitReport.load(path)
        assert loaded == FitReport.from_dict(json.loads(path.read_text()))
        assert loaded.model.allclose(coupled_report.model)
        assert loaded.rates == coupled_report.rates

    def test_unknown_keys_ignored(self, coupled_report):
        """Test extra keys in a report are skipped"""
        data = coupled_report.to_dict() | {"extra": 1}
        assert FitReport.from_dict(data).residual_norm == coupled_report.residual_norm

    def test_malformed(self, tmp_path):
        """Test reports missing fields or not objects are input errors"""
        with pytest.raises(InputError, match="Malformed fit report"):
            FitReport.from_dict({"mode": "coupled"})
        path = tmp_path / "fit.json"
        path.write_text("[]")
        with pytest.raises(InputError, match="JSON object"):
            FitReport.load(path)


class TestOrchestration:
    """Test the data-to-report entry points"""

    def test_load_series_provenance(self, tumour_csv):
        """Test provenance records the subsampled grid"""
        ts, provenance = load_series(tumour_csv, stride=10)
        assert ts.n_points == 181
        assert provenance == {
            "input": str(tumour_csv),
            "n_points": 181,
            "dimension": 2,
            "h": ts.h,
            "stride": 10,
        }

    def test_fit_decoupled(self, tumour_csv):
        """Test the decoupled entry point defaults to lsqr"""
        report = fit_data(tumour_csv, "decoupled")
        assert report.method == "lsqr"
        assert report.library is None
        assert report.monomials == [[1, 0], [2, 0], [0, 1], [0, 2], [1, 1]]

    def test_fit_unknown_mode(self, tumour_csv):
        """Test an unknown mode is an input error"""
        with pytest.raises(InputError, match="Unknown fit mode"):
            fit_data(tumour_csv, "hybrid")

    def test_prune_one_based(self, tumour_csv):
        """Test prune converts 1-based numbers"""
        report = prune_data(tumour_csv, [1, 3], SolverOptions("nnls"))
        assert report.excluded == [0, 2]
        assert report.rates[0] == report.rates[2] == 0.0

    @pytest.mark.parametrize("ids", [[0], [18], [1, 99]])
    def test_to_zero_based_range(self, ids):
        """Test numbers outside 1..size are rejected"""
        with pytest.raises(InputError):
            to_zero_based(ids, 17)

    def test_to_zero_based(self):
        """Test the 1-based to 0-based shift"""
        assert to_zero_based([12, 6, 3], 17) == [11, 5, 2]

    def test_default_initial_state(self):
        """Test the default initial state exists only for two species"""
        assert default_initial_state(2) == config.INITIAL_STATE
        with pytest.raises(InputError):
            default_initial_state(3)

    def test_integrate_report(self, coupled_report):
        """Test integration from an explicit state on a short grid"""
        ts = integrate_report(coupled_report, [0.1, 0.2], IntegrationConfig(t_end=1.0, h=0.1))
        assert ts.n_points == 11
        np.testing.assert_array_equal(ts.values[0], [0.1, 0.2])
        with pytest.raises(DimensionError):
            integrate_report(coupled_report, [0.1], IntegrationConfig(t_end=1.0, h=0.1))

    def test_score_report(self, coupled_report, tumour_series):
        """Test scoring against the training data and a mismatched series"""
        trajectory, final = score_report(coupled_report, tumour_series)
        np.testing.assert_allclose(trajectory, coupled_report.mse_trajectory)
        assert final.shape == (2,)
        with pytest.raises(DimensionError):
            score_report(coupled_report, TimeSeries(0.0, 0.1, np.ones((4, 1))))

    def test_render_model(self):
        """Test models render with x and z symbols"""
        lines = render_model(TUMOUR_COUPLED_1800)
        assert lines[0].startswith("x' = ")
        assert "3.2039*x" in lines[0]
        assert lines[1].startswith("z' = ")

    def test_monomial_labels(self):
        """Test monomial labels for two species"""
        assert monomial_labels([[1, 0], [2, 0], [1, 1]], 2) == ["x", "x^2", "x*z"]


class TestSimulateAbm:
    """Test ensemble output on disk"""

    def test_outputs(self, tmp_path):
        """Test run files, mean and manifest"""
        cfg = AbmConfig.from_dict({"lattice_size": 10, "steps": 5})
        manifest = simulate_abm(cfg, runs=3, base_seed=2, out_dir=tmp_path / "out", workers=1)
        out = tmp_path / "out"
        assert manifest["files"] == ["run_0000.csv", "run_0001.csv", "run_0002.csv"]
        assert manifest["config_hash"] == cfg.config_hash()
        assert json.loads((out / MANIFEST_JSON).read_text()) == manifest
        assert read_series(out / MEAN_CSV).n_points == 6

    @patch("reaction_learn.utils.write_json")
    def test_write_failure(self, mock_write_json, tmp_path):
        """Test a failed manifest write propagates the IO failure"""
        mock_write_json.side_effect = IOFailure("disk full")
        cfg = AbmConfig.from_dict({"lattice_size": 10, "steps": 2})
        with pytest.raises(IOFailure):
            simulate_abm(cfg, runs=1, base_seed=0, out_dir=tmp_path, workers=1)
        assert (tmp_path / MEAN_CSV).exists()
