import numpy as np
import pytest

from reaction_learn.helpers import DimensionError, InputError
from reaction_learn.series import Ensemble, TimeSeries


class TestTimeSeries:
    """Test the uniform-grid time series type"""

    def test_grid(self):
        """Test times, end time and shape accessors"""
        ts = TimeSeries(1.0, 0.5, np.zeros((5, 2)))
        np.testing.assert_allclose(ts.times, [1.0, 1.5, 2.0, 2.5, 3.0])
        assert ts.t_end == 3.0
        assert (ts.n_points, ts.dimension) == (5, 2)

    def test_values_are_copied_and_read_only(self):
        """Test the stored array is detached from the caller's array"""
        values = np.ones((3, 1))
        ts = TimeSeries(0.0, 1.0, values)
        values[0, 0] = 7.0
        assert ts.values[0, 0] == 1.0
        with pytest.raises(ValueError):
            ts.values[0, 0] = 2.0

    @pytest.mark.parametrize("h", [0.0, -1.0, np.nan])
    def test_bad_step(self, h):
        """Test non-positive steps are rejected"""
        with pytest.raises(InputError):
            TimeSeries(0.0, h, np.zeros((3, 1)))

    def test_empty_rejected(self):
        """Test at least one point and one component"""
        with pytest.raises(DimensionError):
            TimeSeries(0.0, 1.0, np.zeros((0, 2)))
        with pytest.raises(DimensionError):
            TimeSeries(0.0, 1.0, np.zeros(3))

    def test_require_points(self):
        """Test the minimum-length guard"""
        ts = TimeSeries(0.0, 1.0, np.zeros((2, 1)))
        with pytest.raises(InputError, match="at least 3"):
            ts.require_points(3, "Finite differences")


class TestEnsemble:
    """Test ensembles of runs on a shared grid"""

    def test_mean_of_constant_runs(self):
        """Test two constant runs at 0 and 2 average to 1"""
        runs = (
            TimeSeries(0.0, 0.1, np.zeros((4, 2))),
            TimeSeries(0.0, 0.1, np.full((4, 2), 2.0)),
        )
        mean = Ensemble(runs).mean()
        np.testing.assert_array_equal(mean.values, np.ones((4, 2)))
        assert mean.same_grid(runs[0])

    def test_single_run_copy(self):
        """Test the mean of one run is that run"""
        run = TimeSeries(0.0, 0.1, np.arange(6.0).reshape(3, 2))
        ensemble = Ensemble((run,))
        assert ensemble.mean().allclose(run, atol=0)
        np.testing.assert_array_equal(ensemble.standard_error(), np.zeros((3, 2)))

    def test_standard_error(self):
        """Test the standard error uses the sample deviation"""
        runs = tuple(TimeSeries(0.0, 1.0, np.full((2, 1), v)) for v in (1.0, 3.0))
        np.testing.assert_allclose(Ensemble(runs).standard_error(), np.ones((2, 1)))

    def test_mismatched_grids(self):
        """Test runs on different grids are rejected"""
        with pytest.raises(InputError, match="differs"):
            Ensemble(
                (
                    TimeSeries(0.0, 0.1, np.zeros((4, 1))),
                    TimeSeries(0.0, 0.2, np.zeros((4, 1))),
                )
            )

    def test_empty_rejected(self):
        """Test an ensemble needs at least one run"""
        with pytest.raises(InputError):
            Ensemble(())
