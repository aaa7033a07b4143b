import numpy as np
import pytest

from reaction_learn.helpers import (
    DegenerateDataError,
    DimensionError,
    Exit,
    InputError,
    InstabilityError,
    IOFailure,
    NonConvergenceError,
    NumericalError,
    SingularMatrixError,
    as_finite_array,
    check_dimension,
    exit_if,
    input_error_if,
)


class TestExit:
    """Test Exit exception class"""

    def test_exit_initialization(self):
        """Test Exit exception initialization"""
        exit_exc = Exit("Test message")

        assert exit_exc.message == "Test message"
        assert exit_exc.code == 1  # default code

    def test_exit_custom_code(self):
        """Test Exit exception with custom code"""
        exit_exc = Exit("Custom message", code=42)

        assert exit_exc.message == "Custom message"
        assert exit_exc.code == 42

    @pytest.mark.parametrize(
        "exc,code",
        [
            (InputError("bad"), 2),
            (DimensionError("bad"), 2),
            (DegenerateDataError("bad"), 2),
            (IOFailure("bad"), 3),
            (NumericalError("bad"), 4),
            (SingularMatrixError("bad", column=3), 4),
            (InstabilityError("bad", time=1.5), 4),
            (NonConvergenceError("bad", state=np.zeros(2)), 4),
        ],
    )
    def test_exit_codes(self, exc, code):
        """Test every domain error carries its stable exit code"""
        assert isinstance(exc, Exit)
        assert exc.code == code

    def test_numerical_errors_carry_context(self):
        """Test numerical errors keep the column, time and state they fail at"""
        assert SingularMatrixError("singular", column=3).column == 3
        assert InstabilityError("blow-up", time=2.5).time == 2.5
        state = np.array([0.1, 0.2])
        np.testing.assert_array_equal(NonConvergenceError("stuck", state=state).state, state)


class TestExitIf:
    """Test exit_if helper function"""

    def test_exit_if_false_condition(self):
        """Test exit_if doesn't raise when condition is False"""
        exit_if(False, "Should not raise")
        exit_if(None, "Should not raise")
        exit_if([], "Should not raise")

    def test_exit_if_true_condition(self):
        """Test exit_if raises when condition is True"""
        with pytest.raises(Exit) as exc_info:
            exit_if(True, "Should raise", code=2)

        assert exc_info.value.message == "Should raise"
        assert exc_info.value.code == 2

    def test_input_error_if(self):
        """Test input_error_if raises InputError only when condition holds"""
        input_error_if(False, "fine")
        with pytest.raises(InputError, match="broken"):
            input_error_if(True, "broken")


class TestArrayChecks:
    """Test dimension and finiteness checks"""

    def test_check_dimension_match(self):
        """Test matching dimensions pass silently"""
        check_dimension(2, 2, "state")

    def test_check_dimension_mismatch(self):
        """Test mismatched dimensions name the checked quantity"""
        with pytest.raises(DimensionError, match="state: expected dimension 2, got 3"):
            check_dimension(3, 2, "state")

    def test_as_finite_array_converts(self):
        """Test lists become float arrays of the requested rank"""
        array = as_finite_array([[1, 2], [3, 4]], "matrix", ndim=2)
        assert array.dtype == float
        assert array.shape == (2, 2)

    def test_as_finite_array_wrong_rank(self):
        """Test a vector is rejected where a matrix is required"""
        with pytest.raises(DimensionError):
            as_finite_array([1.0, 2.0], "matrix", ndim=2)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_as_finite_array_non_finite(self, bad):
        """Test NaN and infinite entries are rejected"""
        with pytest.raises(InputError, match="finite"):
            as_finite_array([1.0, bad], "vector", ndim=1)
