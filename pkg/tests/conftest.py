"""Pytest configuration and fixtures."""

import numpy as np
import pytest

import reaction_learn.config as config
from reaction_learn.eql import TUMOUR_COUPLED_1800
from reaction_learn.ode_sim import IntegrationConfig, integrate_rk4
from reaction_learn.reactions import enumerate_library
from reaction_learn.utils import write_series


@pytest.fixture(autouse=True)
def reset_config():
    """Reset config flags before and after each test."""
    original_json_output = config.JSON_OUTPUT
    original_log_level = config.LOG_LEVEL
    original_raise_exceptions = config.RAISE_EXCEPTIONS

    # Reset to defaults
    config.JSON_OUTPUT = False
    config.LOG_LEVEL = "info"
    config.RAISE_EXCEPTIONS = False

    yield

    # Restore original values
    config.JSON_OUTPUT = original_json_output
    config.LOG_LEVEL = original_log_level
    config.RAISE_EXCEPTIONS = original_raise_exceptions


@pytest.fixture
def rng():
    """Seeded generator so random property checks are reproducible."""
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def lib2():
    return enumerate_library(2)


@pytest.fixture(scope="session")
def tumour_series():
    """Tumour/healthy densities integrated from the 1800-point coupled model."""
    return integrate_rk4(TUMOUR_COUPLED_1800, config.INITIAL_STATE, IntegrationConfig())


@pytest.fixture
def tumour_csv(tmp_path, tumour_series):
    path = tmp_path / "mean.csv"
    write_series(tumour_series, path)
    return path
