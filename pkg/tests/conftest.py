import logging

import numpy as np
import pytest

from dynamics import CrankNicolsonStepper
from logging_config import ROOT_LOGGER_NAME
from mesh_fem import (
    build_actuators,
    build_mesh,
    build_operators,
    interpolate,
    benchmark_coefficients,
    benchmark_initial_state,
    zero_coefficients,
)
from norms import build_norm_context
from ocp import build_ocp_instance
from optimizer import OptimizerOptions
from rhc import RhcConfig

SMALL_DT = 5e-3
SMALL_STEPS = 8


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def mesh4():
    return build_mesh(4)


@pytest.fixture
def bench_ops4(mesh4):
    return build_operators(mesh4, 0.1, benchmark_coefficients())


@pytest.fixture
def heat_ops4(mesh4):
    return build_operators(mesh4, 0.1, zero_coefficients())


@pytest.fixture
def two_actuators(mesh4):
    return build_actuators(mesh4, [(0.3, 0.3), (0.7, 0.6)])


@pytest.fixture
def y0_mesh4(mesh4):
    return interpolate(mesh4, benchmark_initial_state)


@pytest.fixture
def small_instance(bench_ops4, two_actuators, y0_mesh4):
    """n=4 mesh, 8 steps of dt=5e-3, two actuators"""
    stepper = CrankNicolsonStepper(bench_ops4, SMALL_DT)
    return build_ocp_instance(
        0.0, SMALL_STEPS * SMALL_DT, y0_mesh4, 5e-4, bench_ops4, two_actuators, stepper,
    )


@pytest.fixture
def norm_ctx16():
    return build_norm_context(build_operators(build_mesh(16), 0.1, benchmark_coefficients()))


@pytest.fixture
def tiny_config():
    """Three short windows on a coarse mesh"""
    return RhcConfig(
        name="tiny",
        mode="switching",
        dt=0.05,
        horizon_T=0.2,
        delta=0.1,
        t_infinity=0.3,
        n_cells=4,
        actuator_count=4,
        optimizer=OptimizerOptions(max_iters=25, tol=1e-6),
    )


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop handlers the CLI installs so later tests do not write to closed streams"""
    yield
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.propagate = True
