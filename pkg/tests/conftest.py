"""Session-wide fixtures for the heavy end-to-end runs.

The large contexts and eigenpair sequences are built once and shared by
every check that needs them; build and solve durations are recorded so the
acceptance layer can report honest runtimes for shared work.
"""

import time

import pytest

from orliczeig.energy import build_context
from orliczeig.fracgrid import QuadConfig, build_basis
from orliczeig.kernels import catalog_kernel, catalog_source
from orliczeig.solver import SolverConfig, solve_sequence

ACCEPT_QUAD = QuadConfig(grading_depth=6)
ACCEPT_SOLVER = SolverConfig(rng_seed=7)

# fixture name -> seconds spent building it
SHARED_TIMINGS = {}


def _timed(key, fn):
    t0 = time.perf_counter()
    out = fn()
    SHARED_TIMINGS[key] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def accept_timings():
    return SHARED_TIMINGS


@pytest.fixture(scope="session")
def ctx16_lin():
    return _timed("ctx16_lin", lambda: build_context(
        catalog_kernel("plap:2"), catalog_source("power:2"),
        build_basis(0.0, 1.0, 16), s=0.5, quad_cfg=ACCEPT_QUAD,
    ))


@pytest.fixture(scope="session")
def ctx32_lin():
    return _timed("ctx32_lin", lambda: build_context(
        catalog_kernel("plap:2"), catalog_source("power:2"),
        build_basis(0.0, 1.0, 32), s=0.5, quad_cfg=ACCEPT_QUAD,
    ))


@pytest.fixture(scope="session")
def ctx32_plap3():
    return _timed("ctx32_plap3", lambda: build_context(
        catalog_kernel("plap:3"), catalog_source("power:3"),
        build_basis(0.0, 1.0, 32), s=0.4, quad_cfg=ACCEPT_QUAD,
    ))


@pytest.fixture(scope="session")
def ctx32_plog2():
    return _timed("ctx32_plog2", lambda: build_context(
        catalog_kernel("mlap:plog:2"), catalog_source("power:2"),
        build_basis(0.0, 1.0, 32), s=0.5, quad_cfg=ACCEPT_QUAD,
    ))


@pytest.fixture(scope="session")
def seq16_lin(ctx16_lin):
    return _timed("seq16_lin", lambda: solve_sequence(
        ctx16_lin, 16, 4, ACCEPT_SOLVER,
    ))


@pytest.fixture(scope="session")
def seq32_plap3(ctx32_plap3):
    return _timed("seq32_plap3", lambda: solve_sequence(
        ctx32_plap3, 32, 4, ACCEPT_SOLVER,
    ))


@pytest.fixture(scope="session")
def seq32_plog2(ctx32_plog2):
    return _timed("seq32_plog2", lambda: solve_sequence(
        ctx32_plog2, 32, 4, ACCEPT_SOLVER,
    ))
