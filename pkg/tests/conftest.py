"""Shared fixtures: the two paper-scale benchmark solves are expensive
(seconds to half a minute), so they are solved once per session and shared
by every test that needs them."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

import gridpolicy as gp


def _solve_benchmark(problem, xgrid, ugrid):
    engine = gp.DpEngine(problem, xgrid, ugrid, threads=1)
    report = gp.solve(
        problem,
        xgrid,
        ugrid,
        gp.SolverConfig(eps_mu=0.02, eps_x=(0.1, 0.1)),
        engine=engine,
        progress=None,
    )
    return SimpleNamespace(
        problem=problem,
        xgrid=xgrid,
        ugrid=ugrid,
        engine=engine,
        report=report,
    )


@pytest.fixture(scope="session")
def min_time_run():
    """Minimum-time benchmark on the full 0.05/0.01 grids."""
    xgrid = gp.CartesianGrid(
        [gp.AxisSpec(-2.0, 3.5, 0.05), gp.AxisSpec(-1.5, 2.0, 0.05)]
    )
    ugrid = gp.CartesianGrid([gp.AxisSpec(-1.0, 1.0, 0.01)])
    return _solve_benchmark(gp.builtin_min_time_pendulum(), xgrid, ugrid)


@pytest.fixture(scope="session")
def avg_angle_run():
    """Constant-angle benchmark (theta_ref = 0.5) on the 0.02/0.01 grids."""
    xgrid = gp.CartesianGrid(
        [gp.AxisSpec(-1.0, 1.0, 0.02), gp.AxisSpec(-1.0, 1.0, 0.02)]
    )
    ugrid = gp.CartesianGrid([gp.AxisSpec(-1.0, 1.0, 0.01)])
    return _solve_benchmark(gp.builtin_avg_angle_pendulum(0.5), xgrid, ugrid)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
