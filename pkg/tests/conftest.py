"""Shared fixtures: reference meshes are costly enough to build once per session."""

import numpy as np
import pytest

from fbms.discrete_ops import compute_geometry
from fbms.reference import make_reference


@pytest.fixture(scope="session")
def disk16():
    mesh, ref = make_reference("equatorial-disk", 16)
    return mesh, ref, compute_geometry(mesh)


@pytest.fixture(scope="session")
def catenoid64():
    mesh, ref = make_reference("critical-catenoid", 64)
    return mesh, ref, compute_geometry(mesh)


@pytest.fixture(scope="session")
def catenoid128():
    mesh, ref = make_reference("critical-catenoid", 128)
    return mesh, ref, compute_geometry(mesh)


@pytest.fixture(scope="session")
def solved_disk():
    """Perturbed equatorial disk flowed back to a free-boundary minimal disk."""
    from fbms.domains import Ball
    from fbms.solver import SolveConfig, perturbed_disk, solve_free_boundary

    m0 = perturbed_disk(rings=24, amplitude=0.05, seed=0)
    mesh, report = solve_free_boundary(m0, Ball(), SolveConfig())
    return m0, mesh, report


@pytest.fixture
def rng():
    return np.random.default_rng(0)
