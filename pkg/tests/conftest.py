"""Shared fixtures for the hullconc test suite"""
import numpy as np
import pytest

from bodies import ExpectedHullOracle
from database import RunStore
from distributions import GaussianModel, UniformBoxModel
from geometry import Polytope, PolytopeGauge


@pytest.fixture
def square():
    return Polytope([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])


@pytest.fixture
def triangle():
    return Polytope([[2.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]])


@pytest.fixture
def interval_gauge():
    return PolytopeGauge(Polytope([[-1.0], [1.0]]))


@pytest.fixture
def square_gauge(square):
    return PolytopeGauge(square)


@pytest.fixture
def triangle_gauge(triangle):
    return PolytopeGauge(triangle)


@pytest.fixture
def gaussian_hull_gauge():
    """Polar gauge of E P_n for a standard plane Gaussian, n = 1000"""
    return ExpectedHullOracle(GaussianModel(np.eye(2)), 1000).gauge()


@pytest.fixture
def gaussian_2d():
    return GaussianModel(np.eye(2))


@pytest.fixture
def gaussian_diag():
    return GaussianModel(np.diag([4.0, 1.0]))


@pytest.fixture
def uniform_1d():
    return UniformBoxModel([1.0])


@pytest.fixture
def uniform_2d():
    return UniformBoxModel([1.0, 1.0])


@pytest.fixture
def store(tmp_path):
    db = RunStore(tmp_path / "runs.duckdb")
    yield db
    db.close()
