"""
Pytest configuration and fixtures for gfdrift tests.
"""
import pytest
import tempfile
from pathlib import Path

import numpy as np

from gfdrift import Ensemble, Geometry, KernelSpec
from gfdrift.config import THREADS_ENV


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def rng():
    """Seeded generator; every test sees the same stream."""
    return np.random.Generator(np.random.Philox(20240601))


@pytest.fixture
def plane():
    return Geometry.euclidean(2)


@pytest.fixture
def sphere():
    return Geometry.sphere(3)


@pytest.fixture
def gaussian_kernel():
    return KernelSpec.gaussian(1.0, dim=2)


@pytest.fixture
def vmf_kernel():
    return KernelSpec.von_mises_fisher(4.0, dim=3)


@pytest.fixture
def planar_pair(rng, plane):
    """A data ensemble and a shifted generated ensemble in the plane."""
    data = Ensemble(rng.standard_normal((32, 2)), plane)
    generated = Ensemble(rng.standard_normal((32, 2)) + 1.0, plane)
    return data, generated


@pytest.fixture
def spherical_pair(rng, sphere):
    def draw(n, shift):
        points = rng.standard_normal((n, 3))
        points[:, 0] += shift
        return points / np.linalg.norm(points, axis=1, keepdims=True)

    return Ensemble(draw(32, 0.0), sphere), Ensemble(draw(32, 1.5), sphere)


@pytest.fixture
def single_thread(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
