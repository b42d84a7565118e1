"""
Unit tests for biased MMD², mode coverage and the energy wrapper.
"""

import math

import numpy as np
import pytest

from gfdrift import (
    DivergenceSpec,
    EnergyConfig,
    Ensemble,
    FieldContext,
    Geometry,
    InvalidInputError,
    KernelSpec,
    energy,
    estimate_energy,
    mmd2_biased,
    mode_report,
)
from gfdrift.data import _ring_centers
from tests.fixtures import random_ensemble


def line(*values):
    return Ensemble(np.array(values, dtype=float)[:, None], Geometry.euclidean(1))


@pytest.mark.unit
class TestMmd:
    """Test cases for the biased MMD² estimator."""

    def test_identical_ensembles(self, planar_pair, gaussian_kernel):
        data, _ = planar_pair
        assert mmd2_biased(gaussian_kernel, data, data) == 0.0

    def test_two_points(self):
        spec = KernelSpec.gaussian(1.0, dim=1)
        assert mmd2_biased(spec, line(0.0), line(1.0)) == pytest.approx(0.786939, abs=1e-6)

    def test_symmetric(self, planar_pair, gaussian_kernel):
        data, generated = planar_pair
        assert mmd2_biased(gaussian_kernel, data, generated) == mmd2_biased(gaussian_kernel, generated, data)

    def test_permutation_invariant(self, planar_pair, gaussian_kernel, rng):
        data, generated = planar_pair
        shuffled = generated.with_points(generated.points[rng.permutation(generated.n)])
        assert mmd2_biased(gaussian_kernel, data, shuffled) == mmd2_biased(gaussian_kernel, data, generated)

    @pytest.mark.parametrize("n", [7, 600])
    def test_reordered_copy_is_exactly_zero(self, gaussian_kernel, rng, n):
        original = random_ensemble(rng, gaussian_kernel.geometry, n)
        reordered = original.with_points(original.points[rng.permutation(n)])
        assert mmd2_biased(gaussian_kernel, original, reordered) == 0.0

    def test_reordered_weighted_copy_is_exactly_zero(self, gaussian_kernel, rng):
        points = rng.standard_normal((9, 2))
        weights = rng.random(9)
        weights /= weights.sum()
        order = rng.permutation(9)
        first = Ensemble(points, gaussian_kernel.geometry, weights=weights)
        second = Ensemble(points[order], gaussian_kernel.geometry, weights=weights[order])
        assert mmd2_biased(gaussian_kernel, first, second) == 0.0

    def test_reordered_spherical_copy_is_exactly_zero(self, spherical_pair, vmf_kernel, rng):
        data, _ = spherical_pair
        reordered = data.with_points(data.points[rng.permutation(data.n)])
        assert mmd2_biased(vmf_kernel, data, reordered) == 0.0

    def test_grows_with_separation(self):
        spec = KernelSpec.gaussian(1.0, dim=1)
        values = [mmd2_biased(spec, line(0.0), line(t)) for t in np.linspace(0.0, 4.0, 17)]
        assert values[0] == 0.0
        assert all(b > a for a, b in zip(values, values[1:]))
        for t, value in zip(np.linspace(0.0, 4.0, 17), values):
            assert value == pytest.approx(2.0 * (1.0 - math.exp(-t * t / 2.0)), abs=1e-12)

    def test_zero_weight_points_are_ignored(self, gaussian_kernel, rng):
        points = rng.standard_normal((2, 2))
        other = random_ensemble(rng, gaussian_kernel.geometry, 8)
        weighted = Ensemble(points, gaussian_kernel.geometry, weights=np.array([1.0, 0.0]))
        single = Ensemble(points[:1], gaussian_kernel.geometry)
        assert mmd2_biased(gaussian_kernel, weighted, other) == pytest.approx(
            mmd2_biased(gaussian_kernel, single, other), rel=1e-12
        )

    def test_far_apart_ensembles(self):
        spec = KernelSpec.gaussian(0.1, dim=1)
        assert mmd2_biased(spec, line(0.0), line(100.0)) == pytest.approx(2.0, rel=1e-15)

    def test_spherical(self, spherical_pair, vmf_kernel):
        data, generated = spherical_pair
        assert mmd2_biased(vmf_kernel, data, generated) > 0.0

    @pytest.mark.error
    def test_geometry_mismatch(self, planar_pair):
        data, generated = planar_pair
        with pytest.raises(InvalidInputError):
            mmd2_biased(KernelSpec.gaussian(1.0, dim=3), data, generated)


@pytest.mark.unit
class TestModeReport:
    """Test cases for mode coverage and precision."""

    CENTERS = _ring_centers(8, 4.0)

    def test_particles_at_every_center(self):
        particles = Ensemble(np.repeat(self.CENTERS, 3, axis=0), Geometry.euclidean(2))
        report = mode_report(particles, self.CENTERS, 0.1)
        assert report.modes_covered == 8
        assert report.per_mode_counts == [3] * 8
        assert report.precision == 1.0

    def test_single_mode(self):
        particles = Ensemble(np.tile(self.CENTERS[2], (10, 1)), Geometry.euclidean(2))
        report = mode_report(particles, self.CENTERS, 0.1)
        assert report.modes_covered == 1
        assert report.per_mode_counts[2] == 10

    def test_far_particles(self):
        particles = Ensemble(np.zeros((5, 2)), Geometry.euclidean(2))
        report = mode_report(particles, self.CENTERS, 2.0)
        assert report.precision == 0.0
        assert report.modes_covered == 0

    def test_partial_precision(self):
        particles = Ensemble(np.array([self.CENTERS[0], self.CENTERS[1], [0.0, 0.0], [0.0, 0.0]]), Geometry.euclidean(2))
        report = mode_report(particles, self.CENTERS, 0.5)
        assert report.precision == 0.5
        assert report.to_dict() == {"modes_covered": 2, "per_mode_counts": [1, 1, 0, 0, 0, 0, 0, 0], "precision": 0.5}

    @pytest.mark.error
    @pytest.mark.parametrize("centers,radius", [([], 0.1), ([[0.0, 0.0, 0.0]], 0.1), ([[0.0, 0.0]], 0.0)])
    def test_invalid_arguments(self, centers, radius):
        particles = Ensemble(np.zeros((2, 2)), Geometry.euclidean(2))
        with pytest.raises(InvalidInputError):
            mode_report(particles, centers, radius)


@pytest.mark.unit
def test_energy_wrapper(planar_pair, gaussian_kernel):
    data, generated = planar_pair
    config = EnergyConfig.grid(DivergenceSpec.chi_squared(), 32, (-6.0, 6.0))
    expected = estimate_energy(FieldContext(gaussian_kernel, data, generated), config)
    assert energy(gaussian_kernel, data, generated, config) == expected
    mmd = EnergyConfig.monte_carlo(DivergenceSpec.mmd(), 10)
    assert energy(gaussian_kernel, data, generated, mmd) == mmd2_biased(gaussian_kernel, generated, data)
