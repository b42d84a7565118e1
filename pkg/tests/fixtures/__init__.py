"""Test fixtures for gfdrift."""

from .instances import (
    ALL_KERNELS,
    CORE_EQUIVALENCE_TOL,
    DIVERGENCES,
    FD_SCORE_TOL,
    GRADIENT_BOUNDS,
    SMOOTH_EUCLIDEAN_KERNELS,
    SPHERICAL_KERNELS,
    SUPERPOSITION_TOL,
    UNIT_NORM_TOL,
    kernel_for,
    random_ensemble,
    random_points,
)

__all__ = [
    'ALL_KERNELS',
    'CORE_EQUIVALENCE_TOL',
    'DIVERGENCES',
    'FD_SCORE_TOL',
    'GRADIENT_BOUNDS',
    'SMOOTH_EUCLIDEAN_KERNELS',
    'SPHERICAL_KERNELS',
    'SUPERPOSITION_TOL',
    'UNIT_NORM_TOL',
    'kernel_for',
    'random_ensemble',
    'random_points',
]
