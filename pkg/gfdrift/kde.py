"""
Sample-based kernel density estimates.

Densities, scores and mean-shift targets are all computed from the same
softmax weights over log-kernel values, so far-field queries whose kernel
values underflow still get a well-defined score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .config import map_row_blocks
from .errors import InvalidInputError
from .geometry import Geometry, _as_point
from .kernels import KernelSpec, kernel_terms

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Ensemble:
    """n points in R^d or on S^(d-1), optionally weighted."""

    points: np.ndarray
    geometry: Geometry
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1:
            raise InvalidInputError("ensemble needs at least one point", {"shape": points.shape})
        points = self.geometry.validate_points(points)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        if self.weights is not None:
            weights = np.array(self.weights, dtype=np.float64)
            if weights.shape != (points.shape[0],):
                raise InvalidInputError("weights must have one entry per point", {"shape": weights.shape})
            if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
                raise InvalidInputError("weights must be finite and nonnegative")
            if abs(float(weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
                raise InvalidInputError("weights must sum to 1", {"sum": float(weights.sum())})
            weights.setflags(write=False)
            object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def log_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.n, -np.log(self.n))
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def with_points(self, points: np.ndarray) -> "Ensemble":
        return Ensemble(points, self.geometry, self.weights)

    def same_points(self, other: "Ensemble") -> bool:
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))


def require_geometry(spec: KernelSpec, *ensembles: Ensemble) -> None:
    for ensemble in ensembles:
        if ensemble.geometry != spec.geometry:
            raise InvalidInputError(
                "ensemble geometry does not match kernel geometry",
                {"ensemble": ensemble.geometry.to_dict(), "kernel": spec.geometry.to_dict()},
            )


# batched primitives over query rows


def softmax_terms(spec: KernelSpec, support: Ensemble, X: np.ndarray, with_scores: bool = True) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Return ``(log μ_kde(X), softmax weights π, score coefficients s)``."""
    log_k, scores = kernel_terms(spec, X, support.points, with_scores=with_scores)
    log_terms = log_k + support.log_weights()[None, :]
    log_density = logsumexp(log_terms, axis=1)
    weights = np.exp(log_terms - log_density[:, None])
    return log_density, weights, scores


def log_kde_density(spec: KernelSpec, support: Ensemble, X: np.ndarray) -> np.ndarray:
    """log μ_kde at each query row."""
    require_geometry(spec, support)
    X = np.asarray(X, dtype=np.float64)

    def block(rows):
        log_k, _ = kernel_terms(spec, rows, support.points, with_scores=False)
        return logsumexp(log_k + support.log_weights()[None, :], axis=1)

    return map_row_blocks(block, X)


def _weighted_rows(weights: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Σ_j weights[i, j] · Y[j], reduced over a contiguous last axis so each
    # row's result is independent of how many rows share the call
    return np.sum(weights[:, None, :] * Y.T[None, :, :], axis=-1)


def score_rows(spec: KernelSpec, support: Ensemble, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(log μ_kde(X), ∇ log μ_kde(X))`` for a block of query rows."""
    log_density, weights, scores = softmax_terms(spec, support, X)
    coefficients = weights * scores
    pulled = _weighted_rows(coefficients, support.points)
    if spec.geometry.is_sphere:
        return log_density, spec.geometry.project_rows(X, pulled)
    return log_density, pulled - np.sum(coefficients, axis=1)[:, None] * X


def mean_shift_rows(spec: KernelSpec, support: Ensemble, X: np.ndarray) -> np.ndarray:
    _, weights, _ = softmax_terms(spec, support, X, with_scores=False)
    return _weighted_rows(weights, support.points)


# pointwise operations


def _query(spec: KernelSpec, support: Ensemble, x) -> np.ndarray:
    require_geometry(spec, support)
    return _as_point(spec.geometry, x)[None, :]


def kde_density(spec: KernelSpec, support: Ensemble, x) -> float:
    """μ_kde(x) = Σ wᵢ k(x, yᵢ), strictly positive."""
    X = _query(spec, support, x)
    return float(np.exp(log_kde_density(spec, support, X)[0]))


def kde_score(spec: KernelSpec, support: Ensemble, x) -> np.ndarray:
    """∇ log μ_kde(x); tangent at x on the sphere."""
    X = _query(spec, support, x)
    return score_rows(spec, support, X)[1][0]


def kde_grad(spec: KernelSpec, support: Ensemble, x) -> np.ndarray:
    """∇ μ_kde(x) = μ_kde(x) · ∇ log μ_kde(x)."""
    X = _query(spec, support, x)
    log_density, score = score_rows(spec, support, X)
    return np.exp(log_density[0]) * score[0]


def mean_shift_target(spec: KernelSpec, support: Ensemble, x) -> np.ndarray:
    """Kernel-weighted conditional mean E[y | x]."""
    X = _query(spec, support, x)
    return mean_shift_rows(spec, support, X)[0]
