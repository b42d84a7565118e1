"""
Ambient spaces: Euclidean R^d and the unit sphere S^(d-1).

Kernels, scores and integrators are written once against the two
operations defined here (tangent projection and retraction).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError, ConstraintViolationError, DegenerateRetractionError

SPHERE_INPUT_TOL = 1e-9
RETRACTION_MIN_NORM = 1e-12


class GeometryKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"


@dataclass(frozen=True)
class Geometry:
    """Ambient space of an ensemble. ``dim`` is always the ambient dimension."""

    kind: GeometryKind
    dim: int

    def __post_init__(self):
        if not isinstance(self.kind, GeometryKind):
            try:
                object.__setattr__(self, "kind", GeometryKind(self.kind))
            except ValueError as exc:
                raise ConfigurationError("unknown geometry kind", {"kind": self.kind}) from exc
        if int(self.dim) != self.dim:
            raise ConfigurationError("geometry dimension must be an integer", {"dim": self.dim})
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind is GeometryKind.EUCLIDEAN and self.dim < 1:
            raise ConfigurationError("Euclidean dimension must be >= 1", {"dim": self.dim})
        if self.kind is GeometryKind.SPHERE and self.dim < 2:
            raise ConfigurationError("sphere ambient dimension must be >= 2", {"dim": self.dim})

    @classmethod
    def euclidean(cls, dim: int) -> "Geometry":
        return cls(GeometryKind.EUCLIDEAN, dim)

    @classmethod
    def sphere(cls, dim: int) -> "Geometry":
        return cls(GeometryKind.SPHERE, dim)

    @property
    def is_sphere(self) -> bool:
        return self.kind is GeometryKind.SPHERE

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dim": self.dim}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Geometry":
        if not isinstance(data, Mapping):
            raise ConfigurationError("geometry block must be an object", {"block": data})
        try:
            return cls(data["kind"], data["dim"])
        except KeyError as exc:
            raise ConfigurationError("geometry block needs 'kind' and 'dim'", {"missing": exc.args[0]}) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("geometry block has a malformed value", {"reason": str(exc)}) from exc

    def validate_points(self, points: np.ndarray) -> np.ndarray:
        """Check shape, finiteness and (on the sphere) unit norm of an n × d array."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ConstraintViolationError(
                "points do not match geometry dimension",
                {"shape": points.shape, "dim": self.dim},
            )
        if not np.all(np.isfinite(points)):
            row = int(np.argwhere(~np.isfinite(points))[0, 0])
            raise ConstraintViolationError("non-finite point", {"index": row})
        if self.is_sphere:
            deviation = np.abs(np.linalg.norm(points, axis=1) - 1.0)
            bad = np.flatnonzero(deviation > SPHERE_INPUT_TOL)
            if bad.size:
                raise ConstraintViolationError(
                    "point is off the unit sphere",
                    {"index": int(bad[0]), "deviation": float(deviation[bad[0]])},
                )
        return points

    def project_rows(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Row-wise tangent projection, no membership check."""
        if not self.is_sphere:
            return V
        inner = np.sum(X * V, axis=-1, keepdims=True)
        return V - inner * X

    def retract_rows(self, X: np.ndarray, S: np.ndarray) -> np.ndarray:
        """Row-wise retraction, no membership check on X.

        Rows with an exactly zero step are returned untouched, so a particle
        at rest keeps its coordinates bit for bit.
        """
        moved = X + S
        if not self.is_sphere:
            return moved
        norms = np.linalg.norm(moved, axis=-1, keepdims=True)
        small = np.flatnonzero(norms[:, 0] < RETRACTION_MIN_NORM)
        if small.size:
            raise DegenerateRetractionError(
                "retraction through the origin", {"index": int(small[0]), "norm": float(norms[small[0], 0])}
            )
        resting = ~np.any(S, axis=-1)
        return np.where(resting[:, None], X, moved / norms)


def _as_point(geometry: Geometry, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (geometry.dim,):
        raise ConstraintViolationError("point does not match geometry dimension", {"shape": x.shape, "dim": geometry.dim})
    if geometry.is_sphere:
        deviation = abs(float(np.linalg.norm(x)) - 1.0)
        if deviation > SPHERE_INPUT_TOL:
            raise ConstraintViolationError("point is off the unit sphere", {"deviation": deviation})
    return x


def tangent_project(geometry: Geometry, x, v) -> np.ndarray:
    """Project an ambient vector onto the tangent space at ``x`` (identity in R^d)."""
    x = _as_point(geometry, x)
    v = np.asarray(v, dtype=np.float64)
    if not geometry.is_sphere:
        return v.copy()
    return v - float(x @ v) * x


def retract(geometry: Geometry, x, step) -> np.ndarray:
    """Move ``x`` by a tangent step and map the result back onto the space."""
    x = _as_point(geometry, x)
    step = np.asarray(step, dtype=np.float64)
    if not geometry.is_sphere:
        return x + step
    return geometry.retract_rows(x[None, :], step[None, :])[0]
