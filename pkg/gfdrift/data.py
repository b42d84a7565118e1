"""
Seeded synthetic datasets: planar toys and von Mises-Fisher mixtures on spheres.

Every dataset owns one Philox stream keyed by its seed. Gaussian draws are
Box–Muller transforms of 53-bit uniforms so the byte stream of a dataset does
not depend on numpy's normal sampler.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Any, List, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .geometry import Geometry
from .kde import Ensemble

logger = logging.getLogger(__name__)

SWISS_ROLL_T = (1.5 * math.pi, 4.5 * math.pi)
SWISS_ROLL_SCALE = 3.0
MODE_RADIUS_FACTOR = 3.0
UNIT_NORM_TOL = 1e-9


class DatasetKind(str, enum.Enum):
    SWISS_ROLL = "swiss_roll"
    GAUSSIAN_RING = "gaussian_ring"
    TWO_GAUSSIANS = "two_gaussians"
    VMF_MIXTURE = "vmf_mixture"


_FIELDS = {
    DatasetKind.SWISS_ROLL: {"noise"},
    DatasetKind.GAUSSIAN_RING: {"noise", "modes", "radius"},
    DatasetKind.TWO_GAUSSIANS: {"noise", "separation"},
    DatasetKind.VMF_MIXTURE: {"centers", "kappa"},
}


def stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def uniform53(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms on (0, 1) built from the top 53 bits of 64-bit draws."""
    bits = rng.bit_generator.random_raw(shape) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gaussian draws via Box–Muller."""
    shape = tuple(np.atleast_1d(shape))
    count = int(np.prod(shape))
    pairs = (count + 1) // 2
    u1 = uniform53(rng, pairs)
    u2 = uniform53(rng, pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    values = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return values[:count].reshape(shape)


@dataclass(frozen=True)
class DatasetSpec:
    """A synthetic dataset.

    Only the fields belonging to ``kind`` may be set; ``offset`` shifts every
    Euclidean point and is how an offset initial ensemble is described.
    """

    kind: DatasetKind
    n: int
    seed: int = 0
    noise: Optional[float] = None
    modes: Optional[int] = None
    radius: Optional[float] = None
    separation: Optional[float] = None
    centers: Optional[Tuple[Tuple[float, ...], ...]] = None
    kappa: Optional[float] = None
    offset: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", DatasetKind(self.kind))
        except ValueError as exc:
            raise ConfigurationError("unknown dataset kind", {"kind": self.kind}) from exc
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError("dataset needs n >= 1", {"n": self.n})
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer", {"seed": self.seed})
        allowed = _FIELDS[self.kind]
        given = {name for name in ("noise", "modes", "radius", "separation", "centers", "kappa") if getattr(self, name) is not None}
        if given - allowed:
            raise ConfigurationError("fields do not apply to this dataset", {"kind": self.kind.value, "fields": sorted(given - allowed)})

        if "noise" in allowed:
            noise = 0.1 if self.noise is None else float(self.noise)
            if not noise > 0.0:
                raise ConfigurationError("noise must be positive", {"noise": noise})
            object.__setattr__(self, "noise", noise)
        if self.kind is DatasetKind.GAUSSIAN_RING:
            modes = 8 if self.modes is None else self.modes
            radius = 4.0 if self.radius is None else float(self.radius)
            if int(modes) != modes or modes < 1:
                raise ConfigurationError("ring needs modes >= 1", {"modes": modes})
            if not radius > 0.0:
                raise ConfigurationError("ring radius must be positive", {"radius": radius})
            object.__setattr__(self, "modes", int(modes))
            object.__setattr__(self, "radius", radius)
        if self.kind is DatasetKind.TWO_GAUSSIANS:
            separation = 4.0 if self.separation is None else float(self.separation)
            if separation < 0.0:
                raise ConfigurationError("separation must be nonnegative", {"separation": separation})
            object.__setattr__(self, "separation", separation)
        if self.kind is DatasetKind.VMF_MIXTURE:
            self._validate_vmf()
        elif self.offset is not None:
            offset = tuple(float(v) for v in self.offset)
            if len(offset) != 2:
                raise ConfigurationError("offset must be a 2-vector", {"offset": list(offset)})
            object.__setattr__(self, "offset", offset)

    def _validate_vmf(self):
        if self.offset is not None:
            raise ConfigurationError("offset does not apply to spherical data")
        if not self.centers:
            raise ConfigurationError("vMF mixture needs at least one center")
        if self.kappa is None or not float(self.kappa) > 0.0:
            raise ConfigurationError("vMF mixture needs kappa > 0", {"kappa": self.kappa})
        centers = tuple(tuple(float(v) for v in c) for c in self.centers)
        widths = {len(c) for c in centers}
        if len(widths) != 1 or widths.pop() < 2:
            raise ConfigurationError("vMF centers must share one dimension >= 2")
        for i, c in enumerate(centers):
            norm = math.sqrt(sum(v * v for v in c))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise ConfigurationError("vMF centers must be unit-norm", {"center": i, "norm": norm})
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def geometry(self) -> Geometry:
        if self.kind is DatasetKind.VMF_MIXTURE:
            return Geometry.sphere(len(self.centers[0]))
        return Geometry.euclidean(2)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value, "n": self.n, "seed": self.seed}
        for name in sorted(_FIELDS[self.kind]):
            value = getattr(self, name)
            data[name] = [list(c) for c in value] if name == "centers" else value
        if self.offset is not None:
            data["offset"] = list(self.offset)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DatasetSpec":
        if not isinstance(data, Mapping):
            raise ConfigurationError("dataset block must be an object", {"block": data})
        known = {"kind", "n", "seed", "noise", "modes", "radius", "separation", "centers", "kappa", "offset"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError("unknown dataset fields", {"fields": sorted(unknown)})
        if "kind" not in data or "n" not in data:
            raise ConfigurationError("dataset block needs 'kind' and 'n'")
        kwargs = dict(data)
        try:
            if kwargs.get("centers") is not None:
                kwargs["centers"] = tuple(tuple(c) for c in kwargs["centers"])
            if kwargs.get("offset") is not None:
                kwargs["offset"] = tuple(kwargs["offset"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("dataset block has a malformed value", {"reason": str(exc)}) from exc


# samplers


def _swiss_roll(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    low, high = SWISS_ROLL_T
    t = low + (high - low) * uniform53(rng, spec.n)
    spiral = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / SWISS_ROLL_SCALE
    return spiral + spec.noise * standard_normal(rng, (spec.n, 2))


def _ring_centers(modes: int, radius: float) -> np.ndarray:
    angles = 2.0 * math.pi * np.arange(modes) / modes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _two_gaussian_centers(separation: float) -> np.ndarray:
    if separation == 0.0:
        return np.zeros((1, 2))
    half = separation / 2.0
    return np.array([[-half, 0.0], [half, 0.0]])


def _mixture(centers: np.ndarray, noise: float, n: int, rng: np.random.Generator) -> np.ndarray:
    labels = rng.integers(0, centers.shape[0], size=n)
    return centers[labels] + noise * standard_normal(rng, (n, centers.shape[1]))


def _vmf_cosines(kappa: float, dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Wood's rejection sampler for w = μᵀx on S^(dim-1)."""
    m = dim - 1
    b = m / (math.sqrt(4.0 * kappa**2 + m**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(1.0 - x0**2)
    out = np.empty(n)
    for i in range(n):
        while True:
            z = rng.beta(m / 2.0, m / 2.0)
            w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
            u = uniform53(rng, 1)[0]
            if kappa * w + m * math.log(1.0 - x0 * w) - c >= math.log(u):
                out[i] = w
                break
    return out


def sample_vmf(mu: np.ndarray, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from vMF(mu, kappa), renormalized to unit length."""
    mu = np.asarray(mu, dtype=np.float64)
    w = _vmf_cosines(kappa, mu.shape[0], n, rng)
    # tangent direction: a Gaussian with its mu component removed
    g = standard_normal(rng, (n, mu.shape[0]))
    tangent = g - (g @ mu)[:, None] * mu[None, :]
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    points = np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * tangent + w[:, None] * mu[None, :]
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def _vmf_mixture(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    centers = np.asarray(spec.centers)
    labels = rng.integers(0, centers.shape[0], size=spec.n)
    points = np.empty((spec.n, centers.shape[1]))
    for k in range(centers.shape[0]):
        rows = np.flatnonzero(labels == k)
        if rows.size:
            points[rows] = sample_vmf(centers[k], spec.kappa, rows.size, rng)
    return points


def sample(spec: DatasetSpec) -> Ensemble:
    """Draw the dataset; identical specs give bitwise-identical ensembles."""
    rng = stream(spec.seed)
    if spec.kind is DatasetKind.SWISS_ROLL:
        points = _swiss_roll(spec, rng)
    elif spec.kind is DatasetKind.GAUSSIAN_RING:
        points = _mixture(_ring_centers(spec.modes, spec.radius), spec.noise, spec.n, rng)
    elif spec.kind is DatasetKind.TWO_GAUSSIANS:
        points = _mixture(_two_gaussian_centers(spec.separation), spec.noise, spec.n, rng)
    else:
        points = _vmf_mixture(spec, rng)
    if spec.offset is not None:
        points = points + np.asarray(spec.offset)[None, :]
    logger.debug("sampled %d points of %s (seed %d)", spec.n, spec.kind.value, spec.seed)
    return Ensemble(points, spec.geometry)


def recommended_modes(spec: DatasetSpec) -> Tuple[List[List[float]], Optional[float]]:
    """Mode centers and the default assignment radius (3× the noise scale).

    Swiss rolls have no modes; vMF mixtures use the angular scale 1/√κ.
    """
    offset = np.zeros(2) if spec.offset is None else np.asarray(spec.offset)
    if spec.kind is DatasetKind.GAUSSIAN_RING:
        centers = _ring_centers(spec.modes, spec.radius) + offset
        return centers.tolist(), MODE_RADIUS_FACTOR * spec.noise
    if spec.kind is DatasetKind.TWO_GAUSSIANS:
        centers = _two_gaussian_centers(spec.separation) + offset
        return centers.tolist(), MODE_RADIUS_FACTOR * spec.noise
    if spec.kind is DatasetKind.VMF_MIXTURE:
        return [list(c) for c in spec.centers], MODE_RADIUS_FACTOR / math.sqrt(spec.kappa)
    return [], None


def manifest(spec: DatasetSpec) -> dict:
    centers, radius = recommended_modes(spec)
    return {"dataset": spec.to_dict(), "mode_centers": centers, "mode_radius": radius}

