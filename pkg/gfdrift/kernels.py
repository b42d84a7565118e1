"""
Kernel families, their gradients, uniform gradient bounds and K1-K4 reports.

All kernels are unnormalized. Internally every family is described by two
matrices over query rows X (m × d) and support rows Y (n × d):

  * ``log k(x, y)``
  * a score coefficient ``s(x, y)`` such that
      Euclidean: ∇ₓ log k(x, y) = s · (y − x)
      sphere:    ∇ₓ log k(x, y) = Proj_{TₓS}(s · y)

Every KDE quantity in :mod:`gfdrift.kde` is a softmax-weighted sum built
from these two matrices.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, UndefinedGradientError, UnsupportedConfigurationError
from .geometry import Geometry, _as_point

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
MATERN_ORDERS = (1.5, 2.5)


class KernelFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    MATERN = "matern"
    IMQ = "imq"
    VON_MISES_FISHER = "vmf"
    SPHERICAL_LOG = "spherical_log"


SPHERICAL_FAMILIES = frozenset({KernelFamily.VON_MISES_FISHER, KernelFamily.SPHERICAL_LOG})

# parameter names each family requires, in config order
_PARAMETERS = {
    KernelFamily.GAUSSIAN: ("h",),
    KernelFamily.LAPLACE: ("h",),
    KernelFamily.MATERN: ("nu", "length_scale"),
    KernelFamily.IMQ: ("h", "beta"),
    KernelFamily.VON_MISES_FISHER: ("kappa",),
    KernelFamily.SPHERICAL_LOG: ("c", "a"),
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family, its parameters and the geometry it lives on."""

    family: KernelFamily
    geometry: Geometry
    h: Optional[float] = None
    beta: Optional[float] = None
    nu: Optional[float] = None
    length_scale: Optional[float] = None
    kappa: Optional[float] = None
    c: Optional[float] = None
    a: Optional[float] = None

    def __post_init__(self):
        try:
            family = KernelFamily(self.family)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("unknown kernel family", {"family": self.family}) from exc
        object.__setattr__(self, "family", family)

        for name in _PARAMETERS[family]:
            value = getattr(self, name)
            if value is None:
                raise ConfigurationError("missing kernel parameter", {"family": family.value, "parameter": name})
            try:
                value = float(value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(
                    "kernel parameter must be a number", {"family": family.value, name: value}
                ) from exc
            if not math.isfinite(value) or value <= 0.0:
                raise ConfigurationError(
                    "kernel parameter must be positive", {"family": family.value, name: value}
                )
            object.__setattr__(self, name, value)

        if family is KernelFamily.MATERN and self.nu not in MATERN_ORDERS:
            raise ConfigurationError("Matérn smoothness must be 1.5 or 2.5", {"nu": self.nu})
        if family is KernelFamily.SPHERICAL_LOG and not self.a < 1.0 / (2.0 + self.c):
            raise ConfigurationError(
                "spherical log kernel needs 0 < a < 1/(2 + c)", {"a": self.a, "c": self.c}
            )
        if (family in SPHERICAL_FAMILIES) != self.geometry.is_sphere:
            raise ConfigurationError(
                "kernel family does not match geometry",
                {"family": family.value, "geometry": self.geometry.kind.value},
            )

    # constructors

    @classmethod
    def gaussian(cls, h: float, dim: int) -> "KernelSpec":
        return cls(KernelFamily.GAUSSIAN, Geometry.euclidean(dim), h=h)

    @classmethod
    def laplace(cls, h: float, dim: int) -> "KernelSpec":
        return cls(KernelFamily.LAPLACE, Geometry.euclidean(dim), h=h)

    @classmethod
    def matern(cls, nu: float, length_scale: float, dim: int) -> "KernelSpec":
        return cls(KernelFamily.MATERN, Geometry.euclidean(dim), nu=nu, length_scale=length_scale)

    @classmethod
    def imq(cls, h: float, beta: float, dim: int) -> "KernelSpec":
        return cls(KernelFamily.IMQ, Geometry.euclidean(dim), h=h, beta=beta)

    @classmethod
    def von_mises_fisher(cls, kappa: float, dim: int) -> "KernelSpec":
        return cls(KernelFamily.VON_MISES_FISHER, Geometry.sphere(dim), kappa=kappa)

    @classmethod
    def spherical_log(cls, c: float, a: float, dim: int) -> "KernelSpec":
        return cls(KernelFamily.SPHERICAL_LOG, Geometry.sphere(dim), c=c, a=a)

    @property
    def parameters(self) -> dict:
        return {name: getattr(self, name) for name in _PARAMETERS[self.family]}

    def to_dict(self) -> dict:
        return {"family": self.family.value, **self.parameters, "geometry": self.geometry.to_dict()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], geometry: Optional[Geometry] = None) -> "KernelSpec":
        if not isinstance(data, Mapping):
            raise ConfigurationError("kernel block must be an object", {"block": data})
        data = dict(data)
        if "family" not in data:
            raise ConfigurationError("kernel block needs a 'family'")
        block_geometry = data.pop("geometry", None)
        if block_geometry is not None:
            geometry = Geometry.from_dict(block_geometry)
        if geometry is None:
            raise ConfigurationError("kernel block needs a geometry", {"family": data["family"]})
        family = data.pop("family")
        allowed = {"h", "beta", "nu", "length_scale", "kappa", "c", "a"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError("unknown kernel parameters", {"parameters": sorted(unknown)})
        return cls(family, geometry, **data)


@dataclass(frozen=True)
class AssumptionReport:
    """Verdicts on the kernel regularity assumptions K1-K4."""

    k1_characteristic: bool
    k2_gradient_bound: Optional[float]
    k3_strictly_positive: bool
    k4_c1: bool

    @property
    def overall(self) -> bool:
        return (
            self.k1_characteristic
            and self.k2_gradient_bound is not None
            and self.k3_strictly_positive
            and self.k4_c1
        )

    def to_dict(self) -> dict:
        return {**asdict(self), "overall": self.overall}


# vectorized primitives


def _distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _cosines(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.sum(X[:, None, :] * Y[None, :, :], axis=-1)


def kernel_terms(spec: KernelSpec, X: np.ndarray, Y: np.ndarray, with_scores: bool = True) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Return ``(log k, s)`` matrices of shape (m, n) for query rows X and support rows Y.

    ``s`` is None when ``with_scores`` is False. Raises UndefinedGradientError
    for the Laplace kernel when a query coincides with a support point.
    """
    family = spec.family
    if family is KernelFamily.GAUSSIAN:
        r = _distances(X, Y)
        log_k = -(r * r) / (2.0 * spec.h**2)
        scores = np.full_like(log_k, 1.0 / spec.h**2) if with_scores else None
    elif family is KernelFamily.LAPLACE:
        r = _distances(X, Y)
        log_k = -r / spec.h
        scores = None
        if with_scores:
            if np.any(r == 0.0):
                i, j = np.argwhere(r == 0.0)[0]
                raise UndefinedGradientError(
                    "Laplace kernel has no gradient at r = 0 (K4 fails)",
                    {"query": int(i), "support": int(j)},
                )
            scores = 1.0 / (spec.h * r)
    elif family is KernelFamily.IMQ:
        r = _distances(X, Y)
        q = 1.0 + (r * r) / spec.h**2
        log_k = -spec.beta * np.log(q)
        scores = 2.0 * spec.beta / (spec.h**2 * q) if with_scores else None
    elif family is KernelFamily.MATERN:
        r = _distances(X, Y)
        if spec.nu == 1.5:
            a = math.sqrt(3.0) / spec.length_scale
            ar = a * r
            log_k = np.log1p(ar) - ar
            scores = a * a / (1.0 + ar) if with_scores else None
        else:
            a = math.sqrt(5.0) / spec.length_scale
            ar = a * r
            poly = 1.0 + ar + ar * ar / 3.0
            log_k = np.log(poly) - ar
            scores = (a * a / 3.0) * (1.0 + ar) / poly if with_scores else None
    elif family is KernelFamily.VON_MISES_FISHER:
        z = _cosines(X, Y)
        log_k = spec.kappa * z
        scores = np.full_like(log_k, spec.kappa) if with_scores else None
    else:
        z = _cosines(X, Y)
        gap = 1.0 - z + spec.c
        value = -np.log(spec.a * gap)
        log_k = np.log(value)
        scores = 1.0 / (gap * value) if with_scores else None
    return log_k, scores


def log_kernel_matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return kernel_terms(spec, X, Y, with_scores=False)[0]


def score_weight_matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return kernel_terms(spec, X, Y)[1]


# pointwise operations


def _kernel_point(spec: KernelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.geometry.dim,):
        raise ConfigurationError(
            "point does not match the kernel geometry",
            {"family": spec.family.value, "shape": x.shape, "dim": spec.geometry.dim},
        )
    return _as_point(spec.geometry, x)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value k(x, y) > 0."""
    x = _kernel_point(spec, x)
    y = _kernel_point(spec, y)
    if spec.family is KernelFamily.SPHERICAL_LOG:
        # direct form; exp(log(value)) would cost an ulp
        return float(-math.log(spec.a * (1.0 - float(np.sum(x * y)) + spec.c)))
    log_k, _ = kernel_terms(spec, x[None, :], y[None, :], with_scores=False)
    return float(np.exp(log_k[0, 0]))


def kernel_grad(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of k(·, y) at x; the Riemannian gradient on the sphere."""
    x = _kernel_point(spec, x)
    y = _kernel_point(spec, y)
    log_k, scores = kernel_terms(spec, x[None, :], y[None, :])
    weight = float(np.exp(log_k[0, 0]) * scores[0, 0])
    if spec.geometry.is_sphere:
        return spec.geometry.project_rows(x[None, :], (weight * y)[None, :])[0]
    return weight * (y - x)


def score_weight(spec: KernelSpec, r: float) -> float:
    """Radial score weight w(r) with ∇ₓ log k = −w(r)(x − y)."""
    if spec.family in SPHERICAL_FAMILIES:
        raise UnsupportedConfigurationError("score weight is defined for Euclidean radial kernels", {"family": spec.family.value})
    r = float(r)
    if r < 0.0:
        raise ConfigurationError("distance must be nonnegative", {"r": r})
    radial = replace(spec, geometry=Geometry.euclidean(1))
    _, scores = kernel_terms(radial, np.zeros((1, 1)), np.array([[r]]))
    return float(scores[0, 0])


def gradient_bound(spec: KernelSpec) -> Optional[float]:
    """Analytic M_k = sup ‖∇ₓ k‖, or None when no finite bound holds."""
    family = spec.family
    if family is KernelFamily.GAUSSIAN:
        return 1.0 / (spec.h * math.sqrt(math.e))
    if family is KernelFamily.LAPLACE:
        return 1.0 / spec.h
    if family is KernelFamily.IMQ:
        s = 1.0 / math.sqrt(2.0 * spec.beta + 1.0)
        return (2.0 * spec.beta / spec.h) * s * (1.0 + s * s) ** (-spec.beta - 1.0)
    if family is KernelFamily.MATERN:
        if spec.nu == 1.5:
            return (math.sqrt(3.0) / spec.length_scale) / math.e
        a = math.sqrt(5.0) / spec.length_scale
        return (a / 3.0) * GOLDEN_RATIO**3 * math.exp(-GOLDEN_RATIO)
    if family is KernelFamily.VON_MISES_FISHER:
        return spec.kappa * math.exp(spec.kappa)
    if family is KernelFamily.SPHERICAL_LOG:
        return 1.0 / spec.c
    return None


def assumption_report(spec: KernelSpec) -> AssumptionReport:
    """K1-K4 verdicts.

    K1 is a statement about injectivity of the mean embedding and is reported,
    not computed: every listed family is characteristic. Only the Laplace
    kernel fails K4 (cusp at r = 0).
    """
    return AssumptionReport(
        k1_characteristic=True,
        k2_gradient_bound=gradient_bound(spec),
        k3_strictly_positive=True,
        k4_c1=spec.family is not KernelFamily.LAPLACE,
    )


def assumption_report_to_json(spec: KernelSpec) -> str:
    return json.dumps({"kernel": spec.to_dict(), "report": assumption_report(spec).to_dict()})
