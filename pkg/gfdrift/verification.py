"""
Executable identity checks behind ``gfdrift verify``.

Four checks run over randomly drawn small instances:

  core_equivalence  drifting field vs. scaled forward-KL velocity
  assumptions       K1-K4 reports per kernel
  gradient_bounds   empirical max ‖∇k‖ against the analytic M_k
  score_fd          KDE scores against finite differences of log μ_kde
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .data import standard_normal, stream, uniform53
from .errors import ConfigurationError
from .geometry import Geometry
from .kde import Ensemble, kde_score, log_kde_density
from .kernels import (
    SPHERICAL_FAMILIES,
    KernelFamily,
    KernelSpec,
    assumption_report,
    gradient_bound,
    kernel_grad,
)
from .velocity import DivergenceSpec, FieldContext, field_batch

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
K4_FAILS = "not applicable: K4 fails"
GAUSSIAN_ONLY = "not applicable: identity needs a Gaussian or vMF kernel"

DEFAULT_CHECKS: Dict[str, Dict[str, Any]] = {
    "core_equivalence": {
        "kernels": [
            {"family": "gaussian", "h": 0.3},
            {"family": "gaussian", "h": 1.0},
            {"family": "gaussian", "h": 2.5},
            {"family": "vmf", "kappa": 4.0},
        ],
        "dims": [1, 2, 8],
        "sphere_dims": [3],
        "instances": 50,
        "support": 32,
        "queries": 20,
        "tolerance": 1e-10,
    },
    "assumptions": {
        "kernels": [
            {"family": "gaussian", "h": 1.0},
            {"family": "laplace", "h": 1.0},
            {"family": "matern", "nu": 1.5, "length_scale": 1.0},
            {"family": "matern", "nu": 2.5, "length_scale": 1.0},
            {"family": "imq", "h": 1.0, "beta": 0.5},
            {"family": "vmf", "kappa": 4.0},
            {"family": "spherical_log", "c": 0.5, "a": 0.3},
        ],
    },
    "gradient_bounds": {
        "kernels": [
            {"family": "gaussian", "h": 1.0},
            {"family": "vmf", "kappa": 2.0},
            {"family": "spherical_log", "c": 0.5, "a": 0.3},
        ],
        "pairs": 10000,
        "tolerance": 1e-9,
        "tight_ratio": 0.999,
    },
    "score_fd": {
        "kernels": [
            {"family": "gaussian", "h": 1.0},
            {"family": "matern", "nu": 1.5, "length_scale": 1.0},
            {"family": "matern", "nu": 2.5, "length_scale": 1.0},
            {"family": "imq", "h": 1.0, "beta": 0.5},
            {"family": "vmf", "kappa": 4.0},
            {"family": "spherical_log", "c": 0.5, "a": 0.3},
        ],
        "instances": 100,
        "support": 16,
        "step": 1e-5,
        "tolerance": 1e-6,
    },
}

_DEFAULT_DIM = 2
_DEFAULT_SPHERE_DIM = 3


@dataclass
class CheckResult:
    name: str
    kernel: Dict[str, Any]
    status: str
    max_error: Optional[float] = None
    tolerance: Optional[float] = None
    detail: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kernel": self.kernel,
            "status": self.status,
            "passed": self.passed,
            "max_error": self.max_error,
            "tolerance": self.tolerance,
            **self.detail,
        }


@dataclass
class VerificationReport:
    seed: int
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed, "checks": [r.to_dict() for r in self.results]}


# instance helpers


def _family(block: Mapping[str, Any]) -> KernelFamily:
    try:
        return KernelFamily(block.get("family"))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("unknown kernel family", {"family": block.get("family")}) from exc


def _kernel(block: Mapping[str, Any], dim: int) -> KernelSpec:
    family = _family(block)
    geometry = Geometry.sphere(dim) if family in SPHERICAL_FAMILIES else Geometry.euclidean(dim)
    return KernelSpec.from_dict(block, geometry)


def _default_dim(block: Mapping[str, Any]) -> int:
    if "geometry" in block:
        return Geometry.from_dict(block["geometry"]).dim
    return _DEFAULT_SPHERE_DIM if _family(block) in SPHERICAL_FAMILIES else _DEFAULT_DIM


def _points(rng: np.random.Generator, geometry: Geometry, n: int, shift: float = 0.0) -> np.ndarray:
    points = standard_normal(rng, (n, geometry.dim))
    if geometry.is_sphere:
        points[:, 0] += shift
        return points / np.linalg.norm(points, axis=1, keepdims=True)
    return points + shift


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(a - b, axis=1)
    den = np.maximum(np.linalg.norm(b, axis=1), np.finfo(float).tiny)
    return float(np.max(num / den))


# checks


def check_core_equivalence(cfg: Mapping[str, Any], rng: np.random.Generator) -> List[CheckResult]:
    results = []
    for block in cfg["kernels"]:
        family = _family(block)
        if family is KernelFamily.LAPLACE:
            results.append(CheckResult("core_equivalence", dict(block), K4_FAILS))
            continue
        if family not in (KernelFamily.GAUSSIAN, KernelFamily.VON_MISES_FISHER):
            results.append(CheckResult("core_equivalence", dict(block), GAUSSIAN_ONLY))
            continue
        dims = cfg.get("sphere_dims", [_DEFAULT_SPHERE_DIM]) if family in SPHERICAL_FAMILIES else cfg.get("dims", [_DEFAULT_DIM])
        worst = 0.0
        for dim in dims:
            kernel = _kernel(block, dim)
            factor = kernel.h**2 if family is KernelFamily.GAUSSIAN else 1.0 / kernel.kappa
            for _ in range(int(cfg.get("instances", 50))):
                data = Ensemble(_points(rng, kernel.geometry, cfg.get("support", 32)), kernel.geometry)
                generated = Ensemble(_points(rng, kernel.geometry, cfg.get("support", 32), shift=1.0), kernel.geometry)
                queries = Ensemble(_points(rng, kernel.geometry, cfg.get("queries", 20), shift=0.5), kernel.geometry)
                ctx = FieldContext(kernel, data, generated)
                drift = field_batch(DivergenceSpec.drifting(), ctx, queries)
                forward = field_batch(DivergenceSpec.forward_kl(), ctx, queries)
                worst = max(worst, _relative_error(drift, factor * forward))
        tolerance = float(cfg.get("tolerance", 1e-10))
        status = PASS if worst < tolerance else FAIL
        results.append(CheckResult("core_equivalence", dict(block), status, worst, tolerance, {"dims": list(dims)}))
    return results


def check_assumptions(cfg: Mapping[str, Any], rng: np.random.Generator) -> List[CheckResult]:
    results = []
    for block in cfg["kernels"]:
        report = assumption_report(_kernel(block, _default_dim(block)))
        holds = report.k1_characteristic and report.k3_strictly_positive and report.k2_gradient_bound is not None
        results.append(CheckResult("assumptions", dict(block), PASS if holds else FAIL, detail={"report": report.to_dict()}))
    return results


def _pair_sampler(kernel: KernelSpec, rng: np.random.Generator) -> Callable[[], tuple]:
    geometry = kernel.geometry
    if geometry.is_sphere:
        def draw():
            x, y = _points(rng, geometry, 2)
            return x, y
        return draw
    scale = kernel.length_scale if kernel.family is KernelFamily.MATERN else kernel.h

    def draw():
        x = standard_normal(rng, geometry.dim)
        u = standard_normal(rng, geometry.dim)
        r = 4.0 * scale * uniform53(rng, 1)[0]
        return x, x + r * u / np.linalg.norm(u)
    return draw


def check_gradient_bounds(cfg: Mapping[str, Any], rng: np.random.Generator) -> List[CheckResult]:
    results = []
    tolerance = float(cfg.get("tolerance", 1e-9))
    tight_ratio = float(cfg.get("tight_ratio", 0.999))
    for block in cfg["kernels"]:
        kernel = _kernel(block, _default_dim(block))
        bound = gradient_bound(kernel)
        draw = _pair_sampler(kernel, rng)
        largest = 0.0
        for _ in range(int(cfg.get("pairs", 10000))):
            x, y = draw()
            largest = max(largest, float(np.linalg.norm(kernel_grad(kernel, x, y))))
        ok = largest <= bound + tolerance
        detail = {"empirical_max": largest, "bound": bound}
        if kernel.family is KernelFamily.GAUSSIAN:
            detail["tight"] = largest >= tight_ratio * bound
            ok = ok and detail["tight"]
        results.append(CheckResult("gradient_bounds", dict(block), PASS if ok else FAIL, max(largest - bound, 0.0), tolerance, detail))
    return results


def _tangent_basis(x: np.ndarray) -> np.ndarray:
    # rows orthonormal to x
    _, _, vt = np.linalg.svd(x[None, :])
    return vt[1:]


def finite_difference_score(kernel: KernelSpec, support: Ensemble, x: np.ndarray, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences of log μ_kde along each direction of a tangent basis.

    Returns ``(basis, derivatives)``; Euclidean bases are the coordinate axes.
    On the sphere each direction u is followed along (x + t u)/‖x + t u‖.
    """
    if kernel.geometry.is_sphere:
        basis = _tangent_basis(x)
        plus = x[None, :] + step * basis
        minus = x[None, :] - step * basis
        plus /= np.linalg.norm(plus, axis=1, keepdims=True)
        minus /= np.linalg.norm(minus, axis=1, keepdims=True)
    else:
        basis = np.eye(x.shape[0])
        plus = x[None, :] + step * basis
        minus = x[None, :] - step * basis
    derivatives = (log_kde_density(kernel, support, plus) - log_kde_density(kernel, support, minus)) / (2.0 * step)
    return basis, derivatives


def check_score_fd(cfg: Mapping[str, Any], rng: np.random.Generator) -> List[CheckResult]:
    results = []
    tolerance = float(cfg.get("tolerance", 1e-6))
    step = float(cfg.get("step", 1e-5))
    for block in cfg["kernels"]:
        if _family(block) is KernelFamily.LAPLACE:
            results.append(CheckResult("score_fd", dict(block), K4_FAILS))
            continue
        kernel = _kernel(block, _default_dim(block))
        worst = 0.0
        for _ in range(int(cfg.get("instances", 100))):
            support = Ensemble(_points(rng, kernel.geometry, int(cfg.get("support", 16))), kernel.geometry)
            x = _points(rng, kernel.geometry, 1, shift=0.3)[0]
            basis, fd = finite_difference_score(kernel, support, x, step)
            analytic = basis @ kde_score(kernel, support, x)
            worst = max(worst, float(np.max(np.abs(fd - analytic))))
        results.append(CheckResult("score_fd", dict(block), PASS if worst <= tolerance else FAIL, worst, tolerance))
    return results


CHECKS = {
    "core_equivalence": check_core_equivalence,
    "assumptions": check_assumptions,
    "gradient_bounds": check_gradient_bounds,
    "score_fd": check_score_fd,
}


_COUNT_FIELDS = ("instances", "pairs", "support", "queries")
_REAL_FIELDS = ("tolerance", "step", "tight_ratio")
_DIM_FIELDS = ("dims", "sphere_dims")


def _check_settings(name: str, overrides: Any) -> Dict[str, Any]:
    """Defaults merged with the configured overrides, with numeric fields cast."""
    if not isinstance(overrides, Mapping):
        raise ConfigurationError("check settings must be an object", {"check": name})
    cfg = {**DEFAULT_CHECKS[name], **overrides}
    kernels = cfg.get("kernels")
    if not isinstance(kernels, list) or not kernels:
        raise ConfigurationError("check needs a non-empty kernel list", {"check": name})
    for block in kernels:
        if not isinstance(block, Mapping):
            raise ConfigurationError("kernel entries must be objects", {"check": name, "entry": block})
    try:
        for key in _COUNT_FIELDS:
            if key in cfg:
                cfg[key] = int(cfg[key])
        for key in _REAL_FIELDS:
            if key in cfg:
                cfg[key] = float(cfg[key])
        for key in _DIM_FIELDS:
            if key in cfg:
                cfg[key] = [int(d) for d in cfg[key]]
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("check has a malformed value", {"check": name, "reason": str(exc)}) from exc
    small = [key for key in _COUNT_FIELDS if key in cfg and cfg[key] < 1]
    if small:
        raise ConfigurationError("counts must be positive", {"check": name, "fields": small})
    return cfg


def run_checks(checks: Optional[Mapping[str, Any]] = None, seed: int = 0) -> VerificationReport:
    """Run the configured checks (all four with defaults when ``checks`` is None)."""
    checks = DEFAULT_CHECKS if checks is None else checks
    if not isinstance(checks, Mapping):
        raise ConfigurationError("checks section must be an object")
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ConfigurationError("unknown checks", {"checks": sorted(unknown)})
    report = VerificationReport(seed)
    rng = stream(seed)
    for name, fn in CHECKS.items():
        if name not in checks:
            continue
        cfg = _check_settings(name, checks[name])
        for result in fn(cfg, rng):
            log = logger.info if result.passed else logger.warning
            log("%s %s: %s", name, result.kernel.get("family"), result.status)
            report.results.append(result)
    return report
