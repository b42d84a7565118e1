"""
Velocity fields of KDE-level Wasserstein gradient flows.

Two independent code paths live here on purpose: :func:`drifting_field`
evaluates the normalized kernel-weighted displacement means directly, while
:func:`velocity` works from KDE scores and log-density ratios. For the
Gaussian kernel the first equals h² times the forward-KL velocity.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from .config import map_row_blocks
from .errors import ConfigurationError, InvalidInputError, UnsupportedConfigurationError
from .geometry import _as_point
from .kde import Ensemble, require_geometry, score_rows
from .kernels import KernelSpec, kernel_terms

logger = logging.getLogger(__name__)

LOG_RATIO_CLAMP = 50.0
MIXTURE_SUM_TOL = 1e-12


class DivergenceKind(str, enum.Enum):
    FORWARD_KL = "forward_kl"
    REVERSE_KL = "reverse_kl"
    CHI_SQUARED = "chi_squared"
    MMD = "mmd"
    MIXED = "mixed"
    DRIFTING = "drifting"


@dataclass(frozen=True)
class DivergenceSpec:
    """Which functional drives the flow. ``Mixed`` is α·ReverseKL + β·χ²."""

    kind: DivergenceKind
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", DivergenceKind(self.kind))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("unknown divergence kind", {"kind": self.kind}) from exc
        if self.kind is DivergenceKind.MIXED:
            if self.alpha is None or self.beta is None:
                raise ConfigurationError("mixed divergence needs alpha and beta")
            try:
                alpha, beta = float(self.alpha), float(self.beta)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError("mixing weights must be numbers", {"alpha": self.alpha, "beta": self.beta}) from exc
            if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
                raise ConfigurationError("mixing weights must lie in (0, 1)", {"alpha": alpha, "beta": beta})
            if abs(alpha + beta - 1.0) > MIXTURE_SUM_TOL:
                raise ConfigurationError("mixing weights must sum to 1", {"alpha": alpha, "beta": beta})
            object.__setattr__(self, "alpha", alpha)
            object.__setattr__(self, "beta", beta)
        elif self.alpha is not None or self.beta is not None:
            raise ConfigurationError("alpha/beta only apply to the mixed divergence", {"kind": self.kind.value})

    @classmethod
    def forward_kl(cls) -> "DivergenceSpec":
        return cls(DivergenceKind.FORWARD_KL)

    @classmethod
    def reverse_kl(cls) -> "DivergenceSpec":
        return cls(DivergenceKind.REVERSE_KL)

    @classmethod
    def chi_squared(cls) -> "DivergenceSpec":
        return cls(DivergenceKind.CHI_SQUARED)

    @classmethod
    def mmd(cls) -> "DivergenceSpec":
        return cls(DivergenceKind.MMD)

    @classmethod
    def drifting(cls) -> "DivergenceSpec":
        return cls(DivergenceKind.DRIFTING)

    @classmethod
    def mixed(cls, alpha: float, beta: float) -> "DivergenceSpec":
        return cls(DivergenceKind.MIXED, alpha, beta)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value}
        if self.kind is DivergenceKind.MIXED:
            data.update(alpha=self.alpha, beta=self.beta)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DivergenceSpec":
        if not isinstance(data, Mapping):
            raise ConfigurationError("divergence block must be an object", {"block": data})
        if "kind" not in data:
            raise ConfigurationError("divergence block needs a 'kind'")
        unknown = set(data) - {"kind", "alpha", "beta"}
        if unknown:
            raise ConfigurationError("unknown divergence fields", {"fields": sorted(unknown)})
        return cls(data["kind"], data.get("alpha"), data.get("beta"))


@dataclass(frozen=True)
class FieldContext:
    """Kernel plus data ensemble p and generated ensemble q."""

    kernel: KernelSpec
    data: Ensemble
    generated: Ensemble

    def __post_init__(self):
        require_geometry(self.kernel, self.data, self.generated)

    def with_generated(self, points: np.ndarray) -> "FieldContext":
        return FieldContext(self.kernel, self.data, self.generated.with_points(points))


# batched field evaluation


def drifting_rows(ctx: FieldContext, X: np.ndarray) -> np.ndarray:
    """V_p⁺ − V_q⁻ at each query row, as two normalized displacement means."""
    geometry = ctx.kernel.geometry

    def displacement_mean(support: Ensemble) -> np.ndarray:
        log_k, _ = kernel_terms(ctx.kernel, X, support.points, with_scores=False)
        log_terms = log_k + support.log_weights()[None, :]
        # a per-row shift cancels between numerator and denominator
        k = np.exp(log_terms - np.max(log_terms, axis=1, keepdims=True))
        displacement = support.points.T[None, :, :] - X[:, :, None]
        numerator = np.sum(k[:, None, :] * displacement, axis=-1)
        return numerator / np.sum(k, axis=1)[:, None]

    field = displacement_mean(ctx.data) - displacement_mean(ctx.generated)
    return geometry.project_rows(X, field)


def field_rows(spec: DivergenceSpec, ctx: FieldContext, X: np.ndarray) -> np.ndarray:
    """Velocity at each query row (no validation)."""
    if spec.kind is DivergenceKind.DRIFTING:
        return drifting_rows(ctx, X)

    log_p, score_p = score_rows(ctx.kernel, ctx.data, X)
    log_q, score_q = score_rows(ctx.kernel, ctx.generated, X)

    if spec.kind is DivergenceKind.MMD:
        return np.exp(log_p)[:, None] * score_p - np.exp(log_q)[:, None] * score_q

    delta = score_p - score_q
    if spec.kind is DivergenceKind.FORWARD_KL:
        return delta

    log_ratio = log_p - log_q
    clamped = np.clip(log_ratio, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
    if logger.isEnabledFor(logging.DEBUG) and np.any(clamped != log_ratio):
        logger.debug("clamped %d density ratios to exp(±%g)", int(np.sum(clamped != log_ratio)), LOG_RATIO_CLAMP)
    if spec.kind is DivergenceKind.REVERSE_KL:
        return np.exp(clamped)[:, None] * delta
    if spec.kind is DivergenceKind.CHI_SQUARED:
        return np.exp(-clamped)[:, None] * delta
    reverse = np.exp(clamped)[:, None] * delta
    chi = np.exp(-clamped)[:, None] * delta
    return spec.alpha * reverse + spec.beta * chi


def _single(ctx: FieldContext, x) -> np.ndarray:
    return _as_point(ctx.kernel.geometry, x)[None, :]


def drifting_field(ctx: FieldContext, x) -> np.ndarray:
    """The kernel-generic drifting field V_p⁺(x) − V_q⁻(x)."""
    return drifting_rows(ctx, _single(ctx, x))[0]


def velocity(spec: DivergenceSpec, ctx: FieldContext, x) -> np.ndarray:
    """KDE-level gradient-flow velocity of ``spec`` at x."""
    return field_rows(spec, ctx, _single(ctx, x))[0]


def field_batch(spec: DivergenceSpec, ctx: FieldContext, queries: Ensemble) -> np.ndarray:
    """Velocity at every query point, n × d, in query order."""
    if queries.geometry != ctx.kernel.geometry:
        raise InvalidInputError("query geometry does not match kernel geometry")
    return map_row_blocks(lambda rows: field_rows(spec, ctx, rows), queries.points)


def density_ratio_velocity(spec: DivergenceSpec, ctx: FieldContext, x) -> np.ndarray:
    """Quotient forms: ∇(p_kde/q_kde) for reverse KL, −∇(q_kde/p_kde) for χ²."""
    X = _single(ctx, x)
    log_p, score_p = score_rows(ctx.kernel, ctx.data, X)
    log_q, score_q = score_rows(ctx.kernel, ctx.generated, X)
    p, q = float(np.exp(log_p[0])), float(np.exp(log_q[0]))
    grad_p, grad_q = p * score_p[0], q * score_q[0]
    if spec.kind is DivergenceKind.REVERSE_KL:
        return (grad_p * q - p * grad_q) / (q * q)
    if spec.kind is DivergenceKind.CHI_SQUARED:
        return -(grad_q * p - q * grad_p) / (p * p)
    raise UnsupportedConfigurationError("quotient form exists for reverse KL and χ² only", {"kind": spec.kind.value})
