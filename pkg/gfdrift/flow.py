"""
Particle evolution under a KDE-level velocity field.

The generated ensemble is advanced by explicit Euler steps followed by the
geometry's retraction; the data ensemble never moves. Energies are the
KDE-level divergences D_f(q_kde ‖ p_kde) (or biased MMD²).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from tqdm import tqdm

from .data import standard_normal
from .errors import (
    ConfigurationError,
    GfdriftError,
    NumericalError,
    UnsupportedConfigurationError,
)
from .io import save_ensemble_csv, write_series_csv
from .kde import Ensemble, log_kde_density
from .kernels import KernelFamily, gradient_bound
from .metrics import mmd2_biased
from .velocity import DivergenceKind, DivergenceSpec, FieldContext, field_batch

logger = logging.getLogger(__name__)


class EnergyEstimator(str, enum.Enum):
    MONTE_CARLO = "monte_carlo"
    GRID = "grid"


@dataclass(frozen=True)
class EnergyConfig:
    """How to estimate the energy along a flow.

    ``samples`` applies to Monte Carlo, ``resolution`` and ``bounds`` (one
    (low, high) interval shared by every axis) to the grid.
    """

    estimator: EnergyEstimator
    divergence: DivergenceSpec
    samples: Optional[int] = None
    resolution: Optional[int] = None
    bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "estimator", EnergyEstimator(self.estimator))
        except ValueError as exc:
            raise ConfigurationError("unknown energy estimator", {"estimator": self.estimator}) from exc
        if self.estimator is EnergyEstimator.MONTE_CARLO:
            if self.samples is None or int(self.samples) < 1:
                raise ConfigurationError("Monte Carlo energy needs a positive sample count", {"samples": self.samples})
            object.__setattr__(self, "samples", int(self.samples))
        else:
            if self.resolution is None or int(self.resolution) < 2:
                raise ConfigurationError("grid energy needs resolution >= 2", {"resolution": self.resolution})
            if self.bounds is None or len(self.bounds) != 2 or not float(self.bounds[0]) < float(self.bounds[1]):
                raise ConfigurationError("grid energy needs bounds [low, high] with low < high", {"bounds": self.bounds})
            object.__setattr__(self, "resolution", int(self.resolution))
            object.__setattr__(self, "bounds", (float(self.bounds[0]), float(self.bounds[1])))

    @classmethod
    def grid(cls, divergence: DivergenceSpec, resolution: int, bounds: Tuple[float, float]) -> "EnergyConfig":
        return cls(EnergyEstimator.GRID, divergence, resolution=resolution, bounds=bounds)

    @classmethod
    def monte_carlo(cls, divergence: DivergenceSpec, samples: int) -> "EnergyConfig":
        return cls(EnergyEstimator.MONTE_CARLO, divergence, samples=samples)

    def to_dict(self) -> dict:
        data = {"estimator": self.estimator.value, "divergence": self.divergence.to_dict()}
        if self.estimator is EnergyEstimator.MONTE_CARLO:
            data["samples"] = self.samples
        else:
            data.update(resolution=self.resolution, bounds=list(self.bounds))
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], default_divergence: Optional[DivergenceSpec] = None) -> "EnergyConfig":
        if not isinstance(data, Mapping):
            raise ConfigurationError("energy block must be an object", {"block": data})
        if "estimator" not in data:
            raise ConfigurationError("energy block needs an 'estimator'")
        divergence = data.get("divergence")
        divergence = DivergenceSpec.from_dict(divergence) if divergence is not None else default_divergence
        if divergence is None:
            raise ConfigurationError("energy block needs a divergence")
        bounds = data.get("bounds")
        try:
            return cls(
                data["estimator"],
                divergence,
                samples=data.get("samples"),
                resolution=data.get("resolution"),
                bounds=tuple(bounds) if bounds is not None else None,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("energy block has a malformed value", {"reason": str(exc)}) from exc


@dataclass(frozen=True)
class FlowConfig:
    dt: float
    steps: int
    snapshot_every: int = 1
    seed: int = 0
    energy: Optional[EnergyConfig] = None
    max_step: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigurationError("dt must be positive", {"dt": self.dt})
        if int(self.steps) != self.steps or self.steps < 0:
            raise ConfigurationError("steps must be a nonnegative integer", {"steps": self.steps})
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ConfigurationError("snapshot_every must be a positive integer", {"snapshot_every": self.snapshot_every})
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer", {"seed": self.seed})
        if self.max_step is not None and not self.max_step > 0.0:
            raise ConfigurationError("max_step must be positive", {"max_step": self.max_step})

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "steps": self.steps,
            "snapshot_every": self.snapshot_every,
            "seed": self.seed,
            "max_step": self.max_step,
            "energy": self.energy.to_dict() if self.energy else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], seed: int = 0, energy: Optional[EnergyConfig] = None) -> "FlowConfig":
        if not isinstance(data, Mapping):
            raise ConfigurationError("flow block must be an object", {"block": data})
        unknown = set(data) - {"dt", "steps", "snapshot_every", "max_step"}
        if unknown:
            raise ConfigurationError("unknown flow fields", {"fields": sorted(unknown)})
        try:
            return cls(
                dt=float(data["dt"]),
                steps=data["steps"],
                snapshot_every=data.get("snapshot_every", 1),
                seed=seed,
                energy=energy,
                max_step=data.get("max_step"),
            )
        except KeyError as exc:
            raise ConfigurationError("flow block missing field", {"field": exc.args[0]}) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("flow block has a malformed value") from exc


@dataclass
class Trajectory:
    frames: List[Tuple[int, Ensemble]] = field(default_factory=list)
    energy_series: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def final(self) -> Ensemble:
        return self.frames[-1][1]


def check_step_size(config: FlowConfig, ctx: FieldContext) -> None:
    bound = gradient_bound(ctx.kernel)
    if bound is not None and config.dt * bound > 1.0:
        logger.warning("dt * M_k = %.3g exceeds 1 for the %s kernel", config.dt * bound, ctx.kernel.family.value)


def step(ctx: FieldContext, spec: DivergenceSpec, dt: float, max_step: Optional[float] = None) -> FieldContext:
    """One explicit Euler step of every generated particle."""
    if dt < 0.0:
        raise ConfigurationError("dt must be nonnegative", {"dt": dt})
    v = field_batch(spec, ctx, ctx.generated)
    finite = np.all(np.isfinite(v), axis=1)
    if not np.all(finite):
        index = int(np.flatnonzero(~finite)[0])
        raise NumericalError("non-finite velocity", {"index": index, "divergence": spec.kind.value})
    displacement = dt * v
    if max_step is not None:
        norms = np.linalg.norm(displacement, axis=1, keepdims=True)
        scale = np.minimum(1.0, max_step / np.maximum(norms, np.finfo(float).tiny))
        displacement = np.where(norms > max_step, displacement * scale, displacement)
    X = ctx.generated.points
    moved = ctx.kernel.geometry.retract_rows(X, displacement)
    return ctx.with_generated(moved)


def run(ctx: FieldContext, spec: DivergenceSpec, config: FlowConfig, progress: bool = False) -> Trajectory:
    """Evolve the generated ensemble for ``config.steps`` steps.

    Frames are kept at step 0, every ``snapshot_every`` steps and at the last
    step; energies, when configured, are estimated at every frame.
    """
    check_step_size(config, ctx)
    rng = np.random.Generator(np.random.Philox(config.seed))
    trajectory = Trajectory()

    def snapshot(k: int, current: FieldContext):
        trajectory.frames.append((k, current.generated))
        if config.energy is not None:
            value = estimate_energy(current, config.energy, rng)
            trajectory.energy_series.append((k, value))
            logger.debug("step %d energy %.6g", k, value)

    logger.info("flow: %s, %d particles, %d steps, dt=%g", spec.kind.value, ctx.generated.n, config.steps, config.dt)
    snapshot(0, ctx)
    current = ctx
    for k in tqdm(range(1, config.steps + 1), disable=not progress, desc="flow"):
        try:
            current = step(current, spec, config.dt, config.max_step)
        except GfdriftError as exc:
            raise type(exc)(exc.message, {**exc.context, "step": k}) from exc
        if k % config.snapshot_every == 0 or k == config.steps:
            snapshot(k, current)
    if trajectory.energy_series:
        logger.info("flow done: energy %.6g -> %.6g", trajectory.energy_series[0][1], trajectory.energy_series[-1][1])
    return trajectory


# energy estimation


def _pointwise_divergence(spec: DivergenceSpec, log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """Integrand p·f(q/p) in log-space friendly form, elementwise."""
    kind = spec.kind
    if kind in (DivergenceKind.FORWARD_KL, DivergenceKind.DRIFTING):
        return np.exp(log_q) * (log_q - log_p)
    if kind is DivergenceKind.REVERSE_KL:
        return np.exp(log_p) * (log_p - log_q)
    if kind is DivergenceKind.CHI_SQUARED:
        return 0.5 * np.exp(log_p) * np.expm1(log_q - log_p) ** 2
    if kind is DivergenceKind.MIXED:
        reverse = np.exp(log_p) * (log_p - log_q)
        chi = 0.5 * np.exp(log_p) * np.expm1(log_q - log_p) ** 2
        return spec.alpha * reverse + spec.beta * chi
    raise UnsupportedConfigurationError("no f-divergence integrand", {"kind": kind.value})


def _grid_points(dim: int, resolution: int, bounds: Tuple[float, float]) -> np.ndarray:
    low, high = bounds
    width = (high - low) / resolution
    axis = low + (np.arange(resolution) + 0.5) * width
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _grid_energy(ctx: FieldContext, energy: EnergyConfig) -> float:
    geometry = ctx.kernel.geometry
    if geometry.is_sphere or geometry.dim > 2:
        raise UnsupportedConfigurationError(
            "grid energy needs a Euclidean space of dimension <= 2", {"geometry": geometry.to_dict()}
        )
    grid = _grid_points(geometry.dim, energy.resolution, energy.bounds)
    log_p = log_kde_density(ctx.kernel, ctx.data, grid)
    log_q = log_kde_density(ctx.kernel, ctx.generated, grid)
    # normalize both by their grid mass; the cell volume cancels
    log_p = log_p - logsumexp(log_p)
    log_q = log_q - logsumexp(log_q)
    return float(np.sum(_pointwise_divergence(energy.divergence, log_p, log_q)))


def _monte_carlo_energy(ctx: FieldContext, energy: EnergyConfig, rng: np.random.Generator) -> float:
    kernel = ctx.kernel
    if kernel.family is not KernelFamily.GAUSSIAN:
        raise UnsupportedConfigurationError(
            "Monte Carlo energy samples the data KDE exactly for the Gaussian kernel only",
            {"family": kernel.family.value},
        )
    data = ctx.data
    probabilities = np.exp(data.log_weights())
    index = rng.choice(data.n, size=energy.samples, p=probabilities / probabilities.sum())
    samples = data.points[index] + kernel.h * standard_normal(rng, (energy.samples, data.dim))
    log_p = log_kde_density(kernel, data, samples)
    log_q = log_kde_density(kernel, ctx.generated, samples)
    # E_p[f(q/p)]: divide the integrand p·f(q/p) by p
    integrand = _pointwise_divergence(energy.divergence, log_p, log_q) * np.exp(-log_p)
    return float(np.mean(integrand))


def estimate_energy(ctx: FieldContext, energy: EnergyConfig, rng: Optional[np.random.Generator] = None) -> float:
    """Estimate D_f(q_kde ‖ p_kde), or biased MMD² for the MMD divergence."""
    if energy.divergence.kind is DivergenceKind.MMD:
        return mmd2_biased(ctx.kernel, ctx.generated, ctx.data)
    if energy.estimator is EnergyEstimator.GRID:
        return _grid_energy(ctx, energy)
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))
    return _monte_carlo_energy(ctx, energy, rng)


def save_trajectory(trajectory: Trajectory, out_dir) -> List[str]:
    """Write ``frame_{step}.csv`` files and ``energy.csv``; return the file names."""
    out_dir = Path(out_dir)
    written = []
    for k, ensemble in trajectory.frames:
        name = f"frame_{k}.csv"
        save_ensemble_csv(ensemble, out_dir / name)
        written.append(name)
    if trajectory.energy_series:
        write_series_csv(out_dir / "energy.csv", ["step", "energy"], trajectory.energy_series)
        written.append("energy.csv")
    return written
