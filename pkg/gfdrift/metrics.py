"""
Evaluation metrics: biased MMD², mode coverage and KDE-level divergences.

``mmd2_biased`` is the V-statistic mean_XX + mean_YY − 2·mean_XY with the
diagonals included and without the ½ factor of the MMD functional, so it is
exactly zero on ensembles holding the same weighted points in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .config import map_row_blocks
from .errors import InvalidInputError
from .kde import Ensemble, require_geometry
from .kernels import KernelSpec, kernel_terms


def _canonical(ensemble: Ensemble) -> Tuple[np.ndarray, np.ndarray]:
    """Points and log weights in lexicographic row order."""
    log_w = ensemble.log_weights()
    order = np.lexsort((log_w,) + tuple(ensemble.points.T[::-1]))
    return ensemble.points[order], log_w[order]


def _log_gram_mean(kernel: KernelSpec, A: Tuple[np.ndarray, np.ndarray], B: Tuple[np.ndarray, np.ndarray]) -> float:
    (a_points, log_wa), (b_points, log_wb) = A, B

    def block(rows_and_weights):
        rows, weights = rows_and_weights[:, :-1], rows_and_weights[:, -1]
        log_k, _ = kernel_terms(kernel, rows, b_points, with_scores=False)
        return logsumexp(log_k + log_wb[None, :], axis=1) + weights

    stacked = np.concatenate([a_points, log_wa[:, None]], axis=1)
    return float(logsumexp(map_row_blocks(block, stacked)))


def mmd2_biased(kernel: KernelSpec, X: Ensemble, Y: Ensemble) -> float:
    """Biased (V-statistic) squared MMD between two ensembles, ≥ 0."""
    require_geometry(kernel, X, Y)
    # row order must not change the bits, so a reordered copy gives exactly 0
    X, Y = _canonical(X), _canonical(Y)
    xx = np.exp(_log_gram_mean(kernel, X, X))
    yy = np.exp(_log_gram_mean(kernel, Y, Y))
    # both cross orders, so swapping X and Y only reorders commutative sums
    xy = np.exp(_log_gram_mean(kernel, X, Y))
    yx = np.exp(_log_gram_mean(kernel, Y, X))
    return max(float((xx + yy) - (xy + yx)), 0.0)


@dataclass(frozen=True)
class ModeReport:
    modes_covered: int
    per_mode_counts: List[int] = field(default_factory=list)
    precision: float = 0.0

    def to_dict(self) -> dict:
        return {
            "modes_covered": self.modes_covered,
            "per_mode_counts": list(self.per_mode_counts),
            "precision": self.precision,
        }


def mode_report(particles: Ensemble, centers: Sequence[Sequence[float]], radius: float) -> ModeReport:
    """Assign each particle to its nearest center when within ``radius``."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] == 0:
        raise InvalidInputError("mode report needs at least one center")
    if centers.shape[1] != particles.dim:
        raise InvalidInputError("centers do not match particle dimension", {"centers": centers.shape, "dim": particles.dim})
    if not radius > 0.0:
        raise InvalidInputError("mode radius must be positive", {"radius": radius})
    diff = particles.points[:, None, :] - centers[None, :, :]
    distances = np.sqrt(np.sum(diff * diff, axis=-1))
    nearest = np.argmin(distances, axis=1)
    within = distances[np.arange(particles.n), nearest] <= radius
    counts = np.bincount(nearest[within], minlength=centers.shape[0])
    return ModeReport(
        modes_covered=int(np.count_nonzero(counts)),
        per_mode_counts=[int(c) for c in counts],
        precision=float(np.count_nonzero(within)) / particles.n,
    )


def energy(kernel: KernelSpec, data: Ensemble, generated: Ensemble, energy_config, rng=None) -> float:
    """KDE-level divergence of ``generated`` from ``data``; see :func:`gfdrift.flow.estimate_energy`."""
    from .flow import estimate_energy
    from .velocity import FieldContext

    return estimate_energy(FieldContext(kernel, data, generated), energy_config, rng)
