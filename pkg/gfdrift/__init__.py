"""
gfdrift: kernel density gradient flows and the drifting field.

Particles and one-step generators are moved by KDE-level Wasserstein
gradient-flow velocities (forward/reverse KL, χ², MMD and mixtures) or by the
kernel-weighted drifting field, on R^d or the unit sphere.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ConstraintViolationError,
    DegenerateRetractionError,
    GfdriftError,
    InvalidInputError,
    NumericalError,
    UndefinedGradientError,
    UnsupportedConfigurationError,
)
from .geometry import Geometry, GeometryKind, retract, tangent_project
from .kernels import (
    AssumptionReport,
    KernelFamily,
    KernelSpec,
    assumption_report,
    assumption_report_to_json,
    gradient_bound,
    kernel_eval,
    kernel_grad,
    score_weight,
)
from .kde import Ensemble, kde_density, kde_grad, kde_score, log_kde_density, mean_shift_target
from .velocity import (
    DivergenceKind,
    DivergenceSpec,
    FieldContext,
    density_ratio_velocity,
    drifting_field,
    field_batch,
    velocity,
)
from .data import DatasetKind, DatasetSpec, recommended_modes, sample
from .metrics import ModeReport, energy, mmd2_biased, mode_report
from .flow import EnergyConfig, FlowConfig, Trajectory, estimate_energy, run, save_trajectory, step
from .generator import (
    Activation,
    Generator,
    OptimizerSpec,
    TrainConfig,
    TrainResult,
    generate,
    load_checkpoint,
    save_checkpoint,
    train,
    train_step,
)

__all__ = [
    "__version__",
    "GfdriftError",
    "ConfigurationError",
    "UnsupportedConfigurationError",
    "InvalidInputError",
    "ConstraintViolationError",
    "DegenerateRetractionError",
    "UndefinedGradientError",
    "NumericalError",
    "Geometry",
    "GeometryKind",
    "tangent_project",
    "retract",
    "KernelFamily",
    "KernelSpec",
    "AssumptionReport",
    "kernel_eval",
    "kernel_grad",
    "score_weight",
    "gradient_bound",
    "assumption_report",
    "assumption_report_to_json",
    "Ensemble",
    "kde_density",
    "kde_score",
    "kde_grad",
    "log_kde_density",
    "mean_shift_target",
    "DivergenceKind",
    "DivergenceSpec",
    "FieldContext",
    "drifting_field",
    "velocity",
    "field_batch",
    "density_ratio_velocity",
    "DatasetKind",
    "DatasetSpec",
    "sample",
    "recommended_modes",
    "ModeReport",
    "mmd2_biased",
    "mode_report",
    "energy",
    "EnergyConfig",
    "FlowConfig",
    "Trajectory",
    "step",
    "run",
    "estimate_energy",
    "save_trajectory",
    "Activation",
    "Generator",
    "OptimizerSpec",
    "TrainConfig",
    "TrainResult",
    "generate",
    "train_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]
