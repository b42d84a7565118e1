"""
One-step generator f_θ: ε → x trained with the stop-gradient drift loss.

Each iteration evaluates the velocity v at the generated batch, freezes the
target x + v, and takes one optimizer step on mean ‖f_θ(ε) − target‖². The
network is a small MLP with a hand-written reverse-mode pass.
"""

from __future__ import annotations

import enum
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .data import standard_normal, stream, uniform53
from .errors import ConfigurationError, InvalidInputError, NumericalError
from .geometry import Geometry
from .io import write_json_atomic
from .kde import Ensemble
from .kernels import KernelSpec
from .metrics import mmd2_biased
from .velocity import DivergenceSpec, FieldContext, field_batch

logger = logging.getLogger(__name__)


class Activation(str, enum.Enum):
    TANH = "tanh"
    RELU = "relu"

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.TANH:
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def derivative(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self is Activation.TANH:
            return 1.0 - a * a
        return (z > 0.0).astype(np.float64)


@dataclass(frozen=True, eq=False)
class Generator:
    """MLP with ``layer_sizes[0]`` latent inputs and an identity output layer.

    ``weights[l]`` has shape (fan_in, fan_out) so a batch maps as ``a @ W + b``.
    """

    layer_sizes: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: Activation = Activation.TANH

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigurationError("generator needs at least two positive layer sizes", {"layer_sizes": list(sizes)})
        object.__setattr__(self, "layer_sizes", sizes)
        try:
            object.__setattr__(self, "activation", Activation(self.activation))
        except ValueError as exc:
            raise ConfigurationError("unknown activation", {"activation": self.activation}) from exc
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ConfigurationError("one weight matrix and bias per layer", {"layers": len(sizes) - 1})
        for layer, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[layer], sizes[layer + 1]) or b.shape != (sizes[layer + 1],):
                raise ConfigurationError(
                    "parameter shape does not match layer sizes",
                    {"layer": layer, "weight": w.shape, "bias": b.shape},
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericalError("non-finite generator parameter", {"layer": layer})
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], activation: Activation = Activation.TANH, seed: int = 0) -> "Generator":
        """Weights uniform on ±1/√fan_in, zero biases."""
        rng = stream(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            u = uniform53(rng, (fan_in, fan_out))
            weights.append((2.0 * u - 1.0) / np.sqrt(fan_in))
            biases.append(np.zeros(fan_out))
        return cls(tuple(layer_sizes), tuple(weights), tuple(biases), activation)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int], activation: Activation = Activation.TANH) -> "Generator":
        pairs = list(zip(layer_sizes[:-1], layer_sizes[1:]))
        return cls(tuple(layer_sizes), tuple(np.zeros(p) for p in pairs), tuple(np.zeros(o) for _, o in pairs), activation)

    @property
    def latent_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> "Generator":
        return Generator(self.layer_sizes, tuple(params[0::2]), tuple(params[1::2]), self.activation)

    def forward(self, eps) -> Tuple[np.ndarray, list]:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.ndim != 2 or eps.shape[1] != self.latent_dim:
            raise ConfigurationError("latent batch width does not match the input layer", {"shape": eps.shape, "input": self.latent_dim})
        cache = []
        a = eps
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            out = z if layer == last else self.activation.apply(z)
            cache.append((a, z, out))
            a = out
        return a, cache

    def backward(self, cache: list, upstream: np.ndarray) -> List[np.ndarray]:
        """Gradients of Σ upstream·output with respect to ``parameters()``."""
        grads: List[np.ndarray] = []
        g = upstream
        last = len(self.weights) - 1
        for layer in range(last, -1, -1):
            a, z, out = cache[layer]
            if layer != last:
                g = g * self.activation.derivative(z, out)
            grads.append(np.sum(g, axis=0))
            grads.append(a.T @ g)
            g = g @ self.weights[layer].T
        grads.reverse()
        return grads

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation.value,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Generator":
        if not isinstance(data, Mapping):
            raise ConfigurationError("checkpoint must be an object")
        try:
            return cls(
                tuple(data["layer_sizes"]),
                tuple(np.asarray(w, dtype=np.float64) for w in data["weights"]),
                tuple(np.asarray(b, dtype=np.float64) for b in data["biases"]),
                data.get("activation", Activation.TANH.value),
            )
        except KeyError as exc:
            raise ConfigurationError("checkpoint missing field", {"field": exc.args[0]}) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("checkpoint has malformed parameter arrays", {"reason": str(exc)}) from exc


def generate(gen: Generator, eps) -> np.ndarray:
    return gen.forward(eps)[0]


def save_checkpoint(gen: Generator, path) -> Path:
    return write_json_atomic(path, gen.to_dict())


def load_checkpoint(path) -> Generator:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError("cannot read checkpoint", {"path": str(path), "reason": exc.strerror}) from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError("checkpoint is not valid JSON", {"path": str(path), "line": exc.lineno}) from exc
    return Generator.from_dict(data)


# losses


def fixed_target_loss(gen: Generator, eps, target: np.ndarray) -> float:
    """mean_i ‖f_θ(ε_i) − target_i‖² with the target held constant."""
    diff = generate(gen, eps) - target
    return float(np.mean(np.sum(diff * diff, axis=1)))


def loss_gradients(gen: Generator, eps, target: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    x, cache = gen.forward(eps)
    diff = x - target
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    return loss, gen.backward(cache, 2.0 * diff / x.shape[0])


# optimizers


class OptimizerKind(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class OptimizerSpec:
    kind: OptimizerKind = OptimizerKind.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", OptimizerKind(self.kind))
        except ValueError as exc:
            raise ConfigurationError("unknown optimizer", {"optimizer": self.kind}) from exc
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0.0):
            raise ConfigurationError("Adam needs beta1, beta2 in [0, 1) and eps > 0", {"beta1": self.beta1, "beta2": self.beta2, "eps": self.eps})

    def build(self, learning_rate: float) -> "Optimizer":
        if self.kind is OptimizerKind.SGD:
            return SGD(learning_rate)
        return Adam(learning_rate, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        if self.kind is OptimizerKind.SGD:
            return {"kind": "sgd"}
        return {"kind": "adam", "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    @classmethod
    def from_dict(cls, data) -> "OptimizerSpec":
        if isinstance(data, str):
            return cls(data)
        if not isinstance(data, Mapping):
            raise ConfigurationError("optimizer must be a name or an object", {"optimizer": data})
        unknown = set(data) - {"kind", "beta1", "beta2", "eps"}
        if unknown:
            raise ConfigurationError("unknown optimizer fields", {"fields": sorted(unknown)})
        return cls(**data)


class Optimizer(ABC):
    """Stateful first-order update rule over the flat parameter list."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    @abstractmethod
    def update(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        """New parameters after one step; inputs are left untouched."""


class SGD(Optimizer):
    def update(self, params, grads):
        return [p - self.learning_rate * g for p, g in zip(params, grads)]


class Adam(Optimizer):
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def update(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        updated = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            updated.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
        return updated


# training


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    iterations: int
    learning_rate: float
    divergence: DivergenceSpec
    kernel: KernelSpec
    seed: int = 0
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    metric_every: int = 100

    def __post_init__(self):
        if int(self.batch_size) != self.batch_size or self.batch_size < 2:
            raise ConfigurationError("batch size must be at least 2", {"batch_size": self.batch_size})
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ConfigurationError("iterations must be a nonnegative integer", {"iterations": self.iterations})
        if not self.learning_rate > 0.0:
            raise ConfigurationError("learning rate must be positive", {"learning_rate": self.learning_rate})
        if int(self.metric_every) != self.metric_every or self.metric_every < 1:
            raise ConfigurationError("metric_every must be a positive integer", {"metric_every": self.metric_every})
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer", {"seed": self.seed})
        if self.kernel.geometry.is_sphere:
            raise ConfigurationError("generators produce Euclidean points only", {"kernel": self.kernel.family.value})

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "divergence": self.divergence.to_dict(),
            "kernel": self.kernel.to_dict(),
            "seed": self.seed,
            "optimizer": self.optimizer.to_dict(),
            "metric_every": self.metric_every,
        }


@dataclass
class TrainResult:
    generator: Generator
    loss_history: List[float] = field(default_factory=list)
    metric_history: List[Tuple[int, float]] = field(default_factory=list)
    heldout: Optional[Ensemble] = None


def _check_kernel(gen: Generator, kernel: KernelSpec) -> Geometry:
    geometry = Geometry.euclidean(gen.output_dim)
    if kernel.geometry != geometry:
        raise ConfigurationError(
            "kernel dimension does not match generator output",
            {"kernel": kernel.geometry.to_dict(), "output": gen.output_dim},
        )
    return geometry


def train_step(
    gen: Generator,
    data_batch: Ensemble,
    cfg: TrainConfig,
    eps: np.ndarray,
    optimizer: Optional[Optimizer] = None,
    iteration: int = 0,
) -> Tuple[Generator, float]:
    """One stop-gradient update; returns the new generator and mean ‖v‖²."""
    geometry = _check_kernel(gen, cfg.kernel)
    if data_batch.n < 1:
        raise InvalidInputError("data batch is empty")
    if optimizer is None:
        optimizer = cfg.optimizer.build(cfg.learning_rate)

    x, cache = gen.forward(eps)
    generated = Ensemble(x, geometry)
    ctx = FieldContext(cfg.kernel, data_batch, generated)
    v = field_batch(cfg.divergence, ctx, generated)
    bad = ~np.all(np.isfinite(v), axis=1)
    if np.any(bad):
        raise NumericalError("non-finite velocity", {"iteration": iteration, "index": int(np.flatnonzero(bad)[0])})

    # frozen target; the loss at this point is exactly mean ‖v‖²
    target = x + v
    loss = float(np.mean(np.sum(v * v, axis=1)))
    grads = gen.backward(cache, 2.0 * (x - target) / x.shape[0])
    params = optimizer.update(gen.parameters(), grads)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise NumericalError("non-finite parameters after update", {"iteration": iteration, "loss": loss})
    return gen.with_parameters(params), loss


def _eval_latents(seed: int, count: int, dim: int) -> np.ndarray:
    # a jumped stream, disjoint from the training draws
    rng = np.random.Generator(np.random.Philox(int(seed)).jumped())
    return standard_normal(rng, (count, dim))


def train(
    gen: Generator,
    data: Ensemble,
    cfg: TrainConfig,
    heldout: Optional[Ensemble] = None,
    progress: bool = False,
) -> TrainResult:
    """Run the training loop; MMD² against held-out data every ``metric_every`` iterations."""
    geometry = _check_kernel(gen, cfg.kernel)
    if data.geometry != geometry:
        raise InvalidInputError("data geometry does not match generator output", {"data": data.geometry.to_dict()})
    heldout = data if heldout is None else heldout
    rng = stream(cfg.seed)
    optimizer = cfg.optimizer.build(cfg.learning_rate)
    eval_eps = _eval_latents(cfg.seed, heldout.n, gen.latent_dim)
    result = TrainResult(gen, heldout=heldout)

    def record(iteration: int):
        samples = Ensemble(generate(result.generator, eval_eps), geometry)
        value = mmd2_biased(cfg.kernel, samples, heldout)
        result.metric_history.append((iteration, value))
        logger.debug("iteration %d mmd2 %.6g", iteration, value)

    logger.info("train: %s, batch %d, %d iterations", cfg.divergence.kind.value, cfg.batch_size, cfg.iterations)
    record(0)
    for i in tqdm(range(1, cfg.iterations + 1), disable=not progress, desc="train"):
        index = rng.integers(0, data.n, size=cfg.batch_size)
        batch = Ensemble(data.points[index], geometry)
        eps = standard_normal(rng, (cfg.batch_size, gen.latent_dim))
        result.generator, loss = train_step(result.generator, batch, cfg, eps, optimizer, iteration=i)
        result.loss_history.append(loss)
        if i % cfg.metric_every == 0 or i == cfg.iterations:
            record(i)
    if result.metric_history:
        logger.info("train done: mmd2 %.6g -> %.6g", result.metric_history[0][1], result.metric_history[-1][1])
    return result
