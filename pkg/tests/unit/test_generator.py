"""
Unit tests for the one-step generator, its gradients and the training loop.
"""

import json

import numpy as np
import pytest

from gfdrift import (
    Activation,
    ConfigurationError,
    DatasetSpec,
    DivergenceSpec,
    Ensemble,
    FieldContext,
    Generator,
    KernelSpec,
    NumericalError,
    OptimizerSpec,
    TrainConfig,
    field_batch,
    generate,
    load_checkpoint,
    sample,
    save_checkpoint,
    train,
    train_step,
)
from gfdrift.data import standard_normal, stream
from gfdrift.generator import SGD, Adam, Optimizer, fixed_target_loss, loss_gradients


def perturbed(gen, index, position, delta):
    params = [p.copy() for p in gen.parameters()]
    params[index][position] += delta
    return gen.with_parameters(params)


def finite_difference(gen, eps, target, index, position, step=1e-6):
    plus = fixed_target_loss(perturbed(gen, index, position, step), eps, target)
    minus = fixed_target_loss(perturbed(gen, index, position, -step), eps, target)
    return (plus - minus) / (2 * step)


def small_config(**overrides):
    values = dict(
        batch_size=32,
        iterations=20,
        learning_rate=1e-2,
        divergence=DivergenceSpec.mixed(0.5, 0.5),
        kernel=KernelSpec.gaussian(0.5, dim=2),
        seed=5,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def two_gaussians():
    return sample(DatasetSpec("two_gaussians", n=256, seed=1, noise=0.5))


@pytest.mark.unit
class TestGenerator:
    """Test cases for the MLP itself."""

    def test_zero_parameters_give_zero_output(self, rng):
        gen = Generator.zeros([3, 8, 2])
        np.testing.assert_array_equal(generate(gen, rng.standard_normal((5, 3))), np.zeros((5, 2)))

    def test_identity_layer(self, rng):
        gen = Generator((2, 2), (np.eye(2),), (np.zeros(2),))
        eps = rng.standard_normal((6, 2))
        np.testing.assert_array_equal(generate(gen, eps), eps)

    def test_duplicate_latents(self, rng):
        gen = Generator.initialize([2, 16, 16, 2], seed=3)
        eps = np.repeat(rng.standard_normal((1, 2)), 4, axis=0)
        out = generate(gen, eps)
        np.testing.assert_allclose(out, np.repeat(out[:1], 4, axis=0), rtol=1e-14, atol=0)

    def test_initialization(self):
        gen = Generator.initialize([2, 64, 2], seed=7)
        assert gen.latent_dim == 2 and gen.output_dim == 2
        assert np.abs(gen.weights[0]).max() <= 1.0 / np.sqrt(2)
        assert np.abs(gen.weights[1]).max() <= 1.0 / np.sqrt(64)
        assert all(np.all(b == 0.0) for b in gen.biases)
        again = Generator.initialize([2, 64, 2], seed=7)
        for a, b in zip(gen.parameters(), again.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_parameters_are_read_only(self):
        gen = Generator.zeros([2, 2])
        with pytest.raises(ValueError):
            gen.weights[0][0, 0] = 1.0

    @pytest.mark.error
    def test_latent_width_mismatch(self):
        with pytest.raises(ConfigurationError):
            generate(Generator.zeros([3, 2]), np.zeros((4, 2)))

    @pytest.mark.error
    @pytest.mark.parametrize("build", [
        lambda: Generator((2,), (), ()),
        lambda: Generator((2, 2), (np.zeros((3, 2)),), (np.zeros(2),)),
        lambda: Generator((2, 2), (np.eye(2),), (np.zeros(2),), "sigmoid"),
        lambda: Generator((2, 3, 2), (np.zeros((2, 3)),), (np.zeros(3),)),
    ])
    def test_invalid_shapes(self, build):
        with pytest.raises(ConfigurationError):
            build()

    @pytest.mark.error
    def test_non_finite_parameters(self):
        with pytest.raises(NumericalError):
            Generator((2, 2), (np.full((2, 2), np.nan),), (np.zeros(2),))


@pytest.mark.unit
class TestGradients:
    """Test cases for the reverse-mode pass against finite differences."""

    @pytest.mark.parametrize("activation", [Activation.TANH, Activation.RELU])
    def test_sampled_parameters(self, activation, rng):
        gen = Generator.initialize([2, 8, 8, 2], activation=activation, seed=11)
        eps = rng.standard_normal((16, 2))
        target = rng.standard_normal((16, 2))
        _, grads = loss_gradients(gen, eps, target)
        params = gen.parameters()
        for _ in range(20):
            index = int(rng.integers(len(params)))
            position = tuple(int(rng.integers(s)) for s in params[index].shape)
            numeric = finite_difference(gen, eps, target, index, position)
            assert grads[index][position] == pytest.approx(numeric, abs=1e-6)

    def test_full_sweep_on_tiny_net(self, rng):
        gen = Generator.initialize([2, 3, 2], seed=2)
        gen = gen.with_parameters([p + 0.1 * rng.standard_normal(p.shape) for p in gen.parameters()])
        eps = rng.standard_normal((8, 2))
        target = rng.standard_normal((8, 2))
        loss, grads = loss_gradients(gen, eps, target)
        assert loss == pytest.approx(fixed_target_loss(gen, eps, target), rel=1e-15)
        for index, param in enumerate(gen.parameters()):
            assert grads[index].shape == param.shape
            for position in np.ndindex(param.shape):
                numeric = finite_difference(gen, eps, target, index, position)
                assert grads[index][position] == pytest.approx(numeric, abs=1e-6)


@pytest.mark.unit
class TestTrainStep:
    """Test cases for one stop-gradient update."""

    def test_matching_batch_leaves_parameters_unchanged(self, rng):
        gen = Generator.initialize([2, 16, 2], seed=4)
        cfg = small_config(optimizer=OptimizerSpec("sgd"))
        eps = rng.standard_normal((32, 2))
        batch = Ensemble(generate(gen, eps), cfg.kernel.geometry)
        updated, loss = train_step(gen, batch, cfg, eps)
        assert loss == 0.0
        for a, b in zip(gen.parameters(), updated.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_loss_is_mean_squared_velocity(self, rng, two_gaussians):
        gen = Generator.initialize([2, 16, 2], seed=4)
        cfg = small_config()
        eps = rng.standard_normal((32, 2))
        batch = Ensemble(two_gaussians.points[:32], cfg.kernel.geometry)
        generated = Ensemble(generate(gen, eps), cfg.kernel.geometry)
        v = field_batch(cfg.divergence, FieldContext(cfg.kernel, batch, generated), generated)
        _, loss = train_step(gen, batch, cfg, eps)
        assert loss > 0.0
        assert loss == pytest.approx(float(np.mean(np.sum(v * v, axis=1))), rel=1e-15)

    def test_sgd_step_follows_velocity(self, rng, two_gaussians):
        gen = Generator.initialize([2, 16, 2], seed=4)
        cfg = small_config(optimizer=OptimizerSpec("sgd"), learning_rate=1e-3)
        eps = rng.standard_normal((32, 2))
        batch = Ensemble(two_gaussians.points[:32], cfg.kernel.geometry)
        target = generate(gen, eps) + field_batch(
            cfg.divergence, FieldContext(cfg.kernel, batch, Ensemble(generate(gen, eps), cfg.kernel.geometry)),
            Ensemble(generate(gen, eps), cfg.kernel.geometry),
        )
        updated, _ = train_step(gen, batch, cfg, eps)
        assert fixed_target_loss(updated, eps, target) < fixed_target_loss(gen, eps, target)

    @pytest.mark.error
    def test_non_finite_velocity(self, rng, two_gaussians, mocker):
        gen = Generator.initialize([2, 16, 2], seed=4)
        mocker.patch("gfdrift.generator.field_batch", return_value=np.full((32, 2), np.nan))
        batch = Ensemble(two_gaussians.points[:32], two_gaussians.geometry)
        with pytest.raises(NumericalError) as exc_info:
            train_step(gen, batch, small_config(), rng.standard_normal((32, 2)), iteration=17)
        assert exc_info.value.context == {"iteration": 17, "index": 0}

    @pytest.mark.error
    def test_non_finite_parameters_after_update(self, rng, two_gaussians):
        class Exploding(Optimizer):
            def update(self, params, grads):
                return [p * np.inf for p in params]

        gen = Generator.initialize([2, 4, 2], seed=4)
        batch = Ensemble(two_gaussians.points[:32], two_gaussians.geometry)
        with pytest.raises(NumericalError) as exc_info:
            train_step(gen, batch, small_config(), rng.standard_normal((32, 2)), optimizer=Exploding(1.0), iteration=3)
        assert exc_info.value.context["iteration"] == 3

    @pytest.mark.error
    def test_kernel_dimension_mismatch(self, rng, two_gaussians):
        gen = Generator.initialize([2, 4, 3], seed=4)
        batch = Ensemble(two_gaussians.points[:32], two_gaussians.geometry)
        with pytest.raises(ConfigurationError):
            train_step(gen, batch, small_config(), rng.standard_normal((32, 2)))


@pytest.mark.unit
class TestTrain:
    """Test cases for the training loop."""

    def test_zero_iterations(self, two_gaussians):
        gen = Generator.initialize([2, 16, 2], seed=4)
        result = train(gen, two_gaussians, small_config(iterations=0))
        assert result.generator is gen
        assert result.loss_history == []
        assert [k for k, _ in result.metric_history] == [0]

    def test_same_seed_same_history(self, two_gaussians):
        gen = Generator.initialize([2, 16, 2], seed=4)
        first = train(gen, two_gaussians, small_config())
        second = train(gen, two_gaussians, small_config())
        assert first.loss_history == second.loss_history
        assert first.metric_history == second.metric_history
        assert len(first.loss_history) == 20
        assert all(loss > 0.0 for loss in first.loss_history)

    def test_different_seed_different_history(self, two_gaussians):
        gen = Generator.initialize([2, 16, 2], seed=4)
        first = train(gen, two_gaussians, small_config(seed=1))
        second = train(gen, two_gaussians, small_config(seed=2))
        assert first.loss_history != second.loss_history

    def test_metric_cadence(self, two_gaussians):
        gen = Generator.initialize([2, 8, 2], seed=4)
        result = train(gen, two_gaussians, small_config(iterations=25, metric_every=10))
        assert [k for k, _ in result.metric_history] == [0, 10, 20, 25]

    @pytest.mark.error
    def test_nan_reports_iteration(self, two_gaussians, mocker):
        gen = Generator.initialize([2, 8, 2], seed=4)
        good = np.zeros((32, 2))
        mocker.patch("gfdrift.generator.field_batch", side_effect=[good, good, np.full((32, 2), np.nan)])
        with pytest.raises(NumericalError) as exc_info:
            train(gen, two_gaussians, small_config())
        assert exc_info.value.context["iteration"] == 3

    @pytest.mark.error
    @pytest.mark.parametrize("overrides", [
        {"batch_size": 1},
        {"iterations": -1},
        {"learning_rate": 0.0},
        {"metric_every": 0},
        {"kernel": KernelSpec.von_mises_fisher(1.0, dim=3)},
    ])
    def test_invalid_config(self, overrides):
        with pytest.raises(ConfigurationError):
            small_config(**overrides)


@pytest.mark.unit
class TestOptimizers:
    """Test cases for SGD and Adam."""

    def test_sgd(self):
        updated = SGD(0.5).update([np.array([1.0, 2.0])], [np.array([2.0, -2.0])])
        np.testing.assert_array_equal(updated[0], [0.0, 3.0])

    def test_adam_first_step_is_signed_learning_rate(self):
        adam = Adam(0.1)
        updated = adam.update([np.array([1.0, -2.0])], [np.array([0.5, -3.0])])
        np.testing.assert_allclose(updated[0], [0.9, -1.9], rtol=1e-7)
        assert adam.t == 1

    def test_adam_leaves_inputs_untouched(self):
        params, grads = [np.array([1.0, -2.0])], [np.array([0.5, -3.0])]
        Adam(0.1).update(params, grads)
        np.testing.assert_array_equal(params[0], [1.0, -2.0])
        np.testing.assert_array_equal(grads[0], [0.5, -3.0])

    @pytest.mark.error
    def test_base_class_is_abstract(self):
        with pytest.raises(TypeError):
            Optimizer(0.1)

    @pytest.mark.error
    def test_subclass_without_update_is_abstract(self):
        class Incomplete(Optimizer):
            pass

        with pytest.raises(TypeError):
            Incomplete(0.1)

    def test_spec_parsing(self):
        assert OptimizerSpec.from_dict("sgd").build(0.1).__class__ is SGD
        spec = OptimizerSpec.from_dict({"kind": "adam", "beta1": 0.5})
        assert spec.to_dict() == {"kind": "adam", "beta1": 0.5, "beta2": 0.999, "eps": 1e-8}
        assert isinstance(spec.build(0.1), Adam)

    @pytest.mark.error
    @pytest.mark.parametrize("data", ["rmsprop", {"kind": "adam", "beta1": 1.0}, {"kind": "adam", "momentum": 0.9}, ["adam"], 0.9])
    def test_invalid_specs(self, data):
        with pytest.raises(ConfigurationError):
            OptimizerSpec.from_dict(data)


@pytest.mark.unit
class TestCheckpoint:
    """Test cases for checkpoint persistence."""

    def test_round_trip(self, temp_dir, rng):
        gen = Generator.initialize([2, 8, 3], activation=Activation.RELU, seed=9)
        path = save_checkpoint(gen, temp_dir / "checkpoint.json")
        loaded = load_checkpoint(path)
        assert loaded.layer_sizes == gen.layer_sizes
        assert loaded.activation is Activation.RELU
        for a, b in zip(gen.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(a, b)
        eps = standard_normal(stream(1), (4, 2))
        np.testing.assert_array_equal(generate(gen, eps), generate(loaded, eps))

    @pytest.mark.error
    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigurationError):
            load_checkpoint(temp_dir / "absent.json")

    @pytest.mark.error
    def test_invalid_json(self, temp_dir):
        path = temp_dir / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_checkpoint(path)

    @pytest.mark.error
    def test_missing_field(self, temp_dir):
        path = temp_dir / "partial.json"
        path.write_text(json.dumps({"layer_sizes": [2, 2], "weights": [[[1.0, 0.0], [0.0, 1.0]]]}))
        with pytest.raises(ConfigurationError):
            load_checkpoint(path)

    @pytest.mark.error
    @pytest.mark.parametrize("content", [
        [2, 2],
        {"layer_sizes": [2, 2], "weights": [[["a", "b"], [0.0, 1.0]]], "biases": [[0.0, 0.0]]},
    ])
    def test_malformed_checkpoint(self, temp_dir, content):
        path = temp_dir / "malformed.json"
        path.write_text(json.dumps(content))
        with pytest.raises(ConfigurationError):
            load_checkpoint(path)
