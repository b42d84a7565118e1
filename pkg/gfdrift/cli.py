"""
Command-line front end: ``gfdrift {verify,flow,train,gen-data,mmd}``.

Exit codes: 0 ok, 1 numerical or check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, List, Mapping, Optional, Sequence

from . import __version__
from .config import RunConfig, load_run_config
from .data import DatasetKind, DatasetSpec, manifest as dataset_manifest, recommended_modes, sample
from .errors import EXIT_FAILURE, EXIT_OK, ConfigurationError, GfdriftError, exit_code_for
from .flow import EnergyConfig, FlowConfig, run, save_trajectory
from .generator import Activation, Generator, OptimizerSpec, TrainConfig, save_checkpoint, train
from .geometry import Geometry
from .io import append_metrics, load_ensemble_csv, save_ensemble_csv, write_json_atomic, write_series_csv
from .kde import Ensemble
from .kernels import KernelSpec
from .metrics import mmd2_biased, mode_report
from .velocity import DivergenceSpec, FieldContext
from .verification import run_checks

logger = logging.getLogger(__name__)

PRESETS = ("verify", "swiss_roll_flow", "two_gaussians_train", "ring_flow")


@dataclass
class RunManifest:
    command: str
    config: Mapping[str, Any]
    seed: int
    outputs: List[str] = field(default_factory=list)
    version: str = __version__
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": dict(self.config),
            "seed": self.seed,
            "version": self.version,
            "outputs": list(self.outputs),
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    def write(self, out_dir: Path, started: float) -> Path:
        self.wall_clock_seconds = round(time.monotonic() - started, 3)
        return write_json_atomic(out_dir / "manifest.json", self.to_dict())


# config plumbing


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigurationError("unknown preset", {"preset": name, "available": ",".join(PRESETS)})
    text = resources.files("gfdrift").joinpath("presets").joinpath(f"{name}.json").read_text()
    return RunConfig(json.loads(text))


def resolve_config(args: argparse.Namespace, required: bool = True) -> RunConfig:
    if getattr(args, "preset", None):
        config = load_preset(args.preset)
    elif getattr(args, "config", None):
        config = load_run_config(args.config)
    elif required:
        raise ConfigurationError("pass --config PATH or --preset NAME")
    else:
        config = RunConfig({})
    return config.with_seed(getattr(args, "seed", None))


def prepare_out_dir(path) -> Path:
    out_dir = Path(path)
    if not out_dir.parent.exists():
        raise ConfigurationError("output directory parent does not exist", {"out": str(out_dir)})
    out_dir.mkdir(exist_ok=True)
    return out_dir


def ensemble_from_source(source: Mapping[str, Any], default_seed: int) -> Ensemble:
    """An ensemble from a dataset block or ``{"csv": path, "geometry": {...}}``."""
    if not isinstance(source, Mapping):
        raise ConfigurationError("ensemble source must be an object")
    if "csv" in source:
        geometry = Geometry.from_dict(source["geometry"]) if "geometry" in source else None
        return load_ensemble_csv(source["csv"], geometry)
    return sample(DatasetSpec.from_dict({"seed": default_seed, **source}))


def _ensembles(config: RunConfig, seed: int, need_generated: bool):
    if config.has("dataset"):
        data = ensemble_from_source(config.section("dataset"), seed)
        if need_generated:
            raise ConfigurationError("flow runs need an 'ensembles' section with data and generated")
        return data, None
    block = config.section("ensembles")
    if "data" not in block:
        raise ConfigurationError("ensembles section needs 'data'")
    data = ensemble_from_source(block["data"], seed)
    generated = None
    if need_generated:
        if "generated" not in block:
            raise ConfigurationError("ensembles section needs 'generated'")
        generated = ensemble_from_source(block["generated"], (seed + 1) % 2**64)
    return data, generated


def _dataset_spec(config: RunConfig, seed: int) -> Optional[DatasetSpec]:
    if config.has("dataset"):
        return DatasetSpec.from_dict({"seed": seed, **config.section("dataset")})
    source = config.section("ensembles", required=False).get("data", {})
    if "kind" in source:
        return DatasetSpec.from_dict({"seed": seed, **source})
    return None


def _status(ok: bool, message: str) -> None:
    print(f"{'✅' if ok else '❌'} {message}")


# commands


def cmd_verify(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config = resolve_config(args, required=False)
    seed = config.seed or 0
    out_dir = prepare_out_dir(args.out)
    report = run_checks(config.section("checks", required=False) or None, seed=seed)
    write_json_atomic(out_dir / "verify.json", report.to_dict())
    for result in report.results:
        _status(result.passed, f"{result.name} [{result.kernel.get('family')}]: {result.status}")
    RunManifest("verify", config.to_dict(), seed, ["verify.json"]).write(out_dir, started)
    _status(report.passed, "all checks passed" if report.passed else "some checks failed")
    return EXIT_OK if report.passed else EXIT_FAILURE


def _frame_metrics(config: RunConfig, kernel: KernelSpec, data: Ensemble, trajectory, seed: int) -> list:
    block = config.section("metrics", required=False)
    rows = []
    centers, radius = block.get("mode_centers"), block.get("mode_radius")
    if block.get("modes") and centers is None:
        spec = _dataset_spec(config, seed)
        if spec is None:
            raise ConfigurationError("mode report needs mode_centers or a dataset data source")
        centers, default_radius = recommended_modes(spec)
        radius = default_radius if radius is None else radius
    for k, frame in trajectory.frames:
        if block.get("mmd"):
            rows.append((k, "mmd2", mmd2_biased(kernel, frame, data)))
        if centers is not None:
            report = mode_report(frame, centers, radius)
            rows.append((k, "modes_covered", float(report.modes_covered)))
            rows.append((k, "precision", report.precision))
    return rows


def cmd_flow(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config = resolve_config(args)
    seed = config.seed or 0
    out_dir = prepare_out_dir(args.out)

    data, generated = _ensembles(config, seed, need_generated=True)
    kernel = KernelSpec.from_dict(config.section("kernel"), data.geometry)
    divergence = DivergenceSpec.from_dict(config.section("divergence"))
    energy = None
    if config.has("energy"):
        energy = EnergyConfig.from_dict(config.section("energy"), default_divergence=divergence)
    flow_config = FlowConfig.from_dict(config.section("flow"), seed=seed, energy=energy)

    trajectory = run(FieldContext(kernel, data, generated), divergence, flow_config, progress=args.progress)
    outputs = save_trajectory(trajectory, out_dir)
    rows = _frame_metrics(config, kernel, data, trajectory, seed)
    if rows:
        metrics_path = out_dir / "metrics.csv"
        metrics_path.unlink(missing_ok=True)
        append_metrics(metrics_path, rows)
        outputs.append("metrics.csv")
    RunManifest("flow", config.to_dict(), seed, outputs).write(out_dir, started)

    message = f"flow finished: {len(trajectory.frames)} frames"
    if trajectory.energy_series:
        message += f", energy {trajectory.energy_series[0][1]:.6g} -> {trajectory.energy_series[-1][1]:.6g}"
    _status(True, message)
    return EXIT_OK


def _train_setup(config: RunConfig, seed: int):
    block = dict(config.section("train"))
    known = {"layers", "activation", "batch_size", "iterations", "learning_rate", "optimizer", "metric_every", "heldout"}
    unknown = set(block) - known
    if unknown:
        raise ConfigurationError("unknown train fields", {"fields": sorted(unknown)})
    data, _ = _ensembles(config, seed, need_generated=False)
    kernel = KernelSpec.from_dict(config.section("kernel"), data.geometry)
    try:
        layers = [int(size) for size in block.get("layers", [2, 64, 64, data.dim])]
        gen = Generator.initialize(layers, Activation(block.get("activation", "tanh")), seed=seed)
        heldout_n = int(block.get("heldout") or 0)
        train_config = TrainConfig(
            batch_size=block.get("batch_size", 256),
            iterations=block.get("iterations", 1000),
            learning_rate=float(block.get("learning_rate", 1e-3)),
            divergence=DivergenceSpec.from_dict(config.section("divergence")),
            kernel=kernel,
            seed=seed,
            optimizer=OptimizerSpec.from_dict(block.get("optimizer", "adam")),
            metric_every=block.get("metric_every", 100),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("train block has a malformed value", {"reason": str(exc)}) from exc

    heldout = data
    spec = _dataset_spec(config, seed)
    if spec is not None and heldout_n:
        heldout = sample(replace(spec, n=heldout_n, seed=(spec.seed + 1) % 2**64))
    return gen, data, heldout, train_config


def cmd_train(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config = resolve_config(args)
    seed = config.seed or 0
    out_dir = prepare_out_dir(args.out)
    gen, data, heldout, train_config = _train_setup(config, seed)

    result = train(gen, data, train_config, heldout=heldout, progress=args.progress)
    save_checkpoint(result.generator, out_dir / "checkpoint.json")
    write_series_csv(out_dir / "loss.csv", ["iteration", "loss"], [(i + 1, loss) for i, loss in enumerate(result.loss_history)])
    metrics_path = out_dir / "metrics.csv"
    metrics_path.unlink(missing_ok=True)
    append_metrics(metrics_path, [(i, "mmd2", value) for i, value in result.metric_history])
    RunManifest("train", config.to_dict(), seed, ["checkpoint.json", "loss.csv", "metrics.csv"]).write(out_dir, started)

    final = result.metric_history[-1][1]
    threshold = config.section("metrics", required=False).get("mmd_threshold")
    if threshold is not None and final > float(threshold):
        _status(False, f"final MMD² {final:.6g} above threshold {threshold}")
        return EXIT_FAILURE
    _status(True, f"training finished: MMD² {result.metric_history[0][1]:.6g} -> {final:.6g}")
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.config or args.preset:
        config = resolve_config(args)
        spec = _dataset_spec(config, config.seed or 0)
        if spec is None:
            raise ConfigurationError("config has no dataset section")
    else:
        if args.kind is None or args.n is None:
            raise ConfigurationError("gen-data needs --kind and --n, or --config")
        fields = {"kind": args.kind, "n": args.n, "seed": args.seed or 0}
        for name in ("noise", "modes", "radius", "separation", "kappa"):
            if getattr(args, name) is not None:
                fields[name] = getattr(args, name)
        if args.centers is not None:
            try:
                fields["centers"] = json.loads(args.centers)
            except json.JSONDecodeError as exc:
                raise ConfigurationError("--centers must be a JSON list of points") from exc
        spec = DatasetSpec.from_dict(fields)

    out = Path(args.out)
    if not out.parent.exists():
        raise ConfigurationError("output directory does not exist", {"out": str(out)})
    save_ensemble_csv(sample(spec), out)
    write_json_atomic(out.parent / "dataset.json", dataset_manifest(spec))
    _status(True, f"wrote {spec.n} {spec.kind.value} points to {out}")
    return EXIT_OK


def cmd_mmd(args: argparse.Namespace) -> int:
    path = Path(args.kernel_config)
    try:
        block = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError("cannot read kernel config", {"path": str(path), "reason": exc.strerror}) from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError("kernel config is not valid JSON", {"path": str(path)}) from exc
    if not isinstance(block, Mapping):
        raise ConfigurationError("kernel config must be an object", {"path": str(path)})
    block = block.get("kernel", block)
    geometry = Geometry.from_dict(block["geometry"]) if "geometry" in block else None
    first = load_ensemble_csv(args.first, geometry)
    second = load_ensemble_csv(args.second, geometry)
    kernel = KernelSpec.from_dict(block, first.geometry)
    value = mmd2_biased(kernel, first, second)
    print(repr(value))
    if args.out:
        out_dir = prepare_out_dir(args.out)
        write_json_atomic(out_dir / "mmd.json", {"mmd2": value, "kernel": kernel.to_dict(), "first": str(args.first), "second": str(args.second)})
    return EXIT_OK


# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfdrift", description="Gradient flow drifting experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="count", default=0, help="More logging (-v info, -vv debug)")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def common(sub, out_required=True):
        sub.add_argument("--config", help="JSON run config")
        sub.add_argument("--preset", choices=PRESETS, help="Bundled run config")
        sub.add_argument("--seed", type=int, help="Override the config seed")
        sub.add_argument("--out", required=out_required, default=".", help="Output directory")
        sub.add_argument("--progress", action="store_true", help="Show a progress bar")

    verify = subparsers.add_parser("verify", help="Run identity and assumption checks")
    common(verify, out_required=False)
    verify.set_defaults(handler=cmd_verify)

    flow = subparsers.add_parser("flow", help="Run a particle flow")
    common(flow)
    flow.set_defaults(handler=cmd_flow)

    train_parser = subparsers.add_parser("train", help="Train a one-step generator")
    common(train_parser)
    train_parser.set_defaults(handler=cmd_train)

    gen_data = subparsers.add_parser("gen-data", help="Write a synthetic dataset CSV")
    gen_data.add_argument("--config", help="JSON run config with a dataset section")
    gen_data.add_argument("--preset", choices=PRESETS, help="Bundled run config")
    gen_data.add_argument("--kind", choices=[k.value for k in DatasetKind])
    gen_data.add_argument("--n", type=int)
    gen_data.add_argument("--seed", type=int)
    gen_data.add_argument("--noise", type=float)
    gen_data.add_argument("--modes", type=int)
    gen_data.add_argument("--radius", type=float)
    gen_data.add_argument("--separation", type=float)
    gen_data.add_argument("--kappa", type=float)
    gen_data.add_argument("--centers", help="JSON list of unit vectors (vmf_mixture)")
    gen_data.add_argument("--out", required=True, help="Output CSV path")
    gen_data.set_defaults(handler=cmd_gen_data)

    mmd = subparsers.add_parser("mmd", help="Biased MMD² between two ensemble CSVs")
    mmd.add_argument("first")
    mmd.add_argument("second")
    mmd.add_argument("--kernel-config", required=True, help="JSON kernel block (or a run config with one)")
    mmd.add_argument("--out", help="Directory for mmd.json")
    mmd.set_defaults(handler=cmd_mmd)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help()
        return 2

    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.handler(args)
    except GfdriftError as exc:
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
