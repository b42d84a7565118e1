"""
Run configuration: one JSON document per run, parsed into frozen dataclasses.

The document is flat with the sections

    {"dataset" | "ensembles", "kernel", "divergence", "flow" | "train",
     "energy", "metrics", "output", "checks", "seed"}

Section parsing is delegated to the ``from_dict`` constructors of the
corresponding spec objects; this module only validates the envelope and
resolves the geometry shared by the kernel and the ensembles.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

THREADS_ENV = "GFDRIFT_THREADS"
BLOCK_ROWS = 512

SECTIONS = frozenset(
    {"dataset", "ensembles", "kernel", "divergence", "flow", "train", "energy", "output", "checks", "seed", "metrics"}
)


def worker_count() -> int:
    """Worker cap from ``GFDRIFT_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer", {"value": raw}) from exc
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer", {"value": raw})
    return value


def map_row_blocks(fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, block_rows: int = BLOCK_ROWS) -> np.ndarray:
    """Apply ``fn`` to consecutive row blocks of X and stack the results in order.

    Blocks run on a thread pool of ``worker_count()`` workers; numpy releases
    the GIL inside the kernels, and results are concatenated in block order so
    the output does not depend on the worker count.
    """
    if X.shape[0] <= block_rows:
        return fn(X)
    blocks = [X[start:start + block_rows] for start in range(0, X.shape[0], block_rows)]
    workers = min(worker_count(), len(blocks))
    if workers == 1:
        results = [fn(block) for block in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(fn, blocks))
    return np.concatenate(results, axis=0)


@dataclass(frozen=True)
class RunConfig:
    """Validated envelope of a run document; sections stay as raw mappings."""

    sections: Mapping[str, Any] = field(default_factory=dict)
    source: Optional[Path] = None

    def __post_init__(self):
        unknown = set(self.sections) - SECTIONS
        if unknown:
            raise ConfigurationError("unknown config sections", {"sections": sorted(unknown)})
        if "dataset" in self.sections and "ensembles" in self.sections:
            raise ConfigurationError("config must name either 'dataset' or 'ensembles', not both")
        if "flow" in self.sections and "train" in self.sections:
            raise ConfigurationError("config must name either 'flow' or 'train', not both")
        for name, value in self.sections.items():
            if name != "seed" and not isinstance(value, Mapping):
                raise ConfigurationError("config section must be an object", {"section": name})

    def section(self, name: str, required: bool = True) -> Mapping[str, Any]:
        if name not in self.sections:
            if required:
                raise ConfigurationError("config section missing", {"section": name})
            return {}
        return self.sections[name]

    def has(self, name: str) -> bool:
        return name in self.sections

    @property
    def seed(self) -> Optional[int]:
        value = self.sections.get("seed")
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer", {"seed": value})
        return value

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        return RunConfig({**self.sections, "seed": seed}, self.source)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dict(self.sections)))


def load_run_config(path) -> RunConfig:
    """Read a JSON run document; any parse problem is a ConfigurationError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError("cannot read config", {"path": str(path), "reason": exc.strerror}) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError("config is not valid JSON", {"path": str(path), "line": exc.lineno}) from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object", {"path": str(path)})
    logger.debug("loaded config %s with sections %s", path, sorted(data))
    return RunConfig(data, path)
