"""
File formats: ensemble CSVs, series CSVs, metrics rows and run manifests.

Floats are written with ``repr`` (shortest round-trip decimal of binary64),
so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .geometry import Geometry
from .kde import Ensemble


def format_float(value: float) -> str:
    return repr(float(value))


def ensemble_header(dim: int, weighted: bool) -> List[str]:
    header = [f"x{i}" for i in range(dim)]
    if weighted:
        header.append("weight")
    return header


def save_ensemble_csv(ensemble: Ensemble, path) -> Path:
    path = Path(path)
    weighted = ensemble.weights is not None
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ensemble_header(ensemble.dim, weighted))
        for i, row in enumerate(ensemble.points):
            values = [format_float(v) for v in row]
            if weighted:
                values.append(format_float(ensemble.weights[i]))
            writer.writerow(values)
    return path


def load_ensemble_csv(path, geometry: Geometry = None) -> Ensemble:
    """Read an ensemble CSV; geometry defaults to Euclidean of the file's width."""
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise ConfigurationError("cannot read ensemble CSV", {"path": str(path), "reason": exc.strerror}) from exc
    if not rows:
        raise InvalidInputError("ensemble CSV is empty", {"path": str(path)})
    header, body = rows[0], rows[1:]
    weighted = bool(header) and header[-1] == "weight"
    dim = len(header) - int(weighted)
    if header != ensemble_header(dim, weighted):
        raise InvalidInputError("unexpected ensemble CSV header", {"path": str(path), "header": ",".join(header)})
    try:
        table = np.array([[float(v) for v in row] for row in body], dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise InvalidInputError("ensemble CSV has malformed rows", {"path": str(path)}) from exc
    if geometry is None:
        geometry = Geometry.euclidean(dim)
    points = table[:, :dim]
    weights = table[:, dim] if weighted else None
    return Ensemble(points, geometry, weights)


def write_series_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def append_metrics(path, rows: Iterable[Tuple[int, str, float]]) -> Path:
    """Append ``step,metric_name,value`` rows, writing the header for a new file."""
    path = Path(path)
    new_file = not path.exists()
    with path.open("a", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if new_file:
            writer.writerow(["step", "metric_name", "value"])
        for step, name, value in rows:
            writer.writerow([int(step), name, format_float(value)])
    return path


def write_json_atomic(path, payload) -> Path:
    """Write JSON through a temp file in the same directory and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
