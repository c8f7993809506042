"""Model JSON and CSV readers/writers.

CSV outputs start with a ``# doma <version>`` comment line; readers skip
every line starting with ``#``. Floats are written with ``repr`` so values
round-trip bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import InvalidInputError
from .model import Dataset, DomaModel

VERSION_HEADER = f"# doma {__version__}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def model_to_json(model: DomaModel) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def save_model(model: DomaModel, path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path) -> DomaModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{path}: expected a JSON object")
    if "model" in obj and "beta" not in obj:
        obj = obj["model"]
    return DomaModel.from_dict(obj)


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        return [], []
    rows = list(csv.reader(lines))
    return [h.strip() for h in rows[0]], rows[1:]


def _to_matrix(path, header, rows) -> np.ndarray:
    try:
        mat = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric entry ({exc})") from exc
    if rows and mat.shape[1] != len(header):
        raise InvalidInputError(f"{path}: rows do not match the {len(header)}-column header")
    return mat.reshape(len(rows), len(header))


def load_dataset(path) -> Dataset:
    """Read a CSV with header ``x1,...,xd,y``."""
    header, rows = _read_rows(path)
    if len(header) < 2 or header[-1] != "y":
        raise InvalidInputError(f"{path}: header must be x1,...,xd,y")
    mat = _to_matrix(path, header, rows)
    if mat.shape[0] == 0:
        raise InvalidInputError(f"{path}: no samples")
    return Dataset(mat[:, :-1], mat[:, -1])


def load_covariates(path) -> np.ndarray:
    """Read a CSV with header ``x1,...,xd``; an empty file gives zero rows."""
    header, rows = _read_rows(path)
    if header and header[-1] == "y":
        header = header[:-1]
        rows = [r[:-1] for r in rows]
    return _to_matrix(path, header, rows)


def write_csv(path_or_buf, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(VERSION_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)


def save_dataset(data: Dataset, path) -> None:
    cols = [f"x{i + 1}" for i in range(data.d)] + ["y"]
    write_csv(path, cols, (list(xr) + [yv] for xr, yv in zip(data.x, data.y)))


def read_csv_dicts(path) -> list[dict]:
    header, rows = _read_rows(path)
    return [dict(zip(header, row)) for row in rows]


def load_grid_config(path) -> dict:
    """Read a grid definition from TOML (``.toml``) or JSON."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)
