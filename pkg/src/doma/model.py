"""Difference of max-affine (DoMA) functions and their cell partition.

A DoMA model of orders ``(k1, k2)`` on ``R^d`` is

    f(x) = max_j <beta_j, [x; 1]> - max_l <alpha_l, [x; 1]>

with every parameter vector of length ``d + 1`` (slope first, intercept
last). Parameters are stored as ``(k, d + 1)`` float64 arrays; the augmented
covariate ``[x; 1]`` is never materialized, scores are computed as
``x @ slopes.T + intercepts``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "DomaModel",
    "Dataset",
    "ActivationIndex",
    "affine_scores",
    "max_affine",
    "evaluate",
    "predict",
    "argmax_pair",
    "activation_index",
    "validate",
]


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DomaModel:
    """Parameters ``beta`` (k1 x (d+1)) and ``alpha`` (k2 x (d+1)).

    Construction only coerces to float64; use :func:`validate` (or
    :meth:`checked`) to enforce the shape and finiteness invariants.
    """

    d: int
    beta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", int(self.d))
        for name in ("beta", "alpha"):
            value = getattr(self, name)
            try:
                arr = np.array(value, dtype=np.float64)
            except ValueError:
                # ragged rows; kept as-is so validate() can report them
                arr = [np.asarray(row, dtype=np.float64) for row in value]
            else:
                if arr.ndim == 1:
                    arr = arr.reshape(1, -1)
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, beta, alpha) -> "DomaModel":
        beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
        alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
        return cls(beta.shape[1] - 1, beta, alpha).checked()

    @property
    def k1(self) -> int:
        return len(self.beta)

    @property
    def k2(self) -> int:
        return len(self.alpha)

    def checked(self) -> "DomaModel":
        errors = validate(self)
        if errors:
            raise InvalidInputError("; ".join(errors))
        return self

    def stacked(self) -> np.ndarray:
        """All parameters as one flat vector ``[beta; alpha]``."""
        return np.concatenate([self.beta.ravel(), self.alpha.ravel()])

    def replace(self, beta=None, alpha=None) -> "DomaModel":
        return DomaModel(
            self.d,
            self.beta if beta is None else beta,
            self.alpha if alpha is None else alpha,
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k1": self.k1,
            "k2": self.k2,
            "beta": [[float(v) for v in row] for row in self.beta],
            "alpha": [[float(v) for v in row] for row in self.alpha],
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "DomaModel":
        errors = validate(obj)
        if errors:
            raise InvalidInputError("; ".join(errors))
        return cls(obj["d"], obj["beta"], obj["alpha"])

    def __eq__(self, other):
        if not isinstance(other, DomaModel):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.alpha, other.alpha)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``x`` (n x d) and targets ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if y.shape[0] < 1:
            raise InvalidInputError("dataset must contain at least one sample")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class ActivationIndex:
    """Per-sample cell labels for both max-affine parts.

    ``beta_labels[i]`` is the index of the maximizing beta block at sample i
    (lowest index on ties); likewise for alpha.
    """

    beta_labels: np.ndarray
    alpha_labels: np.ndarray
    k1: int
    k2: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def _cells(self, labels, k):
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(k + 1))
        return [order[bounds[j]:bounds[j + 1]] for j in range(k)]

    @property
    def beta_cells(self) -> list:
        if "beta" not in self._cache:
            self._cache["beta"] = self._cells(self.beta_labels, self.k1)
        return self._cache["beta"]

    @property
    def alpha_cells(self) -> list:
        if "alpha" not in self._cache:
            self._cache["alpha"] = self._cells(self.alpha_labels, self.k2)
        return self._cache["alpha"]

    def beta_sizes(self) -> np.ndarray:
        return np.bincount(self.beta_labels, minlength=self.k1)

    def alpha_sizes(self) -> np.ndarray:
        return np.bincount(self.alpha_labels, minlength=self.k2)


def _check_dim(model: DomaModel, x: np.ndarray):
    if x.shape[-1] != model.d:
        raise InvalidInputError(
            f"covariate dimension {x.shape[-1]} does not match model dimension {model.d}"
        )


def affine_scores(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``<theta_j, [x_i; 1]>`` for every sample i and block j, shape (n, k)."""
    return x @ params[:, :-1].T + params[:, -1]


def max_affine(params: np.ndarray, x: np.ndarray):
    """Max-affine values and argmax labels (first maximizer on ties)."""
    scores = affine_scores(params, x)
    labels = np.argmax(scores, axis=1)
    return scores[np.arange(scores.shape[0]), labels], labels


def predict(model: DomaModel, x) -> np.ndarray:
    """Evaluate the model on every row of ``x`` (n x d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, model.d) if model.d == 1 else x.reshape(1, -1)
    _check_dim(model, x)
    pos, _ = max_affine(model.beta, x)
    neg, _ = max_affine(model.alpha, x)
    return pos - neg


def evaluate(model: DomaModel, x) -> float:
    """Value of the DoMA function at a single point ``x`` of length d."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise InvalidInputError("evaluate expects a single covariate vector")
    _check_dim(model, x)
    return float(predict(model, x[None, :])[0])


def argmax_pair(model: DomaModel, x) -> tuple[int, int]:
    """Indices of the maximizing beta and alpha blocks at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    _check_dim(model, x)
    _, j = max_affine(model.beta, x[None, :])
    _, l = max_affine(model.alpha, x[None, :])
    return int(j[0]), int(l[0])


def activation_index(model: DomaModel, data: Dataset) -> ActivationIndex:
    _check_dim(model, data.x)
    _, jb = max_affine(model.beta, data.x)
    _, la = max_affine(model.alpha, data.x)
    return ActivationIndex(jb, la, model.k1, model.k2)


def _rows(value) -> list | None:
    if isinstance(value, np.ndarray):
        return list(value) if value.ndim == 2 else None
    if isinstance(value, Sequence) and not isinstance(value, (str, bytes)):
        return list(value)
    return None


def validate(model) -> list[str]:
    """Report structural problems of a model (or its JSON dict form).

    Returns an empty list for a well-formed model; never raises.
    """
    if isinstance(model, DomaModel):
        d, parts = model.d, {"beta": model.beta, "alpha": model.alpha}
    elif isinstance(model, Mapping):
        d = model.get("d")
        parts = {"beta": model.get("beta"), "alpha": model.get("alpha")}
    else:
        return [f"unsupported model type {type(model).__name__}"]

    errors = []
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool) or d < 1:
        return [f"dimension d must be a positive integer, got {d!r}"]
    for name, value in parts.items():
        rows = _rows(value)
        if rows is None:
            errors.append(f"{name}: expected a list of parameter vectors")
            continue
        if len(rows) < 1:
            errors.append(f"{name}: at least one block required")
        for i, row in enumerate(rows):
            try:
                row = np.asarray(row, dtype=np.float64)
            except (TypeError, ValueError):
                errors.append(f"{name}[{i}]: non-numeric entry")
                continue
            if row.ndim != 1 or row.shape[0] != d + 1:
                errors.append(
                    f"{name}[{i}]: wrong parameter length "
                    f"(expected {d + 1}, got {row.size})"
                )
            if not np.all(np.isfinite(row)):
                errors.append(f"{name}[{i}]: non-finite entry")
    if isinstance(model, Mapping):
        for key, part in (("k1", "beta"), ("k2", "alpha")):
            rows = _rows(parts[part])
            if key in model and rows is not None and model[key] != len(rows):
                errors.append(f"{key}={model[key]} but {part} has {len(rows)} blocks")
    return errors
