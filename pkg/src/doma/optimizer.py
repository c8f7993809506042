"""Adaptive Block Gradient Descent (ABGD) for the DoMA least-squares loss.

One sweep updates all beta blocks from ``(beta^t, alpha^t)`` and then all
alpha blocks from ``(beta^{t+1}, alpha^t)``. Block ``j`` takes a partial
generalized gradient step with step size ``n / |I_j|``, the inverse of the
empirical mass of its cell, so the update reduces to the cell-averaged
residual times ``[x; 1]``. Blocks whose cell is empty are left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .model import ActivationIndex, Dataset, DomaModel, max_affine

__all__ = [
    "FitConfig",
    "FitReport",
    "loss",
    "residuals",
    "grad_beta_block",
    "grad_alpha_block",
    "step_size",
    "abgd_sweep",
    "relative_change",
    "fit",
]


@dataclass(frozen=True)
class FitConfig:
    gamma: float = 1e-10
    max_iters: int = 2000
    record_trace: bool = False

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidInputError(f"gamma must be non-negative, got {self.gamma}")
        if self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class FitReport:
    model: DomaModel
    iterations: int
    converged: bool
    loss_trace: list = field(default_factory=list)
    change_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "model": self.model.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if self.loss_trace:
            out["loss_trace"] = [float(v) for v in self.loss_trace]
            out["change_trace"] = [float(v) for v in self.change_trace]
        return out


def _check(model: DomaModel, data: Dataset):
    if model.d != data.d:
        raise InvalidInputError(
            f"model dimension {model.d} does not match data dimension {data.d}"
        )


def residuals(model: DomaModel, data: Dataset) -> np.ndarray:
    """``f(x_i) - y_i`` for every sample."""
    _check(model, data)
    pos, _ = max_affine(model.beta, data.x)
    neg, _ = max_affine(model.alpha, data.x)
    return pos - neg - data.y


def loss(model: DomaModel, data: Dataset) -> float:
    """Half mean squared error ``(1/2n) sum_i (y_i - f(x_i))^2``."""
    r = residuals(model, data)
    return 0.5 * float(np.mean(r * r))


def _block_sum(x: np.ndarray, r: np.ndarray, members: np.ndarray) -> np.ndarray:
    # sum_{i in members} r_i [x_i; 1]
    rm = r[members]
    return np.append(rm @ x[members], rm.sum())


def grad_beta_block(model: DomaModel, data: Dataset, idx: ActivationIndex, j: int) -> np.ndarray:
    """Partial generalized gradient of the loss with respect to ``beta_j``."""
    _check(model, data)
    members = idx.beta_cells[j]
    if members.size == 0:
        return np.zeros(model.d + 1)
    neg, _ = max_affine(model.alpha, data.x[members])
    x = data.x[members]
    r = x @ model.beta[j, :-1] + model.beta[j, -1] - neg - data.y[members]
    return _block_sum(x, r, np.arange(members.size)) / data.n


def grad_alpha_block(model: DomaModel, data: Dataset, idx: ActivationIndex, l: int) -> np.ndarray:
    """Partial generalized gradient of the loss with respect to ``alpha_l``."""
    _check(model, data)
    members = idx.alpha_cells[l]
    if members.size == 0:
        return np.zeros(model.d + 1)
    pos, _ = max_affine(model.beta, data.x[members])
    x = data.x[members]
    r = x @ model.alpha[l, :-1] + model.alpha[l, -1] - pos + data.y[members]
    return _block_sum(x, r, np.arange(members.size)) / data.n


def step_size(cell_size: int, n: int) -> float:
    """Adaptive step ``n / |I_j|``; zero for an empty cell."""
    if n < 1 or not 0 <= cell_size <= n:
        raise InvalidInputError(f"need 0 <= cell_size <= n and n >= 1, got ({cell_size}, {n})")
    return n / cell_size if cell_size >= 1 else 0.0


def _update_blocks(params, labels, r, x, n):
    # params_j <- params_j - step_j * (1/n) sum_{i in I_j} r_i xi_i
    new = np.array(params, copy=True)
    counts = np.bincount(labels, minlength=len(params))
    for j in np.flatnonzero(counts):
        members = np.flatnonzero(labels == j)
        grad = _block_sum(x, r, members) / n
        new[j] = params[j] - step_size(int(counts[j]), n) * grad
    return new


def _sweep(beta, alpha, x, y):
    """One ABGD sweep on raw arrays; also returns the pre-sweep loss."""
    n = y.shape[0]
    pos, jb = max_affine(beta, x)
    neg, la = max_affine(alpha, x)
    r = pos - neg - y
    pre_loss = 0.5 * float(np.mean(r * r))
    new_beta = _update_blocks(beta, jb, r, x, n)

    pos_new, _ = max_affine(new_beta, x)
    r_alpha = neg - pos_new + y
    new_alpha = _update_blocks(alpha, la, r_alpha, x, n)
    return new_beta, new_alpha, pre_loss


def abgd_sweep(model: DomaModel, data: Dataset) -> DomaModel:
    """Apply one ABGD sweep (beta blocks, then alpha blocks)."""
    _check(model, data)
    beta, alpha, _ = _sweep(model.beta, model.alpha, data.x, data.y)
    return model.replace(beta=beta, alpha=alpha)


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    """``||new - old|| / ||old||`` with a zero denominator replaced by 1."""
    denom = float(np.linalg.norm(old))
    if denom == 0.0:
        denom = 1.0
    return float(np.linalg.norm(new - old)) / denom


def fit(
    data: Dataset,
    init: DomaModel,
    config: FitConfig | None = None,
    callback: Optional[Callable[[int, DomaModel], None]] = None,
) -> FitReport:
    """Run ABGD from ``init`` until the relative-change criterion or the cap.

    ``callback(t, model)``, if given, is called after every sweep ``t``
    (1-based) with the current iterate.
    """
    config = config or FitConfig()
    _check(init, data)
    beta, alpha = np.array(init.beta), np.array(init.alpha)
    x, y = data.x, data.y

    losses, changes = [], []
    converged = False
    t = 0
    while t < config.max_iters:
        new_beta, new_alpha, pre_loss = _sweep(beta, alpha, x, y)
        t += 1
        if config.record_trace and t > 1:
            losses.append(pre_loss)
        if not np.isfinite(pre_loss):
            raise DivergenceError(f"non-finite loss before sweep {t}", losses)
        if not (np.all(np.isfinite(new_beta)) and np.all(np.isfinite(new_alpha))):
            raise DivergenceError(f"non-finite parameters after sweep {t}", losses)
        change = max(relative_change(new_beta, beta), relative_change(new_alpha, alpha))
        beta, alpha = new_beta, new_alpha
        changes.append(change)
        if callback is not None:
            callback(t, init.replace(beta=beta, alpha=alpha))
        if change <= config.gamma:
            converged = True
            break

    model = init.replace(beta=beta, alpha=alpha)
    final_loss = loss(model, data)
    if not np.isfinite(final_loss):
        raise DivergenceError(f"non-finite loss after sweep {t}", losses)
    if config.record_trace:
        losses.append(final_loss)
    return FitReport(
        model=model,
        iterations=t,
        converged=converged,
        loss_trace=losses,
        change_trace=changes if config.record_trace else [],
    )
