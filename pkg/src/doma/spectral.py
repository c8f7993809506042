"""Spectral initialization for ABGD.

The moment matrix ``M = m1 m1^T + M2`` with ``m1 = E[y x]`` and
``M2 = E[y (x x^T - I)]`` has its column space inside the span of the
pairwise slope differences ``beta_j - alpha_l`` when x is standard normal.
The initializer estimates that subspace, draws random candidate models
inside it, polishes each with a few ABGD sweeps and keeps the one with the
lowest loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InitializationError, InvalidInputError
from .model import Dataset, DomaModel, max_affine
from .optimizer import _sweep, loss

__all__ = [
    "MomentEstimates",
    "SubspaceBasis",
    "InitConfig",
    "estimate_moments",
    "subspace",
    "sample_candidate",
    "candidate_stream",
    "initialize",
    "numerical_rank",
    "pairwise_difference_rank",
    "shifted_stack_rank",
    "population_m1_oracle",
]


@dataclass(frozen=True)
class MomentEstimates:
    m1: np.ndarray
    m2: np.ndarray
    m: np.ndarray


@dataclass(frozen=True)
class SubspaceBasis:
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.v.shape[1]

    def project(self, w: np.ndarray) -> np.ndarray:
        return self.v @ (self.v.T @ w)


@dataclass(frozen=True)
class InitConfig:
    t_candidates: int = 100
    refine_sweeps: int = 5
    scale: Union[float, str] = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.t_candidates < 1:
            raise InvalidInputError("t_candidates must be >= 1")
        if self.refine_sweeps < 0:
            raise InvalidInputError("refine_sweeps must be >= 0")
        if self.scale != "auto" and not float(self.scale) >= 0:
            raise InvalidInputError(f"scale must be non-negative or 'auto', got {self.scale!r}")


def estimate_moments(data: Dataset) -> MomentEstimates:
    """Empirical ``m1 = mean(y x)``, ``M2 = mean(y (x x^T - I))`` and ``M``."""
    x, y = data.x, data.y
    n = data.n
    m1 = x.T @ y / n
    m2 = (x.T * y) @ x / n - np.mean(y) * np.eye(data.d)
    return MomentEstimates(m1=m1, m2=m2, m=np.outer(m1, m1) + m2)


def subspace(moments: MomentEstimates, r: int) -> SubspaceBasis:
    """Top-``r`` left singular vectors of the moment matrix ``M``."""
    d = moments.m.shape[0]
    if not 1 <= r <= d:
        raise InvalidInputError(f"subspace rank must lie in [1, {d}], got {r}")
    u, _, _ = np.linalg.svd(moments.m)
    return SubspaceBasis(v=np.ascontiguousarray(u[:, :r]))


def sample_candidate(basis: SubspaceBasis, k1: int, k2: int, scale: float, rng) -> DomaModel:
    """Random model whose slopes lie in ``span(basis.v)``.

    Slope ``scale * V c`` with ``c ~ N(0, I_r)``; intercept ``~ N(0, scale^2)``.
    """
    v = basis.v
    k = k1 + k2
    coef = rng.standard_normal((k, v.shape[1]))
    intercepts = rng.standard_normal(k)
    params = np.empty((k, v.shape[0] + 1))
    params[:, :-1] = scale * (coef @ v.T)
    params[:, -1] = scale * intercepts
    return DomaModel(v.shape[0], params[:k1], params[k1:])


def _resolve_scale(scale, data: Dataset) -> float:
    if scale == "auto":
        return float(np.std(data.y))
    return float(scale)


def candidate_stream(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for candidate ``trial``, fixed by ``(seed, trial)``."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(trial)])


def initialize(data: Dataset, k1: int, k2: int, config: InitConfig | None = None,
               return_loss: bool = False):
    """Best-of-T spectral initialization.

    Candidate ``t`` is drawn from :func:`candidate_stream` ``(seed, t)`` so
    the first T candidates are the same for any larger T. Candidates that
    diverge during refinement are discarded; ties go to the lowest index.
    """
    config = config or InitConfig()
    if k1 < 1 or k2 < 1:
        raise InvalidInputError("k1 and k2 must be >= 1")
    r = min(k1 + k2 - 1, data.d)
    basis = subspace(estimate_moments(data), r)
    scale = _resolve_scale(config.scale, data)

    best, best_loss = None, np.inf
    x, y = data.x, data.y
    for t in range(config.t_candidates):
        cand = sample_candidate(basis, k1, k2, scale, candidate_stream(config.seed, t))
        beta, alpha = cand.beta, cand.alpha
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(config.refine_sweeps):
                beta, alpha, _ = _sweep(beta, alpha, x, y)
            if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(alpha))):
                continue
            refined = cand.replace(beta=beta, alpha=alpha)
            value = loss(refined, data)
        if np.isfinite(value) and value < best_loss:
            best, best_loss = refined, value
    if best is None:
        raise InitializationError(f"all {config.t_candidates} candidates diverged")
    return (best, best_loss) if return_loss else best


def numerical_rank(mat: np.ndarray, rtol: float = 1e-8) -> int:
    """Count of singular values above ``rtol`` times the largest one."""
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def pairwise_difference_rank(model: DomaModel, rtol: float = 1e-8) -> int:
    """Rank of ``{beta_j - alpha_l}`` over all pairs (full (d+1)-vectors)."""
    diffs = (model.beta[:, None, :] - model.alpha[None, :, :]).reshape(-1, model.d + 1)
    return numerical_rank(diffs.T, rtol)


def shifted_stack_rank(model: DomaModel, v: np.ndarray, rtol: float = 1e-8) -> int:
    """Rank of all parameters shifted by ``-v``."""
    stack = np.vstack([model.beta, model.alpha]) - np.asarray(v, dtype=np.float64)
    return numerical_rank(stack.T, rtol)


def population_m1_oracle(model: DomaModel, mc_samples: int, rng) -> np.ndarray:
    """Monte Carlo value of ``sum_{j,l} [beta_j - alpha_l]_{1:d} P(C_j cap C_l)``.

    Covariates are standard normal; each draw is classified by its maximizing
    pair and the corresponding slope difference is averaged. This never
    touches targets, so it checks :func:`estimate_moments` independently.
    """
    if mc_samples < 1:
        raise InvalidInputError("mc_samples must be >= 1")
    x = rng.standard_normal((mc_samples, model.d))
    _, jb = max_affine(model.beta, x)
    _, la = max_affine(model.alpha, x)
    counts = np.zeros((model.k1, model.k2))
    np.add.at(counts, (jb, la), 1.0)
    probs = counts / mc_samples
    slopes = model.beta[:, None, :-1] - model.alpha[None, :, :-1]
    return np.einsum("jl,jld->d", probs, slopes)
