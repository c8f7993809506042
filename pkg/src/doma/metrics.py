"""Error measures for DoMA estimates.

DoMA parameters are identifiable only up to a common shift of all blocks
and a permutation of the blocks inside each part, so parameter errors are
measured after minimizing over both.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SearchTooLargeError
from .model import Dataset, DomaModel, predict

__all__ = [
    "AmbiguityResolution",
    "resolve_ambiguity",
    "relative_param_error",
    "test_nmse",
    "generalization_gap",
    "MAX_PERMUTATION_PAIRS",
]

MAX_PERMUTATION_PAIRS = 10**7


@dataclass(frozen=True)
class AmbiguityResolution:
    """Optimal shift and block permutations.

    ``perm_beta[j]`` is the estimated beta block matched to true block j
    (same convention for alpha), and ``shift`` is added to every estimated
    block.
    """

    shift: np.ndarray
    perm_beta: tuple
    perm_alpha: tuple
    sq_error: float


def _check_shapes(est: DomaModel, truth: DomaModel):
    if (est.d, est.k1, est.k2) != (truth.d, truth.k1, truth.k2):
        raise InvalidInputError(
            f"shape mismatch: estimate (d={est.d}, k1={est.k1}, k2={est.k2}) vs "
            f"truth (d={truth.d}, k1={truth.k1}, k2={truth.k2})"
        )


def resolve_ambiguity(est: DomaModel, truth: DomaModel) -> AmbiguityResolution:
    """Exhaustive minimization over block permutations and a global shift.

    For a fixed permutation pair the objective is a convex quadratic in the
    shift whose minimizer is minus the mean of all block residuals, so only
    the permutations are enumerated. Ties keep the lexicographically first
    pair.
    """
    _check_shapes(est, truth)
    k1, k2 = est.k1, est.k2
    if math.factorial(k1) * math.factorial(k2) > MAX_PERMUTATION_PAIRS:
        raise SearchTooLargeError(
            f"{k1}! * {k2}! permutation pairs exceed the limit of {MAX_PERMUTATION_PAIRS}"
        )
    k = k1 + k2
    # residual sums split per part, reused across permutations
    perms_b = np.array(list(itertools.permutations(range(k1))), dtype=np.intp)
    perms_a = np.array(list(itertools.permutations(range(k2))), dtype=np.intp)
    hb = est.beta[perms_b] - truth.beta           # (P1, k1, d+1)
    ha = est.alpha[perms_a] - truth.alpha         # (P2, k2, d+1)
    sum_b, sq_b = hb.sum(axis=1), np.einsum("pkd,pkd->p", hb, hb)
    sum_a, sq_a = ha.sum(axis=1), np.einsum("pkd,pkd->p", ha, ha)

    # ||H + v*||^2 = ||H||^2 - ||sum H||^2 / k, for all pairs at once
    cross = sum_b @ sum_a.T
    norm_b = np.einsum("pd,pd->p", sum_b, sum_b)
    norm_a = np.einsum("pd,pd->p", sum_a, sum_a)
    obj = (sq_b[:, None] + sq_a[None, :]
           - (norm_b[:, None] + norm_a[None, :] + 2.0 * cross) / k)
    # row-major argmin is the lexicographically first (perm_beta, perm_alpha)
    ib, ia = np.unravel_index(int(np.argmin(obj)), obj.shape)
    # exact recomputation for the chosen pair, immune to cancellation
    h = np.vstack([hb[ib], ha[ia]])
    shift = -h.mean(axis=0)
    sq_error = float(np.sum((h + shift) ** 2))
    return AmbiguityResolution(
        shift=shift,
        perm_beta=tuple(int(v) for v in perms_b[ib]),
        perm_alpha=tuple(int(v) for v in perms_a[ia]),
        sq_error=sq_error,
    )


def relative_param_error(est: DomaModel, truth: DomaModel) -> float:
    """Ambiguity-resolved squared error over ``||[beta*; alpha*]||^2``."""
    _check_shapes(est, truth)
    denom = float(np.sum(truth.stacked() ** 2))
    if denom == 0.0:
        raise ZeroDivisionError("relative error undefined for an all-zero ground truth")
    return resolve_ambiguity(est, truth).sq_error / denom


def test_nmse(model: DomaModel, data: Dataset) -> float:
    """``sum (y - f(x))^2 / sum y^2``."""
    if model.d != data.d:
        raise InvalidInputError(f"model dimension {model.d} does not match data dimension {data.d}")
    denom = float(np.sum(data.y ** 2))
    if denom == 0.0:
        raise ZeroDivisionError("normalized MSE undefined for all-zero targets")
    r = data.y - predict(model, data.x)
    return float(np.sum(r * r)) / denom


test_nmse.__test__ = False  # keep pytest from collecting it


def generalization_gap(est: DomaModel, truth: DomaModel, mc_samples: int, rng) -> float:
    """Monte Carlo ``E_x |f_est(x) - f_truth(x)|^2`` under standard normal x."""
    if est.d != truth.d:
        raise InvalidInputError(f"model dimensions differ: {est.d} vs {truth.d}")
    x = rng.standard_normal((int(mc_samples), est.d))
    diff = predict(est, x) - predict(truth, x)
    return float(np.mean(diff * diff))
