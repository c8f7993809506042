"""Lossless compression of DoMA models through their Newton polytopes.

A max-affine function only depends on the convex hull of its parameter
vectors, so any block lying inside the hull of the others never attains the
maximum alone and can be dropped without changing the function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import DomaModel, predict

__all__ = [
    "CompressionReport",
    "hull_distance",
    "hull_membership",
    "inactive_indices",
    "compress",
    "equivalent_on_samples",
]

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class CompressionReport:
    removed_beta: tuple
    removed_alpha: tuple
    model: DomaModel

    def to_dict(self) -> dict:
        return {
            "removed_beta": list(self.removed_beta),
            "removed_alpha": list(self.removed_alpha),
            "model": self.model.to_dict(),
        }


def _affine_min_norm(pts: np.ndarray) -> np.ndarray:
    """Weights (summing to one) of the min-norm point in the affine hull of ``pts``."""
    m = pts.shape[0]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = pts @ pts.T
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:m]


def _min_norm_point(pts: np.ndarray, max_iter: int = 1000, eps: float = 1e-14):
    """Wolfe's min-norm-point algorithm over ``conv(pts)``.

    A fully corrective Frank-Wolfe scheme: each major step adds the vertex
    most aligned with the descent direction, each minor step re-solves the
    affine subproblem on the active set and drops vertices whose weight
    would turn negative. Terminates finitely up to roundoff.

    Returns the closest point and its simplex weights.
    """
    m = pts.shape[0]
    scale = max(float(np.max(np.sum(pts * pts, axis=1))), 1e-300)
    start = int(np.argmin(np.sum(pts * pts, axis=1)))
    active = [start]
    w = np.array([1.0])
    x = pts[start].copy()

    for _ in range(max_iter):
        j = int(np.argmin(pts @ x))
        if x @ x - x @ pts[j] <= eps * scale or j in active:
            break
        active.append(j)
        w = np.append(w, 0.0)
        while True:
            v = _affine_min_norm(pts[active])
            if np.all(v > eps):
                w = v
                break
            neg = v <= eps
            ratios = w[neg] / (w[neg] - v[neg])
            theta = float(np.min(ratios)) if ratios.size else 0.0
            w = theta * v + (1.0 - theta) * w
            keep = w > eps
            # always drop at least the blocking vertex
            if np.all(keep):
                keep[np.flatnonzero(neg)[np.argmin(ratios)]] = False
            active = [a for a, k in zip(active, keep) if k]
            w = w[keep]
            w = w / w.sum()
            if len(active) == 1:
                w = np.array([1.0])
                break
        x = w @ pts[active]

    weights = np.zeros(m)
    weights[active] = w
    return x, weights


def hull_distance(p, points) -> float:
    """Euclidean distance from ``p`` to the convex hull of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    p = np.asarray(p, dtype=np.float64)
    if points.shape[0] < 1:
        raise InvalidInputError("hull of an empty point set")
    shifted = points - p
    if points.shape[0] == 1:
        return float(np.linalg.norm(shifted[0]))
    x, _ = _min_norm_point(shifted)
    return float(np.linalg.norm(x))


def hull_membership(p, points, tol: float = DEFAULT_TOL) -> bool:
    """True iff ``p`` lies within ``tol`` of ``conv(points)``."""
    return hull_distance(p, points) <= tol


def inactive_indices(params, tol: float = DEFAULT_TOL) -> list[int]:
    """Greedy ascending scan for blocks inside the hull of the survivors.

    Removed blocks are excluded from later hull tests, so of ``m``
    duplicates exactly ``m - 1`` go. At least one block always survives.
    """
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    m = params.shape[0]
    alive = np.ones(m, dtype=bool)
    removed = []
    for j in range(m):
        others = alive.copy()
        others[j] = False
        if not others.any():
            break
        if hull_membership(params[j], params[others], tol):
            alive[j] = False
            removed.append(j)
    return removed


def compress(model: DomaModel, tol: float = DEFAULT_TOL) -> CompressionReport:
    """Drop inactive blocks from both max-affine parts independently."""
    rb = inactive_indices(model.beta, tol)
    ra = inactive_indices(model.alpha, tol)
    beta = np.delete(model.beta, rb, axis=0)
    alpha = np.delete(model.alpha, ra, axis=0)
    return CompressionReport(tuple(rb), tuple(ra), model.replace(beta=beta, alpha=alpha))


def equivalent_on_samples(a: DomaModel, b: DomaModel, xs, tol: float = 1e-9) -> bool:
    """True iff the two models differ by at most ``tol`` on every row of ``xs``."""
    if a.d != b.d:
        raise InvalidInputError(f"model dimensions differ: {a.d} vs {b.d}")
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        return True
    return float(np.max(np.abs(predict(a, xs) - predict(b, xs)))) <= tol
