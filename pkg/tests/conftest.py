import itertools

import numpy as np
import pytest

from doma.model import Dataset, DomaModel


def random_model(rng, d, k1, k2, scale=1.0):
    return DomaModel(d, scale * rng.standard_normal((k1, d + 1)),
                     scale * rng.standard_normal((k2, d + 1)))


def brute_value(model, x):
    """DoMA value by plain enumeration of every affine piece."""
    xi = list(x) + [1.0]
    pos = max(sum(b * v for b, v in zip(row, xi)) for row in model.beta)
    neg = max(sum(a * v for a, v in zip(row, xi)) for row in model.alpha)
    return pos - neg


def top_gap(params, x):
    """Gap between the largest and second largest affine value per sample."""
    scores = x @ params[:, :-1].T + params[:, -1]
    if scores.shape[1] == 1:
        return np.full(scores.shape[0], np.inf)
    part = np.sort(scores, axis=1)
    return part[:, -1] - part[:, -2]


def away_from_boundaries(model, x, margin=1e-4):
    keep = (top_gap(model.beta, x) > margin) & (top_gap(model.alpha, x) > margin)
    return x[keep]


def finite_difference_grad(fun, params, h=1e-6):
    grad = np.zeros_like(params)
    for idx in itertools.product(*map(range, params.shape)):
        up, down = params.copy(), params.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (fun(up) - fun(down)) / (2 * h)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def abs_model():
    # f(x) = |x| on the real line
    return DomaModel(1, [[1.0, 0.0], [-1.0, 0.0]], [[0.0, 0.0]])


@pytest.fixture
def worked_model():
    return DomaModel(1, [[2.0, 1.0], [-1.0, 0.0]], [[0.5, 0.0], [0.0, -1.0]])


@pytest.fixture
def single_point():
    return Dataset([[1.0]], [0.0])
