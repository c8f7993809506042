"""Synthetic ground truths, samplers and the Monte Carlo trial grid.

Every random quantity of a trial is drawn from one generator seeded by
:func:`derive_seed`, so a grid's output depends only on its definition and
``base_seed``, never on execution order or the number of workers.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomaError, InfeasibleSpecError, InvalidInputError
from .metrics import resolve_ambiguity, test_nmse
from .model import Dataset, DomaModel, max_affine, predict
from .optimizer import FitConfig, fit
from .spectral import InitConfig, initialize

__all__ = [
    "GroundTruthSpec",
    "CovariateDistribution",
    "TrialSettings",
    "TrialRecord",
    "derive_seed",
    "slope_separation",
    "measure_geometry",
    "sample_ground_truth",
    "generate_dataset",
    "perturbed_init",
    "TrialSetup",
    "setup_trial",
    "run_trial",
    "run_grid",
    "expand_grid",
    "summarize",
    "recovery_threshold",
    "INIT_KINDS",
]

INIT_KINDS = ("oracle_perturbation", "spectral")
MAX_REJECTIONS = 1000
PROBE_SAMPLES = 10_000

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, cell: int, trial: int) -> int:
    """64-bit trial seed: splitmix64 chained over (base_seed, cell, trial).

    ``h = splitmix64(base); h = splitmix64(h ^ cell); h = splitmix64(h ^ trial)``
    """
    h = _splitmix64(int(base_seed) & _MASK64)
    h = _splitmix64(h ^ (int(cell) & _MASK64))
    return _splitmix64(h ^ (int(trial) & _MASK64))


@dataclass(frozen=True)
class GroundTruthSpec:
    d: int
    k1: int
    k2: int
    kappa_min: float = 0.5
    param_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.k1 < 1 or self.k2 < 1:
            raise InvalidInputError("d, k1 and k2 must be positive")
        if self.kappa_min < 0 or not self.param_scale > 0:
            raise InvalidInputError("need kappa_min >= 0 and param_scale > 0")


@dataclass(frozen=True)
class CovariateDistribution:
    """Zero-mean, isotropic covariate law.

    ``kind`` is one of ``standard_normal``, ``uniform_cube`` (scaled to unit
    variance, so ``half_width`` only fixes the raw draw) or
    ``gaussian_mixture`` (unit-variance components at ``centers``, then
    centered and whitened with the exact mixture covariance).
    """

    kind: str = "standard_normal"
    half_width: float = 1.0
    centers: Optional[tuple] = None
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("standard_normal", "uniform_cube", "gaussian_mixture"):
            raise InvalidInputError(f"unknown covariate distribution {self.kind!r}")
        if self.kind == "uniform_cube" and not self.half_width > 0:
            raise InvalidInputError("half_width must be positive")
        if self.kind == "gaussian_mixture":
            if self.centers is None or self.weights is None:
                raise InvalidInputError("gaussian_mixture needs centers and weights")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, abs_tol=1e-9):
                raise InvalidInputError("mixture weights must be non-negative and sum to 1")
            if np.asarray(self.centers).shape[0] != w.shape[0]:
                raise InvalidInputError("one center per mixture weight required")

    @classmethod
    def standard_normal(cls):
        return cls("standard_normal")

    @classmethod
    def uniform_cube(cls, half_width: float = 1.0):
        return cls("uniform_cube", half_width=half_width)

    @classmethod
    def gaussian_mixture(cls, centers, weights):
        centers = tuple(tuple(float(v) for v in c) for c in np.atleast_2d(centers))
        return cls("gaussian_mixture", centers=centers, weights=tuple(float(w) for w in weights))

    def sample(self, n: int, d: int, rng) -> np.ndarray:
        if self.kind == "standard_normal":
            return rng.standard_normal((n, d))
        if self.kind == "uniform_cube":
            raw = rng.uniform(-self.half_width, self.half_width, size=(n, d))
            return raw * (math.sqrt(3.0) / self.half_width)
        centers = np.asarray(self.centers, dtype=float)
        if centers.shape[1] != d:
            raise InvalidInputError(f"mixture centers have dimension {centers.shape[1]}, expected {d}")
        w = np.asarray(self.weights, dtype=float)
        comp = rng.choice(len(w), size=n, p=w)
        raw = centers[comp] + rng.standard_normal((n, d))
        mean = w @ centers
        dev = centers - mean
        cov = np.eye(d) + (dev.T * w) @ dev
        vals, vecs = np.linalg.eigh(cov)
        whiten = vecs @ np.diag(vals ** -0.5) @ vecs.T
        return (raw - mean) @ whiten


def slope_separation(model: DomaModel) -> float:
    """Minimum pairwise slope distance within each part (``inf`` if k1 = k2 = 1)."""
    best = math.inf
    for params in (model.beta, model.alpha):
        for a, b in itertools.combinations(range(len(params)), 2):
            best = min(best, float(np.linalg.norm(params[a, :-1] - params[b, :-1])))
    return best


def _intersection_exponent(joint, pb, pa, k1, k2) -> float:
    # largest r with P(C_j cap C_l) <= P(C_j)/k1^r and <= P(C_l)/k2^r
    r = math.inf
    with np.errstate(divide="ignore"):
        for j in range(k1):
            for l in range(k2):
                if joint[j, l] == 0:
                    continue
                if k1 > 1:
                    r = min(r, math.log(pb[j] / joint[j, l]) / math.log(k1))
                if k2 > 1:
                    r = min(r, math.log(pa[l] / joint[j, l]) / math.log(k2))
    return r


def measure_geometry(model: DomaModel, probes: np.ndarray) -> dict:
    """Empirical separation, smallest cell mass and intersection exponent r."""
    _, jb = max_affine(model.beta, probes)
    _, la = max_affine(model.alpha, probes)
    m = probes.shape[0]
    joint = np.zeros((model.k1, model.k2))
    np.add.at(joint, (jb, la), 1.0)
    joint /= m
    pb, pa = joint.sum(axis=1), joint.sum(axis=0)
    return {
        "kappa": slope_separation(model),
        "pi_min": float(min(pb.min(), pa.min())),
        "r": _intersection_exponent(joint, pb, pa, model.k1, model.k2),
    }


def sample_ground_truth(spec: GroundTruthSpec, rng=None, return_geometry: bool = False):
    """Rejection-sample a model meeting the separation and cell-mass floors.

    Entries are i.i.d. ``N(0, param_scale^2)``. A draw is rejected if any
    two slopes in the same part are closer than ``kappa_min`` or if some
    cell holds less than ``1 / (4 max(k1, k2))`` of 10^4 standard normal
    probes.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    k = max(spec.k1, spec.k2)
    floor = 1.0 / (4 * k)
    for _ in range(MAX_REJECTIONS):
        beta = spec.param_scale * rng.standard_normal((spec.k1, spec.d + 1))
        alpha = spec.param_scale * rng.standard_normal((spec.k2, spec.d + 1))
        model = DomaModel(spec.d, beta, alpha)
        if slope_separation(model) < spec.kappa_min:
            continue
        if spec.k1 == 1 and spec.k2 == 1:
            geom = {"kappa": math.inf, "pi_min": 1.0, "r": math.inf}
        else:
            geom = measure_geometry(model, rng.standard_normal((PROBE_SAMPLES, spec.d)))
            if geom["pi_min"] < floor:
                continue
        return (model, geom) if return_geometry else model
    raise InfeasibleSpecError(
        f"no admissible ground truth after {MAX_REJECTIONS} draws "
        f"(kappa_min={spec.kappa_min}, param_scale={spec.param_scale})"
    )


def generate_dataset(model: DomaModel, n: int, dist: CovariateDistribution | None,
                     sigma_z: float, rng) -> Dataset:
    """Draw ``x ~ dist``, ``z ~ N(0, sigma_z^2)`` and set ``y = f(x) + z``."""
    if n < 1 or sigma_z < 0:
        raise InvalidInputError("need n >= 1 and sigma_z >= 0")
    dist = dist or CovariateDistribution()
    x = dist.sample(n, model.d, rng)
    z = rng.standard_normal(n)
    y = predict(model, x)
    if sigma_z > 0:
        y = y + sigma_z * z
    return Dataset(x, y)


def _random_direction(shape, rng) -> np.ndarray:
    while True:
        u = rng.standard_normal(shape)
        norm = np.linalg.norm(u)
        if norm > 0:
            return u / norm


def perturbed_init(truth: DomaModel, radius: float, rng) -> DomaModel:
    """Truth plus a uniformly random perturbation of norm ``radius`` per part."""
    if radius < 0:
        raise InvalidInputError("radius must be non-negative")
    beta = truth.beta + radius * _random_direction(truth.beta.shape, rng)
    alpha = truth.alpha + radius * _random_direction(truth.alpha.shape, rng)
    return truth.replace(beta=beta, alpha=alpha)


@dataclass(frozen=True)
class TrialSettings:
    """Everything about a trial except the grid cell and the seed."""

    kappa_min: float = 0.5
    param_scale: float = 1.0
    radius_factor: float = 0.05
    n_test: int = 1000
    dist: CovariateDistribution = field(default_factory=CovariateDistribution)
    init: InitConfig = field(default_factory=InitConfig)
    fit: FitConfig = field(default_factory=FitConfig)


@dataclass
class TrialRecord:
    n: int
    d: int
    k1: int
    k2: int
    sigma_z: float
    seed: int
    init_kind: str
    rel_error: float
    nmse: float
    iterations: int
    converged: bool
    sq_error: float = math.inf
    kappa: float = math.nan
    pi_min: float = math.nan
    r_intersect: float = math.nan
    failed: bool = False

    CSV_COLUMNS = ("n", "d", "k1", "k2", "sigma_z", "seed", "init_kind",
                   "rel_error", "nmse", "iterations", "converged")
    EXTRA_COLUMNS = ("sq_error", "kappa", "pi_min", "r_intersect", "failed")

    def as_row(self) -> dict:
        return asdict(self)


def _oracle_radius(kappa: float, truth: DomaModel) -> float:
    # k1 = k2 = 1 has no separation; fall back to the parameter norm scale
    if math.isinf(kappa):
        return float(np.linalg.norm(truth.stacked())) / math.sqrt(truth.k1 + truth.k2)
    return kappa


def run_trial(cell: Sequence, seed: int, init_kind: str,
              settings: TrialSettings | None = None) -> TrialRecord:
    """Sample truth and data for one grid cell, initialize, fit and score."""
    settings = settings or TrialSettings()
    if init_kind not in INIT_KINDS:
        raise InvalidInputError(f"init_kind must be one of {INIT_KINDS}, got {init_kind!r}")
    n, d, k1, k2, sigma_z = cell
    n, d, k1, k2, sigma_z = int(n), int(d), int(k1), int(k2), float(sigma_z)
    record = TrialRecord(n, d, k1, k2, sigma_z, int(seed), init_kind,
                         rel_error=math.inf, nmse=math.inf, iterations=0, converged=False)
    rng = np.random.default_rng(int(seed))
    # diverging small-n fits overflow on the way to their sentinel record
    with np.errstate(over="ignore", invalid="ignore"):
        return _fill_record(record, rng, settings)


@dataclass
class TrialSetup:
    """Everything a trial fits: truth, train/test data and the initial model."""

    truth: DomaModel
    geometry: dict
    train: Dataset
    test: Dataset
    init: DomaModel


def _setup(n, d, k1, k2, sigma_z, seed, init_kind, rng, settings) -> TrialSetup:
    spec = GroundTruthSpec(d, k1, k2, settings.kappa_min, settings.param_scale, seed)
    truth, geom = sample_ground_truth(spec, rng, return_geometry=True)
    train = generate_dataset(truth, n, settings.dist, sigma_z, rng)
    test = generate_dataset(truth, settings.n_test, settings.dist, sigma_z, rng)
    if init_kind == "oracle_perturbation":
        radius = settings.radius_factor * _oracle_radius(geom["kappa"], truth)
        init = perturbed_init(truth, radius, rng)
    else:
        cfg = settings.init
        init = initialize(train, k1, k2, InitConfig(
            cfg.t_candidates, cfg.refine_sweeps, cfg.scale, seed))
    return TrialSetup(truth, geom, train, test, init)


def setup_trial(cell: Sequence, seed: int, init_kind: str,
                settings: TrialSettings | None = None) -> TrialSetup:
    """The exact problem :func:`run_trial` would fit for ``(cell, seed)``.

    Useful for inspecting a trial sweep by sweep, e.g. with a fit callback.
    """
    settings = settings or TrialSettings()
    if init_kind not in INIT_KINDS:
        raise InvalidInputError(f"init_kind must be one of {INIT_KINDS}, got {init_kind!r}")
    n, d, k1, k2, sigma_z = cell
    return _setup(int(n), int(d), int(k1), int(k2), float(sigma_z), int(seed), init_kind,
                  np.random.default_rng(int(seed)), settings)


def _fill_record(record: TrialRecord, rng, settings: TrialSettings) -> TrialRecord:
    try:
        setup = _setup(record.n, record.d, record.k1, record.k2, record.sigma_z,
                       record.seed, record.init_kind, rng, settings)
        geom, truth, train, test = setup.geometry, setup.truth, setup.train, setup.test
        record.kappa, record.pi_min, record.r_intersect = geom["kappa"], geom["pi_min"], geom["r"]
        report = fit(train, setup.init, settings.fit)
        res = resolve_ambiguity(report.model, truth)
        record.sq_error = res.sq_error
        record.rel_error = res.sq_error / float(np.sum(truth.stacked() ** 2))
        record.nmse = test_nmse(report.model, test)
        record.iterations = report.iterations
        record.converged = report.converged
    except (DomaError, ArithmeticError, ValueError):
        record.failed = True
        record.rel_error = math.inf
        record.converged = False
    return record


def _run_task(task):
    return run_trial(*task)


def run_grid(grid: Sequence[Sequence], trials_per_cell: int, init_kind: str,
             base_seed: int = 0, settings: TrialSettings | None = None,
             workers: int = 1) -> list[TrialRecord]:
    """Run ``trials_per_cell`` trials for every ``(n, d, k1, k2, sigma_z)`` cell.

    Records come back ordered by (cell, trial) whatever ``workers`` is.
    """
    if trials_per_cell < 1:
        raise InvalidInputError("trials_per_cell must be >= 1")
    settings = settings or TrialSettings()
    tasks = [
        (tuple(cell), derive_seed(base_seed, ci, ti), init_kind, settings)
        for ci, cell in enumerate(grid)
        for ti in range(trials_per_cell)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_task, tasks, chunksize=1))
    return [_run_task(t) for t in tasks]


def expand_grid(d_values, n_over_d=None, n_values=None, k1=2, k2=2, sigma_z=(0.0,)) -> list[tuple]:
    """Cartesian grid of cells; ``n`` is either ``ratio * d`` or given directly."""
    if (n_over_d is None) == (n_values is None):
        raise InvalidInputError("give exactly one of n_over_d and n_values")
    cells = []
    for sz in np.atleast_1d(sigma_z):
        for d in np.atleast_1d(d_values):
            ns = [int(round(r * d)) for r in np.atleast_1d(n_over_d)] if n_values is None \
                else [int(v) for v in np.atleast_1d(n_values)]
            for n in ns:
                cells.append((n, int(d), int(k1), int(k2), float(sz)))
    return cells


def summarize(records: Sequence) -> list[dict]:
    """Per-cell medians, in first-appearance order of the cells.

    Accepts :class:`TrialRecord` objects or dict rows read back from CSV.
    """
    groups: dict = {}
    for rec in records:
        row = rec.as_row() if isinstance(rec, TrialRecord) else rec
        key = (int(row["n"]), int(row["d"]), int(row["k1"]), int(row["k2"]),
               float(row["sigma_z"]), str(row["init_kind"]))
        groups.setdefault(key, []).append(row)
    out = []
    for key, rows in groups.items():
        err = np.array([float(r["rel_error"]) for r in rows])
        nmse = np.array([float(r["nmse"]) for r in rows])
        conv = [str(r["converged"]).lower() in ("true", "1") for r in rows]
        with np.errstate(divide="ignore"):
            log_err = np.log10(err)
        out.append({
            "n": key[0], "d": key[1], "k1": key[2], "k2": key[3],
            "sigma_z": key[4], "init_kind": key[5], "trials": len(rows),
            "median_rel_error": float(np.median(err)),
            "median_log10_rel_error": float(np.median(log_err)),
            "median_nmse": float(np.median(nmse)),
            "converged_frac": float(np.mean(conv)),
        })
    return out


def recovery_threshold(summary: Sequence[dict], d: int, target: float = 1e-8,
                       sigma_z: float | None = None) -> Optional[float]:
    """Smallest ``n / d`` whose median relative error is below ``target``."""
    ratios = sorted(
        row["n"] / row["d"] for row in summary
        if row["d"] == d and row["median_rel_error"] < target
        and (sigma_z is None or row["sigma_z"] == sigma_z)
    )
    return ratios[0] if ratios else None
