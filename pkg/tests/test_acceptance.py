"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` (lines are printed even
without ``-s``). Everything is seeded; the whole module takes about a
minute on one core.
"""

import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from doma.errors import DomaError
from doma.metrics import relative_param_error, resolve_ambiguity, test_nmse
from doma.model import Dataset, DomaModel, activation_index, predict
from doma.optimizer import abgd_sweep, fit, grad_alpha_block, grad_beta_block, loss
from doma.spectral import (
    InitConfig,
    estimate_moments,
    initialize,
    pairwise_difference_rank,
    shifted_stack_rank,
)
from doma.synth import (
    GroundTruthSpec,
    derive_seed,
    expand_grid,
    generate_dataset,
    recovery_threshold,
    run_grid,
    sample_ground_truth,
    setup_trial,
    summarize,
)
from doma.tropical import compress, equivalent_on_samples

from conftest import away_from_boundaries, finite_difference_grad, random_model

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}")
        assert ok, detail

    return emit


# --- 1: block gradients against central differences -------------------------

def test_01_gradient_oracle(verdict):
    start = time.perf_counter()
    worst, checked = 0.0, 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        d, k1, k2 = int(rng.integers(1, 11)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        model = random_model(rng, d, k1, k2)
        x = away_from_boundaries(model, rng.normal(size=(int(rng.integers(20, 201)), d)))
        data = Dataset(x, rng.normal(size=x.shape[0]))
        idx = activation_index(model, data)
        fd_b = finite_difference_grad(
            lambda b: loss(model.replace(beta=b), data), np.array(model.beta))
        fd_a = finite_difference_grad(
            lambda a: loss(model.replace(alpha=a), data), np.array(model.alpha))
        pairs = [(grad_beta_block(model, data, idx, j), fd_b[j]) for j in range(k1)]
        pairs += [(grad_alpha_block(model, data, idx, l), fd_a[l]) for l in range(k2)]
        for g, fd in pairs:
            scale = max(np.linalg.norm(fd), 1e-8)
            worst = max(worst, float(np.linalg.norm(g - fd)) / scale)
            checked += 1
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-5 and elapsed < 10,
            f"{checked} blocks on 100 instances, worst rel error {worst:.2e}, {elapsed:.1f}s")


# --- 2 and 3: noiseless recovery from an oracle start ----------------------

RECOVERY_CELL = (500, 10, 2, 2, 0.0)


@pytest.fixture(scope="module")
def recovery_runs():
    """Per-trial error sequences for 20 oracle-initialized noiseless fits."""
    start = time.perf_counter()
    runs = []
    for trial in range(20):
        setup = setup_trial(RECOVERY_CELL, derive_seed(2024, 0, trial), "oracle_perturbation")
        errors = []
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                report = fit(setup.train, setup.init, callback=lambda t, m: errors.append(
                    relative_param_error(m, setup.truth)))
        except DomaError:
            report, errors = None, errors + [np.inf]
        runs.append((report, errors))
    return runs, time.perf_counter() - start


def test_02_noiseless_exact_recovery(recovery_runs, verdict):
    runs, elapsed = recovery_runs
    finals = [errors[-1] for _, errors in runs]
    hits = sum(e < 1e-8 for e in finals)
    verdict(2, hits >= 18 and elapsed < 120,
            f"E < 1e-8 in {hits}/20 trials (at most {max(len(e) for _, e in runs if e[-1] < 1e-8)} sweeps), "
            f"{elapsed:.1f}s")


def decrement_cv(errors, window=10):
    """Coefficient of variation of log10 error decrements over the last sweeps."""
    logs = np.log10(np.asarray(errors[-(window + 1):]))
    steps = np.diff(logs)
    return float(np.std(steps) / abs(np.mean(steps)))


def test_03_linear_convergence_rate(recovery_runs, verdict):
    runs, _ = recovery_runs
    # judged trial by trial with the 18-of-20 bar of criterion 2; a trial that
    # failed to recover counts as a miss
    cvs = [decrement_cv(errors) if errors[-1] < 1e-8 else np.inf for _, errors in runs]
    steady = sum(cv < 0.3 for cv in cvs)
    finite = [cv for cv in cvs if np.isfinite(cv)]
    verdict(3, steady >= 18,
            f"decrement CV < 0.3 over the last 10 sweeps in {steady}/20 trials "
            f"(median {np.median(finite):.1e}, worst recovered {max(finite):.2f})")


# --- 4: noise floor halves when n doubles -----------------------------------

def test_04_noise_floor_scaling(verdict):
    medians = {}
    for n in (2000, 4000):
        # one cell per call, so both sizes share truths through the seed chain
        records = run_grid([(n, 10, 2, 2, 0.1)], 20, "oracle_perturbation", base_seed=11)
        medians[n] = float(np.median([r.sq_error for r in records]))
    ratio = medians[2000] / medians[4000]
    verdict(4, 1.4 <= ratio <= 2.8,
            f"median sq error {medians[2000]:.3e} -> {medians[4000]:.3e}, ratio {ratio:.2f}")


# --- 5: recovery threshold grows linearly in d ------------------------------

def test_05_phase_transition_linearity(verdict):
    start = time.perf_counter()
    ratios = [2, 5, 10, 20, 50, 100]
    summary = summarize(run_grid(expand_grid([5, 10, 20], n_over_d=ratios), 20,
                                 "oracle_perturbation", base_seed=3))
    thresholds = {d: recovery_threshold(summary, d) for d in (5, 10, 20)}
    elapsed = time.perf_counter() - start
    found = [t for t in thresholds.values() if t is not None]
    ok = len(found) == 3 and max(found) <= 2 * min(found) and elapsed < 600
    verdict(5, ok, f"threshold n/d by d: {thresholds}, {elapsed:.1f}s")


# --- 6: more spectral candidates help ---------------------------------------

def spectral_success(t_candidates, trials=10):
    wins = []
    for s in range(trials):
        rng = np.random.default_rng(100 + s)
        truth = sample_ground_truth(GroundTruthSpec(10, 2, 2, seed=100 + s), rng)
        train = generate_dataset(truth, 2000, None, 0.0, rng)
        test = generate_dataset(truth, 1000, None, 0.0, rng)
        init = initialize(train, 2, 2, InitConfig(t_candidates=t_candidates, seed=s))
        wins.append(test_nmse(fit(train, init).model, test) < 1e-3)
    return wins


def test_06_initialization_success(verdict):
    many, few = spectral_success(200), spectral_success(5)
    rate_many, rate_few = np.mean(many), np.mean(few)
    verdict(6, rate_many >= 0.6 and rate_few < rate_many,
            f"NMSE < 1e-3 with T=200 in {sum(many)}/10, with T=5 in {sum(few)}/10")


# --- 7: moment estimates for y = |x| ----------------------------------------

def test_07_moment_formulas(abs_model, verdict):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((10**6, 1))
    moments = estimate_moments(Dataset(x, predict(abs_model, x)))
    m2, m1 = float(moments.m2[0, 0]), float(moments.m1[0])
    target = np.sqrt(2 / np.pi)
    rel = abs(m2 - target) / target
    verdict(7, rel <= 0.02 and abs(m1) < 0.01,
            f"M2 = {m2:.4f} vs {target:.4f} (rel {rel:.2e}), m1 = {m1:.2e}")


# --- 8: rank of the slope differences ---------------------------------------

def test_08_span_rank(verdict):
    rng = np.random.default_rng(8)
    bound_ok = equality_ok = shift_ok = True
    generic = 0
    for _ in range(1000):
        d, k1, k2 = int(rng.integers(1, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        model = random_model(rng, d, k1, k2)
        rank = pairwise_difference_rank(model)
        bound_ok &= rank <= k1 + k2 - 1
        if d + 1 >= k1 + k2:
            generic += 1
            equality_ok &= rank == k1 + k2 - 1
        # any block is a valid shift; it makes one stacked row zero
        v = model.beta[int(rng.integers(k1))]
        shift_ok &= shifted_stack_rank(model, v) == rank
    verdict(8, bound_ok and equality_ok and shift_ok,
            f"bound {bound_ok}, equality on {generic} generic models {equality_ok}, "
            f"shifted stack {shift_ok}")


# --- 9: ambiguity-resolved error --------------------------------------------

def grid_shift_objective(est, truth, grid):
    v0, v1 = np.meshgrid(grid, grid, indexing="ij")
    best = np.inf
    for p1 in itertools.permutations(range(truth.k1)):
        for p2 in itertools.permutations(range(truth.k2)):
            h = np.vstack([est.beta[list(p1)] - truth.beta, est.alpha[list(p2)] - truth.alpha])
            best = min(best, float(sum((r[0] + v0) ** 2 + (r[1] + v1) ** 2 for r in h).min()))
    return best


def test_09_ambiguity_invariance(verdict):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        d, k1, k2 = int(rng.integers(1, 8)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        truth = random_model(rng, d, k1, k2)
        v = rng.normal(scale=3.0, size=d + 1)
        moved = truth.replace(beta=truth.beta[rng.permutation(k1)] + v,
                              alpha=truth.alpha[rng.permutation(k2)] + v)
        worst = max(worst, relative_param_error(moved, truth))

    grid = np.linspace(-4, 4, 801)
    spacing = grid[1] - grid[0]
    # a grid point lies within spacing/2 of the optimum in each coordinate
    allowance = 4 * 2 * (spacing / 2) ** 2
    grid_ok = True
    for _ in range(10):
        truth, est = random_model(rng, 1, 2, 2), random_model(rng, 1, 2, 2)
        exact = resolve_ambiguity(est, truth).sq_error
        brute = grid_shift_objective(est, truth, grid)
        grid_ok &= exact <= brute + 1e-12 and brute - exact <= allowance + 1e-12
    verdict(9, worst <= 1e-12 and grid_ok,
            f"worst E after shift+permutation {worst:.1e}, grid oracle agrees: {grid_ok}")


# --- 10: lossless compression -----------------------------------------------

def test_10_compression_losslessness(verdict):
    textbook = DomaModel(1, [[-1.0, 0.0], [1.0, 0.0], [0.5, 0.0]], [[0.0, 0.0]])
    small = compress(textbook).model
    textbook_ok = small.k1 == 2 and small.k2 == 1

    rng = np.random.default_rng(10)
    exact_removals, worst = 0, 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        # 2 <= k <= d + 1: the random blocks are affinely independent vertices and the
        # injected mix of at least two of them is not a mere duplicate
        k1, k2 = int(rng.integers(2, d + 2)), int(rng.integers(2, d + 2))
        base = random_model(rng, d, k1, k2)
        pos_b, pos_a = int(rng.integers(k1 + 1)), int(rng.integers(k2 + 1))
        beta = np.insert(base.beta, pos_b, rng.dirichlet(np.ones(k1)) @ base.beta, axis=0)
        alpha = np.insert(base.alpha, pos_a, rng.dirichlet(np.ones(k2)) @ base.alpha, axis=0)
        bloated = DomaModel(d, beta, alpha)
        report = compress(bloated)
        exact_removals += report.removed_beta == (pos_b,) and report.removed_alpha == (pos_a,)
        xs = rng.normal(scale=3.0, size=(10**4, d))
        worst = max(worst, float(np.max(np.abs(predict(bloated, xs) - predict(report.model, xs)))))
    verdict(10, textbook_ok and exact_removals == 100 and worst <= 1e-9,
            f"textbook -> {small.k1}+{small.k2} blocks, exact removals {exact_removals}/100, "
            f"max |df| {worst:.1e}")
    assert equivalent_on_samples(textbook, small, np.linspace(-5, 5, 101)[:, None])


# --- 11: empty cells keep their parameters ----------------------------------

def test_11_empty_cell_bitwise(verdict):
    rng = np.random.default_rng(11)
    untouched, cases = 0, 0
    for _ in range(50):
        d = int(rng.integers(1, 6))
        model = random_model(rng, d, 3, 3)
        # push one block per part far below the others so its cell holds no sample
        jb, la = int(rng.integers(3)), int(rng.integers(3))
        beta, alpha = np.array(model.beta), np.array(model.alpha)
        beta[jb, -1] -= 1e3
        alpha[la, -1] -= 1e3
        model = model.replace(beta=beta, alpha=alpha)
        data = Dataset(rng.normal(size=(200, d)), rng.normal(size=200))
        idx = activation_index(model, data)
        assert idx.beta_sizes()[jb] == 0 and idx.alpha_sizes()[la] == 0
        out = abgd_sweep(model, data)
        cases += 1
        untouched += (out.beta[jb].tobytes() == model.beta[jb].tobytes()
                      and out.alpha[la].tobytes() == model.alpha[la].tobytes())
    verdict(11, untouched == cases, f"empty blocks bitwise unchanged in {untouched}/{cases} sweeps")


# --- 12: repeated CLI runs are byte-identical -------------------------------

def strip_header(data: bytes) -> bytes:
    return b"\n".join(ln for ln in data.split(b"\n") if not ln.startswith(b"# doma"))


def run_cli_session(workdir):
    """Run every subcommand once; return {name: bytes} of everything produced."""
    workdir.mkdir()

    def doma(*argv):
        proc = subprocess.run([sys.executable, "-m", "doma", *argv], cwd=workdir,
                              capture_output=True, check=False)
        assert proc.returncode in (0, 2), proc.stderr.decode()
        return proc.stdout

    (workdir / "grid.toml").write_text(
        'd = [4]\nn_over_d = [10, 40]\ntrials = 3\ninit_kind = "spectral"\nT = 10\n')
    (workdir / "x.csv").write_text("x1,x2,x3,x4\n0.5,-1,2,0\n-0.3,0.1,0.2,1.5\n")
    out = {
        "generate": doma("generate", "--d", "4", "--k1", "2", "--k2", "2", "--n", "300",
                         "--sigma-z", "0.05", "--seed", "5", "--out", "train.csv",
                         "--truth", "truth.json"),
        "init": doma("init", "--data", "train.csv", "--k1", "2", "--k2", "2", "--T", "20",
                     "--seed", "5"),
        "fit": doma("fit", "--data", "train.csv", "--k1", "2", "--k2", "2", "--T", "20",
                    "--seed", "5", "--trace", "--out", "est.json"),
        "predict": doma("predict", "--model", "est.json", "--data", "x.csv"),
        "compress": doma("compress", "--model", "est.json"),
        "eval": doma("eval", "--model", "est.json", "--truth", "truth.json",
                     "--data", "train.csv", "--mc", "5000", "--seed", "1"),
        "simulate": doma("simulate", "--grid", "grid.toml", "--out", "trials.csv"),
        "summarize": doma("summarize", "--in", "trials.csv"),
    }
    for path in sorted(workdir.iterdir()):
        out[path.name] = path.read_bytes()
    return {k: strip_header(v) for k, v in out.items()}


def test_12_cli_determinism(tmp_path, verdict):
    first, second = run_cli_session(tmp_path / "a"), run_cli_session(tmp_path / "b")
    differing = sorted(k for k in first if first[k] != second.get(k))
    verdict(12, not differing and first.keys() == second.keys(),
            f"{len(first)} outputs compared across two runs, differing: {differing or 'none'}")
