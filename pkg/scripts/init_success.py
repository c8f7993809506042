"""Spectral initialization: success rate as a function of the candidate count T.

A trial succeeds when the full fit started from the selected candidate
reaches test NMSE below ``--threshold`` on noiseless data.

    python3 scripts/init_success.py --T 1 5 20 50 200 --trials 10
"""

import argparse

import numpy as np

from doma.metrics import test_nmse
from doma.optimizer import fit
from doma.spectral import InitConfig, initialize
from doma.synth import GroundTruthSpec, generate_dataset, sample_ground_truth


def trial_outcome(seed, d, k, n, t_candidates, sigma_z):
    rng = np.random.default_rng(100 + seed)
    truth = sample_ground_truth(GroundTruthSpec(d, k, k, seed=100 + seed), rng)
    train = generate_dataset(truth, n, None, sigma_z, rng)
    test = generate_dataset(truth, 1000, None, sigma_z, rng)
    init = initialize(train, k, k, InitConfig(t_candidates=t_candidates, seed=seed))
    with np.errstate(over="ignore", invalid="ignore"):
        return test_nmse(fit(train, init).model, test)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, nargs="+", default=[1, 5, 20, 50, 200])
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--sigma-z", type=float, default=0.0)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--threshold", type=float, default=1e-3)
    args = ap.parse_args()

    print(f"{'T':>5} {'success':>8} {'median NMSE':>12}")
    for t in args.T:
        nmse = np.array([trial_outcome(s, args.d, args.k, args.n, t, args.sigma_z)
                         for s in range(args.trials)])
        rate = np.mean(nmse < args.threshold)
        print(f"{t:>5} {rate:>8.2f} {np.median(nmse):>12.2e}")


if __name__ == "__main__":
    main()
