"""Command-line interface: ``doma <command> [options]``.

Exit codes: 0 success, 1 usage or I/O error, 2 fit stopped at the iteration
cap without meeting the convergence criterion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as dio
from .errors import DomaError
from .metrics import generalization_gap, relative_param_error, test_nmse
from .model import predict
from .optimizer import FitConfig, fit
from .spectral import InitConfig, initialize
from .synth import (
    INIT_KINDS,
    CovariateDistribution,
    GroundTruthSpec,
    TrialRecord,
    TrialSettings,
    expand_grid,
    generate_dataset,
    run_grid,
    sample_ground_truth,
    summarize,
)
from .tropical import DEFAULT_TOL, compress

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _scale(value: str):
    return value if value == "auto" else float(value)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _add_init_flags(p):
    p.add_argument("--T", dest="t_candidates", type=int, default=100,
                   help="number of random candidates (default 100)")
    p.add_argument("--refine-sweeps", type=int, default=5)
    p.add_argument("--scale", type=_scale, default="auto",
                   help="candidate scale, a number or 'auto' (std of y)")


def _init_config(args) -> InitConfig:
    return InitConfig(args.t_candidates, args.refine_sweeps, args.scale, args.seed)


def cmd_fit(args) -> int:
    data = dio.load_dataset(args.data)
    if args.init_model:
        init = dio.load_model(args.init_model)
    else:
        init = initialize(data, args.k1, args.k2, _init_config(args))
    config = FitConfig(gamma=args.gamma, max_iters=args.max_iters, record_trace=args.trace)
    report = fit(data, init, config)
    _emit(dio.model_to_json(report.model), args.out)
    report_path = args.report
    if report_path is None and args.out is not None:
        report_path = Path(args.out).with_suffix(".report.json")
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if not report.converged:
        print(f"warning: no convergence after {report.iterations} sweeps", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_init(args) -> int:
    data = dio.load_dataset(args.data)
    model = initialize(data, args.k1, args.k2, _init_config(args))
    _emit(dio.model_to_json(model), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = dio.load_model(args.model)
    x = dio.load_covariates(args.data)
    if x.shape[0] and x.shape[1] != model.d:
        raise DomaError(f"{args.data}: {x.shape[1]} covariates but the model has d={model.d}")
    y_hat = predict(model, x) if x.shape[0] else np.zeros(0)
    target = args.out if args.out is not None else sys.stdout
    dio.write_csv(target, ["y_hat"], ([v] for v in y_hat))
    return EXIT_OK


def cmd_compress(args) -> int:
    model = dio.load_model(args.model)
    report = compress(model, args.tol)
    if args.out is not None:
        dio.save_model(report.model, args.out)
    sys.stdout.write(json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    est = dio.load_model(args.model)
    out = {}
    if args.truth:
        truth = dio.load_model(args.truth)
        same_shape = (est.d, est.k1, est.k2) == (truth.d, truth.k1, truth.k2)
        out["rel_error"] = relative_param_error(est, truth) if same_shape else None
        out["generalization_gap"] = generalization_gap(
            est, truth, args.mc, np.random.default_rng(args.seed))
    if args.data:
        out["nmse"] = test_nmse(est, dio.load_dataset(args.data))
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    spec = GroundTruthSpec(args.d, args.k1, args.k2, args.kappa_min, args.param_scale, args.seed)
    truth = sample_ground_truth(spec, rng)
    data = generate_dataset(truth, args.n, CovariateDistribution(), args.sigma_z, rng)
    dio.save_dataset(data, args.out)
    if args.truth:
        dio.save_model(truth, args.truth)
    return EXIT_OK


def _settings_from_config(cfg: dict) -> TrialSettings:
    cov = cfg.get("covariates", {"kind": "standard_normal"})
    if isinstance(cov, str):
        cov = {"kind": cov}
    dist = CovariateDistribution(
        kind=cov.get("kind", "standard_normal"),
        half_width=float(cov.get("half_width", 1.0)),
        centers=tuple(map(tuple, cov["centers"])) if "centers" in cov else None,
        weights=tuple(cov["weights"]) if "weights" in cov else None,
    )
    return TrialSettings(
        kappa_min=float(cfg.get("kappa_min", 0.5)),
        param_scale=float(cfg.get("param_scale", 1.0)),
        radius_factor=float(cfg.get("radius_factor", 0.05)),
        n_test=int(cfg.get("n_test", 1000)),
        dist=dist,
        init=InitConfig(int(cfg.get("T", 100)), int(cfg.get("refine_sweeps", 5)),
                        _scale(str(cfg.get("scale", "auto")))),
        fit=FitConfig(gamma=float(cfg.get("gamma", 1e-10)),
                      max_iters=int(cfg.get("max_iters", 2000))),
    )


def grid_cells(cfg: dict) -> list:
    if "cells" in cfg:
        return [tuple(c) for c in cfg["cells"]]
    return expand_grid(
        cfg["d"], n_over_d=cfg.get("n_over_d"), n_values=cfg.get("n"),
        k1=cfg.get("k1", 2), k2=cfg.get("k2", 2), sigma_z=cfg.get("sigma_z", [0.0]),
    )


def cmd_simulate(args) -> int:
    cfg = dio.load_grid_config(args.grid)
    trials = args.trials if args.trials is not None else int(cfg.get("trials", 20))
    init_kind = args.init_kind or cfg.get("init_kind", "oracle_perturbation")
    base_seed = args.seed if args.seed is not None else int(cfg.get("base_seed", 0))
    records = run_grid(grid_cells(cfg), trials, init_kind, base_seed,
                       _settings_from_config(cfg), workers=args.workers)
    cols = TrialRecord.CSV_COLUMNS + TrialRecord.EXTRA_COLUMNS
    target = args.out if args.out is not None else sys.stdout
    dio.write_csv(target, cols, ([r.as_row()[c] for c in cols] for r in records))
    return EXIT_OK


SUMMARY_COLUMNS = ("n", "d", "k1", "k2", "sigma_z", "init_kind", "trials",
                   "median_rel_error", "median_log10_rel_error", "median_nmse",
                   "converged_frac")


def cmd_summarize(args) -> int:
    rows = dio.read_csv_dicts(args.input)
    summary = summarize(rows)
    target = args.out if args.out is not None else sys.stdout
    dio.write_csv(target, SUMMARY_COLUMNS, ([s[c] for c in SUMMARY_COLUMNS] for s in summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="doma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"doma {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a DoMA model with ABGD")
    p.add_argument("--data", required=True)
    p.add_argument("--k1", type=int, required=True)
    p.add_argument("--k2", type=int, required=True)
    p.add_argument("--init-model", help="start from this model instead of spectral init")
    _add_init_flags(p)
    p.add_argument("--gamma", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--trace", action="store_true", help="record loss per sweep in the report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model JSON path (default: stdout)")
    p.add_argument("--report", help="report JSON path (default: <out>.report.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("init", help="spectral initialization only")
    p.add_argument("--data", required=True)
    p.add_argument("--k1", type=int, required=True)
    p.add_argument("--k2", type=int, required=True)
    _add_init_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("predict", help="evaluate a model on covariates")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV with header x1,...,xd")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compress", help="drop inactive blocks (lossless)")
    p.add_argument("--model", required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--out", help="also write the compressed model JSON here")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("eval", help="parameter error, test NMSE and generalization gap")
    p.add_argument("--model", required=True)
    p.add_argument("--truth")
    p.add_argument("--data")
    p.add_argument("--mc", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="sample a ground truth and a dataset")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k1", type=int, required=True)
    p.add_argument("--k2", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma-z", type=float, default=0.0)
    p.add_argument("--kappa-min", type=float, default=0.5)
    p.add_argument("--param-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="write the ground-truth model JSON here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run a Monte Carlo trial grid")
    p.add_argument("--grid", required=True, help="TOML or JSON grid config")
    p.add_argument("--trials", type=int)
    p.add_argument("--init-kind", choices=INIT_KINDS)
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="per-cell medians of a trial CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, DomaError, ValueError, KeyError, ZeroDivisionError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, OSError) and exc.filename:
            msg = f"cannot read {exc.filename}: {exc.strerror}"
        print(f"doma {args.command}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
