"""Command-line interface.

Subcommands: simulate, fit, select, test, bound, study1, study2.  Every
command prints a JSON document with the fully resolved config and the results
to stdout; --out writes report files.  Exit codes: 0 success, 2 validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .inference import FitError, fit_rank
from .io import ValidationError, load_dataset, save_dataset, save_state
from .pauli import simulate_dataset
from .selection import information_criteria, scan_ranks
from .states import random_state
from .stats import SingularModelError, bootstrap_pearson_test, pearson_chi2_test, quantum_mse_bound
from .studies import StudyFailure, StudyReport, run_study1, run_study2, write_failure_manifest, write_report

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _emit(config: dict, results: dict, out: str | None, name: str) -> None:
    doc = {"config": config, "results": results}
    print(json.dumps(doc, sort_keys=True, indent=1))
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{name}.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def cmd_simulate(args) -> int:
    config = {
        "command": "simulate",
        "k": args.k,
        "rank": args.rank,
        "n": args.n,
        "seed": args.seed,
        "out": args.out,
        "state_out": args.state_out,
    }
    state = random_state(args.k, args.rank, (args.seed, 0))
    data = simulate_dataset(state, args.n, (args.seed, 1))
    save_dataset(data, args.out)
    if args.state_out:
        save_state(state, args.state_out)
    _emit(config, {"settings": len(data.counts), "total_count": data.total_count}, None, "simulate")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = {
        "command": "fit",
        "in": args.infile,
        "rank": args.rank,
        "restarts": args.restarts,
        "seed": args.seed,
    }
    data = load_dataset(args.infile)
    fit = fit_rank(data, args.rank, restarts=args.restarts, seed=args.seed)
    aic, bic = information_criteria(fit, data)
    results = {
        "rank": fit.rank,
        "loglik": fit.loglik,
        "aic": aic,
        "bic": bic,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "restarts_used": fit.restarts_used,
        "grad_norm": fit.grad_norm,
        "eigenvalues": sorted(fit.state.eigenvalues().tolist(), reverse=True),
    }
    if args.state_out:
        save_state(fit.state, args.state_out)
    _emit(config, results, args.out, "fit")
    return EXIT_OK


def cmd_select(args) -> int:
    config = {
        "command": "select",
        "in": args.infile,
        "max_rank": args.max_rank,
        "criterion": args.criterion,
        "restarts": args.restarts,
        "seed": args.seed,
    }
    data = load_dataset(args.infile)
    scan = scan_ranks(data, max_rank=args.max_rank, restarts=args.restarts, seed=args.seed)
    results = {
        "entries": [
            {"rank": e.rank, "loglik": e.loglik, "aic": e.aic, "bic": e.bic, "converged": e.converged}
            for e in scan.entries
        ],
        "stop_rank": scan.stop_rank,
    }
    if args.criterion in ("aic", "both"):
        results["selected_rank_aic"] = scan.selected_rank_aic
    if args.criterion in ("bic", "both"):
        results["selected_rank_bic"] = scan.selected_rank_bic
    _emit(config, results, args.out, "select")
    return EXIT_OK


def cmd_test(args) -> int:
    config = {
        "command": "test",
        "in": args.infile,
        "rank": args.rank,
        "bootstrap": args.bootstrap,
        "alpha": args.alpha,
        "seed": args.seed,
    }
    data = load_dataset(args.infile)
    if args.bootstrap > 0:
        result = bootstrap_pearson_test(
            data, args.rank, n_boot=args.bootstrap, alpha=args.alpha, seed=args.seed
        )
    else:
        fit = fit_rank(data, args.rank, seed=args.seed)
        result = pearson_chi2_test(data, fit, alpha=args.alpha)
    results = {
        "statistic": result.statistic,
        "df": result.df,
        "p_value": result.p_value,
        "threshold": result.threshold,
        "decision": result.decision,
        "method": result.method,
        "asymptotic_p_value": result.asymptotic_p_value,
        "dropped_replicates": result.dropped_replicates,
    }
    _emit(config, results, args.out, "test")
    return EXIT_OK


def cmd_bound(args) -> int:
    config = {"command": "bound", "k": args.k, "n": args.n}
    _emit(config, {"qmse_bound": quantum_mse_bound(args.k, args.n)}, args.out, "bound")
    return EXIT_OK


def _run_study(args, runner, name: str) -> int:
    try:
        report = runner()
    except StudyFailure as exc:
        if args.out:
            write_report(exc.partial_report, args.out)
            write_failure_manifest(args.out, name, str(exc))
        print(json.dumps({"error": str(exc), "partial": True}), file=sys.stderr)
        return EXIT_NUMERICAL
    if args.out:
        files = write_report(report, args.out)
    else:
        files = []
    doc = {
        "config": report.config,
        "config_hash": report.config_hash,
        "aggregates": report.aggregates,
        "files": files,
    }
    print(json.dumps(doc, sort_keys=True, indent=1))
    return EXIT_OK


def cmd_study1(args) -> int:
    return _run_study(
        args,
        lambda: run_study1(
            k=args.k,
            true_ranks=tuple(args.true_ranks),
            replicates=args.replicates,
            n=args.n,
            max_rank=args.max_rank,
            restarts=args.restarts,
            seed=args.seed,
        ),
        "study1",
    )


def cmd_study2(args) -> int:
    return _run_study(
        args,
        lambda: run_study2(
            replicates=args.replicates,
            n_grid=tuple(args.n_grid),
            restarts=args.restarts,
            seed=args.seed,
        ),
        "study2",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tomorank",
        description="Rank-based model selection for multi-qubit state tomography",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset from a random low-rank state")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset file (.json or .csv)")
    p.add_argument("--state-out", help="optional file for the true state")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit at a fixed rank")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional output directory")
    p.add_argument("--state-out", help="optional file for the fitted state")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="scan ranks and select by AIC/BIC")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--criterion", choices=["aic", "bic", "both"], default="both")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("test", help="goodness-of-fit test of a rank hypothesis")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--bootstrap", type=int, default=100, help="bootstrap replicates; 0 for asymptotic")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("bound", help="pure-state quantum MSE bound")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("study1", help="rank recovery on random low-rank 4-qubit states")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--true-ranks", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--max-rank", type=int, default=4)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for report files")
    p.set_defaults(func=cmd_study1)

    p = sub.add_parser("study2", help="one-qubit purity and repetition sweep")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--n-grid", type=int, nargs="+", default=[10, 50, 100, 250, 500])
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for report files")
    p.set_defaults(func=cmd_study2)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, SingularModelError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
