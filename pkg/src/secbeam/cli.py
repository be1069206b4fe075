"""``secbeam`` command-line entry point.

Exit codes: 0 success, 1 input error, 2 at least one solve did not converge
(results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .ckm import read_ckm, worst_case_beta
from .errors import SecbeamError
from .experiment import format_csv, load_experiment, load_scenario, load_scenario_config, run_experiment
from .oracle import GridSpec, grid_search, verify_report
from .solver import SCHEMES, solve_scheme

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _cmd_run(args) -> int:
    spec = load_experiment(args.spec)
    result = run_experiment(spec, threads=args.threads)
    text = format_csv(result)
    out = args.output or spec.output
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        print(f"wrote {len(result.rows)} rows to {out}", file=sys.stderr)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK if result.all_converged else EXIT_NOT_CONVERGED


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    config = load_scenario_config(args.scenario)
    report = solve_scheme(args.scheme, scenario, config, los_index=args.los_index)
    out = {
        "scheme": report.scheme,
        "secrecy_bits": report.secrecy_bits,
        "t": report.allocation.t.tolist(),
        "p": report.allocation.p.tolist(),
        "lambda": report.dual.lam,
        "mu": report.dual.mu,
        "worst_location": report.dual.active_j,
        "iterations": report.iterations,
        "converged": report.converged,
        "kkt_max_residual": report.kkt_residuals.max if report.kkt_residuals else None,
    }
    if report.message:
        out["message"] = report.message
    if args.oracle_check:
        grid = GridSpec(args.grid_steps, args.grid_steps, args.refine_levels)
        oracle = grid_search(scenario, grid)
        check = verify_report(scenario, report, oracle=oracle, rel_tol=args.rel_tol)
        out["oracle"] = {
            "secrecy_bits": oracle.c_bits,
            "t": oracle.allocation.t.tolist(),
            "p": oracle.allocation.p.tolist(),
            "gap": check.gap,
            "passed": check.passed,
        }
    print(json.dumps(out, indent=2))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _cmd_validate(args) -> int:
    ckm = read_ckm(args.ckm)
    beta = worst_case_beta(ckm)
    counts = [[ckm.samples[l][j].size for j in range(ckm.n_locations)]
              for l in range(ckm.n_angles)]
    print(f"{args.ckm}: ok")
    print(f"  angles (deg): {np.round(np.degrees(ckm.angles), 6).tolist()}")
    print(f"  locations:    {ckm.n_locations}")
    print(f"  p_tx_ref:     {ckm.p_tx_ref:g} W")
    print(f"  samples:      {sum(map(sum, counts))} (min per cell {min(map(min, counts))})")
    print("  worst-case beta per watt (rows = locations, cols = beams):")
    for row in beta:
        print("    " + "  ".join(f"{v:.6g}" for v in row))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="secbeam", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment file and write a CSV table")
    run.add_argument("spec")
    run.add_argument("-o", "--output", help="CSV path ('-' for stdout); overrides the experiment file")
    run.add_argument("--threads", type=int, default=None,
                     help="sweep parallelism (default: $SECBEAM_THREADS or 1)")
    run.set_defaults(func=_cmd_run)

    solve = sub.add_parser("solve", help="solve one scenario with one scheme")
    solve.add_argument("scenario")
    solve.add_argument("--scheme", choices=SCHEMES, default="joint")
    solve.add_argument("--los-index", type=int, default=0)
    solve.add_argument("--oracle-check", action="store_true",
                       help="compare against the brute-force grid optimum (<= 3 beams)")
    solve.add_argument("--grid-steps", type=int, default=101)
    solve.add_argument("--refine-levels", type=int, default=3)
    solve.add_argument("--rel-tol", type=float, default=0.01)
    solve.set_defaults(func=_cmd_solve)

    val = sub.add_parser("validate", help="parse and summarise a CKM file")
    val.add_argument("ckm")
    val.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SecbeamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
