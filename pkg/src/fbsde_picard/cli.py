"""Command line entry point: ``fbsde-picard {solve,compare,check,schema}``.

Exit codes: 0 success, 1 numerical failure, 2 configuration or validation
failure, 3 failed hypotheses (ordering hypotheses for ``compare``, probed
assumptions for ``check``).  Every failure after the output directory is
known leaves an ``error.json`` record there.  No output file contains
timings, so identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .comparison import HypothesisFailure, SigmaMismatch, run_comparison, verify_ordering_hypotheses
from .config import SCHEMA, ConfigError, ExperimentConfig, load_config
from .diagnostics import bmo2, estimate_norms, phi_bound_check
from .dsl import NonFiniteError
from .model import CoefficientError, probe_all
from .picard import ConvergenceError, run

__all__ = ["main", "cmd_solve", "cmd_compare", "cmd_check", "EXIT_OK", "EXIT_NUMERICAL", "EXIT_CONFIG", "EXIT_HYPOTHESIS"]

log = logging.getLogger("fbsde_picard")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG, EXIT_HYPOTHESIS = 0, 1, 2, 3

# failures of the numerics proper, as opposed to bad input
_NUMERICAL = (ArithmeticError, CoefficientError, NonFiniteError, np.linalg.LinAlgError)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _error(out: Path | None, command: str, code: int, err: BaseException, **extra) -> int:
    log.error("%s: %s", type(err).__name__, err)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "error.json", {
            "command": command,
            "exit_code": code,
            "error": type(err).__name__,
            "message": str(err),
            **extra,
        })
    return code


def _probe(cfg: ExperimentConfig, problem):
    pc = cfg.probes
    return probe_all(problem, pc.num_probes, pc.radius, pc.seed, pc.ratio_tol, pc.order_tol)


def cmd_solve(cfg: ExperimentConfig) -> int:
    """Probe the assumptions, iterate to convergence and write the reports.

    Files: assumptions.json, history.csv, convergence.json, norms.json,
    residuals.json and, with ``dump_paths``, X.bin, Y.bin, Z.bin.
    """
    out = _out(cfg)
    p = cfg.problem
    try:
        assumptions = _probe(cfg, p)
    except _NUMERICAL as err:
        return _error(out, "solve", EXIT_NUMERICAL, err)
    io.write_json(out / "assumptions.json", assumptions.to_dict())
    if not assumptions.passed:
        log.warning("assumptions not verified on the probe ball: %s", ", ".join(assumptions.failures()))

    try:
        (X, Y, Z), report, state = run(p, cfg.iteration)
    except ConvergenceError as err:
        io.write_history(out / "history.csv", err.report.history)
        io.write_json(out / "convergence.json", err.report.to_dict())
        return _error(out, "solve", EXIT_NUMERICAL, err, final_k=err.report.final_k)
    except _NUMERICAL as err:
        return _error(out, "solve", EXIT_NUMERICAL, err)

    grid = state.grid
    io.write_history(out / "history.csv", report.history)
    summary = report.to_dict()
    summary["Y_initial"] = Y[:, 0, :].mean(axis=0).tolist()
    summary["assumptions_passed"] = assumptions.passed
    io.write_json(out / "convergence.json", summary)

    basis = cfg.iteration.basis
    norms_X = estimate_norms(X, None, grid, cfg.p_list)
    norms_Y = estimate_norms(Y, Z, grid, cfg.p_list, cond=X, basis=basis)
    norms_Z = estimate_norms(np.concatenate([Z, Z[:, -1:]], axis=1), None, grid, cfg.p_list)
    U_sup = float(np.max(np.abs(state.U.Y)))
    seed_bound = float(np.max(np.abs(state.Y0.Y))) + bmo2(state.Y0.Z, grid.dt, state.bundle.paths(), basis)
    K = cfg.phi_K if cfg.phi_K is not None else U_sup
    norms_Y.phi_check = phi_bound_check(K, Z, p, grid, cond=X, basis=basis)
    norms_Y.phi_check["K_candidates"] = {"U_sup": U_sup, "Y0_sup_plus_BMO2": seed_bound}
    z_dict = norms_Z.to_dict()
    z_dict.pop("S_inf")  # Z lives on steps, not nodes; only H^p is meaningful
    z_dict.pop("S_p")
    io.write_json(out / "norms.json", {"X": norms_X.to_dict(), "Y": norms_Y.to_dict(), "Z": {"H_p": z_dict["H_p"]}})

    budget = cfg.iteration.residual_budget if cfg.iteration.residual_budget is not None else float(np.sqrt(grid.dt))
    io.write_json(out / "residuals.json", {**report.residuals, "budget": budget, "within_budget": report.residual_ok})

    if cfg.dump_paths:
        io.write_paths(out / "X.bin", X, grid.N, p.d)
        io.write_paths(out / "Y.bin", Y, grid.N, p.d)
        io.write_paths(out / "Z.bin", Z, grid.N, p.d)
    log.info("converged at k=%d, Y_0 = %s", report.converged_k, summary["Y_initial"])
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    """Verify the ordering hypotheses, solve both problems on one bundle, compare."""
    out = _out(cfg)
    if cfg.problem_bar is None:
        return _error(out, "compare", EXIT_CONFIG, ConfigError("compare needs a 'problem_bar' entry"))
    pc = cfg.probes
    try:
        hyp = verify_ordering_hypotheses(cfg.problem, cfg.problem_bar, pc.num_probes, pc.seed, pc.radius, pc.order_tol)
    except SigmaMismatch as err:
        return _error(out, "compare", EXIT_HYPOTHESIS, err)
    except _NUMERICAL as err:
        return _error(out, "compare", EXIT_NUMERICAL, err)
    io.write_json(out / "hypotheses.json", hyp.to_dict())
    if not hyp.passed:
        return _error(out, "compare", EXIT_HYPOTHESIS, HypothesisFailure(hyp), failures=hyp.failures())

    try:
        rep = run_comparison(cfg.problem, cfg.problem_bar, cfg.iteration, pc.num_probes, pc.seed, check_hypotheses=False)
    except ConvergenceError as err:
        return _error(out, "compare", EXIT_NUMERICAL, err, final_k=err.report.final_k)
    except _NUMERICAL as err:
        return _error(out, "compare", EXIT_NUMERICAL, err)
    io.write_json(out / "comparison.json", rep.to_dict())
    io.write_gap_table(out / "gap_table.csv", rep.gap_table)
    if not rep.ordering_holds(cfg.order_threshold):
        err = ArithmeticError(
            f"ordering violated on {rep.X_order['fraction']:.2%} (X) / {rep.Y_order['fraction']:.2%} (Y) of entries"
        )
        return _error(out, "compare", EXIT_NUMERICAL, err, X_order=rep.X_order, Y_order=rep.Y_order)
    return EXIT_OK


def cmd_check(cfg: ExperimentConfig) -> int:
    """Probe (A1)-(A7) and write assumptions.json; 0 iff every probe passes."""
    out = _out(cfg)
    try:
        report = _probe(cfg, cfg.problem)
    except _NUMERICAL as err:
        return _error(out, "check", EXIT_NUMERICAL, err)
    io.write_json(out / "assumptions.json", report.to_dict())
    if report.passed:
        return EXIT_OK
    for name in report.failures():
        log.warning("%s fails: worst %.6g", name, report.entries[name].worst)
    return EXIT_HYPOTHESIS


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "check": cmd_check}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbsde-picard", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        sp.add_argument("config", help="JSON experiment file")
        sp.add_argument("--paths", type=int)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int, dest="max_iter")
        sp.add_argument("--output-dir", dest="output_dir")
        sp.add_argument("--no-projection", action="store_const", const=False, dest="projection")
    sub.add_parser("schema", help="print the JSON schema of experiment files")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return EXIT_OK
    overrides = {k: getattr(args, k) for k in ("paths", "steps", "seed", "tol", "max_iter", "projection", "output_dir")}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as err:
        out = Path(args.output_dir) if args.output_dir else None
        return _error(out, args.command, EXIT_CONFIG, err)
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
