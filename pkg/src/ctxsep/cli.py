"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(singular design, factorization breakdown or non-convergence). Every run
first prints its fully resolved configuration as one JSON line on stdout.
Set ``CTXSEP_LOG`` (e.g. ``DEBUG``) to change log verbosity on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import energy, io
from .closedform import BlockDesign
from .errors import CtxSepError, NumericalBreakdown, SingularDesign
from .experiments import (
    TABLE1_COLUMNS,
    DisaggModelWeights,
    recovery_columns,
    recovery_curves,
    table1,
    table1_summary,
)
from .solver import SolverConfig, separate
from .synth import DisaggConfig, RecoveryConfig, gen_disagg, gen_recovery
from .theory import theory_report

log = logging.getLogger("ctxsep")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        vals = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--eps-abs", type=float, default=None)
    g.add_argument("--eps-rel", type=float, default=None)
    g.add_argument("--max-iter", type=int, default=None)
    g.add_argument("--rho", type=float, default=None, help="initial ADMM penalty")


def _solver_config(args, base=None):
    d = (base or SolverConfig()).to_dict()
    for flag, key in (("eps_abs", "eps_abs"), ("eps_rel", "eps_rel"), ("max_iter", "max_iter"), ("rho", "rho_init")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    try:
        return SolverConfig(**d)
    except ValueError as exc:
        raise UsageError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctxsep", description="Contextually supervised source separation.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("solve", help="solve a problem JSON file")
    s.add_argument("--problem", required=True)
    s.add_argument("--out", default=None, help="result file (default: JSON on stdout)")
    s.add_argument("--emit", choices=["json", "csv"], default="json")
    _add_solver_flags(s)

    s = sub.add_parser("synth-recovery", help="recovery error vs. theory on random designs")
    s.add_argument("--T", type=_int_list, default=[500], help="length(s), comma separated")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--n", type=int, default=16, help="features per source")
    s.add_argument("--mu", type=float, default=0.01)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--emit", choices=["csv", "json"], default="csv")
    s.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("synth-disagg", help="compare the three model variants on synthetic data")
    s.add_argument("--T", type=int, default=DisaggConfig.T)
    s.add_argument("--tau1", type=int, default=DisaggConfig.tau1)
    s.add_argument("--tau2", type=int, default=DisaggConfig.tau2)
    s.add_argument("--sigma", type=float, default=DisaggConfig.sigma)
    s.add_argument("--beta", type=int, default=DisaggConfig.beta)
    s.add_argument("--p-zero", type=float, default=DisaggConfig.p_zero)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds starting at --seed")
    s.add_argument("--smooth-weight", type=float, default=DisaggModelWeights.smooth_dy1)
    s.add_argument("--step-weight", type=float, default=DisaggModelWeights.step_dy2)
    s.add_argument("--out", required=True, help="RMSE table")
    s.add_argument("--data-out", default=None, help="generated dataset of the first seed")
    s.add_argument("--emit", choices=["csv", "json"], default="csv")
    s.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(s)

    s = sub.add_parser("theory", help="recovery-theory report for a design")
    s.add_argument("--problem", default=None, help="problem JSON whose feature blocks form the design")
    s.add_argument("--T", type=int, default=500)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--mu", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma-sq", type=float, default=None, help="total noise variance (default: k)")
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--out", required=True)

    s = sub.add_parser("energy", help="disaggregate one home")
    s.add_argument("--meter", required=True)
    s.add_argument("--weather", required=True)
    s.add_argument("--out-dir", required=True)
    _add_solver_flags(s)

    s = sub.add_parser("energy-batch", help="disaggregate every home in a directory")
    s.add_argument("--input-dir", required=True, help="one subdirectory per home with meter.csv and weather.csv")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(s)
    return p


@contextmanager
def _mapper(jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            yield lambda f, xs: ex.map(f, xs, chunksize=1)
    else:
        yield map


def _announce(command, config):
    print(json.dumps({"command": command, "config": config}, sort_keys=True, default=str))


def _write_rows(path, rows, columns, emit):
    if emit == "json":
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        io.write_table_csv(path, rows, columns)


def cmd_solve(args):
    problem, base = io.load_problem(args.problem)
    config = _solver_config(args, base)
    _announce("solve", {"problem": args.problem, "out": args.out, "emit": args.emit, "solver": config.to_dict()})
    res = separate(problem, config)
    if args.out:
        io.write_result(args.out, res, args.emit)
    else:
        print(json.dumps(io.result_to_dict(res), sort_keys=True))
    if not res.converged:
        log.error("solver did not converge in %d iterations", res.iterations)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_synth_recovery(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    try:
        base = RecoveryConfig(T=args.T[0], k=args.k, n_i=args.n, mu=args.mu, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    _announce("synth-recovery", {
        "T": args.T, "trials": args.trials, "k": args.k, "n_i": args.n, "mu": args.mu,
        "delta": args.delta, "seed": args.seed, "out": args.out, "emit": args.emit, "jobs": args.jobs,
        "trial_seed": "SeedSequence(seed + T, spawn_key=(trial,))",
    })
    with _mapper(args.jobs) as m:
        rows = recovery_curves(args.T, args.trials, base, args.delta, map_fn=m)
    _write_rows(args.out, rows, recovery_columns(args.k), args.emit)
    return EXIT_OK


def cmd_synth_disagg(args):
    try:
        config = DisaggConfig(T=args.T, tau1=args.tau1, tau2=args.tau2, sigma=args.sigma,
                              beta=args.beta, p_zero=args.p_zero, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    weights = DisaggModelWeights(args.smooth_weight, args.step_weight)
    solver_config = _solver_config(args)
    seeds = list(range(args.seed, args.seed + args.seeds))
    _announce("synth-disagg", {
        "data": config.__dict__, "seeds": seeds, "weights": weights.__dict__,
        "solver": solver_config.to_dict(), "out": args.out, "data_out": args.data_out,
        "emit": args.emit, "jobs": args.jobs,
    })
    if args.data_out:
        data = gen_disagg(config)
        t = np.arange(config.T)
        rows = [{"t": int(i), "x1": data.X1[i], "x2": data.X2[i], "y_star_1": data.Y_star[i, 0],
                 "y_star_2": data.Y_star[i, 1], "aggregate": data.aggregate.values[i]} for i in t]
        io.write_table_csv(args.data_out, rows, ["t", "x1", "x2", "y_star_1", "y_star_2", "aggregate"])
    with _mapper(args.jobs) as m:
        rows = table1(config, seeds, weights, solver_config, map_fn=m)
    _write_rows(args.out, rows, TABLE1_COLUMNS, args.emit)
    for name, med in table1_summary(rows).items():
        log.info("median RMSE %-8s %.4f", name, med)
    if not all(r["converged"] for r in rows):
        log.error("some solves did not converge")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_theory(args):
    if args.problem:
        problem, _ = io.load_problem(args.problem)
        design = BlockDesign.from_blocks([b.matrix for b in problem.blocks])
        names = problem.names
        source = {"problem": args.problem}
    else:
        try:
            cfg = RecoveryConfig(T=args.T, k=args.k, n_i=args.n, mu=args.mu, seed=args.seed)
        except ValueError as exc:
            raise UsageError(str(exc))
        design = gen_recovery(cfg).design
        names = [f"source_{i + 1}" for i in range(args.k)]
        source = {"T": args.T, "k": args.k, "n_i": args.n, "mu": args.mu, "seed": args.seed}
    sigma_sq = float(design.k) if args.sigma_sq is None else args.sigma_sq
    if not sigma_sq > 0:
        raise UsageError("--sigma-sq must be positive")
    if not 0 < args.delta < 1:
        raise UsageError("--delta must lie in (0, 1)")
    _announce("theory", {**source, "sigma_sq": sigma_sq, "delta": args.delta, "out": args.out})
    rep = theory_report(design, sigma_sq, args.delta, names)
    with open(args.out, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_energy(args):
    config = _solver_config(args)
    _announce("energy", {"meter": args.meter, "weather": args.weather, "out_dir": args.out_dir,
                         "solver": config.to_dict()})
    rep = energy.disaggregate(energy.load_meter_csv(args.meter), energy.load_weather_csv(args.weather), config)
    energy.write_report(rep, args.out_dir)
    return EXIT_NUMERIC if "not_converged" in rep.flags else EXIT_OK


def cmd_energy_batch(args):
    config = _solver_config(args)
    if not os.path.isdir(args.input_dir):
        raise FileNotFoundError(f"no such directory: {args.input_dir}")
    names = sorted(d for d in os.listdir(args.input_dir) if os.path.isdir(os.path.join(args.input_dir, d)))
    _announce("energy-batch", {"input_dir": args.input_dir, "out_dir": args.out_dir, "homes": names,
                               "jobs": args.jobs, "solver": config.to_dict()})
    homes = {}
    for n in names:
        d = os.path.join(args.input_dir, n)
        homes[n] = (energy.load_meter_csv(os.path.join(d, "meter.csv")),
                    energy.load_weather_csv(os.path.join(d, "weather.csv")))
    with _mapper(args.jobs) as m:
        reports = energy.disaggregate_batch(homes, config, map_fn=m)
    os.makedirs(args.out_dir, exist_ok=True)
    summary = []
    for n, rep in reports.items():
        energy.write_report(rep, os.path.join(args.out_dir, n))
        summary.append({"home": n, **{f"share_{c}": rep.shares[c] for c in energy.CATEGORIES},
                        "converged": rep.diagnostics["converged"]})
    io.write_table_csv(os.path.join(args.out_dir, "weekly.csv"), energy.batch_weekly(reports),
                       ["week_start", "category", "kwh"])
    io.write_table_csv(os.path.join(args.out_dir, "shares.csv"), summary,
                       ["home", *(f"share_{c}" for c in energy.CATEGORIES), "converged"])
    if not all(r["converged"] for r in summary):
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "synth-recovery": cmd_synth_recovery,
    "synth-disagg": cmd_synth_disagg,
    "theory": cmd_theory,
    "energy": cmd_energy,
    "energy-batch": cmd_energy_batch,
}


def run(argv=None) -> int:
    """Parse ``argv`` and execute one command; returns the exit code."""
    level = os.environ.get("CTXSEP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularDesign, NumericalBreakdown, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CtxSepError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
