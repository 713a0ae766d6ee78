"""Command-line front end: solve, simulate, sweep, verify, bound and reproduce.

Exit codes: 0 success, 1 solver or simulation error, 2 usage error
(bad flags, invalid option combinations, unreadable model), 3 a
verification check failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import CovertSchedError, NotApplicableError
from .model import Problem, load_model, spectral_radius, stability_threshold

EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3
WORKERS_ENV = "COVERT_SCHED_WORKERS"


class UsageError(Exception):
    pass


def _workers(args) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, int(getattr(args, "workers", 1) or 1))


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _betas(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad beta list {text!r}") from None
    if not vals or any(not 0.0 < b < 1.0 for b in vals):
        raise UsageError("betas must be a non-empty comma list inside (0, 1)")
    return vals


def _model(args):
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read model {args.model!r}: {exc}") from None
    except CovertSchedError as exc:
        raise UsageError(f"invalid model {args.model!r}: {exc}") from None
    if getattr(args, "lam", None) is not None or getattr(args, "lam_e", None) is not None:
        try:
            model = model.with_channels(args.lam, args.lam_e)
        except CovertSchedError as exc:
            raise UsageError(str(exc)) from None
    return model


def _check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise UsageError(f"--beta must lie in (0, 1), got {beta}")


# --------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    from .belief_dp import solve_finite_partial
    from .meas_tx import solve_finite_full_meas, solve_finite_partial_meas
    from .sched_dp import ObjectiveConfig, required_depth, solve_finite_full

    _check_beta(args.beta)
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    model = _model(args)
    if args.mode == "measurement":
        if args.objective != "covariance":
            raise UsageError("measurement mode supports only the covariance objective")
        solver = solve_finite_full_meas if args.info == "full" else solve_finite_partial_meas
        sol = solver(model, args.horizon, args.beta)
        _emit(sol.policy_csv(), args.out)
        return EXIT_OK
    obj = ObjectiveConfig(args.beta, args.objective)
    depth = required_depth(args.horizon)
    if args.info == "partial" and args.truncation:
        depth = max(depth, args.truncation + 1)
    problem = Problem.build(model, depth)
    if args.info == "full":
        sol = solve_finite_full(model, problem.ladder, args.horizon, obj)
        _emit(sol.policy.to_csv(), args.out)
        if args.values_out:
            _emit(sol.values.to_csv(), args.values_out)
    else:
        sol = solve_finite_partial(model, problem.ladder, args.horizon, obj, N=args.truncation)
        _emit(sol.policy_csv(), args.out)
        if args.values_out:
            _emit(sol.beliefs_csv(), args.values_out)
    return EXIT_OK


def cmd_solve_inf(args) -> int:
    from .horizon_inf import relative_value_iteration, relative_value_iteration_belief
    from .sched_dp import ObjectiveConfig

    if args.mode == "measurement":
        raise UsageError("measurement transmission has no infinite-horizon solver")
    _check_beta(args.beta)
    if args.truncation < 2:
        raise UsageError("--truncation must be >= 2")
    model = _model(args)
    problem = Problem.build(model, max(args.truncation, 2))
    obj = ObjectiveConfig(args.beta, args.objective)
    if args.info == "full":
        sol = relative_value_iteration(model, problem.ladder, obj, args.truncation,
                                       args.tol, args.max_iter)
    else:
        sol = relative_value_iteration_belief(model, problem.ladder, obj, args.truncation,
                                              args.tol, args.max_iter)
    _emit(sol.to_csv(), args.out)
    return EXIT_OK


def _run_one(job):
    from .simkit import SimConfig, parse_policy, simulate

    model_doc, policy, steps, seed, track = job
    from .model import SystemModel
    model = SystemModel.from_dict(model_doc)
    problem = Problem.build(model, 60)
    return simulate(model, problem.ladder,
                    SimConfig(steps, seed, parse_policy(policy), track_states=track))


def _run_jobs(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))   # map keeps submission order


def cmd_simulate(args) -> int:
    from .simkit import parse_policy, summary_csv, summary_row

    model = _model(args)
    try:
        pol = parse_policy(args.policy)
    except CovertSchedError as exc:
        raise UsageError(str(exc)) from None
    if args.steps < 1 or args.seeds < 1:
        raise UsageError("--steps and --seeds must be positive")
    if args.trace_out and args.seeds > 1:
        raise UsageError("--trace-out needs a single seed")
    seeds = [args.seed + i for i in range(args.seeds)]
    jobs = [(model.to_dict(), args.policy, args.steps, s, args.track_states) for s in seeds]
    records = _run_jobs(jobs, _workers(args))
    t = getattr(pol, "t", "")
    _emit(summary_csv([summary_row(r, "", t) for r in records]), args.out)
    if args.trace_out:
        _emit(records[0].trace_csv(), args.trace_out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .simkit import curve_csv, sweep_beta

    if args.mode == "measurement":
        raise UsageError("sweeps are available for estimate transmission only")
    model = _model(args)
    horizon = _horizon(args.horizon)
    betas = _betas(args.betas)
    budget = args.budget or (1_000_000 if horizon == "inf" else 100_000)
    pts = sweep_beta(model, horizon, args.objective, args.info, betas, budget,
                     seed=args.seed, N=args.truncation, exact=args.exact)
    _emit(curve_csv(pts), args.out)
    return EXIT_OK


def _horizon(text: str):
    if text == "inf":
        return "inf"
    try:
        K = int(text)
    except ValueError:
        raise UsageError(f"--horizon must be an integer or 'inf', got {text!r}") from None
    if K < 1:
        raise UsageError("--horizon must be >= 1")
    return K


def cmd_verify(args) -> int:
    from .belief_dp import solve_finite_partial
    from .horizon_inf import relative_value_iteration
    from .report import StructureReport
    from .sched_dp import ObjectiveConfig, required_depth, solve_finite_full
    from .structcheck import (verify_avg_solution, verify_full_solution, verify_lemma_suite,
                              verify_partial_solution)

    _check_beta(args.beta)
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    model = _model(args)
    problem = Problem.build(model, max(required_depth(args.horizon), args.truncation, 10))
    report = StructureReport()
    for kind in ("covariance", "information"):
        obj = ObjectiveConfig(args.beta, kind)
        full = solve_finite_full(model, problem.ladder, args.horizon, obj)
        report.extend(verify_full_solution(full), f"{kind}/full: ")
        if args.horizon <= 12:
            part = solve_finite_partial(model, problem.ladder, args.horizon, obj)
            report.extend(verify_partial_solution(part), f"{kind}/partial: ")
    avg = relative_value_iteration(model, problem.ladder, ObjectiveConfig(args.beta, "information"),
                                   args.truncation)
    report.extend(verify_avg_solution(avg), "information/stationary: ")
    report.extend(verify_lemma_suite(model, problem.ladder, args.samples, args.seed), "lemma: ")
    _emit(report.to_csv(), args.out)
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_bounds(args) -> int:
    from .horizon_inf import leakage_bounds, min_t_for_unbounded

    model = _model(args)
    problem = Problem.build(model, 10)
    row = {"lambda": model.lam, "lambda_e": model.lam_e,
           "spectral_radius": spectral_radius(model.A),
           "stability_threshold": stability_threshold(model)}
    try:
        row["t_min"] = min_t_for_unbounded(model)
    except NotApplicableError:
        row["t_min"] = ""
    try:
        lb = leakage_bounds(model, problem.steady)
        row.update(delta_L=lb.delta_L, delta_U=lb.delta_U, delta_U_naive=lb.delta_U_naive,
                   N_prime=lb.N_prime, leakage_floor=model.lam_e * lb.delta_L)
    except NotApplicableError:
        row.update(delta_L="", delta_U="", delta_U_naive="", N_prime="", leakage_floor="")
    keys = list(row)
    vals = [v if isinstance(v, (int, str)) else format(float(v), ".10g") for v in row.values()]
    _emit(",".join(keys) + "\n" + ",".join(map(str, vals)) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------- reproduce

def reproduce_table1(steps: int, seed: int, workers: int) -> str:
    from .horizon_inf import min_t_for_unbounded

    base = load_model("paper.json")
    jobs, cells = [], []
    for lam_e in (0.6, 0.8):
        model = base.with_channels(lam_e=lam_e)
        for t in range(1, 7):
            jobs.append((model.to_dict(), f"threshold:{t}", steps, seed, False))
            cells.append((model, t))
    records = _run_jobs(jobs, workers)
    lines = ["lambda,lambda_e,t,mean_trP,mean_trPe,tx_rate,steps,seed,t_min,unbounded"]
    for (model, t), rec in zip(cells, records):
        t_min = min_t_for_unbounded(model)
        lines.append(",".join([format(model.lam, "g"), format(model.lam_e, "g"), str(t),
                               format(rec.mean_trP, ".10g"), format(rec.mean_trPe, ".10g"),
                               format(rec.tx_rate, ".10g"), str(steps), str(seed),
                               str(t_min), str(int(t >= t_min))]))
    return "\n".join(lines) + "\n"


def _figure_rows(model, horizon, curves, betas, budget, seed, N, exact):
    from .simkit import sweep_beta

    problem = Problem.build(model, 40)
    lines = ["curve,beta,mean_trP,mean_trPe,mean_Ie,tx_rate"]
    for kind, info in curves:
        pts = sweep_beta(model, horizon, kind, info, betas, budget, seed=seed, N=N,
                         problem=problem, exact=exact)
        for p in pts:
            lines.append(",".join([f"{kind}/{info}", format(p.beta, "g"),
                                   *(format(v, ".10g") for v in
                                     (p.mean_trP, p.mean_trPe, p.mean_Ie, p.tx_rate))]))
    return "\n".join(lines) + "\n"


FINITE_CURVES = (("covariance", "full"), ("covariance", "partial"),
                 ("information", "full"), ("information", "partial"))


def cmd_reproduce(args) -> int:
    betas = _betas(args.betas) if args.betas else [round(0.1 * i, 1) for i in range(1, 10)]
    if args.artifact == "table1":
        text = reproduce_table1(args.steps or 1_000_000, args.seed, _workers(args))
    elif args.artifact in ("fig4", "fig5"):
        text = _figure_rows(load_model("paper.json"), 10, FINITE_CURVES, betas,
                            args.runs or 100_000, args.seed, 10, args.exact)
    else:
        text = _figure_rows(load_model("paper.json"), "inf",
                            (("information", "full"), ("information", "partial")), betas,
                            args.steps or 1_000_000, args.seed, 10, False)
    _emit(text, args.out)
    return EXIT_OK


# ------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="covert-sched", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, model_required=True):
        sp.add_argument("--model", required=model_required, default="paper.json",
                        help="model JSON (bundled: paper.json, paper_meas.json)")
        sp.add_argument("--lam", type=float, help="override reception probability")
        sp.add_argument("--lam-e", dest="lam_e", type=float, help="override interception probability")
        sp.add_argument("--out", help="output path (default stdout)")

    s = sub.add_parser("solve", help="finite-horizon policy tables")
    common(s)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--objective", choices=["covariance", "information"], default="covariance")
    s.add_argument("--info", choices=["full", "partial"], default="full")
    s.add_argument("--mode", choices=["estimate", "measurement"], default="estimate")
    s.add_argument("--truncation", type=int, help="belief truncation depth (partial info)")
    s.add_argument("--values-out", help="value table (full) or belief table (partial) CSV")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("solve-inf", help="average-cost solution by relative value iteration")
    common(s)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--objective", choices=["covariance", "information"], default="information")
    s.add_argument("--info", choices=["full", "partial"], default="full")
    s.add_argument("--mode", choices=["estimate", "measurement"], default="estimate")
    s.add_argument("--truncation", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--max-iter", dest="max_iter", type=int, default=100_000)
    s.set_defaults(func=cmd_solve_inf)

    s = sub.add_parser("simulate", help="Monte Carlo run(s) of a fixed policy")
    common(s)
    s.add_argument("--policy", required=True, help="threshold:<t>, always or never")
    s.add_argument("--steps", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    s.add_argument("--trace-out", dest="trace_out")
    s.add_argument("--track-states", dest="track_states", action="store_true")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="tradeoff curve over beta")
    common(s)
    s.add_argument("--horizon", required=True, help="integer K or 'inf'")
    s.add_argument("--objective", choices=["covariance", "information"], default="covariance")
    s.add_argument("--info", choices=["full", "partial"], default="full")
    s.add_argument("--mode", choices=["estimate", "measurement"], default="estimate")
    s.add_argument("--betas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    s.add_argument("--budget", type=int, help="runs (finite) or steps (inf)")
    s.add_argument("--truncation", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--exact", action="store_true", help="exact evaluation (finite horizon)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="structure and monotonicity checks")
    common(s)
    s.add_argument("--horizon", type=int, default=10)
    s.add_argument("--beta", type=float, default=0.7)
    s.add_argument("--truncation", type=int, default=10)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bounds", help="stability, unboundedness and leakage-rate bounds")
    common(s)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("reproduce", help="regenerate a numerical study from the bundled model")
    s.add_argument("artifact", choices=["table1", "fig4", "fig5", "fig6"])
    s.add_argument("--out")
    s.add_argument("--steps", type=int, help="run length (table1, fig6)")
    s.add_argument("--runs", type=int, help="Monte Carlo runs per point (fig4, fig5)")
    s.add_argument("--betas")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--exact", action="store_true", help="exact expectations (fig4, fig5)")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_reproduce)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"covert-sched: error: {exc}\n")
        return EXIT_USAGE
    except (CovertSchedError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"covert-sched: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


def main(argv=None) -> None:
    try:
        code = run(argv)
    except BrokenPipeError:     # downstream pager or head closed early
        sys.stderr.close()
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
