# Command-line harness. Subcommands:
#   simulate  -- run a preset / configured replication sweep, write CSVs
#   diagnose  -- solve one seeded instance and report the theory constants
#   presets   -- list the available presets and their parameters
# Exit codes: 0 success, 1 configuration error, 2 runtime failure (every
# replication of some cell failed, or the diagnose run failed).

import argparse
import dataclasses
import json
import sys

from . import diagnostics
from .datagen import gen_dataset, mix64
from .experiments import (
    PRESETS,
    ConfigError,
    parse_config,
    run_consistency,
    run_convergence,
    _ground_truth,
    _tuning,
)
from .solver import SolverConfig, relative_error, solve
from .surrogate import build_for_instance, min_eigenvalue

_CONVERGENCE_PRESETS = ("convergence", "convergence-full", "convergence-small")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    add = parser.add_argument
    add("--config", metavar="FILE", help="flat key=value config file")
    add("--preset", help="preset name (see the presets subcommand)")
    add("--channel", help="clean|additive|missing")
    add("--d", help="dimension grid, e.g. 32,64 or 32x48")
    add("--n-grid", help="comma list of sample sizes")
    add("--alpha-grid", help="comma list of n/d ratios")
    add("--rank", help="exact rank of the truth")
    add("--q", help="lq-ball exponent in (0, 1]")
    add("--rq", help="lq-ball radius")
    add("--sigma-w", help="additive covariate noise level")
    add("--sigma-eps", help="response noise level")
    add("--rho", help="missing probability in [0, 1)")
    add("--reps", help="replications per cell")
    add("--seed", help="base seed")
    add("--lambda", dest="lambda", help="explicit regularization level")
    add("--omega", help="explicit nuclear-ball radius")
    add("--v", help="explicit inverse step size")
    add("--max-iters", help="iteration cap")
    add("--tol", help="relative objective-change stopping tolerance")
    add("--trace-every", help="trace cadence in iterations")
    add("--parallelism", help="worker processes for replications")
    add("--out", help="result CSV path")
    add("--trace-out", help="trace CSV path")


_NON_CONFIG_FLAGS = {"config", "func", "command", "probe-samples", "delta-star"}


def _flag_values(args: argparse.Namespace) -> dict:
    values = {}
    for key in vars(args):
        flag = key.replace("_", "-")
        if flag in _NON_CONFIG_FLAGS:
            continue
        value = getattr(args, key)
        if value is not None:
            values[flag] = value
    return values


def _cmd_simulate(args) -> int:
    config = parse_config(args.config, _flag_values(args))
    trace_mode = config.preset in _CONVERGENCE_PRESETS or config.trace_out
    if trace_mode:
        run = run_convergence(config)
        if config.trace_out is None:
            print("note: no --trace-out given; trace rows were not persisted",
                  file=sys.stderr)
    else:
        run = run_consistency(config)
        if config.out is None:
            print("note: no --out given; result rows were not persisted",
                  file=sys.stderr)
    ok = sum(1 for r in run.records if r.status == "ok")
    print(f"{config.preset}: {ok}/{len(run.records)} replications ok "
          f"across {len(run.summaries)} cells")
    for s in run.summaries:
        print(f"  d={s.d1}x{s.d2} n={s.n}: reps_ok={s.reps_ok} "
              f"mean_rel_error={s.mean_rel_error:.6g}")
    return 2 if run.any_dead_cell else 0


def _cmd_diagnose(args) -> int:
    flag_values = _flag_values(args)
    flag_values.setdefault("reps", "1")
    config = parse_config(args.config, flag_values)
    d1, d2 = config.dims[0]
    n = config.sample_sizes(d1, d2)[0]
    seed = mix64(config.base_seed, 0, config.corruption_spec().tag)
    try:
        gt = _ground_truth(config, d1, d2, seed)
        inst = gen_dataset(gt, n, 1.0, config.sigma_eps,
                           config.corruption_spec(), seed)
        pair = build_for_instance(inst)
        lam, omega, v = _tuning(config, d1, d2, n, gt.theta_star)
        solver_cfg = SolverConfig(lam=lam, omega=omega, v=v,
                                  max_iters=config.max_iters,
                                  stop_tol=config.stop_tol,
                                  trace_every=config.trace_every)
        result = solve(pair, solver_cfg, None, reference=gt.theta_star)
        probe = diagnostics.rsc_rsm_probe(pair.gamma_hat, 1.0,
                                          r=max(gt.rank, 1),
                                          num_samples=args.probe_samples,
                                          seed=seed, d2=d2)
        report = diagnostics.theory_report(inst, pair, result, probe,
                                           delta_star=args.delta_star)
    except Exception as exc:
        print(f"diagnose failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    payload = {
        "d1": d1, "d2": d2, "n": n, "seed": seed,
        "channel": config.channel, "lambda": lam, "omega": omega, "v": v,
        "iterations": result.iterations_run,
        "converged": result.converged,
        "rel_error": relative_error(result.theta_hat, gt.theta_star),
        "gamma_min_eigenvalue": min_eigenvalue(pair.gamma_hat),
        "probe": dataclasses.asdict(probe),
        "theory": dataclasses.asdict(report),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_presets(_args) -> int:
    for name in sorted(PRESETS):
        params = PRESETS[name]
        if not params:
            print(f"{name}: fully flag-driven")
            continue
        rendered = ", ".join(f"{k}={v}" for k, v in sorted(params.items()))
        print(f"{name}: {rendered}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowrankeiv",
        description="Low-rank errors-in-variables regression simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a replication sweep")
    _add_config_flags(sim)
    sim.set_defaults(func=_cmd_simulate)

    diag = sub.add_parser("diagnose", help="theory report for one instance")
    _add_config_flags(diag)
    diag.add_argument("--probe-samples", type=int, default=200,
                      help="directions for the curvature probe")
    diag.add_argument("--delta-star", type=float, default=None,
                      help="tolerance for the iteration-count bound")
    diag.set_defaults(func=_cmd_diagnose)

    pre = sub.add_parser("presets", help="list presets")
    pre.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
