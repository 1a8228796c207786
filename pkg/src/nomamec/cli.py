"""Command line front end.

Subcommands: ``gen`` writes a scenario JSON, ``solve`` runs one scheme on
one instance, ``match`` runs the swap/leave-join search with its trace,
``sweep`` runs an experiment to CSV, ``summarize`` aggregates a rows CSV,
``validate`` replays solver output against the independent checkers.

Exit codes: 0 success, 1 infeasible instance, 2 bad configuration or
arguments, 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import bench
from .matching import fs_urhsm, matching_to_records, verify_stability
from .model import ScenarioConfig, TaskSpec, generate_channels, generate_topology
from .oracle import hessian_psd_sample, replay_constraints
from .schemes import SchemeId, solve_scheme

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_BAD_CONFIG = 2
EXIT_SOLVER = 3

SCHEME_CHOICES = [s.value for s in SchemeId]


# ---------------------------------------------------------------------------
# scenario files


def scenario_dict(config: ScenarioConfig, tasks) -> dict:
    weights = [t.weight_e for t in tasks]
    task = {"d_bits": tasks[0].data_bits, "cycles_per_bit": tasks[0].cycles_per_bit,
            "t_max_s": tasks[0].t_max_s,
            "weight_e": weights[0] if len(set(weights)) == 1 else weights}
    return {"config": config.to_dict(), "task": task}


def load_scenario(path):
    with open(path) as fh:
        data = json.load(fh)
    config = ScenarioConfig.from_dict(data["config"])
    task = data["task"]
    tasks = [TaskSpec(task["d_bits"], task.get("cycles_per_bit", 1e3),
                      task.get("t_max_s", 0.9), w, 1.0 - w)
             for w in bench.weights_per_ue(task["weight_e"], config.n_ues)]
    return config, tasks


def _default_spec(args) -> bench.ExperimentSpec:
    return bench.ExperimentSpec(
        figure="cli", n_ues=args.ues, n_helpers=args.helpers,
        n_servers=args.servers, n_rbs=args.rbs, d_bits=args.d_bits,
        weight_e=args.weight_e)


def _instance(args):
    """Scenario from --config if given, else drawn from the seed; channels
    always come from the seed's topology and fading sub-streams."""
    if args.config:
        config, tasks = load_scenario(args.config)
    else:
        config, _, tasks = bench.build_trial(_default_spec(args), None, args.seed)
    seeds = np.random.SeedSequence(args.seed).generate_state(6)
    topology = generate_topology(config, seeds[4])
    channels = generate_channels(topology, config, seeds[5])
    return config, channels, tasks


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_shape_flags(parser):
    parser.add_argument("--ues", type=int, default=2)
    parser.add_argument("--helpers", type=int, default=2)
    parser.add_argument("--servers", type=int, default=2)
    parser.add_argument("--rbs", type=int, default=2)
    parser.add_argument("--d-bits", type=float, default=2e5)
    parser.add_argument("--weight-e", type=float, default=0.5)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    config, _, tasks = bench.build_trial(_default_spec(args), None, args.seed)
    _emit(json.dumps(scenario_dict(config, tasks), indent=2) + "\n", args.out)
    return EXIT_OK


def _solver_exit(status, message):
    if status == "inapplicable" or "infeasible" in (message or "").lower():
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def cmd_solve(args):
    config, channels, tasks = _instance(args)
    result = solve_scheme(SchemeId(args.scheme), config, channels, tasks)
    payload = {"scheme": result.scheme.value, "status": result.status,
               "message": result.message, "medt": result.medt,
               "iterations": result.iterations, "accepted_ops": result.accepted_ops,
               "wall_ms": result.wall_ms}
    if result.ok:
        payload.update(medt=result.medt, min_edt=result.min_edt,
                       max_energy=float(result.energy.max()),
                       max_delay=float(result.delay.max()),
                       edt=[float(v) for v in result.edt])
        if result.matching is not None:
            payload["matching"] = matching_to_records(result.matching)
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK if result.ok else _solver_exit(result.status, result.message)


def cmd_match(args):
    config, channels, tasks = _instance(args)
    state, sol, trace = fs_urhsm(config, channels, tasks, objective=args.objective)
    payload = {"objective": args.objective, "utility": sol.phi,
               "trace": trace, "accepted_ops": len(trace) - 1,
               "matching": matching_to_records(state.matching),
               "stable": verify_stability(state, channels, tasks, config,
                                          objective=args.objective)}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    if sol.usable:
        return EXIT_OK
    return _solver_exit("failed", sol.message or sol.status.value)


def cmd_sweep(args):
    if args.preset:
        seeds = tuple(range(args.seeds)) if args.seeds else None
        specs = bench.preset_specs(args.preset, seeds=seeds)
    elif args.config:
        with open(args.config) as fh:
            spec = bench.spec_from_json(fh.read())
        if args.seeds:
            spec = dataclasses.replace(spec, seeds=tuple(range(args.seeds)))
        specs = [spec]
    else:
        print("sweep needs --preset or --config", file=sys.stderr)
        return EXIT_BAD_CONFIG
    rows = bench.run_experiment(specs, workers=args.workers,
                                timing=not args.no_timing)
    _emit(bench.rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_summarize(args):
    rows = bench.read_rows(args.config)
    _emit(bench.summary_to_csv(bench.summarize(rows)), args.out)
    return EXIT_OK


def cmd_validate(args):
    worst = {}
    code = EXIT_OK
    for seed in range(args.seeds):
        ns = argparse.Namespace(config=args.config, seed=args.seed + seed,
                                ues=2, helpers=2, servers=2, rbs=2,
                                d_bits=2e5, weight_e=0.5)
        config, channels, tasks = _instance(ns)
        result = solve_scheme(SchemeId(args.scheme), config, channels, tasks)
        if not result.ok:
            print(f"seed {ns.seed}: solve {result.status}: {result.message}")
            code = max(code, _solver_exit(result.status, result.message))
            continue
        report = replay_constraints(result.alloc, result.matching, channels,
                                    tasks, config, extras=result.extras)
        for family, violation in report.items():
            worst[family] = max(worst.get(family, 0.0), violation)
    for family in sorted(worst):
        flag = "ok" if worst[family] <= args.tol else "VIOLATED"
        print(f"{family:12s} max violation {worst[family]:.3e}  {flag}")
        if worst[family] > args.tol:
            code = max(code, EXIT_SOLVER)
    hess = hessian_psd_sample(args.hessian_samples, seed=args.seed)
    flag = "ok" if hess >= -1e-9 else "VIOLATED"
    print(f"{'hessian':12s} min quadratic form {hess:.3e}  {flag}")
    if hess < -1e-9:
        code = max(code, EXIT_SOLVER)
    return code


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nomamec",
        description="Helper-assisted offloading: solvers, baselines, sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a scenario JSON drawn from a seed")
    p.add_argument("--seed", type=int, default=0)
    _add_shape_flags(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("solve", help="run one scheme on one instance")
    p.add_argument("--config", help="scenario JSON; omitted draws from the seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=SCHEME_CHOICES, default="proposed_noma")
    _add_shape_flags(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("match", help="run the matching search with its trace")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objective", choices=("minmax", "sum"), default="minmax")
    _add_shape_flags(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_match)

    p = sub.add_parser("sweep", help="run an experiment spec or figure preset")
    p.add_argument("--config", help="experiment spec JSON")
    p.add_argument("--preset", choices=bench.PRESETS)
    p.add_argument("--seeds", type=int, help="use seeds 0..n-1 per point")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true",
                   help="zero the wall-clock column for reproducible files")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("summarize", help="aggregate a rows CSV")
    p.add_argument("--config", required=True, help="rows CSV from sweep")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_summarize)

    p = sub.add_parser("validate", help="replay solver output against checkers")
    p.add_argument("--config", help="scenario JSON; omitted draws per seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--scheme", choices=SCHEME_CHOICES, default="proposed_noma")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--hessian-samples", type=int, default=10_000)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
