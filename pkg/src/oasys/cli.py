"""Command line entry point: ``oasys plan|experiment|bounds|enumerate``.

Exit codes: 0 success, 2 invalid input, 3 failure while running.
"""
from __future__ import annotations

import argparse
import json
import random
import sys

from .core import Configuration, Frame, FrameProportions, Neighborhood, count_configurations, \
    neighborhood_frame_sizes
from .harness import SpecError, emit_results, compute_metrics, load_spec, run_experiment
from .ipomcp import PlanContext, Planner, PlannerConfig, initial_filter
from .nested_mdp import solve_population
from .survey import configuration_error_bound, plan_neighbors, regret_bound, required_sample_size
from .wildfire import AgentView, ScenarioError, heuristic_action, load_scenario, state_index

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    agent = sc.agent(args.agent)
    state = sc.initial_state()
    if args.controller == "heuristic":
        action = heuristic_action(agent, state, agent.suppressant, random.Random(args.seed))
        _print({"action": action, "diagnostics": {}})
        return EXIT_OK
    if args.controller == "nestedmdp":
        pol = solve_population(sc, args.level)[args.agent]
        internal = agent.suppressant if pol.num_internal > 1 else 0
        action = pol.sample(state_index(state), internal, random.Random(args.seed))
        _print({"action": action, "diagnostics": {"level": args.level}})
        return EXIT_OK
    lower = solve_population(sc, args.level - 1)
    nb = sc.neighborhood(args.agent)
    ctx = PlanContext(nb, plan_neighbors(nb, args.ep, args.alpha, rng_seed=args.seed))
    cfg = PlannerConfig(c=args.c if args.c is not None else sc.r_max(), horizon=sc.horizon,
                        gamma=sc.gamma, iterations=args.iters, particles=args.particles, seed=args.seed,
                        time_budget_ms=args.time_ms)
    filt = initial_filter(state, agent.suppressant, ctx, lower, cfg.particles, random.Random(args.seed))
    planner = Planner(AgentView(sc, args.agent), ctx, cfg)
    action = planner.plan(filt)
    diag = dict(planner.diagnostics, modeled=list(ctx.modeled_ids))
    _print({"action": action, "diagnostics": diag})
    return EXIT_OK


def _cmd_experiment(args) -> int:
    spec = load_spec(args.spec)
    records = run_experiment(spec, workers=args.workers)
    files = emit_results(records, compute_metrics(records), args.out)
    _print({"runs": len(records), "files": [str(f) for f in files]})
    return EXIT_OK


def _cmd_bounds(args) -> int:
    if args.which == "sample-size":
        _print({"n": required_sample_size(args.N, args.ep, args.alpha)})
    elif args.which == "regret":
        _print({"regret": regret_bound(args.epsilon, args.configs, args.rmax, args.gamma, args.k,
                                       args.observations)})
    else:
        probs = json.loads(args.probs)
        counts = json.loads(args.counts)
        config = Configuration.from_table(counts)
        A, F = config.num_actions, config.num_frames
        frames = [Frame(k, tuple(range(A))) for k in range(F)]
        members, nxt = [], 0
        for k in range(F):
            for _ in range(config.total(k)):
                members.append((nxt, k, range(A)))
                nxt += 1
        nbhd = Neighborhood(members, frames, A)
        props = FrameProportions(probs)
        props.check(nbhd)
        _print({"epsilon_pc": configuration_error_bound(props, args.ep, config, nbhd)})
    return EXIT_OK


def _cmd_enumerate(args) -> int:
    sc = load_scenario(args.scenario)
    out = []
    for a in sc.agents:
        nb = sc.neighborhood(a.id)
        out.append({"agent_id": a.id, "neighbors": len(nb),
                    "configurations": count_configurations(neighborhood_frame_sizes(nb))})
    _print({"scenario": sc.name, "agents": out})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oasys", description="Planning for many-agent open environments.")
    sub = p.add_subparsers(dest="command", required=True)

    pl = sub.add_parser("plan", help="one decision for one agent from the initial state")
    pl.add_argument("--scenario", required=True)
    pl.add_argument("--agent", type=int, required=True)
    pl.add_argument("--controller", choices=("ipomcp", "nestedmdp", "heuristic"), default="ipomcp")
    pl.add_argument("--ep", type=float, default=0.1)
    pl.add_argument("--alpha", type=float, default=0.05)
    pl.add_argument("--iters", type=int, default=1000)
    pl.add_argument("--time-ms", type=float, default=None, help="wall-clock budget instead of iterations")
    pl.add_argument("--particles", type=int, default=200)
    pl.add_argument("--level", type=int, default=None)
    pl.add_argument("--c", type=float, default=None, help="UCB constant (default: max reward magnitude)")
    pl.add_argument("--seed", type=int, default=0)
    pl.set_defaults(func=_cmd_plan)

    ex = sub.add_parser("experiment", help="run a full experiment spec")
    ex.add_argument("--spec", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--workers", type=int, default=None)
    ex.set_defaults(func=_cmd_experiment)

    bd = sub.add_parser("bounds", help="sample size and error bound calculators")
    bsub = bd.add_subparsers(dest="which", required=True)
    ss = bsub.add_parser("sample-size")
    ss.add_argument("--N", type=int, required=True)
    ss.add_argument("--ep", type=float, required=True)
    ss.add_argument("--alpha", type=float, default=0.05)
    rg = bsub.add_parser("regret")
    rg.add_argument("--epsilon", type=float, required=True)
    rg.add_argument("--configs", type=int, required=True)
    rg.add_argument("--rmax", type=float, required=True)
    rg.add_argument("--gamma", type=float, required=True)
    rg.add_argument("--k", type=int, required=True)
    rg.add_argument("--observations", type=int, required=True)
    ce = bsub.add_parser("config-error")
    ce.add_argument("--probs", required=True, help="JSON (actions x frames) table")
    ce.add_argument("--counts", required=True, help="JSON (actions x frames) table")
    ce.add_argument("--ep", type=float, required=True)
    bd.set_defaults(func=_cmd_bounds)

    en = sub.add_parser("enumerate", help="configuration counts per agent")
    en.add_argument("--scenario", required=True)
    en.set_defaults(func=_cmd_enumerate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "level", None) is None and args.command == "plan":
        args.level = 2 if args.controller == "ipomcp" else 1
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, SpecError, ScenarioError) as exc:
        print(f"oasys: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"oasys: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
