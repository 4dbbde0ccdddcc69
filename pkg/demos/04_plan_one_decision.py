"""One I-POMCP_O decision for a ground crew in the three-fire scenario.

The crew has 29 neighbors but models only a sample of them; configurations of
the full neighborhood are extrapolated from the sampled agents' level-1
policies at every simulated step.

Run: python3 demos/04_plan_one_decision.py
"""
import random

from oasys.ipomcp import PlanContext, Planner, PlannerConfig, initial_filter
from oasys.nested_mdp import solve_population
from oasys.survey import plan_neighbors
from oasys.wildfire import AgentView, bundled_scenario

sc = bundled_scenario("setup3")
me = sc.agents[0]
nb = sc.neighborhood(me.id)
lower = solve_population(sc, 1)

for e_p in (0.3, 0.1):
    ctx = PlanContext(nb, plan_neighbors(nb, e_p, rng_seed=1))
    cfg = PlannerConfig(c=sc.r_max(), horizon=sc.horizon, gamma=sc.gamma, iterations=1500, particles=100, seed=1)
    filt = initial_filter(sc.initial_state(), me.suppressant, ctx, lower, cfg.particles, random.Random(1))
    planner = Planner(AgentView(sc, me.id), ctx, cfg)
    action = planner.plan(filt)
    d = planner.diagnostics
    q = ", ".join(f"{a}: {v:.1f}" for a, v in d["root_q"].items())
    print(f"e_p={e_p}: model {len(ctx.modeled_ids)} of {len(nb)} neighbors -> action {action}")
    print(f"  root Q {{{q}}}, tree nodes {d['tree_size']}")
