"""Leveled Nested-MDP policies on the single-fire scenario.

Level 0 acts myopically; level l best-responds to neighbors running level
l-1. These policies are the mental models a planner simulates for the
neighbors it models explicitly.

Run: python3 demos/03_nested_mdp.py
"""
from oasys.nested_mdp import solve_population
from oasys.wildfire import FULL, HALF, bundled_scenario

ACTIONS = {0: "NOOP", 1: "fight"}
sc = bundled_scenario("setup1")
print(f"{sc.name}: {len(sc.agents)} agents, fire intensity {sc.initial_state()[0]}")

for level in (0, 1, 2):
    pol = solve_population(sc, level)[0]
    row = []
    for intensity in range(5):
        for own, tag in ((FULL, "full"), (HALF, "half")):
            i = own if pol.num_internal > 1 else 0
            p = pol.probs[intensity, i]
            row.append(f"{intensity}/{tag}:" + ACTIONS[pol.actions[int(p.argmax())]])
    print(f"level {level}: " + "  ".join(row))
