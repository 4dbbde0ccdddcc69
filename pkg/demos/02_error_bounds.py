"""What an imprecise proportion estimate costs.

With proportions known only up to e_p, each configuration probability carries
a worst-case error. Summed over configurations and pushed through the planning
horizon it bounds the value a planner can lose.

Run: python3 demos/02_error_bounds.py
"""
from oasys.core import Configuration, Frame, FrameProportions, Neighborhood, enumerate_configurations
from oasys.survey import configuration_error_bound, regret_bound

nbhd = Neighborhood([(j, 0, (0, 1, 2)) for j in range(6)], [Frame(0, (0, 1, 2))], 3)
props = FrameProportions([[0.2], [0.5], [0.3]])
configs = list(enumerate_configurations(nbhd))

print("e_p    worst configuration error   regret bound (R_max=60, gamma=0.9, k=10, |O|=5)")
for e_p in (0.01, 0.05, 0.1):
    eps = max(configuration_error_bound(props, e_p, c, nbhd) for c in configs)
    print(f"{e_p:<6} {eps:<27.4f} {regret_bound(eps, len(configs), 60, 0.9, 10, 5):.1f}")

# The bound for a single configuration, everyone fighting fire 1.
c = Configuration.from_table([[0], [6], [0]])
print("\nall six on fire 1:", round(configuration_error_bound(props, 0.05, c, nbhd), 5))
