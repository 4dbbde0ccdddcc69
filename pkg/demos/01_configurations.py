"""How many neighbors to model, and what their configurations look like.

A ground crew shares a fire with four other crews and two helicopters. We
count the configurations, size the neighbor sample, and compare the exact
configuration distribution with draws extrapolated from a handful of agents.

Run: python3 demos/01_configurations.py
"""
import random
from collections import Counter

from oasys.core import (Frame, FrameProportions, Neighborhood, configuration_probability,
                        count_configurations, enumerate_configurations, neighborhood_frame_sizes)
from oasys.ipomcp import draw_configuration
from oasys.survey import required_sample_size

# Actions: 0 = NOOP, 1 = fight the shared fire. Frame 0 is ground, frame 1 air.
frames = [Frame(0, (0, 1), effectiveness=1.0), Frame(1, (0, 1), effectiveness=2.0)]
nbhd = Neighborhood([(j, 0, (0, 1)) for j in range(4)] + [(4, 1, (0, 1)), (5, 1, (0, 1))], frames, 2)

print("configurations:", count_configurations(neighborhood_frame_sizes(nbhd)))

# The neighbor sample shrinks quickly as the tolerated proportion error grows.
for e_p in (0.05, 0.1, 0.2):
    print(f"population 50, e_p={e_p}: model {required_sample_size(50, e_p)} agents")

# Suppose the modeled agents suggest ground crews fight 30% of the time and
# helicopters 80% of the time.
props = FrameProportions([[0.7, 0.2], [0.3, 0.8]])
rng = random.Random(0)
draws = Counter(draw_configuration(props, nbhd, rng) for _ in range(20_000))
print("\nconfiguration (ground fight, air fight): exact vs sampled")
for c in enumerate_configurations(nbhd):
    p = configuration_probability(c, props, nbhd)
    if p > 0.03:
        print(f"  ({c[1, 0]}, {c[1, 1]})  {p:.3f}  {draws[c] / 20_000:.3f}")
