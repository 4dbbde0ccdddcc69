import copy
import random

import numpy as np
import pytest

from oasys.core import Frame, FrameProportions, Neighborhood, configuration_probability, enumerate_configurations
from oasys.survey import configuration_error_bound
from oasys.wildfire import scenario_from_dict

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


BASE = {
    "schema_version": 1,
    "name": "toy",
    "fires": [{"id": 0, "size": "small", "intensity": 2}],
    "agents": [
        {"id": 0, "frame": 0, "location": [0, 0], "suppressant": "full"},
        {"id": 1, "frame": 0, "location": [0, 0], "suppressant": "full"},
    ],
    "frames": [{"id": 0, "actions": [0, 1], "effectiveness": 1}],
    "adjacency": {"0": [0], "1": [0]},
    "dynamics": {"p_d": 1 / 3, "p_r": 0.5, "p_s": 0.35, "thresholds": [2, 4, 6],
                 "extinguish_rewards": [20, 40, 60], "burnout_penalty": 1, "invalid_penalty": 100,
                 "observation_noise": 0.1},
    "planning": {"horizon": 4, "gamma": 0.9},
}


def make_scenario(**overrides):
    """Small scenario from ``BASE`` with top-level or ``dynamics`` overrides."""
    d = copy.deepcopy(BASE)
    dyn = overrides.pop("dynamics", {})
    d.update(overrides)
    d["dynamics"].update(dyn)
    return scenario_from_dict(d)


@pytest.fixture
def toy_scenario():
    return make_scenario()


class TabularEnv:
    """Fully observed tabular MDP with the planner's environment interface.

    ``P[s, a]`` is the next-state distribution and ``R[s, a]`` the reward.
    The observation is the next state.
    """

    p_d = 0.0
    p_r = 1.0

    def __init__(self, P, R):
        self.P = np.asarray(P, float)
        self.R = np.asarray(R, float)
        self.actions = list(range(self.R.shape[1]))
        self._cum = [[list(np.cumsum(self.P[s, a])) for a in self.actions] for s in range(len(self.R))]

    def policy_index(self, state):
        return state

    def simulate(self, state, own, action, config, rng):
        cum = self._cum[state][action]
        u = rng.random()
        nxt = 0
        while nxt < len(cum) - 1 and u >= cum[nxt]:
            nxt += 1
        return nxt, own, nxt, float(self.R[state, action])


def random_tabular(seed, S=6, A=3, r_max=10.0):
    rs = np.random.default_rng(seed)
    P = rs.dirichlet(np.full(S, 0.5), size=(S, A))
    R = rs.uniform(0, r_max, size=(S, A))
    return TabularEnv(P, R)


def horizon_q(env, H, gamma):
    """Finite-horizon discounted Q table at the first step, by backward induction."""
    V = np.zeros(len(env.R))
    Q = None
    for _ in range(H):
        Q = env.R + gamma * env.P @ V
        V = Q.max(axis=1)
    return Q


def uniform_value(env, H, gamma):
    V = np.zeros(len(env.R))
    for _ in range(H):
        V = (env.R + gamma * env.P @ V).mean(axis=1)
    return V


@pytest.fixture
def rng():
    return random.Random(12345)


def perturb(p_hat, e_p, rs):
    """True proportions within (strictly) ``e_p`` of ``p_hat`` per entry, still a distribution."""
    d = rs.normal(size=len(p_hat))
    d -= d.mean()
    if not np.abs(d).max() > 0:
        return p_hat.copy()
    limits = [0.999 * e_p / np.abs(d).max()]
    for x, dx in zip(p_hat, d):
        if dx > 0:
            limits.append((1 - x) / dx)
        elif dx < 0:
            limits.append(x / -dx)
    return p_hat + min(limits) * d


def domination_violations(sizes, A, e_p, seed):
    rs = np.random.default_rng(seed)
    frames = [Frame(k, tuple(range(A))) for k in range(len(sizes))]
    ks = [k for k, n in enumerate(sizes) for _ in range(n)]
    nb = Neighborhood([(j, k, range(A)) for j, k in enumerate(ks)], frames, A)
    p_hat = rs.dirichlet(np.ones(A), size=len(sizes)).T
    p_true = np.stack([perturb(p_hat[:, k], e_p, rs) for k in range(len(sizes))], 1)
    est, true = FrameProportions(p_hat), FrameProportions(np.clip(p_true, 0, 1))
    bad = 0
    for c in enumerate_configurations(nb):
        gap = abs(configuration_probability(c, true, nb) - configuration_probability(c, est, nb))
        if not gap < configuration_error_bound(est, e_p, c, nb):
            bad += 1
    return bad
