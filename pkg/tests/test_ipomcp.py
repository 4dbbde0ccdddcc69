import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TabularEnv, horizon_q, random_tabular, uniform_value
from oasys.core import (
    NOOP, Configuration, Frame, FrameProportions, Neighborhood, configuration_probability,
    enumerate_configurations,
)
from oasys.ipomcp import (
    Particle, PlanContext, Planner, PlannerConfig, TreeNode, draw_configuration, initial_filter,
    plan, sample_configuration, ucb_select,
)
from oasys.nested_mdp import MentalModel, Policy, solve_population
from oasys.survey import SamplePlan, plan_neighbors
from oasys.wildfire import EMPTY, FULL, AgentView, bundled_scenario


class ScriptedEnv:
    """Single-state env whose rewards come from a fixed list, one per step."""

    p_d, p_r = 0.0, 1.0

    def __init__(self, rewards, actions=(0,)):
        self.rewards = list(rewards)
        self.actions = list(actions)
        self.calls = []

    def policy_index(self, state):
        return 0

    def simulate(self, state, own, action, config, rng):
        self.calls.append((state, action, config))
        return state, own, 0, self.rewards.pop(0)


class NoisyTwoState:
    """Two hidden states, sticky transitions, observation correct w.p. 0.8."""

    p_d, p_r = 0.0, 1.0
    actions = [0]
    T = np.array([[0.9, 0.1], [0.3, 0.7]])

    def policy_index(self, state):
        return 0

    def simulate(self, state, own, action, config, rng):
        nxt = 0 if rng.random() < self.T[state, 0] else 1
        obs = nxt if rng.random() < 0.8 else 1 - nxt
        return nxt, own, obs, 0.0


def one_frame(n, A=2):
    frames = [Frame(0, tuple(range(A)))]
    return Neighborhood([(i, 0, range(A)) for i in range(n)], frames, A)


def cfg(**kw):
    base = dict(c=10.0, horizon=3, gamma=0.9, iterations=500, particles=50, seed=0)
    base.update(kw)
    return PlannerConfig(**base)


def root_of(env, state=0, own=FULL):
    return [Particle(state, (), own)]


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(c=0), dict(horizon=0), dict(gamma=1.0), dict(nu=-1),
                                    dict(iterations=None), dict(particles=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            cfg(**kw)


class TestUCB:
    def test_unvisited_first(self):
        node = TreeNode(3)
        node.counts = [4, 0, 2]
        node.visits = 6
        node.q = [100.0, -50.0, 3.0]
        assert ucb_select(node, 1.0, random.Random(0)) == 1

    def test_unvisited_ties_random(self):
        node = TreeNode(3)
        rng = random.Random(0)
        assert set(ucb_select(node, 1.0, rng) for _ in range(200)) == {0, 1, 2}

    def test_fewer_visits_preferred(self):
        node = TreeNode(2)
        node.counts, node.visits, node.q = [10, 5], 15, [1.0, 1.0]
        assert ucb_select(node, 1.0, random.Random(0)) == 1

    def test_direct_formula(self):
        node = TreeNode(2)
        node.counts, node.visits, node.q = [50, 10], 60, [1.0, 0.8]
        scores = [q + 2.0 * np.sqrt(np.log(60) / n) for q, n in zip(node.q, node.counts)]
        assert ucb_select(node, 2.0, random.Random(0)) == int(np.argmax(scores))

    def test_prior_counts(self):
        node = TreeNode(4, nu=3)
        assert node.visits == 12 and node.counts == [3, 3, 3, 3]


class TestSampleConfiguration:
    def _policy(self, action, A=2):
        probs = np.zeros((1, 1, A))
        probs[0, 0, action] = 1.0
        return Policy(1, range(A), probs)

    def test_zero_neighbors(self):
        ctx = PlanContext.empty(2)
        c = sample_configuration(0, (), ctx, random.Random(0))
        assert c == Configuration.empty(2, 1)

    def test_unanimous(self):
        nb = one_frame(5)
        ctx = PlanContext(nb, SamplePlan(nb, {0: (0, 1)}, {0: 2}))
        models = tuple(MentalModel(j, 0, self._policy(1)) for j in (0, 1))
        c = sample_configuration(0, models, ctx, random.Random(0))
        assert c.counts == (0, 5)
        assert c.modeled_actions == (1, 1)

    def test_absent_model_noop(self):
        nb = one_frame(3)
        ctx = PlanContext(nb, SamplePlan(nb, {0: (0,)}, {0: 1}))
        models = (MentalModel(0, 0, self._policy(1), EMPTY),)
        assert sample_configuration(0, models, ctx, random.Random(0)).counts == (3, 0)

    def test_split_proportions(self):
        nb = one_frame(4)
        ctx = PlanContext(nb, SamplePlan(nb, {0: (0, 1)}, {0: 2}))
        models = (MentalModel(0, 0, self._policy(0)), MentalModel(1, 0, self._policy(1)))
        rng = random.Random(1)
        n = 40_000
        counts = Counter(sample_configuration(0, models, ctx, rng) for _ in range(n))
        props = FrameProportions([[0.5], [0.5]])
        for c in enumerate_configurations(nb):
            assert counts[c] / n == pytest.approx(configuration_probability(c, props, nb), abs=0.01)

    def test_fixed_proportions_tv(self):
        nb = one_frame(5)
        props = FrameProportions([[0.3], [0.7]])
        rng = random.Random(7)
        n = 100_000
        counts = Counter(draw_configuration(props, nb, rng) for _ in range(n))
        tv = 0.5 * sum(abs(counts[c] / n - configuration_probability(c, props, nb))
                       for c in enumerate_configurations(nb))
        assert tv < 0.02

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 100))
    def test_valid_for_full_neighborhood(self, n0, n1, seed):
        frames = [Frame(0, (0, 1, 2)), Frame(1, (0, 2))]
        members = [(i, 0, (0, 1, 2)) for i in range(n0)] + [(n0 + i, 1, (0, 2)) for i in range(n1)]
        nb = Neighborhood(members, frames, 3)
        splan = SamplePlan(nb, {0: nb.of_frame(0)[:2], 1: nb.of_frame(1)[:1]}, {0: 2, 1: 1})
        ctx = PlanContext(nb, splan)
        rng = random.Random(seed)
        models = tuple(MentalModel(j, nb.member(j).frame, self._policy(2, 3)) for j in ctx.modeled_ids)
        for _ in range(20):
            assert sample_configuration(0, models, ctx, rng).is_valid_for(nb)


class TestUpdateTree:
    def test_horizon_cutoff(self):
        env = ScriptedEnv([])
        pl = Planner(env, PlanContext.empty(1), cfg(horizon=2))
        assert pl.update_tree(0, (), FULL, 2, ()) == 0.0
        assert pl.tree == {} and env.calls == []

    def test_first_visit(self):
        env = ScriptedEnv([5.0, 1.0])
        pl = Planner(env, PlanContext.empty(1), cfg(horizon=2, gamma=0.5))
        assert pl.update_tree(0, (), FULL, 0, ()) == 5.0 + 0.5 * 1.0
        assert list(pl.tree) == [()]
        assert len(pl.tree[()].particles) == 1
        assert pl.tree[()].counts == [0]

    def test_q_is_running_mean(self):
        rewards = [3.0, 1.5, -2.0, 7.25, 0.125, 4.0, -1.0]
        env = ScriptedEnv(list(rewards))
        pl = Planner(env, PlanContext.empty(1), cfg(horizon=1, iterations=len(rewards)))
        pl.plan(root_of(env))
        root = pl.tree[()]
        # the first iteration expands the root through a rollout and updates nothing
        assert root.counts == [len(rewards) - 1]
        assert root.q[0] == pytest.approx(np.mean(rewards[1:]), abs=1e-12)

    def test_rollout_geometric(self):
        env = ScriptedEnv([2.0] * 3)
        pl = Planner(env, PlanContext.empty(1), cfg(horizon=3, gamma=0.5))
        assert pl.rollout(0, (), FULL, 0) == pytest.approx(2.0 * (1 + 0.5 + 0.25))
        assert pl.rollout(0, (), FULL, 3) == 0.0
        assert pl.tree == {}

    def test_rollout_mean_matches_uniform_value(self):
        env = random_tabular(3, S=5, A=3)
        H, gamma = 3, 0.9
        pl = Planner(env, PlanContext.empty(3), cfg(horizon=H, gamma=gamma))
        vals = [pl.rollout(0, (), FULL, 0) for _ in range(100_000)]
        assert np.mean(vals) == pytest.approx(uniform_value(env, H, gamma)[0], rel=0.02)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.integers(0, 3), st.integers(1, 300))
    def test_bookkeeping(self, seed, nu, iters):
        env = random_tabular(seed, S=4, A=3)
        pl = Planner(env, PlanContext.empty(3), cfg(nu=nu, iterations=iters, seed=seed))
        pl.plan(root_of(env))
        for path, node in pl.tree.items():
            assert node.visits == sum(node.counts)
            assert all(n >= nu for n in node.counts)
            assert len(node.particles) == sum(node.counts) - nu * 3 + 1


class TestSimulate:
    def test_delegates(self):
        env = random_tabular(1)
        pl = Planner(env, PlanContext.empty(3), cfg())
        c = Configuration.empty(3, 1)
        pl.rng.seed(5)
        s2, M2, own2, o, r = pl.simulate(2, (), FULL, 1, c)
        direct = env.simulate(2, FULL, 1, c, random.Random(5))
        assert (s2, own2, o, r) == direct
        assert r == env.R[2, 1]

    def test_absent_model_recharges(self):
        env = random_tabular(1)
        nb = one_frame(1, 3)
        ctx = PlanContext(nb, SamplePlan(nb, {0: (0,)}, {0: 1}))
        pl = Planner(env, ctx, cfg())
        pl._p_r = 0.5
        model = MentalModel(0, 0, Policy(1, (0, 1, 2), np.full((6, 1, 3), 1 / 3)), EMPTY)
        back = 0
        for _ in range(4000):
            c = sample_configuration(0, (model,), ctx, pl.rng)
            assert c.modeled_actions == (NOOP,)
            _, (m2,), *_ = pl.simulate(0, (model,), FULL, 0, c)
            back += m2.present
        assert back / 4000 == pytest.approx(0.5, abs=0.03)


class TestPlan:
    def test_empty_filter(self):
        with pytest.raises(ValueError):
            plan([], cfg(), random_tabular(0), PlanContext.empty(3))

    def test_single_action(self):
        env = ScriptedEnv([0.0] * 1000, actions=(4,))
        assert plan(root_of(env), cfg(iterations=1), env, PlanContext.empty(5)) == 4

    def test_deterministic(self):
        env = random_tabular(11)
        a = Planner(env, PlanContext.empty(3), cfg(seed=3))
        b = Planner(env, PlanContext.empty(3), cfg(seed=3))
        assert a.plan(root_of(env)) == b.plan(root_of(env))
        assert a.diagnostics == b.diagnostics
        assert {p: (n.counts, n.q) for p, n in a.tree.items()} == {p: (n.counts, n.q) for p, n in b.tree.items()}

    def test_time_budget(self):
        env = random_tabular(2)
        pl = Planner(env, PlanContext.empty(3), cfg(iterations=None, time_budget_ms=30))
        pl.plan(root_of(env))
        assert pl.diagnostics["iterations"] > 0

    def test_bandit(self):
        # H=1, action 0 pays 0 or 6 (mean 3), action 1 pays 4 or 10 (mean 7)
        P = np.ones((1, 2, 1))
        env = TabularEnv(P, [[3.0, 7.0]])

        class Noisy(TabularEnv):
            def simulate(self, state, own, action, config, rng):
                return 0, own, 0, (0.0 if action == 0 else 4.0) + (6.0 if rng.random() < 0.5 else 0.0)

        noisy = Noisy(P, [[3.0, 7.0]])
        picks = [plan(root_of(noisy), cfg(horizon=1, iterations=10_000, c=10.0, seed=s), noisy,
                      PlanContext.empty(2)) for s in range(100)]
        assert picks.count(1) >= 99

    @pytest.mark.parametrize("seed", [21, 22, 23])
    def test_root_q_converges(self, seed):
        # UCB gives poor actions only logarithmically many visits, so their
        # estimates stay pulled toward rollout values; the chosen action's
        # estimate is the one that converges.
        env = random_tabular(seed, S=5, A=3)
        H, gamma, r_max = 3, 0.9, 10.0
        pl = Planner(env, PlanContext.empty(3), cfg(horizon=H, gamma=gamma, iterations=100_000, c=10.0))
        a = pl.plan(root_of(env))
        q_star = horizon_q(env, H, gamma)[0]
        q_hat = np.array(pl.tree[()].q)
        assert a == int(np.argmax(q_star))
        assert abs(q_hat[a] - q_star[a]) < 0.1 * r_max
        assert np.all(q_hat <= q_star.max() + 0.1 * r_max)

    def test_diagnostics(self):
        env = random_tabular(2)
        pl = Planner(env, PlanContext.empty(3), cfg(iterations=200))
        pl.plan(root_of(env))
        d = pl.diagnostics
        assert d["iterations"] == 200 and d["tree_size"] == len(pl.tree)
        assert 1 <= d["max_depth"] <= 3


class TestAdvanceRoot:
    def test_consistent_filter(self):
        env = TabularEnv(np.eye(3)[:, None, :].repeat(2, axis=1), np.zeros((3, 2)))
        pl = Planner(env, PlanContext.empty(2), cfg(particles=100))
        out = pl.advance_root([Particle(1, (), FULL)] * 10, 0, 1)
        assert len(out) == 100 and all(p.state == 1 for p in out)
        assert not pl.diagnostics["reinvigoration"]

    def test_impossible_observation(self):
        env = TabularEnv(np.eye(3)[:, None, :].repeat(2, axis=1), np.zeros((3, 2)))
        pl = Planner(env, PlanContext.empty(2), cfg(particles=20, resample_cap=5))
        out = pl.advance_root([Particle(1, (), FULL)], 0, 2)
        assert len(out) == 20
        assert pl.diagnostics["reinvigoration"] and pl.diagnostics["reinvigorated"] == 20

    def test_own_override(self):
        env = random_tabular(0)
        pl = Planner(env, PlanContext.empty(3), cfg(particles=10, resample_cap=1000))
        out = pl.advance_root([Particle(0, (), FULL)], 0, 0, own=EMPTY)
        assert all(p.own == EMPTY for p in out)

    def test_bayes_posterior(self):
        env = NoisyTwoState()
        n = 10_000
        prior = [Particle(0, (), FULL)] * 6000 + [Particle(1, (), FULL)] * 4000
        pl = Planner(env, PlanContext.empty(1), cfg(particles=n, seed=4))
        out = pl.advance_root(prior, 0, 1)
        pi = np.array([0.6, 0.4])
        like = np.array([0.2, 0.8])
        post = (pi @ env.T) * like
        post /= post.sum()
        emp = np.array([sum(p.state == s for p in out) for s in (0, 1)]) / n
        assert 0.5 * np.abs(emp - post).sum() < 0.05


class TestWildfirePlanning:
    def test_fights_burning_fire(self):
        sc = bundled_scenario("setup1")
        pols = solve_population(sc, 1)
        nb = sc.neighborhood(0)
        ctx = PlanContext(nb, plan_neighbors(nb, 0.1))
        filt = initial_filter(sc.initial_state(), FULL, ctx, pols, 50, random.Random(0))
        pl = Planner(AgentView(sc, 0), ctx, cfg(horizon=4, c=sc.r_max(), iterations=1500))
        assert pl.plan(filt) == 1
        assert len(filt[0].models) == len(ctx.modeled_ids)

    def test_avoids_dead_fire(self):
        sc = bundled_scenario("setup1")
        pols = solve_population(sc, 1)
        nb = sc.neighborhood(0)
        ctx = PlanContext(nb, plan_neighbors(nb, 0.2))
        filt = initial_filter((0,), FULL, ctx, pols, 50, random.Random(0))
        pl = Planner(AgentView(sc, 0), ctx, cfg(horizon=4, c=sc.r_max(), iterations=500))
        assert pl.plan(filt) == NOOP
