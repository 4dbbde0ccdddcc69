import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_scenario
from oasys.core import NOOP, FrameProportions, configuration_probability, enumerate_configurations
from oasys.nested_mdp import (
    ConvergenceError, MentalModel, Policy, PolicyCache, configuration_success_probs, greedy_actions,
    model_action, solve_level0, solve_nested_mdp, solve_population, stationary_presence,
    transition_model, value_iteration,
)
from oasys.wildfire import EMPTY, FULL, HALF, bundled_scenario, reward, state_index


def three_agent_scenario():
    agents = [{"id": i, "frame": 0, "location": [0, 0], "suppressant": "full"} for i in range(3)]
    return make_scenario(agents=agents, adjacency={str(i): [0] for i in range(3)})


def brute_force_level1_q(sc, gamma, presence):
    """Level-1 Q for agent 0 of the 3-agent toy, from enumerated configurations."""
    nb = sc.neighborhood(0)
    p_fight = presence * 0.5       # level-0 neighbors are uniform over {NOOP, fight}
    props = FrameProportions([[1 - p_fight], [p_fight]])
    configs = [(c[1, 0], configuration_probability(c, props, nb)) for c in enumerate_configurations(nb)]
    assert len(configs) == 3
    d = sc.dynamics
    thr = sc.threshold(0)
    X = 5 * 3
    P = np.zeros((2, X, X))
    R = np.zeros((X, 2))
    for v in range(5):
        for own in (EMPTY, HALF, FULL):
            x = state_index((v,)) * 3 + own
            for a in (0, 1):
                if own == EMPTY:
                    own_next = [(FULL, d.p_r), (EMPTY, 1 - d.p_r)]
                elif a:
                    own_next = [(own - 1, d.p_d), (own, 1 - d.p_d)]
                else:
                    own_next = [(own, 1.0)]
                for fighters, pc in configs:
                    power = fighters + (1 if a and own != EMPTY else 0)
                    if v in (0, 4):
                        nxt = [(v, 1.0)]
                    elif power >= thr:
                        nxt = [(v - 1, 1.0)]
                    else:
                        nxt = [(v + 1, d.p_s), (v, 1 - d.p_s)]
                    for v2, pv in nxt:
                        R[x, a] += pc * pv * reward((v,), a, None, (v2,), sc, own)
                        for o2, po in own_next:
                            P[a, x, state_index((v2,)) * 3 + o2] += pc * pv * po
    V = np.zeros(X)
    for _ in range(5000):
        Q = R + gamma * np.einsum("axy,y->xa", P, V)
        V = Q.max(1)
    return Q.reshape(5, 3, 2)


class TestLevel0:
    def test_uniform(self):
        sc = bundled_scenario("setup3")
        pol = solve_level0(0, sc)
        assert len(pol.actions) == 3
        assert np.allclose(pol.probs, 1 / 3)

    def test_single_action(self):
        sc = make_scenario(adjacency={"0": [0], "1": []})
        pol = solve_level0(1, sc)
        assert pol.actions == (NOOP,)
        assert pol.distribution(0) == {NOOP: 1.0}

    def test_no_illegal_mass(self):
        sc = bundled_scenario("setup3")
        pol = solve_level0(0, sc)
        assert set(pol.actions) == {0, 1, 2}
        assert 3 not in pol.distribution(7)


class TestValueIteration:
    def test_one_state(self):
        res = value_iteration([np.ones((1, 1))] * 3, [[1.0, 5.0, 3.0]], 0.9)
        assert greedy_actions(res.q)[0] == 1

    def test_two_state_chain(self):
        # action 0 stays, action 1 moves to the other state; reward only for staying in state 1
        stay = np.eye(2)
        move = np.array([[0.0, 1.0], [1.0, 0.0]])
        R = np.array([[0.0, 0.0], [1.0, 0.0]])
        res = value_iteration([stay, move], R, 0.9, epsilon=1e-9)
        V = np.zeros(2)
        for _ in range(100):
            V = np.max(R + 0.9 * np.stack([stay @ V, move @ V], 1), axis=1)
        assert np.allclose(res.values, V, atol=1e-3)
        assert np.allclose(res.values, [9.0, 10.0], atol=1e-6)

    def test_residuals_decrease(self):
        rs = np.random.default_rng(0)
        P = [rs.dirichlet(np.ones(8), size=8) for _ in range(3)]
        res = value_iteration(P, rs.uniform(-1, 1, (8, 3)), 0.95, epsilon=1e-8)
        r = np.array(res.residuals)
        assert np.all(r[1:] <= r[:-1] + 1e-12)

    def test_non_convergence(self):
        with pytest.raises(ConvergenceError):
            value_iteration([np.eye(2)], np.ones((2, 1)), 0.99, epsilon=1e-12, max_iter=5)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 100.0))
    def test_scaling_invariance(self, seed, scale):
        rs = np.random.default_rng(seed)
        P = [rs.dirichlet(np.ones(5), size=5) for _ in range(3)]
        R = rs.uniform(0, 1, (5, 3))
        a = value_iteration(P, R, 0.9, epsilon=1e-10)
        b = value_iteration(P, R * scale, 0.9, epsilon=1e-10 * scale)
        assert np.array_equal(greedy_actions(a.q, 1e-6), greedy_actions(b.q, 1e-6))


class TestLevel1:
    def test_matches_enumeration_oracle(self):
        sc = three_agent_scenario()
        level0 = {a.id: solve_level0(a.id, sc) for a in sc.agents}
        pol = solve_nested_mdp(1, 0, sc, level0, epsilon=1e-9)
        q = brute_force_level1_q(sc, sc.gamma, stationary_presence(sc.dynamics.p_d, sc.dynamics.p_r))
        assert np.allclose(pol.q, q, atol=1e-6)
        assert np.array_equal(greedy_actions(pol.q), greedy_actions(q))

    def test_sampled_backup_converges(self):
        sc = three_agent_scenario()
        level0 = {a.id: solve_level0(a.id, sc) for a in sc.agents}
        exact = solve_nested_mdp(1, 0, sc, level0, epsilon=1e-6)
        mc = solve_nested_mdp(1, 0, sc, level0, epsilon=1e-6, config_samples=10_000, exact_threshold=0)
        assert np.max(np.abs(exact.q - mc.q)) < 0.05 * sc.r_max()

    def test_success_probs_are_distributions(self):
        sc = bundled_scenario("setup2")
        level0 = {a.id: solve_level0(a.id, sc) for a in sc.agents}
        succ = configuration_success_probs(0, sc, level0)
        assert np.allclose(succ.sum(-1), 1.0)

    def test_missing_lower_policy(self):
        sc = three_agent_scenario()
        with pytest.raises(KeyError):
            solve_nested_mdp(1, 0, sc, {0: solve_level0(0, sc)})

    def test_level_zero_rejected(self):
        sc = three_agent_scenario()
        with pytest.raises(ValueError):
            solve_nested_mdp(0, 0, sc, {})

    def test_level1_sensible_on_setup1(self):
        sc = bundled_scenario("setup1")
        pols = solve_population(sc, 1)
        s = state_index(sc.initial_state())
        assert all(p.sample(s, FULL, random.Random(0)) == 1 for p in pols.values())
        assert all(p.sample(s, EMPTY, random.Random(0)) == NOOP for p in pols.values())
        assert all(p.sample(state_index((0,)), FULL, random.Random(0)) == NOOP for p in pols.values())


class TestPolicyStorage:
    def test_roundtrip(self, tmp_path):
        sc = three_agent_scenario()
        pol = solve_population(sc, 1)[0]
        pol.save(tmp_path / "p.json")
        again = Policy.load(tmp_path / "p.json")
        assert again == pol and again.level == 1

    def test_cache(self, tmp_path):
        sc = three_agent_scenario()
        cache = PolicyCache(tmp_path)
        a = solve_population(sc, 1, cache=cache)
        assert list(tmp_path.iterdir())
        b = solve_population(sc, 1, cache=cache)
        assert a == b

    def test_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            Policy(0, (0, 1), [[0.5, 0.6]])


class TestMentalModels:
    def _model(self, suppressant=FULL, probs=((0.0, 1.0),)):
        return MentalModel(1, 0, Policy(1, (0, 1), np.array(probs)), suppressant)

    def test_absent_noop(self):
        m = self._model(EMPTY)
        rng = random.Random(0)
        assert all(model_action(m, 0, rng) == NOOP for _ in range(100))

    def test_deterministic(self):
        m = self._model()
        rng = random.Random(0)
        assert all(model_action(m, 0, rng) == 1 for _ in range(100))

    def test_uniform_frequencies(self):
        from scipy.stats import chisquare
        m = self._model(probs=((0.5, 0.5),))
        rng = random.Random(2)
        draws = [model_action(m, 0, rng) for _ in range(10_000)]
        ones = sum(draws)
        assert ones / 10_000 == pytest.approx(0.5, abs=0.02)
        assert chisquare([10_000 - ones, ones]).pvalue > 0.001

    def test_noop_keeps_suppressant(self):
        m = self._model()
        assert transition_model(m, NOOP, random.Random(0)) == m

    def test_absence_duration(self):
        rng = random.Random(4)
        total = 0
        for _ in range(10_000):
            m = self._model(EMPTY)
            steps = 0
            while not m.present:
                m = transition_model(m, NOOP, rng)
                steps += 1
            assert m.suppressant == FULL
            total += steps
        assert total / 10_000 == pytest.approx(2.0, abs=0.1)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from([0, 1]), max_size=40), st.integers(0, 1000))
    def test_presence_invariant(self, actions, seed):
        rng = random.Random(seed)
        m = self._model()
        for a in actions:
            m = transition_model(m, a, rng)
            assert m.present == (m.suppressant != EMPTY)
            assert m.absent_steps == 0 or not m.present

    def test_stationary_presence(self):
        assert stationary_presence(1 / 3, 0.5) == pytest.approx(0.75)
