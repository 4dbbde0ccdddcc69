"""Nested-MDP policies and the mental models built from them.

Level 0 acts uniformly at random. A level-``l`` agent best-responds, by value
iteration, to neighbors following level ``l - 1`` policies. The expectation
over neighbor configurations is exact when the neighborhood has at most
``exact_threshold`` configurations and Monte Carlo otherwise.

Policies are indexed by ``(environment state, own suppressant level)`` so
that a modeled agent's behavior tracks its own resources.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .core import NOOP, count_configurations, neighborhood_frame_sizes
from .wildfire import (EMPTY, FULL, HALF, NUM_INTENSITIES, Scenario, legal_actions,
                       scenario_to_dict, state_from_index, step_suppressant)

POLICY_SCHEMA_VERSION = 1
NUM_LEVELS = 3   # suppressant levels


class ConvergenceError(RuntimeError):
    pass


class Policy:
    """State-indexed action distributions.

    Args:
        level: reasoning level.
        actions: global action ids, in the order of the last axis of ``probs``.
        probs: array of shape ``(num_states, num_internal, len(actions))``.
    """

    def __init__(self, level: int, actions: Sequence[int], probs, agent_id: int | None = None):
        self.level = int(level)
        self.actions = tuple(int(a) for a in actions)
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.ndim == 2:
            self.probs = self.probs[:, None, :]
        if self.probs.shape[-1] != len(self.actions):
            raise ValueError("probs last axis must match actions")
        if not np.allclose(self.probs.sum(-1), 1.0, atol=1e-9):
            raise ValueError("policy rows must sum to 1")
        self.probs.setflags(write=False)
        self.agent_id = agent_id
        self.q: np.ndarray | None = None
        self._build_tables()

    def _build_tables(self):
        S, I, _ = self.probs.shape
        det = self.probs.max(-1) >= 1.0 - 1e-12
        arg = self.probs.argmax(-1)
        acts = self.actions
        self._det = [[acts[arg[s, i]] if det[s, i] else -1 for i in range(I)] for s in range(S)]
        self._cum = {}
        for s, i in zip(*np.nonzero(~det)):
            self._cum[(int(s), int(i))] = list(np.cumsum(self.probs[s, i]))

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_internal(self) -> int:
        return self.probs.shape[1]

    def distribution(self, state: int, internal: int = 0) -> dict[int, float]:
        row = self.probs[state, internal]
        return {a: float(p) for a, p in zip(self.actions, row) if p > 0}

    def sample(self, state: int, internal: int, rng: random.Random) -> int:
        a = self._det[state][internal]
        if a >= 0:
            return a
        return rng.choices(self.actions, cum_weights=self._cum[(state, internal)])[0]

    def is_deterministic(self) -> bool:
        return not self._cum

    def __eq__(self, other):
        return (isinstance(other, Policy) and self.level == other.level
                and self.actions == other.actions and np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash((self.level, self.actions, self.probs.tobytes()))

    def __getstate__(self):
        return {"level": self.level, "actions": self.actions, "probs": np.array(self.probs),
                "agent_id": self.agent_id}

    def __setstate__(self, st):
        self.__init__(st["level"], st["actions"], st["probs"], st["agent_id"])

    def to_dict(self) -> dict:
        return {"schema_version": POLICY_SCHEMA_VERSION, "level": self.level,
                "agent_id": self.agent_id, "actions": list(self.actions),
                "shape": list(self.probs.shape), "probs": self.probs.ravel().tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Policy":
        if d.get("schema_version") != POLICY_SCHEMA_VERSION:
            raise ValueError(f"unsupported policy schema {d.get('schema_version')!r}")
        probs = np.array(d["probs"], dtype=float).reshape(d["shape"])
        return cls(d["level"], d["actions"], probs, d.get("agent_id"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Policy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class MentalModel(NamedTuple):
    """What the subject believes about one neighbor.

    The neighbor is absent exactly when its suppressant is empty; it is then
    recharging and ``absent_steps`` counts how long it has been away.
    """

    agent_id: int
    frame: int
    policy: Policy
    suppressant: int = FULL
    absent_steps: int = 0

    @property
    def present(self) -> bool:
        return self.suppressant != EMPTY


def model_action(model: MentalModel, state: int, rng: random.Random) -> int:
    """NOOP while absent, otherwise a draw from the model's policy."""
    lvl = model[3]
    if lvl == EMPTY:
        return NOOP
    pol = model[2]
    row = pol._det[state]
    internal = lvl if len(row) > 1 else 0
    a = row[internal]
    if a >= 0:
        return a
    return rng.choices(pol.actions, cum_weights=pol._cum[(state, internal)])[0]


def transition_model(model: MentalModel, action_taken: int, rng: random.Random,
                     p_d: float = 1.0 / 3.0, p_r: float = 0.5) -> MentalModel:
    """Apply discharge and recharge to a mental model.

    Consumes random draws exactly as ``step_suppressant`` does.
    """
    lvl = model[3]
    if lvl == EMPTY:
        if rng.random() < p_r:
            return MentalModel(model[0], model[1], model[2], FULL, 0)
        return MentalModel(model[0], model[1], model[2], EMPTY, model[4] + 1)
    if action_taken != NOOP and rng.random() < p_d:
        return MentalModel(model[0], model[1], model[2], lvl - 1, 0)
    return model


def stationary_presence(p_d: float, p_r: float) -> float:
    """Long-run fraction of time present for an agent that always fights."""
    if p_d <= 0:
        return 1.0
    if p_r <= 0:
        return 0.0
    away = 1.0 / p_r
    here = 2.0 / p_d
    return here / (here + away)


# -- value iteration -------------------------------------------------------

@dataclass
class VIResult:
    values: np.ndarray
    q: np.ndarray
    residuals: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)


def value_iteration(transitions: Sequence, rewards, gamma: float, epsilon: float = 1e-6,
                    max_iter: int = 10_000, legal=None) -> VIResult:
    """Discounted value iteration until the max-norm residual drops below ``epsilon``.

    Args:
        transitions: one ``(S, S)`` row-stochastic matrix (dense or sparse) per action.
        rewards: expected one-step reward, shape ``(S, A)``.
        legal: optional boolean mask ``(S, A)``; illegal actions get ``-inf``.
    """
    R = np.asarray(rewards, dtype=float)
    S, A = R.shape
    mask = np.ones((S, A), bool) if legal is None else np.asarray(legal, bool)
    V = np.zeros(S)
    residuals = []
    for _ in range(max_iter):
        Q = np.empty((S, A))
        for a in range(A):
            Q[:, a] = R[:, a] + gamma * (transitions[a] @ V)
        Q[~mask] = -np.inf
        V_new = Q.max(axis=1)
        res = float(np.max(np.abs(V_new - V))) if S else 0.0
        residuals.append(res)
        V = V_new
        if res < epsilon:
            return VIResult(V, Q, residuals)
    raise ConvergenceError(f"value iteration did not reach {epsilon} in {max_iter} iterations "
                           f"(last residual {residuals[-1]:.3g})")


def greedy_actions(q: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Argmax along the last axis, ties to the lowest index."""
    top = q.max(axis=-1, keepdims=True)
    tol = rtol * np.maximum(1.0, np.abs(top))
    return np.argmax(q >= top - tol, axis=-1)


# -- wildfire nested MDPs -------------------------------------------------

def solve_level0(agent_id: int, scenario: Scenario) -> Policy:
    """Uniform over the agent's legal actions in every state."""
    acts = legal_actions(scenario.agent(agent_id), scenario)
    probs = np.full((scenario.num_states, NUM_LEVELS, len(acts)), 1.0 / len(acts))
    return Policy(0, acts, probs, agent_id)


def _neighbor_action_probs(policy: Policy, num_actions: int, presence: float) -> np.ndarray:
    """(S, num_actions) action distribution with suppressant and presence marginalized."""
    S = policy.num_states
    if policy.num_internal > 1:
        row = 0.5 * (policy.probs[:, HALF, :] + policy.probs[:, FULL, :])
    else:
        row = policy.probs[:, 0, :]
    out = np.zeros((S, num_actions))
    out[:, list(policy.actions)] = presence * row
    out[:, NOOP] += 1.0 - presence
    return out


def _success_distribution_exact(s_probs: list[np.ndarray], effs: list[float], thr: Sequence[float],
                                k: int) -> dict[tuple, float]:
    """Exact distribution of capped per-fire neighbor power by convolution."""
    dist = {(0.0,) * k: 1.0}
    for p, eff in zip(s_probs, effs):
        nxt: dict[tuple, float] = {}
        for key, w in dist.items():
            if p[NOOP] > 0:
                nxt[key] = nxt.get(key, 0.0) + w * p[NOOP]
            for f in range(k):
                pa = p[f + 1]
                if pa <= 0:
                    continue
                lst = list(key)
                lst[f] = min(lst[f] + eff, thr[f])
                t = tuple(lst)
                nxt[t] = nxt.get(t, 0.0) + w * pa
        dist = nxt
    return dist


def configuration_success_probs(agent_id: int, scenario: Scenario, lower_policies: Mapping[int, Policy],
                                *, config_samples: int = 1000, rng_seed: int = 0,
                                exact_threshold: int = 10_000, presence: float | None = None):
    """P(fire-success bit vector | state, own action, own contributes) for one agent.

    Returns an array ``(num_states, len(actions), 2, 2**k)`` where the third
    axis says whether the agent has suppressant to contribute.
    """
    sc = scenario
    k = sc.num_fires
    acts = legal_actions(sc.agent(agent_id), sc)
    own_eff = sc.effectiveness(sc.agent(agent_id).frame)
    nbhd = sc.neighborhood(agent_id)
    if presence is None:
        presence = stationary_presence(sc.dynamics.p_d, sc.dynamics.p_r)
    nb_ids = [m.agent_id for m in nbhd.members]
    missing = [j for j in nb_ids if j not in lower_policies]
    if missing:
        raise KeyError(f"no lower-level policy for neighbors {missing}")
    probs = [_neighbor_action_probs(lower_policies[j], sc.num_actions, presence) for j in nb_ids]
    effs = [sc.effectiveness(sc.agent(j).frame) for j in nb_ids]
    thr = [float(sc.threshold(f)) for f in range(k)]
    exact = count_configurations(neighborhood_frame_sizes(nbhd)) <= exact_threshold
    S = sc.num_states
    out = np.zeros((S, len(acts), 2, 2 ** k))
    bits = 1 << np.arange(k)
    own_add = np.zeros((len(acts), k))
    for ai, a in enumerate(acts):
        if a != NOOP:
            own_add[ai, a - 1] = own_eff
    if exact:
        for s in range(S):
            dist = _success_distribution_exact([p[s] for p in probs], effs, thr, k)
            keys = np.array(list(dist.keys()), dtype=float).reshape(len(dist), k)
            w = np.fromiter(dist.values(), float, len(dist))
            for ai in range(len(acts)):
                for has in (0, 1):
                    g = ((keys + has * own_add[ai] >= np.array(thr)) * bits).sum(1)
                    out[s, ai, has] = np.bincount(g, weights=w, minlength=2 ** k)
    else:
        rng = np.random.default_rng(rng_seed)
        cum = np.cumsum(np.stack(probs, 1), axis=-1) if probs else np.zeros((S, 0, sc.num_actions))
        eff_arr = np.array(effs)
        for s in range(S):
            u = rng.random((config_samples, len(nb_ids)))
            drawn = (u[..., None] >= cum[s][None, :, :]).sum(-1)   # (K, n)
            power = np.stack([((drawn == f + 1) * eff_arr).sum(1) for f in range(k)], 1)
            for ai in range(len(acts)):
                for has in (0, 1):
                    g = ((power + has * own_add[ai] >= np.array(thr)) * bits).sum(1)
                    out[s, ai, has] = np.bincount(g, minlength=2 ** k) / config_samples
    return out


def _fire_step_distribution(state: tuple[int, ...], g: int, p_s: float) -> list[tuple[tuple, float]]:
    options = []
    for f, v in enumerate(state):
        if v in (0, NUM_INTENSITIES - 1):
            options.append(((v, 1.0),))
        elif (g >> f) & 1:
            options.append(((v - 1, 1.0),))
        elif p_s <= 0:
            options.append(((v, 1.0),))
        elif p_s >= 1:
            options.append(((v + 1, 1.0),))
        else:
            options.append(((v + 1, p_s), (v, 1.0 - p_s)))
    out = []
    for combo in itertools.product(*options):
        p = 1.0
        nxt = []
        for v, q in combo:
            p *= q
            nxt.append(v)
        out.append((tuple(nxt), p))
    return out


def wildfire_mdp(agent_id: int, scenario: Scenario, success_probs: np.ndarray):
    """Tabular model over ``(fire state, own suppressant)``.

    Returns ``(transitions, rewards)`` with one sparse ``(S*3, S*3)`` matrix
    per legal action and rewards of shape ``(S*3, A)``.
    """
    sc = scenario
    d = sc.dynamics
    k = sc.num_fires
    acts = legal_actions(sc.agent(agent_id), sc)
    S = sc.num_states
    X = S * NUM_LEVELS
    ext = [sc.extinguish_reward(f) for f in range(k)]
    rows = [[] for _ in acts]
    cols = [[] for _ in acts]
    vals = [[] for _ in acts]
    R = np.zeros((X, len(acts)))
    for s in range(S):
        state = state_from_index(s, k)
        steps = {g: _fire_step_distribution(state, g, d.p_s) for g in range(2 ** k)}
        fire_r = np.zeros(2 ** k)
        for g in range(2 ** k):
            r = 0.0
            for f, v in enumerate(state):
                hit = (g >> f) & 1
                if v == 1 and hit:
                    r += ext[f]
                elif v == 3 and not hit:
                    r -= d.burnout_penalty * d.p_s
            fire_r[g] = r
        for sig in range(NUM_LEVELS):
            x = s * NUM_LEVELS + sig
            has = 0 if sig == EMPTY else 1
            for ai, a in enumerate(acts):
                pg = success_probs[s, ai, has]
                invalid = a != NOOP and (sig == EMPTY or state[a - 1] in (0, NUM_INTENSITIES - 1))
                R[x, ai] = pg @ fire_r - (d.invalid_penalty if invalid else 0.0)
                if sig == EMPTY:
                    own_next = ((FULL, d.p_r), (EMPTY, 1.0 - d.p_r))
                elif a != NOOP:
                    own_next = ((sig - 1, d.p_d), (sig, 1.0 - d.p_d))
                else:
                    own_next = ((sig, 1.0),)
                acc: dict[int, float] = {}
                for g in range(2 ** k):
                    if pg[g] <= 0:
                        continue
                    for nstate, p in steps[g]:
                        ns = 0
                        for v in nstate:
                            ns = ns * NUM_INTENSITIES + v
                        for sig2, q in own_next:
                            if q <= 0:
                                continue
                            y = ns * NUM_LEVELS + sig2
                            acc[y] = acc.get(y, 0.0) + pg[g] * p * q
                for y, p in acc.items():
                    rows[ai].append(x)
                    cols[ai].append(y)
                    vals[ai].append(p)
    P = [sparse.csr_matrix((vals[ai], (rows[ai], cols[ai])), shape=(X, X)) for ai in range(len(acts))]
    return P, R


def solve_nested_mdp(level: int, agent_id: int, scenario: Scenario, lower_policies: Mapping[int, Policy],
                     gamma: float | None = None, epsilon: float = 0.01, config_samples: int = 1000,
                     rng_seed: int = 0, *, exact_threshold: int = 10_000,
                     presence: float | None = None) -> Policy:
    """Best response of ``agent_id`` to neighbors following ``lower_policies``.

    Returns the greedy deterministic policy; ``policy.q`` keeps the Q table
    with shape ``(num_states, 3, num_actions)``.
    """
    if level < 1:
        raise ValueError("nested MDP level must be >= 1; use solve_level0 for level 0")
    gamma = scenario.gamma if gamma is None else gamma
    succ = configuration_success_probs(agent_id, scenario, lower_policies, config_samples=config_samples,
                                       rng_seed=rng_seed, exact_threshold=exact_threshold,
                                       presence=presence)
    P, R = wildfire_mdp(agent_id, scenario, succ)
    res = value_iteration(P, R, gamma, epsilon)
    acts = legal_actions(scenario.agent(agent_id), scenario)
    q = res.q.reshape(scenario.num_states, NUM_LEVELS, len(acts))
    best = greedy_actions(q)
    probs = np.zeros_like(q)
    np.put_along_axis(probs, best[..., None], 1.0, axis=-1)
    pol = Policy(level, acts, probs, agent_id)
    pol.q = q
    pol.residuals = res.residuals
    return pol


def agent_class(agent_id: int, scenario: Scenario) -> tuple:
    """Agents with equal classes have identical nested-MDP policies."""
    a = scenario.agent(agent_id)
    nb = sorted((scenario.agent(j).frame, scenario.agent(j).adjacent) for j in scenario.neighbors(agent_id))
    return (a.frame, a.adjacent, tuple(nb))


def cache_key(scenario: Scenario, cls: tuple, level: int, gamma: float, epsilon: float,
              config_samples: int, rng_seed: int) -> str:
    payload = json.dumps([scenario_to_dict(scenario), repr(cls), level, gamma, epsilon,
                          config_samples, rng_seed], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


class PolicyCache:
    """On-disk store of solved policies, one JSON file per key."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def get(self, key: str) -> Policy | None:
        path = self.directory / f"{key}.json"
        return Policy.load(path) if path.exists() else None

    def put(self, key: str, policy: Policy) -> None:
        policy.save(self.directory / f"{key}.json")


def solve_population(scenario: Scenario, level: int, *, gamma: float | None = None, epsilon: float = 0.01,
                     config_samples: int = 1000, rng_seed: int = 0,
                     cache: PolicyCache | None = None) -> dict[int, Policy]:
    """Level-``level`` policies for every agent, sharing work across equivalent agents."""
    gamma = scenario.gamma if gamma is None else gamma
    policies = {a.id: solve_level0(a.id, scenario) for a in scenario.agents}
    for lvl in range(1, level + 1):
        solved: dict[tuple, Policy] = {}
        nxt = {}
        for a in scenario.agents:
            cls = agent_class(a.id, scenario)
            if cls not in solved:
                key = cache_key(scenario, cls, lvl, gamma, epsilon, config_samples, rng_seed)
                pol = cache.get(key) if cache is not None else None
                if pol is None:
                    pol = solve_nested_mdp(lvl, a.id, scenario, policies, gamma, epsilon,
                                           config_samples, rng_seed)
                    if cache is not None:
                        cache.put(key, pol)
                solved[cls] = pol
            src = solved[cls]
            nxt[a.id] = Policy(src.level, src.actions, src.probs, a.id)
        policies = nxt
    return policies
