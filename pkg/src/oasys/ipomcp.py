"""I-POMCP_O: Monte Carlo tree search for open many-agent settings.

The tree is keyed by action-observation paths. Each simulation starts from a
particle ``(state, mental models, own suppressant)`` drawn from the root
filter. Before every simulated step a configuration of the *whole*
neighborhood is drawn by extrapolating the actions of the few modeled
neighbors.

An environment used here must provide ``actions`` (the subject's legal action
ids), ``simulate(state, own, action, config, rng) -> (state, own, obs, reward)``,
``policy_index(state)`` and the openness rates ``p_d`` and ``p_r``.
"""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .core import Configuration, Frame, FrameProportions, Neighborhood
from .nested_mdp import MentalModel, Policy, model_action, transition_model
from .survey import SamplePlan
from .wildfire import FULL, HALF


class Particle(NamedTuple):
    state: tuple
    models: tuple[MentalModel, ...]
    own: int


class TreeNode:
    """Visit statistics at one action-observation path.

    Each action starts with ``nu`` prior visits; ``visits`` starts at
    ``nu * num_actions`` so it always equals the sum of the per-action counts.
    """

    __slots__ = ("visits", "counts", "q", "particles")

    def __init__(self, num_actions: int, nu: int = 0):
        self.visits = nu * num_actions
        self.counts = [nu] * num_actions
        self.q = [0.0] * num_actions
        self.particles: list[Particle] = []


@dataclass
class PlannerConfig:
    c: float = 100.0
    horizon: int = 4
    gamma: float = 0.9
    nu: int = 0
    iterations: int | None = 1000
    time_budget_ms: float | None = None
    particles: int = 200
    seed: int = 0
    resample_cap: int = 100

    def __post_init__(self):
        if self.c <= 0 or self.horizon < 1 or not 0 < self.gamma < 1 or self.nu < 0:
            raise ValueError(f"invalid planner config {self}")
        if self.iterations is None and self.time_budget_ms is None:
            raise ValueError("need an iteration or a time budget")
        if self.particles < 1:
            raise ValueError("need at least one particle")


class PlanContext:
    """The neighborhood and the modeled subset, in the particles' model order."""

    def __init__(self, neighborhood: Neighborhood, plan: SamplePlan | None = None):
        self.neighborhood = neighborhood
        self.plan = plan
        self.modeled_ids = plan.modeled_ids if plan is not None else ()
        self.model_frames = tuple(neighborhood.member(j).frame for j in self.modeled_ids)
        self.frame_sizes = neighborhood.frame_sizes()
        self.frame_actions = [list(fr.action_set) for fr in neighborhood.frames]
        self.num_actions = neighborhood.num_actions
        self.num_frames = neighborhood.num_frames

    @classmethod
    def empty(cls, num_actions: int, frames: Sequence[Frame] | None = None) -> "PlanContext":
        frames = frames or (Frame(0, tuple(range(num_actions))),)
        return cls(Neighborhood([], frames, num_actions))


def sample_configuration(state_index: int, models: Sequence[MentalModel], ctx: PlanContext,
                         rng: random.Random) -> Configuration:
    """Draw a configuration of the full neighborhood from the modeled few.

    Each modeled neighbor draws an action (NOOP when absent). Every member of
    a frame then takes the action of a uniformly chosen modeled agent of that
    frame, which is a categorical draw with the extrapolated proportions.
    Frames with nobody modeled fall back to uniform over their action set.
    """
    F = ctx.num_frames
    drawn = [model_action(m, state_index, rng) for m in models]
    if F == 1:
        per_frame = [drawn]
    else:
        per_frame = [[] for _ in range(F)]
        for m, a in zip(models, drawn):
            per_frame[m[1]].append(a)
    counts = [0] * (ctx.num_actions * F)
    for k in range(F):
        n = ctx.frame_sizes[k]
        if not n:
            continue
        acts = per_frame[k] or ctx.frame_actions[k]
        first = acts[0]
        if acts.count(first) == len(acts):
            counts[first * F + k] += n
        else:
            for a in rng.choices(acts, k=n):
                counts[a * F + k] += 1
    return Configuration(tuple(counts), ctx.num_actions, F, tuple(drawn))


def draw_configuration(props: FrameProportions, nbhd: Neighborhood, rng: random.Random) -> Configuration:
    """One categorical draw per neighbor from fixed proportions."""
    A, F = nbhd.num_actions, nbhd.num_frames
    counts = [0] * (A * F)
    actions = list(range(A))
    for k in range(F):
        n = len(nbhd.of_frame(k))
        if n:
            for a in rng.choices(actions, weights=props.frame(k).tolist(), k=n):
                counts[a * F + k] += 1
    return Configuration(tuple(counts), A, F)


def ucb_select(node: TreeNode, c: float, rng: random.Random) -> int:
    """Index of the action maximizing the UCB-1 score.

    Untried actions score infinity; ties among them are broken at random,
    ties among finite scores go to the lowest index.
    """
    counts = node.counts
    untried = [i for i, n in enumerate(counts) if n == 0]
    if untried:
        return untried[0] if len(untried) == 1 else rng.choice(untried)
    log_n = math.log(node.visits) if node.visits > 0 else 0.0
    best, best_i = -math.inf, 0
    for i, (q, n) in enumerate(zip(node.q, counts)):
        score = q + c * math.sqrt(log_n / n)
        if score > best:
            best, best_i = score, i
    return best_i


class Planner:
    """One subject agent's planner. A fresh tree is grown for every decision."""

    def __init__(self, env, ctx: PlanContext, cfg: PlannerConfig):
        self.env = env
        self.ctx = ctx
        self.cfg = cfg
        self.actions = list(env.actions)
        self.rng = random.Random(cfg.seed)
        self.tree: dict[tuple, TreeNode] = {}
        self.diagnostics: dict = {}
        self._p_d = getattr(env, "p_d", 0.0)
        self._p_r = getattr(env, "p_r", 1.0)

    # -- search ------------------------------------------------------------

    def plan(self, root_filter: Sequence[Particle]) -> int:
        """Search from ``root_filter`` and return the root action with the highest Q."""
        if not root_filter:
            raise ValueError("root particle filter is empty")
        cfg = self.cfg
        self.tree = {}
        rng = self.rng
        n = len(root_filter)
        deadline = None
        if cfg.time_budget_ms is not None:
            deadline = time.perf_counter() + cfg.time_budget_ms / 1000.0
        it = 0
        while True:
            if cfg.iterations is not None and it >= cfg.iterations:
                break
            if deadline is not None and time.perf_counter() >= deadline:
                break
            p = root_filter[int(rng.random() * n)]
            self.update_tree(p.state, p.models, p.own, 0, ())
            it += 1
        root = self.tree.get(())
        q = root.q if root is not None else [0.0] * len(self.actions)
        best = max(range(len(q)), key=lambda i: (q[i], -i))
        self.diagnostics = {
            "iterations": it,
            "tree_size": len(self.tree),
            "max_depth": max((len(p) for p in self.tree), default=0),
            "root_visits": root.visits if root is not None else 0,
            "root_q": {str(a): v for a, v in zip(self.actions, q)},
            "root_counts": {str(a): c for a, c in zip(self.actions, root.counts)} if root else {},
        }
        return self.actions[best]

    def update_tree(self, s, M, own, t: int, path: tuple) -> float:
        cfg = self.cfg
        if t >= cfg.horizon:
            return 0.0
        node = self.tree.get(path)
        if node is None:
            node = TreeNode(len(self.actions), cfg.nu)
            node.particles.append(Particle(s, M, own))
            self.tree[path] = node
            return self.rollout(s, M, own, t)
        node.particles.append(Particle(s, M, own))
        C = sample_configuration(self.env.policy_index(s), M, self.ctx, self.rng)
        ai = ucb_select(node, cfg.c, self.rng)
        a = self.actions[ai]
        s2, M2, own2, o, r = self.simulate(s, M, own, a, C)
        node.visits += 1
        node.counts[ai] += 1
        R = r + cfg.gamma * self.update_tree(s2, M2, own2, t + 1, path + ((a, o),))
        node.q[ai] += (R - node.q[ai]) / node.counts[ai]
        return R

    def rollout(self, s, M, own, t: int) -> float:
        """Discounted return of uniformly random own actions up to the horizon."""
        cfg = self.cfg
        rng = self.rng
        ctx = self.ctx
        env = self.env
        actions = self.actions
        R, disc = 0.0, 1.0
        while t < cfg.horizon:
            C = sample_configuration(env.policy_index(s), M, ctx, rng)
            a = actions[int(rng.random() * len(actions))]
            s, M, own, _, r = self.simulate(s, M, own, a, C)
            R += disc * r
            disc *= cfg.gamma
            t += 1
        return R

    def simulate(self, s, M, own, a: int, C: Configuration):
        """Environment step for the subject plus openness dynamics for every model.

        Each model transitions on the action it drew while ``C`` was sampled.
        """
        s2, own2, o, r = self.env.simulate(s, own, a, C, self.rng)
        drawn = C.modeled_actions or ()
        if M:
            rng, p_d, p_r = self.rng, self._p_d, self._p_r
            M = tuple([transition_model(m, b, rng, p_d, p_r) for m, b in zip(M, drawn)])
        return s2, M, own2, o, r

    # -- root belief --------------------------------------------------------

    def advance_root(self, root_filter: Sequence[Particle], a_executed: int, o_received,
                     own: int | None = None) -> list[Particle]:
        """Rejection-sample the next root filter.

        Particles whose simulated observation matches ``o_received`` are kept.
        If the attempt cap is hit first, the remainder is filled without the
        observation check and ``reinvigorated`` is reported in diagnostics.
        ``own`` overrides the subject's suppressant, which it observes directly.
        """
        if not root_filter:
            raise ValueError("root particle filter is empty")
        cfg = self.cfg
        rng = self.rng
        target = cfg.particles
        cap = cfg.resample_cap * target
        n = len(root_filter)
        out: list[Particle] = []
        attempts = 0
        while len(out) < target and attempts < cap:
            attempts += 1
            p = root_filter[int(rng.random() * n)]
            C = sample_configuration(self.env.policy_index(p.state), p.models, self.ctx, rng)
            s2, M2, own2, o, _ = self.simulate(p.state, p.models, p.own, a_executed, C)
            if o == o_received:
                out.append(Particle(s2, M2, own2 if own is None else own))
        reinvigorated = 0
        while len(out) < target:
            p = root_filter[int(rng.random() * n)]
            C = sample_configuration(self.env.policy_index(p.state), p.models, self.ctx, rng)
            s2, M2, own2, _, _ = self.simulate(p.state, p.models, p.own, a_executed, C)
            out.append(Particle(s2, M2, own2 if own is None else own))
            reinvigorated += 1
        self.diagnostics = {"filter_attempts": attempts, "reinvigorated": reinvigorated,
                            "reinvigoration": reinvigorated > 0}
        return out


def initial_filter(state: tuple, own: int, ctx: PlanContext, policies: Mapping[int, Policy],
                   n: int, rng: random.Random) -> list[Particle]:
    """Root filter with a known state and modeled neighbors present at half or full."""
    out = []
    for _ in range(n):
        models = tuple(MentalModel(j, f, policies[j], FULL if rng.random() < 0.5 else HALF)
                       for j, f in zip(ctx.modeled_ids, ctx.model_frames))
        out.append(Particle(tuple(state), models, own))
    return out


def plan(root_filter: Sequence[Particle], cfg: PlannerConfig, env, ctx: PlanContext) -> int:
    """One decision with a throwaway planner seeded from ``cfg.seed``."""
    return Planner(env, ctx, cfg).plan(root_filter)
