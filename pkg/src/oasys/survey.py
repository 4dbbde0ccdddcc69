"""How many neighbors to model, which ones, and what the extrapolation costs.

The sample size follows the finite-population-corrected margin of error for a
proportion, using the worst case p = 0.5. The error calculators bound the
configuration probability error and the resulting regret.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc

from .core import NOOP, Configuration, FrameProportions, Neighborhood


def student_t_sf(t: float, dof: float) -> float:
    """P(T_dof > t) for t >= 0 via the regularized incomplete beta function."""
    return 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def student_t_quantile(dof: float, tail_prob: float) -> float:
    """The ``t`` with ``P(T_dof > t) = tail_prob``, found by root bracketing."""
    if not 0.0 < tail_prob < 0.5:
        raise ValueError(f"tail_prob must lie in (0, 0.5), got {tail_prob}")
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    hi = 1.0
    while student_t_sf(hi, dof) > tail_prob:
        hi *= 2.0
    return brentq(lambda t: student_t_sf(t, dof) - tail_prob, 0.0, hi, xtol=1e-12, rtol=1e-14)


def _needed(N: int, e_p: float, t: float) -> float:
    x = (t / (2.0 * e_p)) ** 2
    return N * x / (N - 1 + x)


def required_sample_size(N: int, e_p: float, alpha: float = 0.05) -> int:
    """Smallest number of neighbors to model out of ``N``.

    The t quantile uses ``n - 1`` degrees of freedom for the candidate ``n``
    itself, so the answer is the smallest self-consistent ``n``. The search
    starts at the normal-quantile answer and walks down or up from there.
    ``e_p == 0`` means model everyone.
    """
    if N < 1:
        raise ValueError("population size must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if e_p < 0 or e_p > 1:
        raise ValueError("e_p must lie in [0, 1]")
    if e_p == 0.0:
        return N
    if N == 1:
        return 1

    def ok(n: int) -> bool:
        t = student_t_quantile(max(n - 1, 1), alpha / 2.0)
        return n >= _needed(N, e_p, t) - 1e-12

    z = NormalDist().inv_cdf(1.0 - alpha / 2.0)
    n = min(max(math.ceil(_needed(N, e_p, z) - 1e-12), 1), N)
    while n > 1 and ok(n - 1):
        n -= 1
    while n < N and not ok(n):
        n += 1
    return n


@dataclass(frozen=True)
class SamplePlan:
    """Which neighbors a subject models, per frame.

    ``modeled[frame]`` lists agent ids in selection order; ``modeled_ids``
    gives the canonical (sorted) order used by particles.
    """

    neighborhood: Neighborhood
    modeled: Mapping[int, tuple[int, ...]]
    n: Mapping[int, int]
    alpha: float = 0.05
    e_p: float = 0.0

    @property
    def modeled_ids(self) -> tuple[int, ...]:
        return tuple(sorted(a for ids in self.modeled.values() for a in ids))

    def size(self) -> int:
        return sum(len(v) for v in self.modeled.values())

    def quota_violations(self) -> list[tuple[int, int]]:
        """(frame, action) pairs whose coverage falls short of the quota."""
        bad = []
        nb = self.neighborhood
        for k, fr in enumerate(nb.frames):
            chosen = set(self.modeled.get(k, ()))
            for a in fr.action_set:
                pool = nb.able(k, a)
                if pool and len(chosen.intersection(pool)) < min(self.n.get(k, 0), len(pool)):
                    bad.append((k, a))
        return bad


def select_modeled_neighbors(nbhd: Neighborhood, n, rng_seed: int = 0, *,
                             alpha: float = 0.05, e_p: float = 0.0) -> SamplePlan:
    """Pick the neighbors to model explicitly.

    For every frame, the (frame, action) pools are visited from largest to
    smallest (ties by action index). Agents already chosen count toward each
    pool they belong to; the shortfall is drawn uniformly without replacement.

    Args:
        nbhd: the subject's neighborhood.
        n: target per (frame, action), an int or a ``{frame: int}`` mapping.
        rng_seed: seed for the draws.
    """
    quotas = dict(n) if isinstance(n, Mapping) else {k: int(n) for k in range(nbhd.num_frames)}
    if any(q < 1 for q in quotas.values()):
        raise ValueError("sample target must be >= 1")
    rng = random.Random(rng_seed)
    modeled: dict[int, tuple[int, ...]] = {}
    for k, fr in enumerate(nbhd.frames):
        chosen: list[int] = []
        picked = set()
        pools = sorted(((a, nbhd.able(k, a)) for a in fr.action_set), key=lambda x: (-len(x[1]), x[0]))
        for a, pool in pools:
            if not pool:
                continue
            quota = min(quotas.get(k, 0), len(pool))
            have = sum(1 for j in pool if j in picked)
            if have >= quota:
                continue
            rest = [j for j in pool if j not in picked]
            for j in rng.sample(rest, quota - have):
                picked.add(j)
                chosen.append(j)
        modeled[k] = tuple(chosen)
    return SamplePlan(nbhd, modeled, quotas, alpha, e_p)


def plan_neighbors(nbhd: Neighborhood, e_p: float, alpha: float = 0.05,
                   rng_seed: int = 0) -> SamplePlan:
    """Size the per-frame sample from the population size, then select."""
    n = {k: required_sample_size(max(len(nbhd.of_frame(k)), 1), e_p, alpha)
         for k in range(nbhd.num_frames)}
    return select_modeled_neighbors(nbhd, n, rng_seed, alpha=alpha, e_p=e_p)


def estimate_proportions(plan: SamplePlan, sampled_actions: Mapping[int, int]) -> FrameProportions:
    """Fraction of the modeled agents of each frame predicted to take each action.

    Absent agents are expected to appear as NOOP in ``sampled_actions``. A
    frame with no modeled agent falls back to uniform over its action set.
    """
    nb = plan.neighborhood
    probs = np.zeros((nb.num_actions, nb.num_frames))
    for k, fr in enumerate(nb.frames):
        ids = plan.modeled.get(k, ())
        if not ids:
            probs[list(fr.action_set), k] = 1.0 / len(fr.action_set)
            continue
        for j in ids:
            probs[sampled_actions.get(j, NOOP), k] += 1.0
        probs[:, k] /= len(ids)
    return FrameProportions(probs)


@dataclass(frozen=True)
class BoundReport:
    epsilon_pc: float
    regret: float


def configuration_error_bound(props: FrameProportions, e_p: float, config: Configuration,
                              nbhd: Neighborhood) -> float:
    """Worst-case error of one configuration's estimated probability.

    Values above 1 are returned as computed; they carry no information.
    """
    if not 0.0 <= e_p < 1.0:
        raise ValueError("e_p must lie in [0, 1)")
    log_pref = sum(math.lgamma(len(nbhd.of_frame(k)) + 1) for k in range(nbhd.num_frames))
    log_hi = 0.0
    log_lo = 0.0
    lo_zero = False
    for a in range(nbhd.num_actions):
        for k in range(nbhd.num_frames):
            c = config[a, k]
            if c == 0:
                continue
            log_pref -= math.lgamma(c + 1)
            p = float(props.probs[a, k])
            if p + e_p > 0:
                log_hi += c * math.log(p + e_p)
            else:
                return 0.0
            if p > 0 and not lo_zero:
                log_lo += c * math.log(p)
            else:
                lo_zero = True
    hi = math.exp(log_pref + log_hi)
    lo = 0.0 if lo_zero else math.exp(log_pref + log_lo)
    return max(hi - lo, 0.0)


def regret_bound(epsilon_pc: float, num_configs: int, r_max: float, gamma: float,
                 k: int, num_observations: int) -> float:
    """Upper bound on the value lost by planning with extrapolated probabilities."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if k < 1:
        raise ValueError("horizon must be >= 1")
    tail = (1.0 / (1.0 - gamma)) * (1.0 + 3.0 * gamma * num_observations / (1.0 - gamma))
    return 2.0 * epsilon_pc * num_configs * r_max * (gamma ** (k - 1) + tail)


def bound_report(props: FrameProportions, e_p: float, config: Configuration, nbhd: Neighborhood,
                 num_configs: int, r_max: float, gamma: float, k: int,
                 num_observations: int) -> BoundReport:
    eps = configuration_error_bound(props, e_p, config, nbhd)
    return BoundReport(eps, regret_bound(eps, num_configs, r_max, gamma, k, num_observations))
