"""Frames, configurations and the combinatorics over them.

A configuration counts how many neighbors of each frame perform each action.
Under frame-action anonymity it replaces the joint action, so everything here
works on counts rather than agent identities.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

NOOP = 0


class CapExceededError(ValueError):
    """Raised when an enumeration would exceed the caller's budget."""


@dataclass(frozen=True)
class Frame:
    """An agent type: which actions it may take and how hard it fights."""

    id: int
    action_set: tuple[int, ...]
    effectiveness: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "action_set", tuple(self.action_set))
        if not self.action_set:
            raise ValueError(f"frame {self.id}: empty action set")
        if NOOP not in self.action_set:
            raise ValueError(f"frame {self.id}: action set must contain NOOP")
        if not self.effectiveness > 0:
            raise ValueError(f"frame {self.id}: effectiveness must be positive")


@dataclass(frozen=True)
class Member:
    agent_id: int
    frame: int
    actions: frozenset[int]


class Neighborhood:
    """The neighbors of one subject agent, indexed by frame and action.

    Args:
        members: ``(agent_id, frame_id, performable_actions)`` triples.
        frames: every frame of the scenario, ``frames[k].id == k``.
        num_actions: size of the scenario-global action table.
    """

    def __init__(self, members: Iterable[tuple[int, int, Iterable[int]]],
                 frames: Sequence[Frame], num_actions: int):
        self.frames = tuple(frames)
        self.num_actions = num_actions
        for k, fr in enumerate(self.frames):
            if fr.id != k:
                raise ValueError("frame ids must be 0..F-1 in order")
            if max(fr.action_set) >= num_actions:
                raise ValueError(f"frame {k} references unknown action")
        self.members = tuple(Member(a, f, frozenset(acts)) for a, f, acts in members)
        ids = [m.agent_id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate agent ids in neighborhood")
        self._by_frame: dict[int, tuple[int, ...]] = {k: () for k in range(len(self.frames))}
        self._by_frame_action: dict[tuple[int, int], tuple[int, ...]] = {}
        for m in self.members:
            if not 0 <= m.frame < len(self.frames):
                raise ValueError(f"agent {m.agent_id}: unknown frame {m.frame}")
            if not m.actions <= set(self.frames[m.frame].action_set):
                raise ValueError(f"agent {m.agent_id}: actions outside its frame's action set")
            self._by_frame[m.frame] += (m.agent_id,)
            for a in sorted(m.actions):
                key = (m.frame, a)
                self._by_frame_action[key] = self._by_frame_action.get(key, ()) + (m.agent_id,)
        self._member = {m.agent_id: m for m in self.members}

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def __len__(self):
        return len(self.members)

    def member(self, agent_id: int) -> Member:
        return self._member[agent_id]

    def of_frame(self, frame: int) -> tuple[int, ...]:
        """N_theta(i): agent ids of the given frame."""
        return self._by_frame[frame]

    def able(self, frame: int, action: int) -> tuple[int, ...]:
        """N_{theta,a}(i): agents of ``frame`` that can perform ``action``."""
        return self._by_frame_action.get((frame, action), ())

    def frame_sizes(self) -> list[int]:
        return [len(self._by_frame[k]) for k in range(self.num_frames)]


@dataclass(frozen=True)
class Configuration:
    """Counts per (action, frame), stored flat as ``counts[a * F + frame]``.

    ``modeled_actions`` optionally carries the actions drawn for the modeled
    neighbors while the configuration was sampled; it takes no part in
    equality or hashing.
    """

    counts: tuple[int, ...]
    num_actions: int
    num_frames: int
    modeled_actions: tuple[int, ...] | None = field(default=None, compare=False, repr=False)

    def __getitem__(self, key: tuple[int, int]) -> int:
        a, f = key
        return self.counts[a * self.num_frames + f]

    @classmethod
    def from_table(cls, table) -> "Configuration":
        t = np.asarray(table, dtype=np.int64)
        if t.ndim != 2 or (t < 0).any():
            raise ValueError("configuration table must be a 2-d non-negative array")
        return cls(tuple(int(x) for x in t.ravel()), t.shape[0], t.shape[1])

    @classmethod
    def empty(cls, num_actions: int, num_frames: int) -> "Configuration":
        return cls((0,) * (num_actions * num_frames), num_actions, num_frames)

    def table(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64).reshape(self.num_actions, self.num_frames)

    def frame_counts(self, frame: int) -> tuple[int, ...]:
        return self.counts[frame::self.num_frames]

    def total(self, frame: int) -> int:
        return sum(self.frame_counts(frame))

    def is_valid_for(self, nbhd: Neighborhood) -> bool:
        if (self.num_actions, self.num_frames) != (nbhd.num_actions, nbhd.num_frames):
            return False
        for k, fr in enumerate(nbhd.frames):
            fc = self.frame_counts(k)
            if sum(fc) != len(nbhd.of_frame(k)):
                return False
            allowed = set(fr.action_set)
            if any(c and a not in allowed for a, c in enumerate(fc)):
                return False
        return True


class FrameProportions:
    """Per-frame action probabilities ``probs[a, frame]``."""

    def __init__(self, probs):
        self.probs = np.array(probs, dtype=float)
        if self.probs.ndim != 2:
            raise ValueError("proportions must be a (num_actions, num_frames) table")
        self.probs.setflags(write=False)

    @property
    def num_actions(self) -> int:
        return self.probs.shape[0]

    @property
    def num_frames(self) -> int:
        return self.probs.shape[1]

    def frame(self, frame: int) -> np.ndarray:
        return self.probs[:, frame]

    def check(self, nbhd: Neighborhood, tol: float = 1e-9) -> None:
        """Raise ``ValueError`` unless the proportions are valid for ``nbhd``."""
        for k, fr in enumerate(nbhd.frames):
            col = self.probs[:, k]
            outside = [a for a in range(self.num_actions) if a not in fr.action_set]
            if any(col[a] != 0.0 for a in outside):
                raise ValueError(f"frame {k}: mass on actions outside its action set")
            if (col < 0).any() or (col > 1).any():
                raise ValueError(f"frame {k}: proportions outside [0, 1]")
            if nbhd.of_frame(k) and abs(col.sum() - 1.0) > tol:
                raise ValueError(f"frame {k}: proportions sum to {col.sum()}")

    def __repr__(self):
        return f"FrameProportions({self.probs.tolist()})"


def count_configurations(frame_sizes: Iterable[tuple[int, int]]) -> int:
    """Number of distinct configurations, as an exact integer.

    Each frame contributes the number of ways to split its agents over its
    actions (stars and bars).

    Args:
        frame_sizes: ``(num_agents, num_actions)`` per frame.
    """
    total = 1
    for n, m in frame_sizes:
        if n < 0 or m < 1:
            raise ValueError(f"invalid frame size ({n}, {m})")
        total *= math.comb(n + m - 1, m - 1)
    return total


def neighborhood_frame_sizes(nbhd: Neighborhood) -> list[tuple[int, int]]:
    return [(len(nbhd.of_frame(k)), len(fr.action_set)) for k, fr in enumerate(nbhd.frames)]


def _compositions(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    # lexicographically ascending
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def enumerate_configurations(nbhd: Neighborhood, cap: int = 1_000_000) -> Iterator[Configuration]:
    """Yield every valid configuration of ``nbhd`` exactly once.

    Frames vary slowest-first; within a frame counts ascend lexicographically
    over the frame's action set.

    Raises:
        CapExceededError: if more than ``cap`` configurations exist.
    """
    total = count_configurations(neighborhood_frame_sizes(nbhd))
    if total > cap:
        raise CapExceededError(f"{total} configurations exceed cap {cap}")
    A, F = nbhd.num_actions, nbhd.num_frames
    per_frame = []
    for k, fr in enumerate(nbhd.frames):
        acts = sorted(fr.action_set)
        per_frame.append([(acts, comp) for comp in _compositions(len(nbhd.of_frame(k)), len(acts))])
    for combo in itertools.product(*per_frame):
        counts = [0] * (A * F)
        for k, (acts, comp) in enumerate(combo):
            for a, c in zip(acts, comp):
                counts[a * F + k] = c
        yield Configuration(tuple(counts), A, F)


def multinomial_pmf(counts: Sequence[int], probs: Sequence[float], n: int) -> float:
    """Multinomial probability of ``counts`` given outcome ``probs``.

    Evaluated in log space, so ``n`` in the hundreds is fine. An outcome with
    probability 0 and count 0 contributes a factor of 1.
    """
    if len(counts) != len(probs):
        raise ValueError("counts and probs differ in length")
    if sum(counts) != n:
        raise ValueError(f"counts sum to {sum(counts)}, expected {n}")
    log_p = math.lgamma(n + 1)
    for c, p in zip(counts, probs):
        if c == 0:
            continue
        if p <= 0.0:
            return 0.0
        log_p += c * math.log(p) - math.lgamma(c + 1)
    return math.exp(log_p)


def multinomial_pmf_exact(counts: Sequence[int], probs: Sequence, n: int) -> Fraction:
    """Rational multinomial pmf; floats are converted exactly. Test oracle."""
    counts = [int(c) for c in counts]
    n = int(n)
    if sum(counts) != n:
        raise ValueError(f"counts sum to {sum(counts)}, expected {n}")
    out = Fraction(math.factorial(n))
    for c, p in zip(counts, probs):
        p = Fraction(p) if isinstance(p, (int, Fraction)) else Fraction(float(p))
        out *= p ** c / math.factorial(c)
    return out


def configuration_probability(config: Configuration, props: FrameProportions,
                              nbhd: Neighborhood) -> float:
    """Product over frames of the per-frame multinomial pmf."""
    out = 1.0
    for k in range(nbhd.num_frames):
        out *= multinomial_pmf(config.frame_counts(k), props.frame(k), len(nbhd.of_frame(k)))
    return out


def fold_actions(actions: Mapping[int, int], frames_of: Mapping[int, int],
                 num_actions: int, num_frames: int) -> Configuration:
    """Fold a joint action ``{agent: action}`` into its configuration."""
    counts = [0] * (num_actions * num_frames)
    for agent, a in actions.items():
        counts[a * num_frames + frames_of[agent]] += 1
    return Configuration(tuple(counts), num_actions, num_frames)
