"""Wildfire suppression with agent openness.

Fires sit on a five-level intensity ladder: 0 is extinguished, 1-3 are
burning and 4 is burned out. Both ends are absorbing. A fire drops one level
when the effectiveness-weighted number of agents fighting it reaches its size
threshold; otherwise it may flare up one level.

Agents carry suppressant (full, half, empty). Using it may drain one level;
an agent that runs dry leaves to recharge and comes back full.

Actions use a scenario-global table: 0 is NOOP and ``f + 1`` fights the fire
at position ``f``.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import NOOP, Configuration, Frame, Neighborhood

SCHEMA_VERSION = 1

EMPTY, HALF, FULL = 0, 1, 2
SUPPRESSANT_LEVELS = ("empty", "half", "full")
FIRE_SIZES = ("small", "large", "huge")
EXTINGUISHED, BURNED_OUT = 0, 4
NUM_INTENSITIES = 5


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate.

    ``errors`` lists every problem found.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Fire:
    id: int
    size: str
    intensity: int


@dataclass(frozen=True)
class AgentSpec:
    id: int
    frame: int
    location: Any
    suppressant: int
    adjacent: tuple[int, ...] = ()   # fire positions


@dataclass(frozen=True)
class Dynamics:
    p_d: float = 1.0 / 3.0
    p_r: float = 0.5
    p_s: float = 0.35
    thresholds: tuple[float, float, float] = (10, 20, 30)
    extinguish_rewards: tuple[float, float, float] = (20, 40, 60)
    burnout_penalty: float = 1.0
    invalid_penalty: float = 100.0
    observation_noise: float = 0.1


@dataclass(frozen=True)
class Scenario:
    fires: tuple[Fire, ...]
    agents: tuple[AgentSpec, ...]
    frames: tuple[Frame, ...]
    dynamics: Dynamics = Dynamics()
    horizon: int = 4
    gamma: float = 0.9
    name: str = ""
    _agent_index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_agent_index", {a.id: a for a in self.agents})
        object.__setattr__(self, "_eff", tuple(f.effectiveness for f in self.frames))
        object.__setattr__(self, "_thr", tuple(self.threshold(f) for f in range(len(self.fires))))

    @property
    def num_fires(self) -> int:
        return len(self.fires)

    @property
    def num_actions(self) -> int:
        return len(self.fires) + 1

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_states(self) -> int:
        return NUM_INTENSITIES ** len(self.fires)

    def agent(self, agent_id: int) -> AgentSpec:
        return self._agent_index[agent_id]

    def effectiveness(self, frame: int) -> float:
        return self._eff[frame]

    def threshold(self, fire: int) -> float:
        return self.dynamics.thresholds[FIRE_SIZES.index(self.fires[fire].size)]

    def extinguish_reward(self, fire: int) -> float:
        return self.dynamics.extinguish_rewards[FIRE_SIZES.index(self.fires[fire].size)]

    def initial_state(self) -> tuple[int, ...]:
        return tuple(f.intensity for f in self.fires)

    def r_max(self) -> float:
        d = self.dynamics
        return d.invalid_penalty + sum(self.extinguish_reward(f) for f in range(self.num_fires)) \
            + d.burnout_penalty * self.num_fires

    def neighbors(self, agent_id: int) -> list[int]:
        """Other agents able to fight at least one fire this agent can."""
        mine = set(self.agent(agent_id).adjacent)
        return [a.id for a in self.agents if a.id != agent_id and mine.intersection(a.adjacent)]

    def neighborhood(self, agent_id: int) -> Neighborhood:
        members = [(j, self.agent(j).frame, legal_actions(self.agent(j), self))
                   for j in self.neighbors(agent_id)]
        return Neighborhood(members, self.frames, self.num_actions)


def state_index(state: Sequence[int]) -> int:
    idx = 0
    for v in state:
        idx = idx * NUM_INTENSITIES + v
    return idx


def state_from_index(idx: int, num_fires: int) -> tuple[int, ...]:
    out = []
    for _ in range(num_fires):
        idx, v = divmod(idx, NUM_INTENSITIES)
        out.append(v)
    return tuple(reversed(out))


def legal_actions(agent: AgentSpec, scenario: Scenario | None = None) -> list[int]:
    """NOOP, then one fight action per adjacent fire in fire order."""
    return [NOOP] + [f + 1 for f in sorted(agent.adjacent)]


def suppression_power(config: Configuration, scenario: Scenario) -> list[float]:
    eff = scenario._eff
    F = config.num_frames
    counts = config.counts
    return [sum(eff[k] * counts[(f + 1) * F + k] for k in range(F)) for f in range(scenario.num_fires)]


def transition(state: Sequence[int], a_i: int | None, config: Configuration, scenario: Scenario,
               rng: random.Random, effectiveness: float = 1.0) -> tuple[int, ...]:
    """Advance every fire one step.

    ``config`` holds the other agents; ``a_i`` is the subject's own action
    (pass ``None`` when ``config`` already covers everyone) and contributes
    ``effectiveness`` to the fire it fights.
    """
    power = suppression_power(config, scenario)
    if a_i is not None and a_i != NOOP:
        power[a_i - 1] += effectiveness
    p_s = scenario.dynamics.p_s
    thr = scenario._thr
    nxt = []
    for f, v in enumerate(state):
        if v == EXTINGUISHED or v == BURNED_OUT:
            nxt.append(v)
        elif power[f] >= thr[f]:
            nxt.append(v - 1)
        elif rng.random() < p_s:
            nxt.append(v + 1)
        else:
            nxt.append(v)
    return tuple(nxt)


def shared_reward(state: Sequence[int], next_state: Sequence[int], scenario: Scenario) -> float:
    r = 0.0
    for f, (v, w) in enumerate(zip(state, next_state)):
        if w == EXTINGUISHED and v != EXTINGUISHED:
            r += scenario.extinguish_reward(f)
        elif w == BURNED_OUT and v != BURNED_OUT:
            r -= scenario.dynamics.burnout_penalty
    return r


def is_invalid(state: Sequence[int], a_i: int, own_suppressant: int) -> bool:
    if a_i == NOOP:
        return False
    return own_suppressant == EMPTY or state[a_i - 1] in (EXTINGUISHED, BURNED_OUT)


def reward(state: Sequence[int], a_i: int, config: Configuration | None, next_state: Sequence[int],
           scenario: Scenario, own_suppressant: int) -> float:
    """Shared extinguish rewards and burnout penalties plus the individual penalty.

    The individual penalty applies once when the agent fights a fire that is
    out or burned out, or acts without suppressant.
    """
    r = shared_reward(state, next_state, scenario)
    if is_invalid(state, a_i, own_suppressant):
        r -= scenario.dynamics.invalid_penalty
    return r


def observe(next_state: Sequence[int], a_i: int, config: Configuration | None, scenario: Scenario,
            rng: random.Random) -> tuple[int, ...]:
    """Noisy per-fire intensity reading; errors land on a neighboring level."""
    noise = scenario.dynamics.observation_noise
    if noise <= 0.0:
        return tuple(next_state)
    out = []
    for v in next_state:
        if rng.random() >= noise:
            out.append(v)
        elif v == 0:
            out.append(1)
        elif v == NUM_INTENSITIES - 1:
            out.append(v - 1)
        else:
            out.append(v - 1 if rng.random() < 0.5 else v + 1)
    return tuple(out)


def observation_probability(obs: Sequence[int], next_state: Sequence[int], scenario: Scenario) -> float:
    noise = scenario.dynamics.observation_noise
    p = 1.0
    for o, v in zip(obs, next_state):
        if o == v:
            p *= 1.0 - noise
        elif abs(o - v) == 1:
            p *= noise if v in (0, NUM_INTENSITIES - 1) else noise / 2.0
        else:
            return 0.0
    return p


def step_suppressant(level: int, acted: bool, p_d: float, p_r: float, rng: random.Random) -> int:
    """One step of suppressant dynamics; EMPTY means away recharging."""
    if level == EMPTY:
        return FULL if rng.random() < p_r else EMPTY
    if acted and rng.random() < p_d:
        return level - 1
    return level


def heuristic_action(agent: AgentSpec, observation: Sequence[int], own_suppressant: int,
                     rng: random.Random) -> int:
    """Fight a random adjacent fire that looks burning, if there is suppressant."""
    if own_suppressant == EMPTY:
        return NOOP
    burning = [f for f in sorted(agent.adjacent) if 1 <= observation[f] <= 3]
    if not burning:
        return NOOP
    return rng.choice(burning) + 1


class AgentView:
    """One agent's generative model of the world, as used by its planner.

    ``simulate`` returns ``(next_state, next_own, observation, reward)``.
    """

    def __init__(self, scenario: Scenario, agent_id: int):
        self.scenario = scenario
        self.agent = scenario.agent(agent_id)
        self.actions = legal_actions(self.agent, scenario)
        self.effectiveness = scenario.effectiveness(self.agent.frame)
        self.p_d = scenario.dynamics.p_d
        self.p_r = scenario.dynamics.p_r
        self._index: dict[tuple, int] = {}

    def policy_index(self, state: tuple[int, ...]) -> int:
        idx = self._index.get(state)
        if idx is None:
            idx = self._index[state] = state_index(state)
        return idx

    def simulate(self, state, own, action, config, rng):
        sc = self.scenario
        acting = action if own != EMPTY else NOOP
        nxt = transition(state, acting, config, sc, rng, self.effectiveness)
        r = reward(state, action, config, nxt, sc, own)
        obs = observe(nxt, action, config, sc, rng)
        own2 = step_suppressant(own, action != NOOP, self.p_d, self.p_r, rng)
        return nxt, own2, obs, r


# -- serialization ---------------------------------------------------------

def _level(value, where: str, errors: list[str]) -> int:
    if isinstance(value, str) and value in SUPPRESSANT_LEVELS:
        return SUPPRESSANT_LEVELS.index(value)
    if isinstance(value, int) and not isinstance(value, bool) and 0 <= value <= 2:
        return value
    errors.append(f"{where}: suppressant must be one of {SUPPRESSANT_LEVELS}")
    return FULL


def scenario_from_dict(data: Mapping[str, Any], name: str = "") -> Scenario:
    """Build and validate a scenario; raises ``ScenarioError`` listing every problem."""
    errors: list[str] = []
    if not isinstance(data, Mapping):
        raise ScenarioError(["top level must be an object"])
    if data.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    for key in ("fires", "agents", "frames", "adjacency"):
        if key not in data:
            errors.append(f"{key}: missing")
    if errors and any(e.endswith("missing") for e in errors):
        raise ScenarioError(errors)

    dyn_raw = dict(data.get("dynamics", {}))
    defaults = Dynamics()
    dyn_kwargs = {}
    for key in Dynamics.__dataclass_fields__:
        val = dyn_raw.pop(key, getattr(defaults, key))
        if key in ("thresholds", "extinguish_rewards"):
            if not (isinstance(val, (list, tuple)) and len(val) == 3):
                errors.append(f"dynamics.{key}: expected 3 numbers")
                val = getattr(defaults, key)
            val = tuple(val)
        dyn_kwargs[key] = val
    for key in dyn_raw:
        errors.append(f"dynamics.{key}: unknown field")
    th = dyn_kwargs["thresholds"]
    if any(not isinstance(t, (int, float)) or t <= 0 for t in th):
        errors.append("dynamics.thresholds: must be positive")
    elif list(th) != sorted(th):
        errors.append("dynamics.thresholds: must be ordered small <= large <= huge")
    for key in ("p_d", "p_r", "p_s", "observation_noise"):
        v = dyn_kwargs[key]
        if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            errors.append(f"dynamics.{key}: must be a probability")
    for key in ("burnout_penalty", "invalid_penalty"):
        if not isinstance(dyn_kwargs[key], (int, float)) or dyn_kwargs[key] < 0:
            errors.append(f"dynamics.{key}: must be non-negative")
    dynamics = Dynamics(**dyn_kwargs)

    fires = []
    fire_pos = {}
    for i, f in enumerate(data["fires"]):
        where = f"fires[{i}]"
        try:
            fid, size, inten = f["id"], f["size"], f["intensity"]
        except (KeyError, TypeError):
            errors.append(f"{where}: needs id, size, intensity")
            continue
        if size not in FIRE_SIZES:
            errors.append(f"{where}.size: must be one of {FIRE_SIZES}")
            size = "small"
        if not isinstance(inten, int) or not 0 <= inten <= 4:
            errors.append(f"{where}.intensity: must be an integer in 0..4")
            inten = 1
        if fid in fire_pos:
            errors.append(f"{where}.id: duplicate fire id {fid}")
        fire_pos[fid] = i
        fires.append(Fire(fid, size, inten))

    frames = []
    for i, fr in enumerate(data["frames"]):
        where = f"frames[{i}]"
        try:
            fid, acts, eff = fr["id"], fr["actions"], fr["effectiveness"]
        except (KeyError, TypeError):
            errors.append(f"{where}: needs id, actions, effectiveness")
            continue
        if fid != i:
            errors.append(f"{where}.id: frame ids must be 0..F-1 in order")
        if not isinstance(eff, (int, float)) or eff <= 0:
            errors.append(f"{where}.effectiveness: must be positive")
            eff = 1.0
        if not acts or NOOP not in acts:
            errors.append(f"{where}.actions: must include NOOP (0)")
            acts = [NOOP] + list(acts or [])
        if any(not isinstance(a, int) or not 0 <= a <= len(fires) for a in acts):
            errors.append(f"{where}.actions: unknown action id")
            acts = [a for a in acts if isinstance(a, int) and 0 <= a <= len(fires)]
        frames.append(Frame(i, tuple(acts), eff))

    adjacency = data["adjacency"]
    agents = []
    seen = set()
    for i, a in enumerate(data["agents"]):
        where = f"agents[{i}]"
        try:
            aid, frame, loc, supp = a["id"], a["frame"], a["location"], a["suppressant"]
        except (KeyError, TypeError):
            errors.append(f"{where}: needs id, frame, location, suppressant")
            continue
        if aid in seen:
            errors.append(f"{where}.id: duplicate agent id {aid}")
        seen.add(aid)
        if not isinstance(frame, int) or not 0 <= frame < len(frames):
            errors.append(f"{where}.frame: unknown frame {frame!r}")
            continue
        level = _level(supp, f"{where}.suppressant", errors)
        adj_ids = adjacency.get(str(aid), [])
        adj = []
        for fid in adj_ids:
            if fid not in fire_pos:
                errors.append(f"adjacency.{aid}: unknown fire {fid}")
            else:
                adj.append(fire_pos[fid])
        adj = tuple(sorted(set(adj)))
        allowed = set(frames[frame].action_set)
        if not {p + 1 for p in adj} <= allowed:
            errors.append(f"{where}: adjacent fires outside frame {frame}'s action set")
        agents.append(AgentSpec(aid, frame, loc if not isinstance(loc, list) else tuple(loc), level, adj))
    for key in adjacency:
        if not key.lstrip("-").isdigit() or int(key) not in seen:
            errors.append(f"adjacency.{key}: unknown agent")

    planning = data.get("planning", {})
    horizon = planning.get("horizon", 4)
    gamma = planning.get("gamma", 0.9)
    if not isinstance(horizon, int) or horizon < 1:
        errors.append("planning.horizon: must be an integer >= 1")
    if not isinstance(gamma, (int, float)) or not 0 < gamma < 1:
        errors.append("planning.gamma: must lie in (0, 1)")
    if errors:
        raise ScenarioError(errors)
    return Scenario(tuple(fires), tuple(agents), tuple(frames), dynamics, horizon, float(gamma),
                    name or data.get("name", ""))


def scenario_to_dict(sc: Scenario) -> dict:
    d = sc.dynamics
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "fires": [{"id": f.id, "size": f.size, "intensity": f.intensity} for f in sc.fires],
        "agents": [{"id": a.id, "frame": a.frame,
                    "location": list(a.location) if isinstance(a.location, tuple) else a.location,
                    "suppressant": SUPPRESSANT_LEVELS[a.suppressant]} for a in sc.agents],
        "frames": [{"id": f.id, "actions": list(f.action_set), "effectiveness": f.effectiveness}
                   for f in sc.frames],
        "adjacency": {str(a.id): [sc.fires[p].id for p in a.adjacent] for a in sc.agents},
        "dynamics": {"p_d": d.p_d, "p_r": d.p_r, "p_s": d.p_s, "thresholds": list(d.thresholds),
                     "extinguish_rewards": list(d.extinguish_rewards),
                     "burnout_penalty": d.burnout_penalty, "invalid_penalty": d.invalid_penalty,
                     "observation_noise": d.observation_noise},
        "planning": {"horizon": sc.horizon, "gamma": sc.gamma},
    }


def dumps_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2) + "\n"


def loads_scenario(text: str, name: str = "") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{name or '<string>'}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from exc
    return scenario_from_dict(data, name)


def load_scenario(path) -> Scenario:
    """Read a scenario JSON file, or a bundled one by name (``setup1`` ... ``setup5``)."""
    p = Path(path)
    if not p.exists() and p.suffix in ("", ".json") and p.parent == Path("."):
        return bundled_scenario(p.stem)
    return loads_scenario(p.read_text(encoding="utf-8"), p.stem)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc), encoding="utf-8")


BUNDLED = ("setup1", "setup2", "setup3", "setup4", "setup5")


def bundled_scenario(name: str) -> Scenario:
    if name not in BUNDLED:
        raise ScenarioError([f"no bundled scenario named {name!r}"])
    text = resources.files("oasys").joinpath("scenarios", f"{name}.json").read_text(encoding="utf-8")
    return loads_scenario(text, name)
