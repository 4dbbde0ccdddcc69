"""Seeded multi-agent episodes, metrics and result files.

An experiment assigns one controller to every agent of a scenario and runs a
number of independent episodes. Every agent acts against the same pre-step
state; the realized joint action is folded into a configuration and applied
once. Agents with an empty suppressant are away recharging and take NOOP.
"""
from __future__ import annotations

import csv
import io
import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .core import NOOP, fold_actions
from .ipomcp import PlanContext, Planner, PlannerConfig, initial_filter
from .nested_mdp import Policy, solve_population
from .stats import t_interval
from .survey import plan_neighbors
from .wildfire import (
    EMPTY, SUPPRESSANT_LEVELS, AgentView, Scenario, heuristic_action, load_scenario, observe,
    reward, state_index, step_suppressant, transition,
)

STEP_COLUMNS = ("run_id", "seed", "step", "agent_id", "controller", "action", "reward",
                "suppressant", "presence", "fires_extinguished")
SUMMARY_COLUMNS = ("controller", "metric", "mean", "ci_low", "ci_high", "n_runs")
METRICS = ("reward", "fires_extinguished", "suppressant_used")
KINDS = ("ipomcp", "nestedmdp", "heuristic")

# stream roles for per-run seed derivation
ROLE_ENV, ROLE_CONTROLLER, ROLE_OBSERVATION = 0, 1, 2


class SpecError(ValueError):
    """Invalid experiment description."""


@dataclass(frozen=True)
class ControllerSpec:
    kind: str
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentSpec:
    """What to run.

    ``assignment`` maps every agent id to a :class:`ControllerSpec`.
    """

    scenario: Scenario
    assignment: dict[int, ControllerSpec]
    runs: int = 1
    base_seed: int = 0
    steps: int = 10
    workers: int = 1
    scenario_ref: str = ""

    def __post_init__(self):
        if self.runs < 1:
            raise SpecError("runs must be >= 1")
        if self.steps < 1:
            raise SpecError("steps must be >= 1")
        ids = {a.id for a in self.scenario.agents}
        if set(self.assignment) != ids:
            missing = sorted(ids - set(self.assignment))
            extra = sorted(set(self.assignment) - ids)
            raise SpecError(f"every agent needs exactly one controller (missing {missing}, unknown {extra})")

    def groups(self) -> list[str]:
        return sorted({c.name for c in self.assignment.values()})


def _controller_name(kind: str, params: Mapping) -> str:
    if kind == "ipomcp":
        return f"ipomcp(e_p={params.get('e_p', 0.0)})"
    if kind == "nestedmdp":
        return f"nestedmdp(l={params.get('level', 1)})"
    return kind


def spec_from_dict(data: Mapping, base_dir: Path | None = None) -> ExperimentSpec:
    """Build a spec from its JSON form.

    ``controllers`` is a list of ``{"kind", "agents": "all" | [ids], ...params}``
    entries; an optional ``name`` overrides the default group label.
    """
    try:
        ref = data["scenario"]
    except KeyError:
        raise SpecError("spec needs a 'scenario'") from None
    path = Path(ref)
    if base_dir is not None and not path.is_absolute() and (base_dir / path).exists():
        path = base_dir / path
    try:
        sc = load_scenario(path)
    except FileNotFoundError as exc:
        raise SpecError(str(exc)) from None
    assignment: dict[int, ControllerSpec] = {}
    all_ids = [a.id for a in sc.agents]
    for n, entry in enumerate(data.get("controllers", [])):
        entry = dict(entry)
        kind = entry.pop("kind", None)
        if kind not in KINDS:
            raise SpecError(f"controllers[{n}]: kind must be one of {KINDS}, got {kind!r}")
        agents = entry.pop("agents", "all")
        name = entry.pop("name", None) or _controller_name(kind, entry)
        ids = all_ids if agents == "all" else [int(a) for a in agents]
        cs = ControllerSpec(kind, name, entry)
        for a in ids:
            if a in assignment:
                raise SpecError(f"agent {a} assigned twice")
            assignment[a] = cs
    return ExperimentSpec(sc, assignment, runs=int(data.get("runs", 1)),
                          base_seed=int(data.get("base_seed", 0)), steps=int(data.get("steps", 10)),
                          workers=int(data.get("workers", 1)), scenario_ref=str(ref))


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return spec_from_dict(data, path.parent)


def derive_seed(base_seed: int, run_index: int, agent_index: int = 0, role: int = 0) -> int:
    """Independent 64-bit seed for one (run, agent, role) stream."""
    ss = np.random.SeedSequence([base_seed, run_index, agent_index, role])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_seed(base_seed: int, run_index: int) -> int:
    return int(np.random.SeedSequence([base_seed, run_index]).generate_state(1, dtype=np.uint64)[0])


# -- controllers -----------------------------------------------------------

class HeuristicController:
    def __init__(self, scenario: Scenario, agent_id: int, rng: random.Random):
        self.agent = scenario.agent(agent_id)
        self.rng = rng

    def act(self, observation, own: int) -> int:
        return heuristic_action(self.agent, observation, own, self.rng)

    def update(self, action, observation, own) -> None:
        pass


class NestedMDPController:
    """Acts on its latest observation as if it were the true state."""

    def __init__(self, policy: Policy, rng: random.Random):
        self.policy = policy
        self.rng = rng

    def act(self, observation, own: int) -> int:
        internal = own if self.policy.num_internal > 1 else 0
        return self.policy.sample(state_index(observation), internal, self.rng)

    def update(self, action, observation, own) -> None:
        pass


class IPOMCPController:
    """Plans with I-POMCP_O over models of a sampled subset of its neighbors."""

    def __init__(self, scenario: Scenario, agent_id: int, lower: Mapping[int, Policy],
                 params: Mapping, seed: int):
        self.view = AgentView(scenario, agent_id)
        nb = scenario.neighborhood(agent_id)
        splan = plan_neighbors(nb, float(params.get("e_p", 0.0)), float(params.get("alpha", 0.05)),
                               rng_seed=seed)
        self.ctx = PlanContext(nb, splan)
        pc = dict(params.get("planner", {}))
        pc.setdefault("horizon", scenario.horizon)
        pc.setdefault("gamma", scenario.gamma)
        pc.setdefault("c", scenario.r_max())
        pc["seed"] = seed
        self.cfg = PlannerConfig(**pc)
        self.planner = Planner(self.view, self.ctx, self.cfg)
        rng = random.Random(seed ^ 0x5EED)
        self.filter = initial_filter(scenario.initial_state(), scenario.agent(agent_id).suppressant,
                                     self.ctx, lower, self.cfg.particles, rng)
        self.last_diagnostics: dict = {}

    def act(self, observation, own: int) -> int:
        self.filter = [p._replace(own=own) if p.own != own else p for p in self.filter]
        a = self.planner.plan(self.filter)
        self.last_diagnostics = dict(self.planner.diagnostics)
        return a

    def update(self, action, observation, own) -> None:
        self.filter = self.planner.advance_root(self.filter, action, observation, own=own)
        self.last_diagnostics.update(self.planner.diagnostics)


def lower_policies(spec: ExperimentSpec) -> dict[int, dict[int, Policy]]:
    """Nested-MDP policies needed by the spec, keyed by level."""
    levels = set()
    for c in spec.assignment.values():
        if c.kind == "nestedmdp":
            levels.add(int(c.params.get("level", 1)))
        elif c.kind == "ipomcp":
            levels.add(int(c.params.get("level", 2)) - 1)
    out = {}
    for lvl in sorted(levels):
        c = next((c for c in spec.assignment.values() if c.kind == "nestedmdp"), None)
        eps = float(c.params.get("epsilon", 0.01)) if c else 0.01
        K = int(c.params.get("config_samples", 1000)) if c else 1000
        out[lvl] = solve_population(spec.scenario, lvl, epsilon=eps, config_samples=K,
                                    rng_seed=spec.base_seed)
    return out


# -- episodes --------------------------------------------------------------

@dataclass
class RunRecord:
    run_id: int
    seed: int
    rows: list[tuple]
    total_reward: dict[int, float]
    fires_extinguished: int
    suppressant_used: dict[int, int]
    diagnostics: list[dict] = field(default_factory=list)


def fold_rows(rows: Sequence[Sequence]) -> tuple[dict[int, float], int, dict[int, int]]:
    """Per-run aggregates recomputed from step rows (in ``STEP_COLUMNS`` order)."""
    total: dict[int, float] = {}
    used: dict[int, int] = {}
    fires: dict[int, int] = {}
    for r in rows:
        step, aid, action, rew, supp, fe = int(r[2]), int(r[3]), int(r[5]), float(r[6]), r[7], int(r[9])
        total[aid] = total.get(aid, 0.0) + rew
        used[aid] = used.get(aid, 0) + (action != NOOP and supp != "empty")
        fires[step] = fe
    return total, sum(fires.values()), used


def run_episode(spec: ExperimentSpec, run_index: int,
                policies: Mapping[int, Mapping[int, Policy]] | None = None) -> RunRecord:
    """Simulate one seeded episode; deterministic given the spec and ``run_index``."""
    sc = spec.scenario
    policies = lower_policies(spec) if policies is None else policies
    agents = sc.agents
    base = spec.base_seed
    controllers = {}
    obs_rng = {}
    for idx, ag in enumerate(agents):
        cs = spec.assignment[ag.id]
        seed = derive_seed(base, run_index, idx, ROLE_CONTROLLER)
        if cs.kind == "heuristic":
            controllers[ag.id] = HeuristicController(sc, ag.id, random.Random(seed))
        elif cs.kind == "nestedmdp":
            lvl = int(cs.params.get("level", 1))
            controllers[ag.id] = NestedMDPController(policies[lvl][ag.id], random.Random(seed))
        else:
            lvl = int(cs.params.get("level", 2)) - 1
            controllers[ag.id] = IPOMCPController(sc, ag.id, policies[lvl], cs.params, seed)
        obs_rng[ag.id] = random.Random(derive_seed(base, run_index, idx, ROLE_OBSERVATION))
    env_rng = random.Random(derive_seed(base, run_index, len(agents), ROLE_ENV))
    frames_of = {a.id: a.frame for a in agents}
    own = {a.id: a.suppressant for a in agents}
    obs = {a.id: sc.initial_state() for a in agents}
    state = sc.initial_state()
    dyn = sc.dynamics
    rows: list[tuple] = []
    diags: list[dict] = []
    seed_col = run_seed(base, run_index)
    try:
        for t in range(spec.steps):
            actions = {}
            for ag in agents:
                ctl = controllers[ag.id]
                if own[ag.id] == EMPTY:
                    actions[ag.id] = NOOP
                    continue
                actions[ag.id] = ctl.act(obs[ag.id], own[ag.id])
            config = fold_actions(actions, frames_of, sc.num_actions, sc.num_frames)
            nxt = transition(state, None, config, sc, env_rng)
            newly_out = sum(1 for v0, v1 in zip(state, nxt) if v1 == 0 and v0 != 0)
            for ag in agents:
                aid, a = ag.id, actions[ag.id]
                r = reward(state, a, config, nxt, sc, own[aid])
                o = observe(nxt, a, config, sc, obs_rng[aid])
                new_own = step_suppressant(own[aid], a != NOOP, dyn.p_d, dyn.p_r, env_rng)
                rows.append((run_index, seed_col, t, aid, spec.assignment[aid].name, a, r,
                             SUPPRESSANT_LEVELS[own[aid]], int(own[aid] != EMPTY), newly_out))
                ctl = controllers[aid]
                ctl.update(a, o, new_own)
                if isinstance(ctl, IPOMCPController):
                    diags.append({"run_id": run_index, "step": t, "agent_id": aid,
                                  "acted": own[aid] != EMPTY, **ctl.last_diagnostics})
                    ctl.last_diagnostics = {}
                obs[aid] = o
                own[aid] = new_own
            state = nxt
    except Exception as exc:
        raise RuntimeError(f"run {run_index}, step {t}: {exc}") from exc
    total, fires, used = fold_rows(rows)
    return RunRecord(run_index, seed_col, rows, total, fires, used, diags)


def _run_one(args):
    spec, i, policies = args
    return run_episode(spec, i, policies)


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> list[RunRecord]:
    """All runs of ``spec``, ordered by run index."""
    policies = lower_policies(spec)
    workers = spec.workers if workers is None else workers
    jobs = [(spec, i, policies) for i in range(spec.runs)]
    if workers <= 1 or spec.runs == 1:
        records = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    return sorted(records, key=lambda r: r.run_id)


# -- metrics and output ----------------------------------------------------

def group_samples(records: Sequence[RunRecord], assignment: Mapping[int, ControllerSpec] | None = None
                  ) -> dict[str, dict[str, list[float]]]:
    """Per controller group, one value per run for each metric.

    Reward and suppressant use are averaged over the group's agents within a
    run; fires extinguished is a per-run count.
    """
    out: dict[str, dict[str, list[float]]] = {}
    for rec in records:
        members: dict[str, list[int]] = {}
        for r in rec.rows:
            ids = members.setdefault(r[4], [])
            if r[3] not in ids:
                ids.append(r[3])
        for name, ids in members.items():
            g = out.setdefault(name, {m: [] for m in METRICS})
            g["reward"].append(float(np.mean([rec.total_reward[a] for a in ids])))
            g["fires_extinguished"].append(float(rec.fires_extinguished))
            g["suppressant_used"].append(float(np.mean([rec.suppressant_used[a] for a in ids])))
    return out


def compute_metrics(records: Sequence[RunRecord]) -> list[tuple]:
    """Summary rows ``(controller, metric, mean, ci_low, ci_high, n_runs)``."""
    if not records:
        raise ValueError("no records")
    rows = []
    for name, metrics in sorted(group_samples(records).items()):
        for m in METRICS:
            mean, lo, hi = t_interval(metrics[m])
            rows.append((name, m, mean, lo, hi, len(metrics[m])))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 10) + 0.0)
    return str(v)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def emit_results(records: Sequence[RunRecord], metrics: Sequence[tuple] | None, path) -> list[Path]:
    """Write ``steps.csv``, ``summary.csv`` and ``diagnostics.json`` under ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = []
        steps = out / "steps.csv"
        steps.write_bytes(_csv_text(STEP_COLUMNS, (r for rec in records for r in rec.rows)).encode("utf-8"))
        files.append(steps)
        summary = out / "summary.csv"
        summary.write_bytes(_csv_text(SUMMARY_COLUMNS, metrics or ()).encode("utf-8"))
        files.append(summary)
        diag = out / "diagnostics.json"
        payload = [d for rec in records for d in rec.diagnostics]
        diag.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        files.append(diag)
    except OSError as exc:
        raise OSError(f"writing results to {out}: {exc}") from exc
    return files


def read_steps(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != STEP_COLUMNS:
        raise ValueError(f"{path}: unexpected header")
    return rows[1:]
