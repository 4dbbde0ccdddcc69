"""Individual planning in open many-agent systems.

Modules:
    core: frames, neighborhoods, configurations and multinomial probabilities.
    survey: neighbor sample sizes, proportion estimates and error bounds.
    wildfire: the open wildfire domain and its scenario files.
    nested_mdp: leveled Nested-MDP policies used as mental models.
    ipomcp: the I-POMCP_O planner with configuration extrapolation.
    harness: experiment specs, controllers, episodes and result files.
    stats: Mann-Whitney U and t intervals.
    cli: the ``oasys`` command.
"""
from .core import (
    NOOP, Configuration, Frame, FrameProportions, Neighborhood, configuration_probability,
    count_configurations, enumerate_configurations, multinomial_pmf,
)
from .harness import ExperimentSpec, load_spec, run_episode, run_experiment, spec_from_dict
from .ipomcp import Particle, PlanContext, Planner, PlannerConfig, initial_filter
from .nested_mdp import MentalModel, Policy, solve_nested_mdp, solve_population
from .stats import mann_whitney_u, t_interval
from .survey import (
    SamplePlan, configuration_error_bound, estimate_proportions, plan_neighbors, regret_bound,
    required_sample_size,
)
from .wildfire import Scenario, bundled_scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "NOOP", "Configuration", "Frame", "FrameProportions", "Neighborhood",
    "configuration_probability", "count_configurations", "enumerate_configurations", "multinomial_pmf",
    "ExperimentSpec", "load_spec", "run_episode", "run_experiment", "spec_from_dict",
    "Particle", "PlanContext", "Planner", "PlannerConfig", "initial_filter",
    "MentalModel", "Policy", "solve_nested_mdp", "solve_population",
    "mann_whitney_u", "t_interval",
    "SamplePlan", "configuration_error_bound", "estimate_proportions", "plan_neighbors",
    "regret_bound", "required_sample_size",
    "Scenario", "bundled_scenario", "load_scenario",
]
