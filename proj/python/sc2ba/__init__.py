"""Dual-team micro-combat environment and self-play benchmark."""

from ._core import (
    Env,
    Error,
    Learner,
    Scenario,
    TeamStep,
    action_diversity,
    builtin_scenarios,
    evaluate,
    load_learner,
    make_learner,
    measure_throughput,
    parse_scenario,
    pca_2d,
    scenario,
    train_vs_bot,
)

__all__ = [
    "Env",
    "Error",
    "Learner",
    "Scenario",
    "TeamStep",
    "action_diversity",
    "builtin_scenarios",
    "evaluate",
    "load_learner",
    "make_learner",
    "measure_throughput",
    "parse_scenario",
    "pca_2d",
    "scenario",
    "train_vs_bot",
]
