from pomdp_manip.sim.config import ExperimentConfig, MethodSpec, load_config, parse_method, reward_sweep
from pomdp_manip.sim.harness import (
    DishEnv,
    ExperimentTable,
    GroundTruth,
    add_comparisons,
    run_cell,
    run_experiment,
    run_one,
    sample_ground_truth,
    write_results,
)
from pomdp_manip.sim.stats import bootstrap_ci, mann_whitney_u

__all__ = [
    "DishEnv",
    "ExperimentConfig",
    "ExperimentTable",
    "GroundTruth",
    "MethodSpec",
    "add_comparisons",
    "bootstrap_ci",
    "load_config",
    "mann_whitney_u",
    "parse_method",
    "reward_sweep",
    "run_cell",
    "run_experiment",
    "run_one",
    "sample_ground_truth",
    "write_results",
]
