from pomdp_manip.planner.dot import Annotations, annotate, export_dot
from pomdp_manip.planner.graph import (
    NodeBelief,
    PlannerConfig,
    PolicyGraph,
    init_random_graph,
    random_graph,
    shift_graph,
)
from pomdp_manip.planner.improve import (
    ValueEstimate,
    backup_layer,
    deduplicate_nodes,
    evaluate,
    forward_beliefs,
    improve,
    optimize_node,
    rollout_value,
    sample_reachable_belief,
)
from pomdp_manip.planner.online import OnlinePlanner, advance_online, select_action

__all__ = [
    "Annotations",
    "NodeBelief",
    "OnlinePlanner",
    "PlannerConfig",
    "PolicyGraph",
    "ValueEstimate",
    "advance_online",
    "annotate",
    "backup_layer",
    "deduplicate_nodes",
    "evaluate",
    "export_dot",
    "forward_beliefs",
    "improve",
    "init_random_graph",
    "optimize_node",
    "random_graph",
    "rollout_value",
    "sample_reachable_belief",
    "select_action",
    "shift_graph",
]
