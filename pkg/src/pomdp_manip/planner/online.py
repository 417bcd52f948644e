"""Receding-horizon execution of a policy graph."""

from __future__ import annotations

import time

import numpy as np

from pomdp_manip.core.belief import ParticleBelief, belief_update_exec
from pomdp_manip.core.model import InvalidObservation, as_batch
from pomdp_manip.planner.graph import PlannerConfig, PolicyGraph, init_random_graph, shift_graph
from pomdp_manip.planner.improve import ValueEstimate, improve


def select_action(graph: PolicyGraph, start_node: int) -> int:
    if not 0 <= start_node < graph.W:
        raise ValueError(f"start node {start_node} out of range")
    return int(graph.actions[0, start_node])


def advance_online(
    graph: PolicyGraph,
    executed_action: int,
    observation: int,
    prev_belief: ParticleBelief,
    prev_start_node: int,
    model,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> tuple[PolicyGraph, ParticleBelief, int]:
    """Condition on the real outcome, shift the window and re-improve.

    The new start node is the one the executed edge pointed to.
    """
    batch = as_batch(model)
    if not 0 <= observation < batch.n_observations:
        raise InvalidObservation(f"observation {observation} out of range")
    if executed_action != select_action(graph, prev_start_node):
        raise ValueError(
            f"executed action {executed_action} differs from the plan's {select_action(graph, prev_start_node)}"
        )
    belief = belief_update_exec(prev_belief, executed_action, observation, model, rng, config.ess_threshold)
    start = int(graph.edges[0, prev_start_node, observation]) if graph.T > 1 else 0
    shifted = shift_graph(graph, rng, batch.n_actions)
    new, _ = improve(shifted, belief, start, model, config, config.online_rounds, rng)
    return new, belief, start


class OnlinePlanner:
    """Stateful wrapper: offline rounds on reset, online rounds after every step."""

    def __init__(self, model, config: PlannerConfig, rng: np.random.Generator):
        self.model = model
        self.config = config
        self.rng = rng
        self.graph: PolicyGraph | None = None
        self.belief: ParticleBelief | None = None
        self.start = 0
        self.value: ValueEstimate | None = None
        self.plan_times: list[float] = []

    def reset(self, belief: ParticleBelief) -> None:
        t0 = time.perf_counter()
        self.belief = belief
        self.start = 0
        graph = init_random_graph(self.config, self.model, self.rng)
        self.graph, self.value = improve(graph, belief, 0, self.model, self.config, self.config.offline_rounds, self.rng)
        self.offline_time = time.perf_counter() - t0

    def act(self) -> int:
        return select_action(self.graph, self.start)

    def observe(self, action: int, observation: int) -> None:
        t0 = time.perf_counter()
        self.graph, self.belief, self.start = advance_online(
            self.graph, action, observation, self.belief, self.start, self.model, self.config, self.rng
        )
        self.plan_times.append(time.perf_counter() - t0)

    def rebase(self, belief: ParticleBelief) -> None:
        """Replace the belief (e.g. after a collapse) and re-improve from the current graph."""
        t0 = time.perf_counter()
        self.belief = belief
        self.graph, self.value = improve(
            self.graph, belief, self.start, self.model, self.config, self.config.online_rounds, self.rng
        )
        self.plan_times.append(time.perf_counter() - t0)
