"""Layered policy graphs and the beliefs that flow through them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 3
    width: int = 3
    particles: int = 2000
    rollouts_per_candidate: int = 1
    offline_rounds: int = 10
    online_rounds: int = 4
    ess_threshold: float = 0.1
    seed: int = 0
    dedup: bool = True
    rollout_depth_cap: int | None = None

    def __post_init__(self):
        # horizon 1 is accepted: the plan is then a single greedy layer
        for name in ("horizon", "width", "particles", "rollouts_per_candidate"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("offline_rounds", "online_rounds"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ValueError("ess_threshold must lie in [0, 1]")
        if self.rollout_depth_cap is not None and self.rollout_depth_cap < 0:
            raise ValueError("rollout_depth_cap must be >= 0")


class PolicyGraph:
    """T layers of W nodes; ``actions[t, q]`` and ``edges[t, q, o]``.

    The last layer has no outgoing edges and stores -1 there.
    """

    def __init__(self, actions: np.ndarray, edges: np.ndarray):
        self.actions = np.array(actions, dtype=np.int64)
        self.edges = np.array(edges, dtype=np.int64)
        self.validate()

    @property
    def T(self) -> int:
        return self.actions.shape[0]

    @property
    def W(self) -> int:
        return self.actions.shape[1]

    @property
    def O(self) -> int:
        return self.edges.shape[2]

    def validate(self) -> None:
        T, W = self.actions.shape
        if self.edges.shape[:2] != (T, W):
            raise ValueError(f"edges shape {self.edges.shape} does not match actions {self.actions.shape}")
        if T > 1:
            inner = self.edges[:-1]
            if inner.min() < 0 or inner.max() >= W:
                raise ValueError("edge target out of range")
        if np.any(self.edges[-1] != -1):
            raise ValueError("last layer must not have edges")
        if self.actions.min() < 0:
            raise ValueError("negative action id")

    def copy(self) -> PolicyGraph:
        return PolicyGraph(self.actions.copy(), self.edges.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolicyGraph):
            return NotImplemented
        return np.array_equal(self.actions, other.actions) and np.array_equal(self.edges, other.edges)

    def __repr__(self) -> str:
        return f"PolicyGraph(T={self.T}, W={self.W}, O={self.O})"


@dataclass(frozen=True, eq=False)
class NodeBelief:
    """Particles over (state, node) pairs for one layer."""

    weights: np.ndarray
    states: object
    nodes: np.ndarray

    def mass(self, W: int) -> np.ndarray:
        return np.bincount(self.nodes, weights=self.weights, minlength=W)

    def at(self, q: int) -> np.ndarray:
        return np.flatnonzero(self.nodes == q)


def random_graph(T: int, W: int, n_actions: int, n_obs: int, rng: np.random.Generator) -> PolicyGraph:
    actions = rng.integers(0, n_actions, size=(T, W))
    edges = np.full((T, W, n_obs), -1, dtype=np.int64)
    if T > 1:
        edges[:-1] = rng.integers(0, W, size=(T - 1, W, n_obs))
    return PolicyGraph(actions, edges)


def init_random_graph(config: PlannerConfig, model, rng: np.random.Generator) -> PolicyGraph:
    """Uniformly random actions and edges."""
    return random_graph(config.horizon, config.width, model.n_actions, model.n_observations, rng)


def shift_graph(graph: PolicyGraph, rng: np.random.Generator, n_actions: int) -> PolicyGraph:
    """Drop layer 0, move the rest up and append a random last layer.

    The former last layer gains random edges into the new one.
    """
    T, W, O = graph.T, graph.W, graph.O
    actions = np.empty_like(graph.actions)
    edges = np.full_like(graph.edges, -1)
    actions[:-1] = graph.actions[1:]
    edges[: T - 1] = graph.edges[1:]
    actions[-1] = rng.integers(0, n_actions, size=W)
    if T > 1:
        edges[T - 2] = rng.integers(0, W, size=(W, O))
    return PolicyGraph(actions, edges)
