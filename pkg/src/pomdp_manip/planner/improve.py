"""Monotonic layer-by-layer improvement of a policy graph over particle beliefs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from pomdp_manip.core.belief import BeliefCollapse, ParticleBelief, belief_update_exec, resample
from pomdp_manip.core.model import as_batch
from pomdp_manip.core.rng import child
from pomdp_manip.planner.graph import NodeBelief, PlannerConfig, PolicyGraph

REACHABLE_RETRIES = 10


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    std_error: float
    samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


# sampling helpers -------------------------------------------------------------


def draw_paths(batch, rng: np.random.Generator, size: int, depth: int) -> np.ndarray:
    if hasattr(batch, "draw_paths"):
        return batch.draw_paths(rng, size, depth)
    if depth == 0:
        return np.zeros((size, 0), dtype=np.int64)
    return np.stack([batch.draw(rng, size) for _ in range(depth)], axis=1)


def rollout_batch(batch, actions: np.ndarray, edges: np.ndarray, t0: int, states, nodes, draws) -> np.ndarray:
    """Sum of rewards following ``actions``/``edges`` from layer ``t0`` to the end.

    Uses exact expected immediate rewards when the model provides them and
    realised rewards otherwise. ``draws[:, d]`` drives the step out of layer
    ``t0 + d``.
    """
    if hasattr(batch, "rollout"):
        return batch.rollout(states, nodes, t0, actions, edges, draws)
    T = actions.shape[0]
    q = np.asarray(nodes, dtype=np.int64)
    val = np.zeros(len(q))
    cur = states
    for d, t in enumerate(range(t0, T)):
        a = actions[t, q]
        er = batch.expected_reward(cur, a)
        last = t == T - 1
        if er is not None:
            val += er
            if last:
                break
        nxt, obs, rew = batch.step(cur, a, draws[:, d])
        if er is None:
            val += rew
        if last:
            break
        cur = nxt
        q = edges[t, q, obs]
    return val


def _immediate(batch, states, actions, draws):
    """One step plus the immediate reward used for planning."""
    nxt, obs, rew = batch.step(states, actions, draws)
    er = batch.expected_reward(states, actions)
    return nxt, obs, (rew if er is None else er)


def forward_beliefs(
    graph: PolicyGraph, b0: ParticleBelief, start_node: int, model, rng: np.random.Generator, return_obs: bool = False
):
    """Push the particles of ``b0`` through the graph, one layer at a time.

    Weights never change; every layer holds all N particles. With
    ``return_obs`` the observation sampled out of each non-last layer is
    returned as well.
    """
    batch = as_batch(model)
    nodes = np.full(len(b0), start_node, dtype=np.int64)
    states = b0.states
    layers = [NodeBelief(b0.weights, states, nodes)]
    observations = []
    for t in range(graph.T - 1):
        a = graph.actions[t, nodes]
        states, obs, _ = batch.step(states, a, batch.draw(rng, len(nodes)))
        observations.append(obs)
        nodes = graph.edges[t, nodes, obs]
        layers.append(NodeBelief(b0.weights, states, nodes))
    return (layers, observations) if return_obs else layers


def rollout_value(graph: PolicyGraph, t: int, state, node: int, model, rng: np.random.Generator) -> float:
    """One Monte-Carlo return from (state, node) at layer t to the last layer."""
    batch = as_batch(model)
    states = _single(state)
    draws = draw_paths(batch, rng, 1, graph.T - t)
    return float(rollout_batch(batch, graph.actions, graph.edges, t, states, np.array([node]), draws)[0])


def _single(state):
    if isinstance(state, np.ndarray) and state.ndim == 1 and state.dtype != object:
        return state[None, :]
    out = np.empty(1, dtype=object)
    out[0] = state
    return out


def _candidates(batch, states) -> np.ndarray:
    """Actions valid for at least one live particle of a node.

    A node can merge histories in which different objects are still on the
    table; an action that is invalid for a particle costs a failed grasp and
    leaves the state unchanged, so the incumbent action stays a candidate.
    """
    if len(states) == 0:
        return np.arange(batch.n_actions)
    live = ~batch.terminal(states)
    if not live.any():
        return np.arange(batch.n_actions)
    valid = batch.valid_actions(states[np.flatnonzero(live)]).any(axis=0)
    cands = np.flatnonzero(valid)
    return cands if len(cands) else np.arange(batch.n_actions)


def optimize_node(
    graph: PolicyGraph,
    t: int,
    weights: np.ndarray,
    states,
    batch,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> tuple[int, np.ndarray | None, float]:
    """Best (action, edge map) for one node given its particle belief.

    Returns the action, the new edge row (None on the last layer) and the
    node's weighted value. Candidate next nodes share transition samples and
    rollout randomness (common random numbers). Ties go to the lowest index.
    """
    T, W, O = graph.T, graph.W, graph.O
    cands = _candidates(batch, states)
    C, P = len(cands), len(weights)
    if t == T - 1:
        er = None
        if P:
            rep = np.repeat(cands, P)
            er = batch.expected_reward(states[np.tile(np.arange(P), C)], rep)
        if er is None:
            R = config.rollouts_per_candidate
            rows = np.tile(np.arange(P), C * R)
            _, _, rew = batch.step(states[rows], np.repeat(cands, P * R), batch.draw(rng, len(rows)))
            vals = (rew.reshape(C, R, P) * weights).sum(axis=2).mean(axis=1)
        else:
            vals = (er.reshape(C, P) * weights).sum(axis=1)
        best = int(np.argmax(vals))
        return int(cands[best]), None, float(vals[best])
    R = config.rollouts_per_candidate
    rows = np.tile(np.arange(P), C * R)
    acts = np.repeat(cands, P * R)
    cidx = np.repeat(np.arange(C), P * R)
    w = np.tile(weights, C * R) / R
    nxt, obs, imm = _immediate(batch, states[rows], acts, batch.draw(rng, len(rows)))
    end = T if config.rollout_depth_cap is None else min(T, t + 2 + config.rollout_depth_cap)
    ga, ge = graph.actions[:end], graph.edges[:end]
    if end < T:
        ge = ge.copy()
        ge[-1] = -1
    draws = draw_paths(batch, rng, len(rows), end - t - 1)
    key = cidx * O + obs
    Q = np.empty((C * O, W))
    for q2 in range(W):
        v = rollout_batch(batch, ga, ge, t + 1, nxt, np.full(len(rows), q2, dtype=np.int64), draws)
        Q[:, q2] = np.bincount(key, weights=w * v, minlength=C * O)
    Q = Q.reshape(C, O, W)
    best_next = Q.argmax(axis=2)
    cont = Q.max(axis=2).sum(axis=1)
    immediate = np.bincount(cidx, weights=w * imm, minlength=C)
    vals = immediate + cont
    best = int(np.argmax(vals))
    return int(cands[best]), best_next[best].astype(np.int64), float(vals[best])


def backup_layer(
    graph: PolicyGraph, t: int, layer: NodeBelief, model, config: PlannerConfig, rng: np.random.Generator
) -> PolicyGraph:
    """Re-optimise every visited node of layer ``t`` in place; returns the graph."""
    batch = as_batch(model)
    for q in range(graph.W):
        idx = layer.at(q)
        if len(idx) == 0 or layer.weights[idx].sum() <= 0:
            continue
        a, e, _ = optimize_node(graph, t, layer.weights[idx], layer.states[idx], batch, config, rng)
        graph.actions[t, q] = a
        if e is not None:
            graph.edges[t, q] = e
    return graph


def sample_reachable_belief(
    b0: ParticleBelief,
    model,
    t: int,
    rng: np.random.Generator,
    ess_threshold: float = 0.1,
    retries: int = REACHABLE_RETRIES,
) -> ParticleBelief:
    """Belief after ``t`` uniformly random valid actions with sampled observations.

    Each observation is drawn from the belief-weighted predictive by stepping
    one particle. On belief collapse the walk restarts with a fresh stream; after
    ``retries`` failures ``b0`` is returned.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return b0
    batch = as_batch(model)
    for _ in range(retries):
        r = child(rng)
        b = b0
        try:
            for _ in range(t):
                live = ~batch.terminal(b.states)
                if not live.any():
                    break
                cands = _candidates(batch, b.states)
                a = int(cands[r.integers(len(cands))])
                j = int(r.choice(len(b), p=b.weights / b.weights.sum()))
                _, o, _ = batch.step(b.states[[j]], np.array([a]), batch.draw(r, 1))
                b = belief_update_exec(b, a, int(o[0]), model, r, ess_threshold)
            return b
        except BeliefCollapse:
            continue
    return b0


def _node_key(graph: PolicyGraph, t: int, q: int) -> tuple:
    return (int(graph.actions[t, q]),) + tuple(int(x) for x in graph.edges[t, q])


def deduplicate_nodes(
    graph: PolicyGraph,
    t: int,
    b0: ParticleBelief,
    model,
    config: PlannerConfig,
    rng: np.random.Generator,
    mass: np.ndarray | None = None,
    start_node: int | None = None,
) -> tuple[PolicyGraph, list[int]]:
    """Re-optimise duplicate and unvisited nodes of layer ``t`` on sampled beliefs.

    Within a group of identical nodes the most visited one is kept (never
    replaced if it is the start node) and edges from layer ``t - 1`` into the
    others are rerouted to it first. Nodes with zero visiting mass are
    re-optimised as well. Returns the graph and the re-optimised node indices.
    """
    batch = as_batch(model)
    W = graph.W
    mass = np.zeros(W) if mass is None else np.asarray(mass)
    targets = []
    groups: dict[tuple, list[int]] = {}
    for q in range(W):
        groups.setdefault(_node_key(graph, t, q), []).append(q)
    for members in groups.values():
        if len(members) < 2:
            continue
        order = sorted(members, key=lambda q: (q != start_node, -mass[q], q))
        targets.extend(order[1:])
        if t >= 1:
            # the kept twin runs the same subplan, so rerouting leaves the value unchanged
            inbound = graph.edges[t - 1]
            inbound[np.isin(inbound, order[1:])] = order[0]
    for q in range(W):
        if mass[q] <= 0 and q not in targets and q != start_node:
            targets.append(q)
    targets.sort()
    n_sub = max(1, config.particles // W)
    for q in targets:
        depth = int(rng.integers(0, graph.T))
        b = sample_reachable_belief(b0, model, depth, rng, config.ess_threshold)
        b = resample(b.normalized(), rng, n_sub)
        a, e, _ = optimize_node(graph, t, b.weights, b.states, batch, config, rng)
        graph.actions[t, q] = a
        if e is not None:
            graph.edges[t, q] = e
    return graph, targets


def evaluate(
    graph: PolicyGraph, b0: ParticleBelief, start_node: int, model, rng: np.random.Generator
) -> ValueEstimate:
    """Weighted mean of one rollout per particle from the start node."""
    batch = as_batch(model)
    n = len(b0)
    draws = draw_paths(batch, rng, n, graph.T)
    v = rollout_batch(batch, graph.actions, graph.edges, 0, b0.states, np.full(n, start_node, dtype=np.int64), draws)
    w = b0.weights / b0.weights.sum()
    m = float(np.dot(w, v))
    se = math.sqrt(float(np.dot(w * w, (v - m) ** 2)))
    return ValueEstimate(m, se, n)


def improve(
    graph: PolicyGraph,
    b0: ParticleBelief,
    start_node: int,
    model,
    config: PlannerConfig,
    rounds: int,
    rng: np.random.Generator,
    eval_seed: int | None = None,
    on_round: Callable[[int, ValueEstimate], None] | None = None,
) -> tuple[PolicyGraph, ValueEstimate]:
    """Run ``rounds`` improvement rounds; returns the new graph and its value for ``b0``.

    A round pushes ``b0`` forward through the graph, backs layers up from the
    last to the first and, with ``config.dedup``, re-optimises duplicate and
    unvisited nodes of layers 1..T-1. Evaluation uses ``eval_seed`` (fixed
    across rounds) so successive estimates share randomness.
    """
    graph = graph.copy()
    eval_seed = int(rng.integers(2**63)) if eval_seed is None else eval_seed
    for r in range(rounds):
        layers = forward_beliefs(graph, b0, start_node, model, rng)
        for t in range(graph.T - 1, -1, -1):
            backup_layer(graph, t, layers[t], model, config, rng)
            if config.dedup and t >= 1:
                deduplicate_nodes(graph, t, b0, model, config, rng, mass=layers[t].mass(graph.W))
        if on_round is not None:
            on_round(r, evaluate(graph, b0, start_node, model, np.random.default_rng(eval_seed)))
    return graph, evaluate(graph, b0, start_node, model, np.random.default_rng(eval_seed))
