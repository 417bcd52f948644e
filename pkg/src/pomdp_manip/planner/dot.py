"""Graphviz rendering of an annotated policy graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pomdp_manip.core.belief import ParticleBelief
from pomdp_manip.core.model import as_batch
from pomdp_manip.planner.graph import PolicyGraph
from pomdp_manip.planner.improve import forward_beliefs


@dataclass
class Annotations:
    """Per-node and per-edge statistics from one forward pass."""

    visit: np.ndarray  # (T, W) visiting probability
    reward: np.ndarray  # (T, W) expected immediate reward, joint with the visit
    edge_prob: np.ndarray  # (T, W, O) joint probability of node and observation
    marginals: dict = field(default_factory=dict)  # (t, q) -> {"dirty": ..., ...}
    n_valid: dict = field(default_factory=dict)  # (t, q) -> attribute positions or None
    object_names: list = field(default_factory=list)


def annotate(graph: PolicyGraph, b0: ParticleBelief, start_node: int, model, rng: np.random.Generator) -> Annotations:
    batch = as_batch(model)
    T, W, O = graph.T, graph.W, graph.O
    layers, observations = forward_beliefs(graph, b0, start_node, model, rng, return_obs=True)
    w = b0.weights / b0.weights.sum()
    visit = np.zeros((T, W))
    reward = np.zeros((T, W))
    edge_prob = np.zeros((T, W, O))
    marg, n_valid = {}, {}
    for t, layer in enumerate(layers):
        visit[t] = np.bincount(layer.nodes, weights=w, minlength=W)
        er = batch.expected_reward(layer.states, graph.actions[t, layer.nodes])
        if er is not None:
            reward[t] = np.bincount(layer.nodes, weights=w * er, minlength=W)
        if t < T - 1:
            flat = layer.nodes * O + observations[t]
            edge_prob[t] = np.bincount(flat, weights=w, minlength=W * O).reshape(W, O)
        for q in range(W):
            idx = layer.at(q)
            if visit[t, q] <= 0:
                continue
            if hasattr(batch, "marginals"):
                m = batch.marginals(layer.states[idx], w[idx])
                if m is not None:
                    marg[(t, q)] = m
            if hasattr(batch, "n_valid_bits"):
                n_valid[(t, q)] = batch.n_valid_bits(layer.states[idx], int(graph.actions[t, q]))
    names = list(getattr(getattr(batch, "domain", None), "ids", []))
    return Annotations(visit, reward, edge_prob, marg, n_valid, names)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _obs_label(batch, o: int, n_valid) -> str:
    try:
        return batch.observation_label(o, n_valid)
    except TypeError:
        return batch.observation_label(o)


def export_dot(graph: PolicyGraph, annotations: Annotations, model, name: str = "policy") -> str:
    """DOT digraph: one rank per layer, edges grouped by target node.

    Node labels show the action, the visiting probability in parentheses, the
    expected reward and reward divided by probability, followed by per-object
    marginals when the model supplies them. Edge labels list the observations
    routed along the edge with their joint probabilities. Unvisited nodes and
    edges are dashed.
    """
    batch = as_batch(model)
    T, W, O = graph.T, graph.W, graph.O
    a = annotations
    lines = [f"digraph {_quote(name)} {{", "  rankdir=TB;", '  node [shape=box, fontname="Helvetica"];']
    for t in range(T):
        lines.append(f"  subgraph layer{t} {{")
        lines.append("    rank=same;")
        for q in range(W):
            p = a.visit[t, q]
            rows = [f"{batch.action_label(int(graph.actions[t, q]))} ({p:.2f})"]
            ratio = a.reward[t, q] / p if p > 0 else 0.0
            rows.append(f"R={a.reward[t, q]:.2f} R/p={ratio:.2f}")
            m = a.marginals.get((t, q))
            if m is not None:
                for i, oid in enumerate(a.object_names):
                    rows.append(f"{oid}: d={m['dirty'][i]:.2f} g={m['grasp'][i]:.2f} t={m['table'][i]:.2f}")
            style = "" if p > 0 else ", style=dashed"
            lines.append(f"    L{t}N{q} [label={_quote(chr(10).join(rows))}{style}];")
        lines.append("  }")
    for t in range(T - 1):
        for q in range(W):
            visited = a.visit[t, q] > 0
            by_target: dict[int, list[str]] = {}
            for o in range(O):
                target = int(graph.edges[t, q, o])
                pr = a.edge_prob[t, q, o]
                if visited and pr <= 0:
                    continue
                lab = _obs_label(batch, o, a.n_valid.get((t, q)))
                by_target.setdefault(target, []).append(f"{lab} ({pr:.2f})" if visited else lab)
            for target, labs in sorted(by_target.items()):
                style = "" if visited else ", style=dashed"
                lines.append(f"  L{t}N{q} -> L{t + 1}N{target} [label={_quote(chr(10).join(labs))}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
