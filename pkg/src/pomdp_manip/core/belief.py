"""Weighted particle beliefs and the execution-time Bayes update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pomdp_manip.core.model import InvalidAction, InvalidObservation, as_batch

DEFAULT_ESS_THRESHOLD = 0.1


class BeliefCollapse(RuntimeError):
    """Every particle assigns zero probability to the received observation."""


class EmptyBelief(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParticleBelief:
    """b(s) = sum_j w_j delta(s, s_j).

    ``states`` is indexable by integer arrays: a 2-D array of packed states
    for compiled domains, an object array otherwise.
    """

    weights: np.ndarray
    states: object

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if len(w) != len(self.states):
            raise ValueError(f"{len(w)} weights for {len(self.states)} states")
        if np.any(w < 0):
            raise ValueError("negative particle weight")

    @classmethod
    def uniform(cls, states) -> ParticleBelief:
        n = len(states)
        if n == 0:
            raise EmptyBelief("empty belief")
        return cls(np.full(n, 1.0 / n), states)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def particles(self) -> list[tuple[float, object]]:
        return [(float(w), self.states[i]) for i, w in enumerate(self.weights)]

    def normalized(self) -> ParticleBelief:
        total = self.weights.sum()
        if total <= 0:
            raise BeliefCollapse("all particle weights are zero")
        return ParticleBelief(self.weights / total, self.states)

    def take(self, idx: np.ndarray, weights: np.ndarray | None = None) -> ParticleBelief:
        w = self.weights[idx] if weights is None else weights
        return ParticleBelief(w, self.states[idx])

    def expectation(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def effective_sample_size(belief: ParticleBelief) -> float:
    """1 / sum_j w_j^2 for normalised weights."""
    if len(belief) == 0:
        raise EmptyBelief("empty belief")
    w = belief.weights
    return float(1.0 / np.dot(w, w))


def systematic_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: one uniform offset, n evenly spaced pointers."""
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    idx = np.searchsorted(cumulative, positions, side="right")
    # guards the float edge where positions[-1] rounds up to cumulative[-1]
    return np.minimum(idx, len(weights) - 1)


def resample(belief: ParticleBelief, rng: np.random.Generator, n: int | None = None) -> ParticleBelief:
    if len(belief) == 0:
        raise EmptyBelief("empty belief")
    n = len(belief) if n is None else n
    idx = systematic_indices(belief.weights, n, rng)
    return ParticleBelief(np.full(n, 1.0 / n), belief.states[idx])


def belief_update_exec(
    belief: ParticleBelief,
    action: int,
    observation: int,
    model,
    rng: np.random.Generator,
    ess_threshold: float = DEFAULT_ESS_THRESHOLD,
) -> ParticleBelief:
    """Propagate every particle through ``action`` and reweight by P(o | s', a).

    Resamples to uniform weights when ESS / N drops below ``ess_threshold``.
    Raises :class:`BeliefCollapse` when the observation is impossible under
    every particle.
    """
    batch = as_batch(model)
    if len(belief) == 0:
        raise EmptyBelief("empty belief")
    if not 0 <= action < batch.n_actions:
        raise InvalidAction(f"action {action} out of range")
    if not 0 <= observation < batch.n_observations:
        raise InvalidObservation(f"observation {observation} out of range")
    nxt, lik = batch.update(belief.states, action, observation, rng)
    w = belief.weights * lik
    total = w.sum()
    if not total > 0:
        raise BeliefCollapse(f"observation {observation} impossible under all {len(w)} particles")
    out = ParticleBelief(w / total, nxt)
    if effective_sample_size(out) / len(out) < ess_threshold:
        out = resample(out, rng)
    return out
