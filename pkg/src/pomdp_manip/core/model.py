"""Generative-model contracts.

Two levels are used:

* :class:`GenerativeModel` is the per-state contract a domain implements
  (sample a transition, score an observation, report terminal states).
* :class:`BatchModel` is the vectorised form the planner consumes. Domains with
  a compiled kernel implement it natively; everything else is wrapped with
  :class:`ObjectBatch`, which loops over ``GenerativeModel`` calls.

States in a batch live in a numpy array whose first axis indexes particles
(an object array for plain Python states), so resampling and subsetting are
ordinary fancy indexing.
"""

from __future__ import annotations

import abc
from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

import numpy as np

if TYPE_CHECKING:
    from pomdp_manip.core.belief import ParticleBelief


class InvalidAction(ValueError):
    pass


class InvalidObservation(ValueError):
    pass


class GenerativeModel(abc.ABC):
    """Per-state POMDP simulator with discrete actions and observations."""

    n_actions: int
    n_observations: int

    @abc.abstractmethod
    def sample_transition(self, state, action: int, rng: np.random.Generator) -> tuple[Any, int, float]:
        """Return ``(next_state, observation, reward)``."""

    @abc.abstractmethod
    def observation_probability(self, observation: int, next_state, action: int) -> float:
        """P(observation | next_state, action)."""

    @abc.abstractmethod
    def is_terminal(self, state) -> bool: ...

    @abc.abstractmethod
    def initial_belief(self, rng: np.random.Generator, n: int) -> ParticleBelief: ...

    def expected_reward(self, state, action: int) -> float | None:
        """Exact expected immediate reward, or None when the domain cannot supply it."""
        return None

    def valid_actions(self, state) -> np.ndarray:
        return np.ones(self.n_actions, dtype=bool)

    def action_label(self, action: int) -> str:
        return str(action)

    def observation_label(self, observation: int) -> str:
        return str(observation)


@runtime_checkable
class BatchModel(Protocol):
    n_actions: int
    n_observations: int

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    def step(self, states, actions: np.ndarray, draws: np.ndarray) -> tuple[Any, np.ndarray, np.ndarray]: ...

    def expected_reward(self, states, actions: np.ndarray) -> np.ndarray | None: ...

    def valid_actions(self, states) -> np.ndarray: ...

    def terminal(self, states) -> np.ndarray: ...

    def update(self, states, action: int, observation: int, rng: np.random.Generator) -> tuple[Any, np.ndarray]: ...

    def action_label(self, action: int) -> str: ...

    def observation_label(self, observation: int) -> str: ...


def object_array(items) -> np.ndarray:
    out = np.empty(len(items), dtype=object)
    for i, item in enumerate(items):
        out[i] = item
    return out


class ObjectBatch:
    """Batch view of a :class:`GenerativeModel` operating on object arrays.

    Per-row randomness is a 63-bit seed, so replaying a draw array replays
    the exact transitions (used for common random numbers in the planner).
    """

    def __init__(self, model: GenerativeModel):
        self.model = model
        self.n_actions = model.n_actions
        self.n_observations = model.n_observations

    def draw(self, rng, size):
        return rng.integers(0, 2**63 - 1, size=size, dtype=np.int64)

    def step(self, states, actions, draws):
        n = len(states)
        nxt = np.empty(n, dtype=object)
        obs = np.empty(n, dtype=np.int64)
        rew = np.empty(n, dtype=float)
        for i in range(n):
            r = np.random.default_rng(int(draws[i]))
            nxt[i], obs[i], rew[i] = self.model.sample_transition(states[i], int(actions[i]), r)
        return nxt, obs, rew

    def expected_reward(self, states, actions):
        if len(states) == 0:
            return np.zeros(0)
        first = self.model.expected_reward(states[0], int(actions[0]))
        if first is None:
            return None
        return np.array([self.model.expected_reward(s, int(a)) for s, a in zip(states, actions)], dtype=float)

    def valid_actions(self, states):
        if len(states) == 0:
            return np.zeros((0, self.n_actions), dtype=bool)
        return np.array([self.model.valid_actions(s) for s in states], dtype=bool).reshape(len(states), self.n_actions)

    def terminal(self, states):
        return np.array([self.model.is_terminal(s) for s in states], dtype=bool)

    def update(self, states, action, observation, rng):
        n = len(states)
        nxt = np.empty(n, dtype=object)
        lik = np.empty(n, dtype=float)
        for i in range(n):
            s2, _, _ = self.model.sample_transition(states[i], action, rng)
            nxt[i] = s2
            lik[i] = self.model.observation_probability(observation, s2, action)
        return nxt, lik

    def action_label(self, action):
        return self.model.action_label(action)

    def observation_label(self, observation):
        return self.model.observation_label(observation)

    def marginals(self, states, weights):
        return None


def as_batch(model) -> BatchModel:
    if isinstance(model, GenerativeModel):
        return ObjectBatch(model)
    return model
