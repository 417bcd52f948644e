"""Closed-loop episode execution against an environment with hidden truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np

from pomdp_manip.core.model import InvalidAction


class Step(NamedTuple):
    action: int
    observation: int
    reward: float


@dataclass(frozen=True)
class EpisodeResult:
    total_reward: float
    steps: tuple[Step, ...]
    terminated_early: bool
    truncation_reward: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        expected = math.fsum(s.reward for s in self.steps) + self.truncation_reward
        if abs(expected - self.total_reward) > 1e-9:
            raise ValueError(f"total_reward {self.total_reward} != step sum {expected}")

    @property
    def actions(self) -> list[int]:
        return [s.action for s in self.steps]


class Environment(Protocol):
    n_actions: int
    initial_state: object

    def step(self, state, action: int, rng: np.random.Generator) -> tuple[object, int, float]: ...

    def is_terminal(self, state) -> bool: ...

    def is_valid(self, state, action: int) -> bool: ...


Policy = Callable[[int, Sequence[Step]], int]


def run_episode(
    env: Environment,
    policy: Policy,
    horizon: int,
    rng: np.random.Generator,
    state=None,
) -> EpisodeResult:
    """Run ``policy`` until the environment terminates or ``horizon`` steps pass.

    ``policy(step_index, history)`` sees only past (action, observation,
    reward) triples. A truncation penalty is added when the horizon cuts the
    episode short and the environment defines ``truncation_reward(state)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    state = env.initial_state if state is None else state
    history: list[Step] = []
    terminal = env.is_terminal(state)
    while not terminal and len(history) < horizon:
        t = len(history)
        action = policy(t, tuple(history))
        if not (0 <= action < env.n_actions) or not env.is_valid(state, action):
            raise InvalidAction(f"policy returned invalid action {action} at step {t}")
        state, obs, reward = env.step(state, action, rng)
        history.append(Step(int(action), int(obs), float(reward)))
        terminal = env.is_terminal(state)
    trunc = 0.0
    if not terminal and hasattr(env, "truncation_reward"):
        trunc = float(env.truncation_reward(state))
    total = math.fsum(s.reward for s in history) + trunc
    return EpisodeResult(
        total_reward=total,
        steps=tuple(history),
        terminated_early=terminal and len(history) < horizon,
        truncation_reward=trunc,
        info={"final_state": state},
    )
