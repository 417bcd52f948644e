"""Occlusion-dependent grasp and attribute-observation models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable


@dataclass(frozen=True)
class Rewards:
    wash_dirty: float = 5.0
    wash_clean: float = -10.0
    grasp_fail: float = -0.5
    lift: float = -0.5
    finish_per_dirty: float = -5.0


@dataclass(frozen=True)
class DomainParams:
    """Model parameters; defaults are the values estimated on the physical robot."""

    theta_g1: float = -0.904
    theta_g2: float = -0.087
    theta_d1: float = -0.895
    theta_d2: float = -0.087
    theta_c1: float = -0.193
    theta_c2: float = 0.0
    n_prior: float = 0.5
    k: int = 2
    rewards: Rewards = field(default_factory=Rewards)
    max_steps: int = 10

    def __post_init__(self):
        if not self.n_prior > 0:
            raise ValueError("n_prior must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def with_rewards(self, **overrides) -> DomainParams:
        return replace(self, rewards=replace(self.rewards, **overrides))


def _bounded_exp(slope: float, occl: float, offset: float) -> float:
    # slope carries the sign as reported, so probabilities fall with occlusion
    return min(1.0, math.exp(slope * occl + offset))


def grasp_prior(occl: float, params: DomainParams) -> float:
    """Grasp-success prior for an object with occlusion ratio ``occl``."""
    return _bounded_exp(params.theta_g1, occl, params.theta_g2)


def grasp_success_prob(n_succ: float, n_fail: float, occl: float, params: DomainParams) -> float:
    """Mean of Beta(p0 * n_prior + n_succ, (1 - p0) * n_prior + n_fail)."""
    p0 = grasp_prior(occl, params)
    return (p0 * params.n_prior + n_succ) / (params.n_prior + n_succ + n_fail)


def obs_prob(true_dirty: bool, occl: float, params: DomainParams) -> float:
    """Probability of observing the object as DIRTY.

    For a clean object the exponential gives the probability of the correct
    (clean) reading, so a misread is its complement.
    """
    if true_dirty:
        return _bounded_exp(params.theta_d1, occl, params.theta_d2)
    return 1.0 - _bounded_exp(params.theta_c1, occl, params.theta_c2)


def attribute_posterior(
    history: Iterable[tuple[bool, float]], params: DomainParams, with_flag: bool = False
):
    """P(dirty) from conditionally independent readings under a uniform prior.

    ``history`` holds ``(observed_dirty, occlusion_at_observation)`` pairs.
    With ``with_flag`` returns ``(p, degenerate)``; degenerate histories
    (impossible under both hypotheses) fall back to the prior 0.5.
    """
    like_dirty = 1.0
    like_clean = 1.0
    for observed, occl in history:
        pd = obs_prob(True, occl, params)
        pc = obs_prob(False, occl, params)
        like_dirty *= pd if observed else 1.0 - pd
        like_clean *= pc if observed else 1.0 - pc
    total = like_dirty + like_clean
    if total <= 0.0:
        return (0.5, True) if with_flag else 0.5
    p = like_dirty / total
    return (p, False) if with_flag else p


def wash_reward_expectation(p_grasp: float, p_dirty: float, rewards: Rewards) -> float:
    return p_grasp * (rewards.wash_dirty * p_dirty + rewards.wash_clean * (1.0 - p_dirty)) + (
        1.0 - p_grasp
    ) * rewards.grasp_fail
