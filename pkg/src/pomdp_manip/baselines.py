"""Greedy manipulation heuristics that take every reading at face value."""

from __future__ import annotations

from dataclasses import dataclass, replace

from pomdp_manip.dish.probability import grasp_success_prob
from pomdp_manip.dish.world import FINISH, TABLE, WASH, DishAction, DishDomain, WorldState


@dataclass(frozen=True)
class HeuristicConfig:
    use_grasp_history: bool = True


def latest_reading(domain: DishDomain, record: WorldState, j: int) -> bool:
    """Reading under the current occlusion setting, else the initial one."""
    seen = record.cached(j)
    key = domain.setting(record, j)
    if key in seen:
        return seen[key]
    return seen.get((), False)


def greedy_action(domain: DishDomain, record: WorldState, config: HeuristicConfig) -> DishAction:
    """WASH the observed-dirty object most likely to be grasped; FINISH if none.

    ``record`` holds locations, counts and cached readings; its dirt bits are
    ignored. Ties go to the smaller id.
    """
    best, best_p = None, -1.0
    for i, oid in enumerate(domain.ids):
        if record.loc[i] != TABLE or not latest_reading(domain, record, i):
            continue
        if config.use_grasp_history:
            p = domain.grasp_probability(record, i)
        else:
            p = grasp_success_prob(0, 0, domain.occlusion(record, i), domain.params)
        if p > best_p:
            best, best_p = oid, p
    if best is None:
        return DishAction(FINISH)
    return DishAction(WASH, best)


class GreedyPolicy:
    """Closed-loop greedy agent that maintains its own observation record."""

    def __init__(self, domain: DishDomain, initial_obs, config: HeuristicConfig):
        self.domain = domain
        self.config = config
        self.record = domain.initial_state(initial_obs)

    def act(self) -> int:
        return self.domain.encode_action(greedy_action(self.domain, self.record, self.config))

    def observe(self, action: int, observation: int) -> None:
        self.record, _ = self.domain.update_with_observation(self.record, action, observation)
        # the record's dirt bits are placeholders; keep them cleared
        self.record = replace(self.record, dirty=(False,) * self.domain.n)
