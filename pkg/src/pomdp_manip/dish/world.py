"""Dirty-cups domain on per-state Python objects.

This is the reference implementation of the dynamics. The harness runs the
real environment through it, and the packed planner kernels are checked
against it transition by transition.

Action ids: ``0`` is FINISH, ``1 + i`` is LIFT of the i-th object (scene
order) and ``1 + n + i`` is WASH of the i-th object. Observation ids put grasp
success in bit 0 and the attribute reading (1 = dirty) of the j-th nearest
object occluded by the manipulated one in bit ``j + 1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from pomdp_manip.core.belief import ParticleBelief
from pomdp_manip.core.model import GenerativeModel, InvalidAction, object_array
from pomdp_manip.dish.probability import (
    DomainParams,
    attribute_posterior,
    grasp_prior,
    obs_prob,
    wash_reward_expectation,
)
from pomdp_manip.dish.scene import SceneSpec, ratio_from_counts

TABLE = 0
DISHWASHER = 1
FINISH = "FINISH"
LIFT = "LIFT"
WASH = "WASH"
FINISH_OBS = 1


class DishAction(NamedTuple):
    kind: str
    obj: int | None = None

    def __str__(self) -> str:
        return self.kind if self.obj is None else f"{self.kind}({self.obj})"


class DishObservation(NamedTuple):
    grasp_success: bool
    attr_bits: tuple[bool, ...]


def encode_observation(obs: DishObservation, k: int | None = None) -> int:
    bits = tuple(obs.attr_bits)
    k = len(bits) if k is None else k
    if len(bits) > k:
        raise ValueError(f"{len(bits)} attribute bits for k={k}")
    code = int(bool(obs.grasp_success))
    for j, b in enumerate(bits):
        code |= int(bool(b)) << (j + 1)
    return code


def decode_observation(code: int, k: int) -> DishObservation:
    if not 0 <= code < 2 ** (k + 1):
        raise ValueError(f"observation id {code} out of range for k={k}")
    return DishObservation(bool(code & 1), tuple(bool((code >> (j + 1)) & 1) for j in range(k)))


def observation_label(code: int, k: int, n_valid: int | None = None) -> str:
    """``S``/``F`` for grasp success, then ``D``/``C`` per attribute bit.

    Positions at or beyond ``n_valid`` are padding and render as ``-``.
    """
    obs = decode_observation(code, k)
    parts = ["S" if obs.grasp_success else "F"]
    for j, b in enumerate(obs.attr_bits):
        parts.append("-" if n_valid is not None and j >= n_valid else ("D" if b else "C"))
    return ",".join(parts)


@dataclass(frozen=True)
class WorldState:
    """One hypothesis about the world.

    ``obs_cache[i]`` is a sorted tuple of ``(setting, observed_dirty)`` pairs,
    where a setting is the sorted tuple of object *ids* among i's occluders
    that were absent when the reading was made.
    """

    loc: tuple[int, ...]
    dirty: tuple[bool, ...]
    n_succ: tuple[int, ...]
    n_fail: tuple[int, ...]
    obs_cache: tuple[tuple[tuple[tuple[int, ...], bool], ...], ...]
    step: int = 0
    finished: bool = False
    last_obs: int = -1

    def cached(self, i: int) -> dict[tuple[int, ...], bool]:
        return dict(self.obs_cache[i])


class TruthSource(Protocol):
    def counts(self, index: int) -> tuple[float, float]: ...


def _with_entry(cache: tuple, key: tuple[int, ...], value: bool) -> tuple:
    return tuple(sorted(cache + ((key, bool(value)),)))


class DishDomain(GenerativeModel):
    """Generative model of the dirty-cups task for a fixed scene."""

    def __init__(self, scene: SceneSpec, params: DomainParams | None = None, initial_observations=None):
        self.scene = scene
        self.params = params or DomainParams()
        self.ids = scene.ids
        self.index = {oid: n for n, oid in enumerate(self.ids)}
        self.n = len(self.ids)
        self.k = self.params.k
        self.n_actions = 1 + 2 * self.n
        self.n_observations = 2 ** (self.k + 1)
        self.tot = [o.perimeter for o in scene.objects]
        # occluders[j]: (occluder index, tou), ordered by occluder id
        self.occluders: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for c in sorted(scene.contacts, key=lambda c: (c.occluded, c.occluder)):
            self.occluders[self.index[c.occluded]].append((self.index[c.occluder], c.tou))
        # near[i]: objects occluded by i, nearest centroid first, ties by id
        self.near: list[list[int]] = []
        for i, oid in enumerate(self.ids):
            occluded = [self.index[c.occluded] for c in scene.contacts if c.occluder == oid]
            occluded.sort(key=lambda j: (scene.distance(oid, self.ids[j]), self.ids[j]))
            self.near.append(occluded)
        self.initial_observations = initial_observations

    # actions ---------------------------------------------------------------

    def encode_action(self, action: DishAction) -> int:
        if action.kind == FINISH:
            return 0
        i = self.index[action.obj]
        return 1 + i if action.kind == LIFT else 1 + self.n + i

    def decode_action(self, a: int) -> DishAction:
        if not 0 <= a < self.n_actions:
            raise InvalidAction(f"action id {a} out of range")
        if a == 0:
            return DishAction(FINISH)
        if a <= self.n:
            return DishAction(LIFT, self.ids[a - 1])
        return DishAction(WASH, self.ids[a - 1 - self.n])

    def action_label(self, a: int) -> str:
        return str(self.decode_action(a))

    def observation_label(self, o: int, n_valid: int | None = None) -> str:
        return observation_label(o, self.k, n_valid)

    # occlusion -------------------------------------------------------------

    def setting(self, state: WorldState, j: int, lifted: int | None = None) -> tuple[int, ...]:
        """Occlusion-setting key for object j: its occluders that are absent."""
        absent = [i for i, _ in self.occluders[j] if state.loc[i] != TABLE or i == lifted]
        return tuple(sorted(self.ids[i] for i in absent))

    def occlusion_for_setting(self, j: int, key: tuple[int, ...]) -> float:
        absent = {self.index[oid] for oid in key}
        tou = sum(t for i, t in self.occluders[j] if i not in absent)
        return ratio_from_counts(self.tot[j], tou)

    def occlusion(self, state: WorldState, j: int) -> float:
        return self.occlusion_for_setting(j, self.setting(state, j))

    def nearest_occluded(self, state: WorldState, i: int, k: int | None = None) -> list[int]:
        k = self.k if k is None else k
        return [j for j in self.near[i] if state.loc[j] == TABLE][:k]

    def grasp_probability(self, state: WorldState, i: int, truth: TruthSource | None = None) -> float:
        s, f = (state.n_succ[i], state.n_fail[i]) if truth is None else truth.counts(i)
        p0 = grasp_prior(self.occlusion(state, i), self.params)
        return (p0 * self.params.n_prior + s) / (self.params.n_prior + s + f)

    def _dirty_on_table(self, loc, dirty) -> int:
        return sum(1 for l, d in zip(loc, dirty) if l == TABLE and d)

    # states ----------------------------------------------------------------

    def initial_state(self, initial_obs: Sequence[bool], dirty: Sequence[bool] | None = None) -> WorldState:
        dirty = tuple(bool(d) for d in (dirty if dirty is not None else [False] * self.n))
        return WorldState(
            loc=(TABLE,) * self.n,
            dirty=dirty,
            n_succ=(0,) * self.n,
            n_fail=(0,) * self.n,
            obs_cache=tuple((((), bool(o)),) for o in initial_obs),
        )

    def is_terminal(self, state: WorldState) -> bool:
        return state.finished

    def valid_actions(self, state: WorldState) -> np.ndarray:
        on = np.array([l == TABLE for l in state.loc])
        return np.concatenate([[True], on, on])

    def is_valid(self, state: WorldState, a: int) -> bool:
        if a == 0:
            return True
        return state.loc[(a - 1) % self.n] == TABLE

    # dynamics --------------------------------------------------------------

    def step_with_uniforms(
        self,
        state: WorldState,
        a: int,
        u: Sequence[float],
        truth: TruthSource | None = None,
        strict: bool = True,
    ) -> tuple[WorldState, int, float]:
        """Transition driven by explicit uniforms.

        ``u[0]`` decides grasp success and ``u[1 + p]`` the reading of the
        p-th observed object when that setting has not been seen before.
        With ``strict=False`` a manipulation of an object that is no longer on
        the table acts as a failed grasp instead of raising.
        """
        rw = self.params.rewards
        if state.finished:
            return replace(state, last_obs=FINISH_OBS), FINISH_OBS, 0.0
        if not 0 <= a < self.n_actions:
            raise InvalidAction(f"action id {a} out of range")
        if a == 0:
            reward = rw.finish_per_dirty * self._dirty_on_table(state.loc, state.dirty)
            return replace(state, finished=True, step=state.step + 1, last_obs=FINISH_OBS), FINISH_OBS, reward
        lift = a <= self.n
        i = a - 1 if lift else a - 1 - self.n
        valid = state.loc[i] == TABLE
        if not valid and strict:
            raise InvalidAction(f"{self.decode_action(a)}: object not on the table")
        loc, succ, fail = list(state.loc), list(state.n_succ), list(state.n_fail)
        cache = list(state.obs_cache)
        success = False
        if valid:
            success = u[0] < self.grasp_probability(state, i, truth)
            if success:
                succ[i] += 1
            else:
                fail[i] += 1
        if lift:
            reward = rw.lift if valid else rw.grasp_fail
        elif success:
            reward = rw.wash_dirty if state.dirty[i] else rw.wash_clean
            loc[i] = DISHWASHER
        else:
            reward = rw.grasp_fail
        after = replace(state, loc=tuple(loc))
        obs = int(success)
        for pos, j in enumerate(self.nearest_occluded(after, i)):
            if success:
                key = self.setting(after, j, lifted=i if lift else None)
                seen = dict(cache[j])
                if key in seen:
                    bit = seen[key]
                else:
                    q = obs_prob(state.dirty[j], self.occlusion_for_setting(j, key), self.params)
                    bit = bool(u[1 + pos] < q)
                    cache[j] = _with_entry(cache[j], key, bit)
            else:
                bit = self._reported(cache[j], self.setting(after, j))
            obs |= int(bit) << (1 + pos)
        step = state.step + 1
        finished = False
        if step >= self.params.max_steps:
            finished = True
            reward += rw.finish_per_dirty * self._dirty_on_table(loc, state.dirty)
        nxt = WorldState(
            tuple(loc), state.dirty, tuple(succ), tuple(fail), tuple(cache), step, finished, obs
        )
        return nxt, obs, reward

    @staticmethod
    def _reported(entries, key) -> bool:
        """Re-reported reading when no new view is gained: current setting, else base."""
        seen = dict(entries)
        if key in seen:
            return seen[key]
        return seen.get((), False)

    def sample_transition(self, state, action, rng, truth: TruthSource | None = None, strict: bool = False):
        return self.step_with_uniforms(state, action, rng.random(1 + self.k), truth, strict)

    def observation_probability(self, observation: int, next_state: WorldState, action: int) -> float:
        # next_state carries the reading it generated
        return 1.0 if next_state.last_obs == observation else 0.0

    def transition_distribution(
        self, state: WorldState, a: int, truth: TruthSource | None = None, strict: bool = False
    ) -> list[tuple[float, WorldState, int, float]]:
        """Exact enumeration of ``(probability, next_state, observation, reward)``."""
        if state.finished or a == 0:
            nxt, obs, r = self.step_with_uniforms(state, a, [0.0] * (1 + self.k), truth, strict)
            return [(1.0, nxt, obs, r)]
        i = (a - 1) % self.n
        if state.loc[i] != TABLE:
            nxt, obs, r = self.step_with_uniforms(state, a, [0.0] * (1 + self.k), truth, strict)
            return [(1.0, nxt, obs, r)]
        lift = a <= self.n
        p = self.grasp_probability(state, i, truth)
        out = []
        for success, ps in ((True, p), (False, 1.0 - p)):
            if ps <= 0.0:
                continue
            # a uniform strictly inside the branch; attribute draws enumerated below
            u0 = 0.0 if success else 1.0
            after_loc = list(state.loc)
            if success and not lift:
                after_loc[i] = DISHWASHER
            after = replace(state, loc=tuple(after_loc))
            near = self.nearest_occluded(after, i)
            fresh_q = []
            for j in near:
                key = self.setting(after, j, lifted=i if lift else None)
                if success and key not in dict(state.obs_cache[j]):
                    fresh_q.append(obs_prob(state.dirty[j], self.occlusion_for_setting(j, key), self.params))
                else:
                    fresh_q.append(None)
            for bits in itertools.product((True, False), repeat=len(near)):
                prob = ps
                u = [u0] + [0.0] * self.k
                for pos, (bit, q) in enumerate(zip(bits, fresh_q)):
                    if q is None:
                        continue
                    prob *= q if bit else 1.0 - q
                    u[1 + pos] = -1.0 if bit else 2.0
                if prob <= 0.0:
                    continue
                if any(q is None and not bit for bit, q in zip(bits, fresh_q)):
                    # deterministic positions are enumerated once, under bit=True
                    continue
                nxt, obs, r = self.step_with_uniforms(state, a, u, truth, strict)
                out.append((prob, nxt, obs, r))
        return out

    def update_with_observation(self, state: WorldState, a: int, observation: int) -> tuple[WorldState, float]:
        """Condition a particle on an executed action and its observation.

        Grasp outcome and fresh readings are set from the observation; the
        returned weight factor is P(observation | state, action) under the
        particle's own grasp model and dirt bits.
        """
        rw = self.params.rewards
        if state.finished:
            return replace(state, last_obs=FINISH_OBS), float(observation == FINISH_OBS)
        if a == 0:
            nxt = replace(state, finished=True, step=state.step + 1, last_obs=FINISH_OBS)
            return nxt, float(observation == FINISH_OBS)
        lift = a <= self.n
        i = a - 1 if lift else a - 1 - self.n
        valid = state.loc[i] == TABLE
        success = bool(observation & 1)
        loc, succ, fail = list(state.loc), list(state.n_succ), list(state.n_fail)
        cache = list(state.obs_cache)
        if valid:
            p = self.grasp_probability(state, i)
            lik = p if success else 1.0 - p
            if success:
                succ[i] += 1
            else:
                fail[i] += 1
        else:
            lik = 0.0 if success else 1.0
        done = valid and success
        if done and not lift:
            loc[i] = DISHWASHER
        after = replace(state, loc=tuple(loc))
        near = self.nearest_occluded(after, i)
        for pos, j in enumerate(near):
            bit = bool((observation >> (1 + pos)) & 1)
            if done:
                key = self.setting(after, j, lifted=i if lift else None)
                seen = dict(cache[j])
                if key in seen:
                    lik *= 1.0 if seen[key] == bit else 0.0
                else:
                    q = obs_prob(state.dirty[j], self.occlusion_for_setting(j, key), self.params)
                    lik *= q if bit else 1.0 - q
                    cache[j] = _with_entry(cache[j], key, bit)
            else:
                lik *= 1.0 if self._reported(cache[j], self.setting(after, j)) == bit else 0.0
        for pos in range(len(near), self.k):
            lik *= 0.0 if (observation >> (1 + pos)) & 1 else 1.0
        step = state.step + 1
        finished = step >= self.params.max_steps
        nxt = WorldState(tuple(loc), state.dirty, tuple(succ), tuple(fail), tuple(cache), step, finished, observation)
        return nxt, lik

    def expected_reward(self, state: WorldState, a: int) -> float:
        """Expected immediate reward with the particle's own grasp model."""
        rw = self.params.rewards
        if state.finished:
            return 0.0
        n_dirty = self._dirty_on_table(state.loc, state.dirty)
        if a == 0:
            return rw.finish_per_dirty * n_dirty
        lift = a <= self.n
        i = a - 1 if lift else a - 1 - self.n
        last = state.step + 1 >= self.params.max_steps
        if state.loc[i] != TABLE:
            r = rw.grasp_fail
            if last:
                r += rw.finish_per_dirty * n_dirty
            return r
        if lift:
            r = rw.lift
            if last:
                r += rw.finish_per_dirty * n_dirty
            return r
        p = self.grasp_probability(state, i)
        di = 1.0 if state.dirty[i] else 0.0
        r = p * (rw.wash_dirty if state.dirty[i] else rw.wash_clean) + (1.0 - p) * rw.grasp_fail
        if last:
            r += rw.finish_per_dirty * (n_dirty - p * di)
        return r

    def expected_wash_reward(self, state: WorldState, obj_id: int) -> float:
        i = self.index[obj_id]
        p = self.grasp_probability(state, i)
        return wash_reward_expectation(p, 1.0 if state.dirty[i] else 0.0, self.params.rewards)

    def attribute_history(self, state: WorldState, j: int) -> list[tuple[bool, float]]:
        return [(v, self.occlusion_for_setting(j, key)) for key, v in state.obs_cache[j]]

    def initial_belief(self, rng, n, initial_observations=None) -> ParticleBelief:
        obs = initial_observations if initial_observations is not None else self.initial_observations
        if obs is None:
            raise ValueError("initial observations required")
        return initial_belief(self, obs, n, rng)


def initial_belief(domain: DishDomain, initial_obs: Sequence[bool], n: int, rng: np.random.Generator) -> ParticleBelief:
    """Particles with dirt bits drawn independently from each object's posterior."""
    base = domain.initial_state(initial_obs)
    post = np.array(
        [attribute_posterior([(bool(o), domain.occlusion(base, j))], domain.params) for j, o in enumerate(initial_obs)]
    )
    draws = rng.random((n, domain.n)) < post
    states = [replace(base, dirty=tuple(bool(b) for b in row)) for row in draws]
    return ParticleBelief.uniform(object_array(states))
