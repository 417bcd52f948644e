"""Vectorised dish model over packed int16 particle rows.

The planner pushes millions of transitions per episode through this class;
each call hands a whole batch to the selected kernel backend. The reference
:class:`~pomdp_manip.dish.world.DishDomain` defines the semantics, and
:meth:`PackedDish.pack` / :meth:`PackedDish.unpack` convert between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pomdp_manip.core.belief import ParticleBelief
from pomdp_manip.dish import kernels
from pomdp_manip.dish.probability import attribute_posterior, grasp_prior, obs_prob
from pomdp_manip.dish.world import DishDomain, WorldState

MAX_OCCLUDERS = 12


@dataclass(frozen=True, eq=False)
class Tables:
    """Lookup tables shared by both kernel backends."""

    n: int
    k: int
    M: int
    S: int
    max_steps: int
    occ_idx: np.ndarray  # (n, M) occluder indices, -1 padded
    occ_bit: np.ndarray  # (n, n) bit of occluder i in j's mask, -1 if none
    near: np.ndarray  # (n, n) occluded objects nearest first, -1 padded
    pg: np.ndarray  # (n, S) grasp prior per setting
    pod: np.ndarray  # (n, S) P(read dirty | dirty) per setting
    poc: np.ndarray  # (n, S) P(read dirty | clean) per setting
    rw: np.ndarray  # wash_dirty, wash_clean, grasp_fail, lift, finish_per_dirty, n_prior


def build_tables(domain: DishDomain) -> Tables:
    n = domain.n
    M = max((len(o) for o in domain.occluders), default=0)
    if M > MAX_OCCLUDERS:
        raise ValueError(f"an object has {M} occluders; at most {MAX_OCCLUDERS} supported")
    S = 2**M
    occ_idx = np.full((n, M), -1, dtype=np.int64)
    occ_bit = np.full((n, n), -1, dtype=np.int64)
    near = np.full((n, n), -1, dtype=np.int64)
    pg = np.zeros((n, S))
    pod = np.zeros((n, S))
    poc = np.zeros((n, S))
    for j in range(n):
        for b, (i, _) in enumerate(domain.occluders[j]):
            occ_idx[j, b] = i
            occ_bit[j, i] = b
        near[j, : len(domain.near[j])] = domain.near[j]
        for mask in range(S):
            occl = domain.occlusion_for_setting(j, mask_key(domain, occ_idx, j, mask))
            pg[j, mask] = grasp_prior(occl, domain.params)
            pod[j, mask] = obs_prob(True, occl, domain.params)
            poc[j, mask] = obs_prob(False, occl, domain.params)
    r = domain.params.rewards
    rw = np.array([r.wash_dirty, r.wash_clean, r.grasp_fail, r.lift, r.finish_per_dirty, domain.params.n_prior])
    return Tables(n, domain.k, M, S, domain.params.max_steps, occ_idx, occ_bit, near, pg, pod, poc, rw)


def mask_key(domain: DishDomain, occ_idx: np.ndarray, j: int, mask: int) -> tuple[int, ...]:
    absent = [int(occ_idx[j, b]) for b in range(occ_idx.shape[1]) if mask >> b & 1 and occ_idx[j, b] >= 0]
    return tuple(sorted(domain.ids[i] for i in absent))


class PackedDish:
    """:class:`~pomdp_manip.core.model.BatchModel` for the dish domain."""

    def __init__(self, domain: DishDomain, backend=None):
        self.domain = domain
        self.tab = build_tables(domain)
        self.kern = backend or kernels
        n, S = self.tab.n, self.tab.S
        self.n = n
        self.k = domain.k
        self.n_actions = domain.n_actions
        self.n_observations = domain.n_observations
        self.LOC, self.DIRTY, self.SUCC, self.FAIL = 0, n, 2 * n, 3 * n
        self.CACHE = 4 * n
        self.STEP = 4 * n + n * S
        self.FIN = self.STEP + 1
        self.width = self.FIN + 1
        self._key_to_mask = []
        for j in range(n):
            valid = 2 ** len(domain.occluders[j])
            self._key_to_mask.append({mask_key(domain, self.tab.occ_idx, j, m): m for m in range(valid)})

    # conversion ------------------------------------------------------------

    def pack(self, ws: WorldState) -> np.ndarray:
        n, S = self.n, self.tab.S
        row = np.zeros(self.width, dtype=np.int16)
        row[self.LOC : self.LOC + n] = ws.loc
        row[self.DIRTY : self.DIRTY + n] = ws.dirty
        row[self.SUCC : self.SUCC + n] = ws.n_succ
        row[self.FAIL : self.FAIL + n] = ws.n_fail
        row[self.CACHE : self.STEP] = -1
        for j, entries in enumerate(ws.obs_cache):
            for key, val in entries:
                row[self.CACHE + j * S + self._key_to_mask[j][key]] = int(val)
        row[self.STEP] = ws.step
        row[self.FIN] = int(ws.finished)
        return row

    def unpack(self, row: np.ndarray, last_obs: int = -1) -> WorldState:
        n, S = self.n, self.tab.S
        cache = []
        for j in range(n):
            entries = []
            for m in range(S):
                v = int(row[self.CACHE + j * S + m])
                if v >= 0:
                    entries.append((mask_key(self.domain, self.tab.occ_idx, j, m), bool(v)))
            cache.append(tuple(sorted(entries)))
        return WorldState(
            loc=tuple(int(x) for x in row[self.LOC : self.LOC + n]),
            dirty=tuple(bool(x) for x in row[self.DIRTY : self.DIRTY + n]),
            n_succ=tuple(int(x) for x in row[self.SUCC : self.SUCC + n]),
            n_fail=tuple(int(x) for x in row[self.FAIL : self.FAIL + n]),
            obs_cache=tuple(cache),
            step=int(row[self.STEP]),
            finished=bool(row[self.FIN]),
            last_obs=last_obs,
        )

    def initial_belief(self, initial_obs, n: int, rng: np.random.Generator) -> ParticleBelief:
        """Dirt bits drawn per object from the posterior of its first reading."""
        base = self.domain.initial_state(initial_obs)
        return self.belief_from_record(base, n, rng)

    def belief_from_record(self, record: WorldState, n: int, rng: np.random.Generator) -> ParticleBelief:
        """Fresh particles consistent with everything observed so far.

        ``record`` carries locations, counts and readings; dirt bits are drawn
        from each object's attribute posterior over its cached readings.
        """
        post = np.array(
            [attribute_posterior(self.domain.attribute_history(record, j), self.domain.params) for j in range(self.n)]
        )
        row = self.pack(record)
        states = np.repeat(row[None, :], n, axis=0)
        states[:, self.DIRTY : self.DIRTY + self.n] = rng.random((n, self.n)) < post
        return ParticleBelief.uniform(states)

    # batch model -----------------------------------------------------------

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.random((size, 1 + self.k))

    def draw_paths(self, rng: np.random.Generator, size: int, depth: int) -> np.ndarray:
        return rng.random((size, depth, 1 + self.k))

    def step(self, states, actions, draws):
        return self.kern.step(states, np.asarray(actions, dtype=np.int64), draws, self.tab)

    def expected_reward(self, states, actions):
        return self.kern.expected_reward(states, np.asarray(actions, dtype=np.int64), self.tab)

    def valid_actions(self, states):
        return self.kern.valid_actions(states, self.tab)

    def terminal(self, states):
        return np.asarray(states)[:, self.FIN] != 0

    def update(self, states, action, observation, rng=None):
        return self.kern.update(states, int(action), int(observation), self.tab)

    def rollout(self, states, nodes, t0, gact, gedge, draws):
        return self.kern.rollout(states, nodes, int(t0), gact, gedge, draws, self.tab)

    def action_label(self, action: int) -> str:
        return self.domain.action_label(action)

    def observation_label(self, observation: int, n_valid: int | None = None) -> str:
        return self.domain.observation_label(observation, n_valid)

    def n_valid_bits(self, states, action: int) -> int | None:
        """Number of real attribute positions after ``action``; None if particles disagree."""
        if action == 0 or len(states) == 0:
            return 0
        i = (action - 1) % self.n
        near = [j for j in self.tab.near[i] if j >= 0]
        if not near:
            return 0
        on = (np.asarray(states)[:, near] == 0).sum(axis=1)
        counts = np.unique(np.minimum(on, self.k))
        return int(counts[0]) if len(counts) == 1 else None

    def marginals(self, states, weights) -> dict[str, np.ndarray]:
        """Per-object P(dirty), mean grasp probability and P(on table)."""
        s = np.asarray(states)
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if len(s) == 0 or total <= 0:
            z = np.zeros(self.n)
            return {"dirty": z, "grasp": z.copy(), "table": z.copy()}
        w = w / total
        on = s[:, self.LOC : self.LOC + self.n] == 0
        dirty = s[:, self.DIRTY : self.DIRTY + self.n] != 0
        grasp = np.zeros(self.n)
        rows = np.arange(len(s))
        for i in range(self.n):
            # same formula as the kernels, evaluated through the numpy backend
            p = kernels.python._grasp_p(s, rows, i, self.tab)
            grasp[i] = float(np.dot(w, p))
        return {"dirty": w @ dirty, "grasp": grasp, "table": w @ on}
