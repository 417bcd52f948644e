"""Small enumerable domains and exact oracles shared by the tests."""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np

from pomdp_manip.core.belief import ParticleBelief
from pomdp_manip.core.model import GenerativeModel, object_array


class ListenToy(GenerativeModel):
    """Two hidden states, a noisy LISTEN and two committing actions.

    The state never changes. LISTEN (0) costs ``listen_cost`` and reports the
    state correctly with probability ``accuracy``; PICK_A (1) pays +1 in
    state 0 and -2 in state 1, PICK_B (2) the reverse. Observations: 0 or 1.
    """

    n_actions = 3
    n_observations = 2

    def __init__(self, prior=0.6, accuracy=0.85, listen_cost=-0.1, deterministic_obs=False):
        self.prior = prior
        self.accuracy = 1.0 if deterministic_obs else accuracy
        self.listen_cost = listen_cost

    def reward(self, s, a):
        if a == 0:
            return self.listen_cost
        good = (a == 1 and s == 0) or (a == 2 and s == 1)
        return 1.0 if good else -2.0

    def obs_dist(self, s, a):
        """P(o | s', a) as a length-2 array."""
        if a == 0:
            p = np.full(2, 1.0 - self.accuracy)
            p[s] = self.accuracy
            return p
        return np.array([0.5, 0.5])

    def sample_transition(self, state, action, rng):
        p = self.obs_dist(state, action)
        o = int(rng.random() >= p[0])
        return state, o, self.reward(state, action)

    def observation_probability(self, observation, next_state, action):
        return float(self.obs_dist(next_state, action)[observation])

    def is_terminal(self, state):
        return False

    def initial_belief(self, rng, n):
        states = (rng.random(n) >= self.prior).astype(int)
        return ParticleBelief.uniform(object_array(list(states)))

    def expected_reward(self, state, action):
        return self.reward(state, action)

    def exact_prior(self):
        return {0: self.prior, 1: 1.0 - self.prior}


def exact_graph_value(model: ListenToy, actions, edges, belief: dict, t=0, node=0) -> float:
    """Exact value of a policy graph for a discrete belief over toy states."""
    T = len(actions)
    a = actions[t][node]
    val = sum(p * model.reward(s, a) for s, p in belief.items())
    if t == T - 1:
        return val
    for o in range(model.n_observations):
        joint = {s: p * model.obs_dist(s, a)[o] for s, p in belief.items()}
        z = sum(joint.values())
        if z <= 0:
            continue
        post = {s: v / z for s, v in joint.items()}
        val += z * exact_graph_value(model, actions, edges, post, t + 1, edges[t][node][o])
    return val


def brute_force_optimum(model: ListenToy, T: int, W: int, belief: dict):
    """Best value over every policy graph with T layers of W nodes rooted at node 0."""
    A, O = model.n_actions, model.n_observations
    best, best_graph = -np.inf, None
    node_slots = T * W
    edge_slots = (T - 1) * W * O
    for acts in itertools.product(range(A), repeat=node_slots):
        actions = [list(acts[t * W : (t + 1) * W]) for t in range(T)]
        for eds in itertools.product(range(W), repeat=edge_slots):
            edges = [[list(eds[(t * W + q) * O : (t * W + q + 1) * O]) for q in range(W)] for t in range(T - 1)]
            v = exact_graph_value(model, actions, edges, belief)
            if v > best + 1e-12:
                best, best_graph = v, (actions, edges)
    return best, best_graph


def exact_dish_filter(domain, belief: dict, action: int, observation: int) -> dict:
    """Exact Bayes update of a discrete belief over reference dish states."""
    out: dict = {}
    for s, p in belief.items():
        for q, s2, o, _ in domain.transition_distribution(s, action):
            if o != observation:
                continue
            key = replace(s2, last_obs=-1)
            out[key] = out.get(key, 0.0) + p * q
    z = sum(out.values())
    if z <= 0:
        raise ValueError("observation impossible under the exact belief")
    return {s: v / z for s, v in out.items()}


def exact_initial_belief(domain, initial_obs) -> dict:
    from pomdp_manip.dish.probability import attribute_posterior

    base = domain.initial_state(initial_obs)
    post = [attribute_posterior([(bool(o), domain.occlusion(base, j))], domain.params) for j, o in enumerate(initial_obs)]
    out = {}
    for bits in itertools.product((False, True), repeat=domain.n):
        p = 1.0
        for b, q in zip(bits, post):
            p *= q if b else 1.0 - q
        if p > 0:
            out[replace(base, dirty=bits)] = p
    return out


def empirical(states, weights, key=lambda s: s) -> dict:
    out: dict = {}
    for s, w in zip(states, weights):
        k = key(s)
        out[k] = out.get(k, 0.0) + float(w)
    z = sum(out.values())
    return {k: v / z for k, v in out.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# scripted run on the two-object occluded-cup scene: (action id, observation)
# LIFT(1) reveals cup 2 dirty twice (second is a cache hit), WASH(2) fails,
# WASH(2) succeeds, FINISH
CUP_SCRIPT = [(1, 3), (1, 3), (4, 0), (4, 1), (0, 1)]
CUP_INITIAL = (False, False)


def filter_errors(kind: str, seed: int, n: int = 10_000):
    """Per-step (marginal TV of object 1 dirty, joint TV) of a particle filter vs the exact filter."""
    from pomdp_manip.core import ObjectBatch, belief_update_exec
    from pomdp_manip.core.rng import substream
    from pomdp_manip.dish.packed import PackedDish
    from pomdp_manip.dish.scene import bundled_scene
    from pomdp_manip.dish.world import DishDomain, initial_belief

    domain = DishDomain(bundled_scene("occluded_dirty_cup"))
    rng = substream(seed, "bayes-oracle", kind)
    if kind == "packed":
        model = PackedDish(domain)
        belief = model.initial_belief(CUP_INITIAL, n, rng)

        def to_state(row):
            return model.unpack(row)

    else:
        model = ObjectBatch(domain)
        belief = initial_belief(domain, CUP_INITIAL, n, rng)

        def to_state(s):
            return replace(s, last_obs=-1)

    exact = exact_initial_belief(domain, CUP_INITIAL)
    errors = []
    for a, o in CUP_SCRIPT:
        belief = belief_update_exec(belief, a, o, model, rng)
        exact = exact_dish_filter(domain, exact, a, o)
        states = [to_state(s) for s in belief.states]
        p_exact = sum(p for s, p in exact.items() if s.dirty[0])
        p_part = float(sum(w for s, w in zip(states, belief.weights) if s.dirty[0]))
        marginal = abs(p_exact - p_part)  # TV of a two-point distribution
        joint = total_variation(empirical(states, belief.weights), exact)
        errors.append((marginal, joint))
    return errors
