import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pomdp_manip.core import InvalidAction
from pomdp_manip.dish.probability import DomainParams, obs_prob
from pomdp_manip.dish.scene import Contact, SceneObject, SceneSpec, bundled_scene
from pomdp_manip.dish.world import (
    DISHWASHER,
    FINISH,
    FINISH_OBS,
    LIFT,
    TABLE,
    WASH,
    DishAction,
    DishDomain,
    DishObservation,
    decode_observation,
    encode_observation,
    initial_belief,
    observation_label,
)

# object 1 occludes 2 (near), 3 (far) and 4 (farthest); 4 is also behind 2
SCENE = SceneSpec(
    (
        SceneObject(1, (0.0, 0.0), 200),
        SceneObject(2, (0.0, 0.1), 200, dirty=True),
        SceneObject(3, (0.0, 0.2), 200),
        SceneObject(4, (0.0, 0.3), 200, dirty=True),
    ),
    (Contact(1, 2, 50), Contact(1, 3, 50), Contact(1, 4, 40), Contact(2, 4, 40)),
)
SURE = [0.0, 0.0, 0.0]
MISS = [1.0, 0.0, 0.0]


@pytest.fixture
def dom():
    return DishDomain(SCENE)


def fresh(dom, dirty=(False, True, False, True), obs=(False, True, False, True)):
    return dom.initial_state(obs, dirty)


# observation encoding -----------------------------------------------------------


def test_encode_examples():
    assert encode_observation(DishObservation(True, (True, False)), 2) == 3
    assert decode_observation(0, 2) == DishObservation(False, (False, False))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_encode_bijection(k):
    for x in range(2 ** (k + 1)):
        assert encode_observation(decode_observation(x, k), k) == x


@pytest.mark.parametrize("code", [-1, 8])
def test_decode_out_of_range(code):
    with pytest.raises(ValueError):
        decode_observation(code, 2)


@pytest.mark.parametrize("code, n_valid, label", [(3, None, "S,D,C"), (0, None, "F,C,C"), (1, 1, "S,C,-"), (1, 0, "S,-,-")])
def test_observation_labels(code, n_valid, label):
    assert observation_label(code, 2, n_valid) == label


def test_action_codec(dom):
    assert dom.n_actions == 9 and dom.n_observations == 8
    for a in range(dom.n_actions):
        assert dom.encode_action(dom.decode_action(a)) == a
    assert dom.decode_action(0) == DishAction(FINISH)
    assert dom.decode_action(2) == DishAction(LIFT, 2)
    assert dom.action_label(5 + 2) == "WASH(3)"
    with pytest.raises(InvalidAction):
        dom.decode_action(9)


# occlusion and neighbours ----------------------------------------------------


def test_nearest_occluded(dom):
    s = fresh(dom)
    assert dom.nearest_occluded(s, 0) == [1, 2]
    assert dom.nearest_occluded(s, 0, k=3) == [1, 2, 3]
    assert dom.nearest_occluded(s, 2) == []


def test_nearest_occluded_ties_by_id():
    scene = SceneSpec(
        (SceneObject(1, (0, 0), 100), SceneObject(3, (0.1, 0), 100), SceneObject(2, (-0.1, 0), 100)),
        (Contact(1, 3, 10), Contact(1, 2, 10)),
    )
    d = DishDomain(scene)
    assert [d.ids[j] for j in d.nearest_occluded(d.initial_state([False] * 3), 0)] == [2, 3]


def test_settings_and_occlusion(dom):
    s = fresh(dom)
    assert dom.setting(s, 3) == ()
    assert dom.occlusion(s, 3) == pytest.approx(80 / 120)
    assert dom.setting(s, 3, lifted=0) == (1,)
    assert dom.occlusion_for_setting(3, (1,)) == pytest.approx(40 / 160)
    assert dom.occlusion_for_setting(3, (1, 2)) == 0.0


# transitions -------------------------------------------------------------------


def test_forced_wash_of_dirty_object(dom):
    s = fresh(dom)
    a = dom.encode_action(DishAction(WASH, 2))
    nxt, obs, r = dom.step_with_uniforms(s, a, SURE)
    assert nxt.loc[1] == DISHWASHER and r == 5.0
    assert nxt.n_succ[1] == 1 and obs & 1
    # object 4 lost its occluder 2 and is read under setting (2,)
    assert (2,) in nxt.cached(3)


def test_wash_clean_penalty_and_failure(dom):
    s = fresh(dom)
    a = dom.encode_action(DishAction(WASH, 1))
    assert dom.step_with_uniforms(s, a, SURE)[2] == -10.0
    nxt, obs, r = dom.step_with_uniforms(s, a, MISS)
    assert r == -0.5 and nxt.n_fail[0] == 1 and nxt.loc[0] == TABLE
    # failed grasp re-reports the base readings of 2 and 3
    assert obs == 0b010


def test_lift_costs_regardless_and_restores(dom):
    s = fresh(dom)
    a = dom.encode_action(DishAction(LIFT, 1))
    for u in (SURE, MISS):
        nxt, _, r = dom.step_with_uniforms(s, a, u)
        assert r == -0.5 and nxt.loc[0] == TABLE


def test_lift_cache_hit_repeats_reading(dom):
    s = fresh(dom)
    a = dom.encode_action(DishAction(LIFT, 1))
    s1, o1, _ = dom.step_with_uniforms(s, a, [0.0, 0.3, 0.7])
    s2, o2, _ = dom.step_with_uniforms(s1, a, [0.0, 0.99, 0.0])
    assert o1 == o2
    assert s2.obs_cache == s1.obs_cache


def test_invalid_target(dom):
    s = dom.step_with_uniforms(fresh(dom), dom.encode_action(DishAction(WASH, 1)), SURE)[0]
    with pytest.raises(InvalidAction):
        dom.step_with_uniforms(s, dom.encode_action(DishAction(LIFT, 1)), SURE)
    nxt, obs, r = dom.step_with_uniforms(s, dom.encode_action(DishAction(LIFT, 1)), SURE, strict=False)
    assert r == -0.5 and not obs & 1
    assert not dom.is_valid(s, 1) and not dom.is_valid(s, 5)


def test_finish(dom):
    nxt, obs, r = dom.step_with_uniforms(fresh(dom), 0, SURE)
    assert nxt.finished and obs == FINISH_OBS and r == -10.0
    assert dom.is_terminal(nxt)
    after, obs2, r2 = dom.step_with_uniforms(nxt, 3, SURE)
    assert (after.loc, obs2, r2) == (nxt.loc, FINISH_OBS, 0.0)


def test_step_limit_penalty():
    d = DishDomain(SCENE, DomainParams(max_steps=1))
    nxt, _, r = d.step_with_uniforms(fresh(d), d.encode_action(DishAction(LIFT, 3)), SURE)
    assert nxt.finished and r == -0.5 - 10.0


def test_replay_is_deterministic(dom):
    s = fresh(dom)
    rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
    for a in [1, 2, 6, 1, 0]:
        x = dom.sample_transition(s, a, rng_a)
        y = dom.sample_transition(s, a, rng_b)
        assert x == y
        s = x[0]


def test_truth_source_overrides_counts(dom):
    class Sure:
        def counts(self, i):
            return (1e12, 0.0)

    s = fresh(dom)
    assert dom.grasp_probability(s, 0, Sure()) == pytest.approx(1.0)

    class Fresh:
        def counts(self, i):
            return (0, 0)

    assert dom.grasp_probability(s, 0, Fresh()) == dom.grasp_probability(s, 0)


# exact enumeration --------------------------------------------------------------

STATES = st.tuples(st.lists(st.booleans(), min_size=4, max_size=4), st.lists(st.booleans(), min_size=4, max_size=4))


@settings(max_examples=40, deadline=None)
@given(STATES, st.integers(0, 8))
def test_transition_distribution_sums_to_one(bits, a):
    d = DishDomain(SCENE)
    dirty, obs = bits
    dist = d.transition_distribution(d.initial_state(obs, dirty), a)
    assert sum(p for p, *_ in dist) == pytest.approx(1.0, abs=1e-12)


def test_transition_distribution_matches_sampling(dom):
    s = fresh(dom)
    a = dom.encode_action(DishAction(LIFT, 1))
    exact = {}
    for p, _, o, _ in dom.transition_distribution(s, a):
        exact[o] = exact.get(o, 0.0) + p
    rng = np.random.default_rng(0)
    n = 20000
    counts = np.bincount([dom.sample_transition(s, a, rng)[1] for _ in range(n)], minlength=8) / n
    for o in range(8):
        p = exact.get(o, 0.0)
        assert abs(counts[o] - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-9


@settings(max_examples=30, deadline=None)
@given(STATES, st.integers(1, 8), st.integers(0, 7))
def test_update_likelihood_matches_enumeration(bits, a, o):
    d = DishDomain(SCENE)
    dirty, obs0 = bits
    s = d.initial_state(obs0, dirty)
    total = sum(p for p, _, oo, _ in d.transition_distribution(s, a) if oo == o)
    nxt, lik = d.update_with_observation(s, a, o)
    assert lik == pytest.approx(total, abs=1e-12)
    if lik > 0:
        matches = [s2 for p, s2, oo, _ in d.transition_distribution(s, a) if oo == o]
        assert nxt in matches


@settings(max_examples=30, deadline=None)
@given(STATES, st.integers(0, 8))
def test_expected_reward_matches_enumeration(bits, a):
    d = DishDomain(SCENE)
    dirty, obs0 = bits
    s = d.initial_state(obs0, dirty)
    mean = sum(p * r for p, _, _, r in d.transition_distribution(s, a))
    assert d.expected_reward(s, a) == pytest.approx(mean, abs=1e-12)


def test_expected_wash_reward_examples(dom):
    s = fresh(dom)
    p = dom.grasp_probability(s, 1)
    assert dom.expected_wash_reward(s, 2) == pytest.approx(p * 5 + (1 - p) * -0.5)


# initial belief -------------------------------------------------------------------


def test_initial_belief_unoccluded_dirty_reading():
    d = DishDomain(SceneSpec((SceneObject(1, (0, 0), 100),)))
    b = initial_belief(d, [True], 500, np.random.default_rng(0))
    assert all(s.dirty == (True,) for s in b.states)
    assert np.allclose(b.weights, 1 / 500)


def test_initial_belief_frequency_at_half_occlusion():
    # occlusion 0.5: tou / (tot - tou) = 50 / 100
    scene = SceneSpec((SceneObject(1, (0, 0), 100), SceneObject(2, (0, 0.1), 150)), (Contact(1, 2, 50),))
    d = DishDomain(scene)
    n = 10_000
    b = initial_belief(d, [False, True], n, np.random.default_rng(1))
    freq = np.mean([s.dirty[1] for s in b.states])
    pd, pc = obs_prob(True, 0.5, d.params), obs_prob(False, 0.5, d.params)
    post = pd / (pd + pc)
    assert abs(freq - post) <= 3 * np.sqrt(post * (1 - post) / n)
    assert all(s.n_succ == (0, 0) and s.cached(1) == {(): True} for s in b.states)


def test_bundled_cup_scene_domain():
    d = DishDomain(bundled_scene("occluded_dirty_cup"))
    s = d.initial_state([False, False])
    assert d.occlusion(s, 1) == pytest.approx(90 / 110)
    assert d.nearest_occluded(s, 0) == [1]


def test_all_states_enumerable_small():
    d = DishDomain(bundled_scene("occluded_dirty_cup"))
    for dirty in itertools.product((False, True), repeat=2):
        s = d.initial_state([False, False], dirty)
        assert d.valid_actions(s).tolist() == [True] * 5
