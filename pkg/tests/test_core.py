import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from helpers import ListenToy

from pomdp_manip.core import (
    BeliefCollapse,
    EmptyBelief,
    EpisodeResult,
    InvalidAction,
    InvalidObservation,
    ParticleBelief,
    Step,
    belief_update_exec,
    effective_sample_size,
    object_array,
    resample,
    run_episode,
)
from pomdp_manip.core.model import GenerativeModel
from pomdp_manip.core.rng import substream


class Switch(GenerativeModel):
    """Deterministic two-state model; observation reveals the next state."""

    n_actions = 2
    n_observations = 2

    def sample_transition(self, state, action, rng):
        s2 = action
        return s2, s2, float(s2)

    def observation_probability(self, observation, next_state, action):
        return 1.0 if observation == next_state else 0.0

    def is_terminal(self, state):
        return False

    def initial_belief(self, rng, n):
        return ParticleBelief.uniform(object_array([0] * n))


class FixedStates(GenerativeModel):
    """State stays put; observation likelihood is a per-state table."""

    n_actions = 1
    n_observations = 2

    def __init__(self, table):
        self.table = table

    def sample_transition(self, state, action, rng):
        return state, 0, 0.0

    def observation_probability(self, observation, next_state, action):
        return self.table[next_state][observation]

    def is_terminal(self, state):
        return False

    def initial_belief(self, rng, n):
        raise NotImplementedError


def belief(weights, states=None):
    states = list(range(len(weights))) if states is None else states
    return ParticleBelief(np.asarray(weights, dtype=float), object_array(states))


# effective sample size ---------------------------------------------------------


@pytest.mark.parametrize(
    "weights, expected",
    [
        ([0.25] * 4, 4.0),
        ([0.5, 0.5, 0.0, 0.0], 2.0),
        ([1.0, 0.0, 0.0], 1.0),
    ],
)
def test_ess_examples(weights, expected):
    assert effective_sample_size(belief(weights)) == pytest.approx(expected, abs=1e-12)


def test_ess_of_empty_belief_raises():
    with pytest.raises(EmptyBelief):
        effective_sample_size(belief([]))


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=50).filter(lambda w: sum(w) > 1e-6))
def test_ess_bounds(raw):
    b = belief(raw).normalized()
    assert b.weights.sum() == pytest.approx(1.0, abs=1e-9)
    ess = effective_sample_size(b)
    assert 1.0 - 1e-9 <= ess <= len(raw) + 1e-9


# resampling ------------------------------------------------------------------


def test_resample_single_particle_copies_state():
    out = resample(belief([1.0], ["x"]), np.random.default_rng(0), n=7)
    assert list(out.states) == ["x"] * 7
    assert np.allclose(out.weights, 1 / 7)


def test_resample_zero_weight_state_never_drawn():
    out = resample(belief([1.0, 0.0], ["a", "b"]), np.random.default_rng(1), n=100)
    assert set(out.states) == {"a"}


def test_resample_frequency_matches_weights():
    # systematic resampling places floor/ceil(N w) copies: frequency within [0.73, 0.77]
    out = resample(belief([0.75, 0.25]), np.random.default_rng(2), n=10000)
    freq = np.mean(out.states == 0)
    assert 0.73 <= freq <= 0.77


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_resampling_preserves_expectation(seed):
    rng = np.random.default_rng(seed)
    n = 10_000
    w = rng.random(50)
    w /= w.sum()
    f = rng.normal(size=50)
    b = ParticleBelief(w, np.arange(50))
    out = resample(b, rng, n=n)
    weighted = float(w @ f)
    sd = math.sqrt(float(w @ (f - weighted) ** 2) / n)
    assert abs(f[out.states].mean() - weighted) <= 3 * sd + 1e-12


def test_resample_empty_raises():
    with pytest.raises(EmptyBelief):
        resample(belief([]), np.random.default_rng(0))


# execution-time belief update -------------------------------------------------


def test_update_drops_particle_with_zero_likelihood():
    model = FixedStates({0: [1.0, 0.0], 1: [0.0, 1.0]})
    out = belief_update_exec(belief([0.5, 0.5]), 0, 0, model, np.random.default_rng(0), ess_threshold=0.0)
    assert out.weights.tolist() == [1.0, 0.0]


def test_update_constant_likelihood_keeps_weights():
    model = FixedStates({0: [0.3, 0.7], 1: [0.3, 0.7], 2: [0.3, 0.7]})
    w = [0.2, 0.3, 0.5]
    out = belief_update_exec(belief(w), 0, 1, model, np.random.default_rng(0))
    assert np.allclose(out.weights, w, atol=1e-12)


def test_update_collapse_is_signalled():
    model = FixedStates({0: [1.0, 0.0], 1: [1.0, 0.0]})
    with pytest.raises(BeliefCollapse):
        belief_update_exec(belief([0.5, 0.5]), 0, 1, model, np.random.default_rng(0))


@pytest.mark.parametrize("action, obs, exc", [(5, 0, InvalidAction), (0, 9, InvalidObservation), (-1, 0, InvalidAction)])
def test_update_rejects_out_of_range_ids(action, obs, exc):
    with pytest.raises(exc):
        belief_update_exec(belief([1.0]), action, obs, Switch(), np.random.default_rng(0))


def test_update_resamples_below_threshold():
    model = FixedStates({i: ([1.0, 0.0] if i == 0 else [0.01, 0.99]) for i in range(10)})
    out = belief_update_exec(belief([0.1] * 10), 0, 0, model, np.random.default_rng(0), ess_threshold=0.5)
    assert np.allclose(out.weights, 0.1)
    assert np.mean(out.states == 0) > 0.8


@given(st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_update_normalizes(seed):
    model = ListenToy()
    rng = np.random.default_rng(seed)
    b = model.initial_belief(rng, 200)
    out = belief_update_exec(b, 0, int(rng.integers(2)), model, rng)
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert len(out) == 200


def test_update_is_reproducible():
    model = ListenToy()
    b = model.initial_belief(np.random.default_rng(3), 100)
    x = belief_update_exec(b, 0, 1, model, substream(5, 1))
    y = belief_update_exec(b, 0, 1, model, substream(5, 1))
    assert np.array_equal(x.weights, y.weights) and list(x.states) == list(y.states)


# episodes ----------------------------------------------------------------------


class CountEnv:
    """Counts steps; action 1 terminates."""

    n_actions = 2
    initial_state = 0

    def step(self, state, action, rng):
        return (-1 if action == 1 else state + 1), 0, float(rng.random())

    def is_terminal(self, state):
        return state == -1

    def is_valid(self, state, action):
        return True


def test_episode_terminal_action_at_step_zero():
    res = run_episode(CountEnv(), lambda t, h: 1, 10, np.random.default_rng(0))
    assert len(res.steps) == 1 and res.terminated_early


def test_episode_runs_full_horizon():
    res = run_episode(CountEnv(), lambda t, h: 0, 10, np.random.default_rng(0))
    assert len(res.steps) == 10
    assert not res.terminated_early


def test_episode_reproducible():
    a = run_episode(CountEnv(), lambda t, h: 0, 10, substream(1, 2))
    b = run_episode(CountEnv(), lambda t, h: 0, 10, substream(1, 2))
    assert a == b


def test_episode_invalid_action():
    with pytest.raises(InvalidAction):
        run_episode(CountEnv(), lambda t, h: 7, 3, np.random.default_rng(0))


def test_episode_horizon_must_be_positive():
    with pytest.raises(ValueError):
        run_episode(CountEnv(), lambda t, h: 0, 0, np.random.default_rng(0))


def test_policy_sees_only_history():
    seen = []

    def policy(t, history):
        seen.append((t, len(history)))
        return 0

    run_episode(CountEnv(), policy, 4, np.random.default_rng(0))
    assert seen == [(0, 0), (1, 1), (2, 2), (3, 3)]


def test_episode_result_sum_invariant():
    with pytest.raises(ValueError):
        EpisodeResult(1.0, (Step(0, 0, 0.5),), False)
    ok = EpisodeResult(0.75, (Step(0, 0, 0.5), Step(1, 0, 0.25)), True)
    assert ok.actions == [0, 1]


def test_substreams_are_independent_and_stable():
    a = substream(7, "env", 3).random(4)
    b = substream(7, "env", 3).random(4)
    c = substream(7, "env", 4).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
