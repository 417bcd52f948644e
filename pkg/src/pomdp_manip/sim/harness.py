"""Batch simulation against hidden ground truth."""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from pomdp_manip.baselines import GreedyPolicy, HeuristicConfig
from pomdp_manip.core.belief import BeliefCollapse
from pomdp_manip.core.episode import EpisodeResult, run_episode
from pomdp_manip.core.rng import AGENT, ENV, EVAL, INIT, TRUTH, substream
from pomdp_manip.dish.packed import PackedDish
from pomdp_manip.dish.probability import DomainParams, obs_prob
from pomdp_manip.dish.scene import SceneSpec, merge_objects, resolve_scene
from pomdp_manip.dish.world import TABLE, DishDomain, WorldState
from pomdp_manip.planner.graph import PlannerConfig
from pomdp_manip.planner.online import OnlinePlanner
from pomdp_manip.sim.config import ExperimentConfig, MethodSpec, scenario_label
from pomdp_manip.sim.stats import bootstrap_ci, mann_whitney_u

RESULT_COLUMNS = ["scene", "method", "horizon", "episodes", "mean_reward", "ci_low", "ci_high", "wall_time_s"]


@dataclass(frozen=True)
class GroundTruth:
    """Hidden per-object dirt and grasp counts, fixed for one episode."""

    dirty: tuple[bool, ...]
    n_succ: tuple[float, ...]
    n_fail: tuple[float, ...]

    def counts(self, index: int) -> tuple[float, float]:
        return self.n_succ[index], self.n_fail[index]


def sample_ground_truth(scene: SceneSpec, config: ExperimentConfig, rng: np.random.Generator) -> GroundTruth:
    n = len(scene.objects)
    total = rng.gamma(config.gamma_shape, config.gamma_scale, size=n) if config.gamma_scale > 0 else np.zeros(n)
    succ = rng.uniform(0.0, 1.0, size=n) * total
    return GroundTruth(
        dirty=tuple(o.dirty for o in scene.objects),
        n_succ=tuple(float(s) for s in succ),
        n_fail=tuple(float(t - s) for t, s in zip(total, succ)),
    )


def initial_observations(domain: DishDomain, dirty, rng: np.random.Generator) -> tuple[bool, ...]:
    """One reading per object under the untouched scene."""
    base = domain.initial_state([False] * domain.n)
    return tuple(
        bool(rng.random() < obs_prob(d, domain.occlusion(base, j), domain.params)) for j, d in enumerate(dirty)
    )


class DishEnv:
    """Environment view of the domain; outcome probabilities come from ``truth``."""

    def __init__(self, domain: DishDomain, truth: GroundTruth, initial_obs):
        self.domain = domain
        self.truth = truth
        self.n_actions = domain.n_actions
        self.initial_state = domain.initial_state(initial_obs, dirty=truth.dirty)

    def step(self, state, action, rng):
        return self.domain.sample_transition(state, action, rng, truth=self.truth, strict=True)

    def is_terminal(self, state) -> bool:
        return state.finished

    def is_valid(self, state, action) -> bool:
        return self.domain.is_valid(state, action)

    def truncation_reward(self, state: WorldState) -> float:
        fp = self.domain.params.rewards.finish_per_dirty
        return fp * sum(1 for l, d in zip(state.loc, state.dirty) if l == TABLE and d)


class PomdpAgent:
    """Online planner plus the observation record used for collapse recovery."""

    def __init__(self, domain: DishDomain, initial_obs, method: MethodSpec, rng: np.random.Generator):
        self.domain = domain
        self.model = PackedDish(domain)
        self.config = PlannerConfig(
            horizon=method.horizon,
            width=method.width,
            particles=method.particles,
            offline_rounds=method.offline_rounds,
            online_rounds=method.online_rounds,
        )
        self.rng = rng
        self.record = domain.initial_state(initial_obs)
        self.planner = OnlinePlanner(self.model, self.config, rng)
        self.planner.reset(self.model.initial_belief(initial_obs, method.particles, rng))
        self.collapses = 0

    def act(self) -> int:
        a = self.planner.act()
        if not self.domain.is_valid(self.record, a):
            # the inherited node was never re-optimised for the real belief
            self.planner.rebase(self.planner.belief)
            a = self.planner.act()
        return a

    def observe(self, action: int, observation: int) -> None:
        self.record, _ = self.domain.update_with_observation(self.record, action, observation)
        try:
            self.planner.observe(action, observation)
        except BeliefCollapse:
            self.collapses += 1
            belief = self.model.belief_from_record(self.record, self.config.particles, self.rng)
            self.planner.reset(belief)


def _make_agent(domain, initial_obs, method: MethodSpec, rng):
    if method.kind == "greedy":
        return GreedyPolicy(domain, initial_obs, HeuristicConfig(use_grasp_history=method.use_history))
    return PomdpAgent(domain, initial_obs, method, rng)


def episode_domain(scene: SceneSpec, config: ExperimentConfig, overrides: dict | None = None) -> DishDomain:
    params = DomainParams(max_steps=config.horizon).with_rewards(**{**config.rewards, **(overrides or {})})
    return DishDomain(scene, params)


def run_one(
    scene: SceneSpec,
    method: MethodSpec,
    config: ExperimentConfig,
    episode: int,
    overrides: dict | None = None,
    domain: DishDomain | None = None,
) -> EpisodeResult:
    """One episode; a pure function of (seed, scene name, episode, method).

    Ground truth, initial readings and environment noise do not depend on the
    method, so methods are compared on identical episodes.
    """
    domain = domain or episode_domain(scene, config, overrides)
    key = scene.name or "scene"
    truth = sample_ground_truth(scene, config, substream(config.seed, key, episode, TRUTH))
    init = initial_observations(domain, truth.dirty, substream(config.seed, key, episode, INIT))
    env = DishEnv(domain, truth, init)
    agent = _make_agent(domain, init, method, substream(config.seed, key, episode, AGENT, method.label))
    plan_times = []

    def policy(t, history):
        if history:
            last = history[-1]
            t0 = time.perf_counter()
            agent.observe(last.action, last.observation)
            plan_times.append(time.perf_counter() - t0)
        return agent.act()

    res = run_episode(env, policy, config.horizon, substream(config.seed, key, episode, ENV))
    info = dict(res.info)
    info.update(
        truth=truth,
        initial_obs=init,
        plan_times=plan_times,
        collapses=getattr(agent, "collapses", 0),
        offline_time=getattr(getattr(agent, "planner", None), "offline_time", 0.0),
    )
    return replace(res, info=info)


def _worker_count() -> int:
    cap = os.environ.get("POMDP_MANIP_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _run_args(args):
    scene, method, config, episode, overrides = args
    return run_one(scene, method, config, episode, overrides)


def run_cell(
    scene: SceneSpec, method: MethodSpec, config: ExperimentConfig, overrides: dict | None = None, workers: int | None = None
) -> list[EpisodeResult]:
    """All episodes of one (scene, method, reward scenario) cell, in episode order."""
    workers = _worker_count() if workers is None else workers
    jobs = [(scene, method, config, e, overrides) for e in range(config.episodes_per_cell)]
    if workers <= 1 or len(jobs) == 1:
        domain = episode_domain(scene, config, overrides)
        return [run_one(scene, method, config, e, overrides, domain) for e in range(config.episodes_per_cell)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_args, jobs))


@dataclass
class ExperimentTable:
    rows: list[dict] = field(default_factory=list)
    rewards: dict = field(default_factory=dict)  # (scene, method label) -> list of totals
    comparisons: list[dict] = field(default_factory=list)


def load_scenes(refs) -> list[SceneSpec]:
    out = []
    for ref in refs:
        sc = merge_objects(resolve_scene(ref))
        out.append(sc)
    return out


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentTable:
    table = ExperimentTable()
    scenes = load_scenes(config.scenes)
    for overrides in config.reward_scenarios:
        suffix = scenario_label(overrides)
        for scene in scenes:
            for method in config.methods:
                t0 = time.perf_counter()
                results = run_cell(scene, method, config, overrides)
                wall = time.perf_counter() - t0
                totals = [r.total_reward for r in results]
                label = method.label + suffix
                lo, hi = bootstrap_ci(totals, rng=substream(config.seed, scene.name, label, EVAL))
                mean = float(np.mean(totals))
                table.rows.append(
                    dict(
                        scene=scene.name,
                        method=label,
                        horizon=config.horizon,
                        episodes=len(totals),
                        mean_reward=mean,
                        ci_low=min(lo, mean),
                        ci_high=max(hi, mean),
                        wall_time_s=wall,
                    )
                )
                table.rewards[(scene.name, label)] = totals
                if progress is not None:
                    progress(table.rows[-1])
    return table


def pooled(table: ExperimentTable, label: str) -> list[float]:
    return [x for (_, m), v in sorted(table.rewards.items()) if m == label for x in v]


def add_comparisons(table: ExperimentTable, config: ExperimentConfig) -> ExperimentTable:
    """Pairwise Mann-Whitney tests between methods, pooled over scenes, per reward scenario."""
    for overrides in config.reward_scenarios:
        suffix = scenario_label(overrides)
        labels = [m.label + suffix for m in config.methods]
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                a, b = pooled(table, labels[i]), pooled(table, labels[j])
                diff = np.asarray(a) - np.asarray(b)
                lo, hi = bootstrap_ci(diff, rng=substream(config.seed, labels[i], labels[j], EVAL))
                mean = float(diff.mean())
                table.comparisons.append(
                    dict(
                        scene="pooled",
                        method=f"{labels[i]} vs {labels[j]}",
                        horizon=config.horizon,
                        episodes=len(a),
                        mean_reward=mean,
                        ci_low=min(lo, mean),
                        ci_high=max(hi, mean),
                        wall_time_s=0.0,
                        p_value=mann_whitney_u(a, b),
                    )
                )
    return table


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def write_results(table: ExperimentTable, path) -> None:
    """CSV with the fixed result columns, plus ``p_value`` when comparisons exist."""
    cols = list(RESULT_COLUMNS) + (["p_value"] if table.comparisons else [])
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, restval="")
        w.writeheader()
        for row in table.rows + table.comparisons:
            w.writerow({k: _fmt(row.get(k, "")) for k in cols})
    os.replace(tmp, path)
