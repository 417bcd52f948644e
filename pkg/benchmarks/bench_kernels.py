"""Time the compiled kernels against the numpy fallback on a bundled scene.

Usage: python benchmarks/bench_kernels.py [--scene scene01] [--particles 2000] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from pomdp_manip.dish import kernels
from pomdp_manip.dish.packed import PackedDish
from pomdp_manip.dish.scene import bundled_scene
from pomdp_manip.dish.world import DishDomain
from pomdp_manip.planner import PlannerConfig, init_random_graph


def workloads(model, n, rng):
    cfg = PlannerConfig(horizon=3, width=3, particles=n)
    g = init_random_graph(cfg, model, rng)
    b = model.initial_belief([False] * model.n, n, rng)
    states = b.states
    acts = rng.integers(0, model.n_actions, n)
    U = model.draw(rng, n)
    paths = model.draw_paths(rng, n, cfg.horizon)
    nodes = np.zeros(n, dtype=np.int64)
    _, obs, _ = model.step(states, np.full(n, 1), U)
    return {
        "step": lambda k: k.step(states, acts, U, model.tab),
        "expected_reward": lambda k: k.expected_reward(states, acts, model.tab),
        "update": lambda k: k.update(states, 1, int(obs[0]), model.tab),
        "rollout T=3": lambda k: k.rollout(states, nodes, 0, g.actions, g.edges, paths, model.tab),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="scene01")
    ap.add_argument("--particles", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    compiled = kernels.compiled()
    if compiled is None:
        print("compiled kernels not built; only the numpy fallback is available")
    model = PackedDish(DishDomain(bundled_scene(args.scene)))
    jobs = workloads(model, args.particles, np.random.default_rng(0))
    print(f"{args.scene}, {args.particles} particles, best of {args.repeat} calls")
    print(f"{'kernel':<16}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in jobs.items():
        py = min(timeit.repeat(lambda: fn(kernels.python), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:<16}{py:>10.3f}{'-':>11}{'-':>9}")
            continue
        cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16}{py:>10.3f}{cy:>11.3f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
