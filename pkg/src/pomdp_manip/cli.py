"""Command-line entry point: ``pomdp-manip <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from pomdp_manip.core.rng import INIT, TRUTH, substream


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _non_negative(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pomdp-manip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate-scene", help="check a scene file and print occlusion ratios")
    v.add_argument("--scene", required=True, help="scene file or bundled scene name")

    s = sub.add_parser("simulate", help="run one scene/method cell and write a results CSV")
    s.add_argument("--scene", default="scene01")
    s.add_argument("--method", choices=["pomdp", "greedy", "greedy-nohist"], default="pomdp")
    s.add_argument("--horizon", type=_positive, default=3, help="planning horizon T (default 3)")
    s.add_argument("--width", type=_positive, default=3)
    s.add_argument("--particles", type=_positive, default=2000)
    s.add_argument("--offline-rounds", type=_non_negative, default=10)
    s.add_argument("--online-rounds", type=_non_negative, default=4)
    s.add_argument("--steps", type=_positive, default=10, help="episode length (default 10)")
    s.add_argument("--episodes", type=_positive, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="results CSV path")

    c = sub.add_parser("compare", help="run an experiment config with pairwise tests")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)

    e = sub.add_parser("export-policy", help="optimise a policy graph offline and write DOT")
    e.add_argument("--scene", default="scene01")
    e.add_argument("--horizon", type=_positive, default=3)
    e.add_argument("--width", type=_positive, default=3)
    e.add_argument("--particles", type=_positive, default=2000)
    e.add_argument("--rounds", type=_non_negative, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="DOT output path")
    return p


def cmd_validate_scene(args) -> int:
    from pomdp_manip.dish.scene import merge_objects, occlusion_ratio, resolve_scene

    scene = resolve_scene(args.scene)
    for o in scene.objects:
        print(f"object {o.id}: occlusion {occlusion_ratio(scene, None, o.id):.4f}")
    log: list[str] = []
    merged = merge_objects(scene, log)
    for line in log:
        print(line)
    if log:
        for o in merged.objects:
            print(f"merged object {o.id}: occlusion {occlusion_ratio(merged, None, o.id):.4f}")
    print(f"valid: {len(scene.objects)} objects, {len(scene.contacts)} contacts, {len(log)} merges")
    return 0


def cmd_simulate(args) -> int:
    from pomdp_manip.sim.config import ExperimentConfig, MethodSpec
    from pomdp_manip.sim.harness import ExperimentTable, load_scenes, run_experiment, write_results

    if args.method == "pomdp":
        method = MethodSpec(
            horizon=args.horizon,
            width=args.width,
            particles=args.particles,
            offline_rounds=args.offline_rounds,
            online_rounds=args.online_rounds,
        )
    else:
        method = MethodSpec(kind="greedy", use_history=args.method == "greedy")
    load_scenes([args.scene])
    cfg = ExperimentConfig(
        scenes=(args.scene,), methods=(method,), episodes_per_cell=args.episodes, horizon=args.steps, seed=args.seed
    )
    table: ExperimentTable = run_experiment(cfg)
    write_results(table, args.out)
    row = table.rows[0]
    print(f"{row['scene']} {row['method']}: mean {row['mean_reward']:.3f}, 95% CI [{row['ci_low']:.3f}, {row['ci_high']:.3f}]")
    return 0


def cmd_compare(args) -> int:
    from pomdp_manip.sim.config import load_config
    from pomdp_manip.sim.harness import add_comparisons, load_scenes, run_experiment, write_results

    cfg = load_config(args.config)
    load_scenes(cfg.scenes)
    table = run_experiment(cfg, progress=lambda r: print(f"{r['scene']} {r['method']}: {r['mean_reward']:.3f}"))
    add_comparisons(table, cfg)
    for c in table.comparisons:
        print(f"{c['method']}: diff {c['mean_reward']:.3f}, p={c['p_value']:.4g}")
    write_results(table, args.out)
    return 0


def cmd_export_policy(args) -> int:
    from pomdp_manip.dish.packed import PackedDish
    from pomdp_manip.dish.probability import DomainParams
    from pomdp_manip.dish.scene import merge_objects, resolve_scene
    from pomdp_manip.dish.world import DishDomain
    from pomdp_manip.planner import PlannerConfig, annotate, export_dot, improve, init_random_graph
    from pomdp_manip.sim.config import ExperimentConfig
    from pomdp_manip.sim.harness import initial_observations, sample_ground_truth

    scene = merge_objects(resolve_scene(args.scene))
    domain = DishDomain(scene, DomainParams())
    truth = sample_ground_truth(scene, ExperimentConfig(), substream(args.seed, "export", TRUTH))
    init = initial_observations(domain, truth.dirty, substream(args.seed, "export", INIT))
    model = PackedDish(domain)
    cfg = PlannerConfig(horizon=args.horizon, width=args.width, particles=args.particles, seed=args.seed)
    rng = substream(args.seed, "export", "planner")
    b0 = model.initial_belief(init, cfg.particles, rng)
    graph = init_random_graph(cfg, model, rng)
    graph, value = improve(graph, b0, 0, model, cfg, args.rounds, rng)
    ann = annotate(graph, b0, 0, model, substream(args.seed, "export", "annotate"))
    text = export_dot(graph, ann, model, name=scene.name or "policy")
    tmp = f"{args.out}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, args.out)
    print(f"value {value.mean:.3f} +/- {value.std_error:.3f}; wrote {args.out}")
    return 0


COMMANDS = {
    "validate-scene": cmd_validate_scene,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "export-policy": cmd_export_policy,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
