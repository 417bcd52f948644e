"""Experiment and method descriptions, loadable from JSON."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from pomdp_manip.dish.probability import Rewards

REWARD_SHORT = {
    "wd": "wash_dirty",
    "wc": "wash_clean",
    "gf": "grasp_fail",
    "lf": "lift",
    "fp": "finish_per_dirty",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """One agent: the online planner or a greedy heuristic."""

    kind: str = "pomdp"
    horizon: int = 3
    width: int = 3
    particles: int = 2000
    offline_rounds: int = 10
    online_rounds: int = 4
    use_history: bool = True

    def __post_init__(self):
        if self.kind not in ("pomdp", "greedy"):
            raise ConfigError(f"unknown method kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "greedy":
            return "greedy" if self.use_history else "greedy-nohist"
        extra = ""
        if (self.width, self.particles, self.offline_rounds, self.online_rounds) != (3, 2000, 10, 4):
            extra = f"-W{self.width}-N{self.particles}-R{self.offline_rounds}/{self.online_rounds}"
        return f"pomdp-T{self.horizon}{extra}"


_LABEL = re.compile(r"^pomdp-T(\d+)$")


def parse_method(value) -> MethodSpec:
    """``"greedy"``, ``"greedy-nohist"``, ``"pomdp-T3"`` or a field dict."""
    if isinstance(value, str):
        if value == "greedy":
            return MethodSpec(kind="greedy", use_history=True)
        if value == "greedy-nohist":
            return MethodSpec(kind="greedy", use_history=False)
        if value == "pomdp":
            return MethodSpec()
        m = _LABEL.match(value)
        if m:
            return MethodSpec(horizon=int(m.group(1)))
        raise ConfigError(f"unknown method {value!r}")
    if isinstance(value, dict):
        known = {f.name for f in fields(MethodSpec)}
        unknown = set(value) - known
        if unknown:
            raise ConfigError(f"method: unknown field(s) {sorted(unknown)}")
        return MethodSpec(**value)
    raise ConfigError(f"method: expected a string or object, got {value!r}")


def scenario_label(overrides: dict) -> str:
    if not overrides:
        return ""
    inv = {v: k for k, v in REWARD_SHORT.items()}
    parts = [f"{inv.get(k, k)}={v:g}" for k, v in sorted(overrides.items())]
    return "@" + ",".join(parts)


def _reward_overrides(raw, where: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(Rewards)}
    out = {}
    for k, v in raw.items():
        name = REWARD_SHORT.get(k, k)
        if name not in names:
            raise ConfigError(f"{where}: unknown reward {k!r}")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}.{k}: expected a number")
        out[name] = float(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    scenes: tuple[str, ...] = ("scene01",)
    methods: tuple[MethodSpec, ...] = (MethodSpec(), MethodSpec(kind="greedy"))
    episodes_per_cell: int = 100
    horizon: int = 10
    gamma_shape: float = 0.2
    gamma_scale: float = 5.0
    rewards: dict = field(default_factory=dict)
    reward_scenarios: tuple[dict, ...] = ({},)
    seed: int = 0

    def __post_init__(self):
        if self.episodes_per_cell < 1:
            raise ConfigError("episodes_per_cell must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.gamma_shape <= 0 or self.gamma_scale < 0:
            raise ConfigError("gamma_shape must be > 0 and gamma_scale >= 0")
        if not self.scenes or not self.methods:
            raise ConfigError("need at least one scene and one method")


def reward_sweep(wash_clean=(-5.0, -10.0), lift_fail=(-0.25, -0.5, -1.0)) -> tuple[dict, ...]:
    """Cells that vary the clean-wash penalty and the shared lift/failed-grasp cost."""
    return tuple({"wash_clean": wc, "lift": lf, "grasp_fail": lf} for wc in wash_clean for lf in lift_fail)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected an object")
    known = {f.name for f in fields(ExperimentConfig)} | {"reward_sweep"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"config: unknown field(s) {sorted(unknown)}")
    kw = dict(data)
    if "scenes" in kw:
        if not isinstance(kw["scenes"], list) or not all(isinstance(s, str) for s in kw["scenes"]):
            raise ConfigError("scenes: expected a list of names or paths")
        kw["scenes"] = tuple(kw["scenes"])
    if "methods" in kw:
        if not isinstance(kw["methods"], list):
            raise ConfigError("methods: expected a list")
        kw["methods"] = tuple(parse_method(m) for m in kw["methods"])
    if "rewards" in kw:
        kw["rewards"] = _reward_overrides(kw["rewards"], "rewards")
    if "reward_scenarios" in kw:
        if not isinstance(kw["reward_scenarios"], list):
            raise ConfigError("reward_scenarios: expected a list")
        kw["reward_scenarios"] = tuple(
            _reward_overrides(s, f"reward_scenarios[{n}]") for n, s in enumerate(kw["reward_scenarios"])
        )
    if kw.pop("reward_sweep", False):
        if "reward_scenarios" in data:
            raise ConfigError("give either reward_sweep or reward_scenarios")
        kw["reward_scenarios"] = reward_sweep()
    for name in ("episodes_per_cell", "horizon", "seed"):
        if name in kw and (isinstance(kw[name], bool) or not isinstance(kw[name], int)):
            raise ConfigError(f"{name}: expected an integer")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)
