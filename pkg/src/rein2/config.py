"""Declarative experiment configuration: JSON file plus override dicts.

Unknown keys are rejected so typos fail loudly; every validation error
names the offending field.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace

from .envs import ENV_SPECS, EnvName
from .meta import MetaHyperparams
from .nn import MlpSpec, param_count


class ConfigError(ValueError):
    pass


class Mode(enum.Enum):
    REIN2_PPO = "rein2-ppo"
    REIN2_A2C = "rein2-a2c"
    BASELINE_PPO = "baseline-ppo"
    BASELINE_A2C = "baseline-a2c"

    @classmethod
    def parse(cls, name: str) -> "Mode":
        for member in cls:
            if member.value == name:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ConfigError(f"mode: unknown mode {name!r}; expected one of: {valid}")

    @property
    def is_rein2(self) -> bool:
        return self in (Mode.REIN2_PPO, Mode.REIN2_A2C)

    @property
    def is_ppo(self) -> bool:
        return self in (Mode.REIN2_PPO, Mode.BASELINE_PPO)


DEFAULT_SNAPSHOT_STEPS: dict[EnvName, tuple[int, ...]] = {
    EnvName.CARTPOLE_V1: (75, 1000, 2500),
    EnvName.ACROBOT_V1: (700, 3500, 10000),
    EnvName.MOUNTAINCAR_V0: (250, 70000, 150000),
}

# Per-algorithm defaults; every field can be overridden via "hyperparams".
_ALGO_DEFAULTS = {
    "ppo": {"learning_rate": 3e-4, "entropy_coef": 0.0},
    "a2c": {"learning_rate": 7e-4, "entropy_coef": 0.01},
}


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvName
    mode: Mode
    rbv_fraction: float = 0.01
    n_eval_episodes: int = 10
    outer_budget: int = 0  # 0 -> defaults to max(snapshot_steps)
    seeds: tuple[int, ...] = (0, 1, 2)
    a_max: float = 5.0
    fixed_eval_seeds: bool = False
    snapshot_steps: tuple[int, ...] = ()
    inner_hidden: tuple[int, ...] = (64, 64)
    inner_activation: str = "relu"
    eval_cadence: int = 500
    normalize_rewards: bool = True
    smoothing: float = 0.9
    outer_horizon: int = 16
    log_std_init: float = -0.5
    hyperparams: MetaHyperparams = field(default_factory=MetaHyperparams)

    def inner_spec(self) -> MlpSpec:
        env_spec = ENV_SPECS[self.env]
        sizes = (env_spec.obs_dim, *self.inner_hidden, env_spec.n_actions)
        return MlpSpec(sizes, self.inner_activation)

    def mask_size(self) -> int:
        return math.ceil(self.rbv_fraction * param_count(self.inner_spec()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["env"] = self.env.value
        d["mode"] = self.mode.value
        d["seeds"] = list(self.seeds)
        d["snapshot_steps"] = list(self.snapshot_steps)
        d["inner_hidden"] = list(self.inner_hidden)
        return d


_TOP_LEVEL_KEYS = {
    "env",
    "mode",
    "rbv_fraction",
    "n_eval_episodes",
    "outer_budget",
    "seeds",
    "a_max",
    "fixed_eval_seeds",
    "snapshot_steps",
    "inner_hidden",
    "inner_activation",
    "eval_cadence",
    "normalize_rewards",
    "smoothing",
    "outer_horizon",
    "log_std_init",
    "hyperparams",
}
_HYPERPARAM_KEYS = set(MetaHyperparams.__dataclass_fields__)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def config_from_dict(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping (file contents) with optional flag overrides."""
    merged = dict(raw)
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "hyperparams":
                hp = dict(merged.get("hyperparams", {}))
                hp.update({k: v for k, v in value.items() if v is not None})
                merged["hyperparams"] = hp
            else:
                merged[key] = value

    unknown = set(merged) - _TOP_LEVEL_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require("env" in merged, "env: required")
    _require("mode" in merged, "mode: required")

    try:
        env = merged["env"] if isinstance(merged["env"], EnvName) else EnvName.parse(str(merged["env"]))
    except ValueError as exc:
        raise ConfigError(f"env: {exc}") from exc
    mode = merged["mode"] if isinstance(merged["mode"], Mode) else Mode.parse(str(merged["mode"]))

    hp_raw = dict(merged.get("hyperparams", {}))
    unknown_hp = set(hp_raw) - _HYPERPARAM_KEYS
    _require(not unknown_hp, f"hyperparams: unknown keys {sorted(unknown_hp)}")
    algo = "ppo" if mode.is_ppo else "a2c"
    hp_values = dict(_ALGO_DEFAULTS[algo])
    hp_values.update(hp_raw)
    try:
        hyperparams = MetaHyperparams(**hp_values)
    except ValueError as exc:
        raise ConfigError(f"hyperparams: {exc}") from exc

    rbv_fraction = float(merged.get("rbv_fraction", 0.01))
    _require(0.0 < rbv_fraction <= 1.0, f"rbv_fraction: must be in (0, 1], got {rbv_fraction}")
    n_eval = int(merged.get("n_eval_episodes", 10))
    _require(n_eval >= 1, "n_eval_episodes: must be >= 1")

    snapshot_steps = tuple(int(s) for s in merged.get("snapshot_steps", DEFAULT_SNAPSHOT_STEPS[env]))
    _require(all(s >= 1 for s in snapshot_steps), "snapshot_steps: must be positive")
    _require(
        list(snapshot_steps) == sorted(set(snapshot_steps)),
        "snapshot_steps: must be strictly increasing",
    )

    outer_budget = int(merged.get("outer_budget", 0) or max(snapshot_steps))
    _require(outer_budget >= 1, "outer_budget: must be >= 1")

    seeds = tuple(int(s) for s in merged.get("seeds", (0, 1, 2)))
    _require(len(seeds) >= 1, "seeds: must be nonempty")
    _require(len(set(seeds)) == len(seeds), "seeds: duplicates are not allowed")

    a_max = float(merged.get("a_max", 5.0))
    _require(a_max > 0, "a_max: must be positive")
    eval_cadence = int(merged.get("eval_cadence", 500))
    _require(eval_cadence >= 1, "eval_cadence: must be >= 1")
    smoothing = float(merged.get("smoothing", 0.9))
    _require(0.0 <= smoothing < 1.0, "smoothing: must be in [0, 1)")
    outer_horizon = int(merged.get("outer_horizon", 16))
    _require(outer_horizon >= 1, "outer_horizon: must be >= 1")

    inner_hidden = tuple(int(h) for h in merged.get("inner_hidden", (64, 64)))
    _require(all(h >= 1 for h in inner_hidden), "inner_hidden: sizes must be positive")
    inner_activation = str(merged.get("inner_activation", "relu"))
    _require(inner_activation in ("relu", "tanh"), "inner_activation: must be relu or tanh")

    return ExperimentConfig(
        env=env,
        mode=mode,
        rbv_fraction=rbv_fraction,
        n_eval_episodes=n_eval,
        outer_budget=outer_budget,
        seeds=seeds,
        a_max=a_max,
        fixed_eval_seeds=bool(merged.get("fixed_eval_seeds", False)),
        snapshot_steps=snapshot_steps,
        inner_hidden=inner_hidden,
        inner_activation=inner_activation,
        eval_cadence=eval_cadence,
        normalize_rewards=bool(merged.get("normalize_rewards", True)),
        smoothing=smoothing,
        outer_horizon=outer_horizon,
        log_std_init=float(merged.get("log_std_init", -0.5)),
        hyperparams=hyperparams,
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a JSON object")
    return config_from_dict(raw, overrides)


def with_updates(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    """Functional update that re-runs full validation."""
    d = cfg.to_dict()
    hp = d.pop("hyperparams")
    d["hyperparams"] = hp
    d.update(updates)
    return config_from_dict(d)
