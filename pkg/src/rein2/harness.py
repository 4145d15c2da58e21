"""Experiment orchestration: training loops, run logs, aggregation, reports.

A run log holds one record per outer step (or per evaluation event for
baselines) with both step axes: the outer step count and the cumulative
number of inner environment steps consumed, so sample-efficiency
comparisons stay honest.  Everything a run does is derived from
(config, seed); re-running reproduces the log bit-for-bit except for the
wall-clock column.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import inner, meta, nn
from .config import ExperimentConfig, Mode, with_updates
from .envs import ENV_SPECS, BatchEnv, EnvName, make_env
from .outer_env import OuterEnv, make_mask
from .seeding import (
    STREAM_ACTIONS,
    STREAM_BASE_PARAMS,
    STREAM_EVAL,
    STREAM_EVAL_GREEDY,
    STREAM_EVAL_STOCH,
    STREAM_MASK,
    STREAM_SHUFFLE,
    STREAM_TRAIN_ENV,
    derive_rng,
    derive_seed,
)

CSV_COLUMNS = (
    "outer_step",
    "inner_env_steps_cum",
    "raw_reward",
    "normalized_reward",
    "best_so_far",
    "eval_return_min",
    "eval_return_max",
    "eval_len_mean",
    "loss_policy",
    "loss_value",
    "entropy",
    "approx_kl",
    "wall_ms",
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


@dataclass
class StepRecord:
    outer_step: int
    inner_env_steps_cum: int
    raw_reward: float
    normalized_reward: float
    best_so_far: float
    eval_return_min: float
    eval_return_max: float
    eval_len_mean: float
    loss_policy: float
    loss_value: float
    entropy: float
    approx_kl: float
    wall_ms: float
    # extra per-record data kept out of the CSV contract
    eval_total_steps: int = 0
    stochastic_reward: float | None = None

    def csv_row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            out.append(str(value) if isinstance(value, int) else repr(float(value)))
        return out


@dataclass
class RunLog:
    config: dict
    seed: int
    records: list[StepRecord] = field(default_factory=list)

    def steps(self) -> np.ndarray:
        return np.array([r.outer_step for r in self.records], dtype=np.int64)

    def raw_rewards(self) -> np.ndarray:
        return np.array([r.raw_reward for r in self.records])

    def comparable_rows(self) -> list[tuple]:
        """Everything a replay must reproduce exactly (wall time excluded)."""
        cols = [c for c in CSV_COLUMNS if c != "wall_ms"]
        return [tuple(getattr(r, c) for c in cols) for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for record in self.records:
                writer.writerow(record.csv_row())


def write_sidecar(config: ExperimentConfig, path) -> None:
    """JSON echo of the resolved config plus the environment constants."""
    env_spec = ENV_SPECS[config.env]
    payload = {
        "config": config.to_dict(),
        "environment": {
            "name": env_spec.name.value,
            "obs_dim": env_spec.obs_dim,
            "n_actions": env_spec.n_actions,
            "max_episode_steps": env_spec.max_episode_steps,
            "reward_range": list(env_spec.reward_range),
        },
        "inner_param_count": nn.param_count(config.inner_spec()),
        "mask_size": config.mask_size() if config.mode.is_rein2 else None,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


class NumericalAbort(RuntimeError):
    """Wraps a numerical failure together with the partial run log."""

    def __init__(self, message: str, partial_log: RunLog):
        super().__init__(message)
        self.partial_log = partial_log


def run_rein2(config: ExperimentConfig, seed: int) -> RunLog:
    """Train a weight-emitting meta-learner for config.outer_budget outer steps.

    Per step: sample an action (a masked weight vector), evaluate the
    resulting frozen agent for N episodes, feed the (optionally
    running-normalized) mean return into the rollout buffer, and run a
    PPO/A2C update every segment_length steps.
    """
    if not config.mode.is_rein2:
        raise ValueError(f"run_rein2 requires a rein2 mode, got {config.mode.value}")
    hp = config.hyperparams
    inner_spec = config.inner_spec()
    k = nn.param_count(inner_spec)
    base_params = nn.init_params(inner_spec, derive_seed(seed, STREAM_BASE_PARAMS))
    mask = make_mask(k, config.rbv_fraction, derive_seed(seed, STREAM_MASK))
    outer = OuterEnv(
        env_name=config.env,
        inner_spec=inner_spec,
        base_params=base_params,
        mask=mask,
        n_eval_episodes=config.n_eval_episodes,
        eval_seed=derive_seed(seed, STREAM_EVAL),
        a_max=config.a_max,
        horizon=config.outer_horizon,
        fixed_eval_seeds=config.fixed_eval_seeds,
    )
    policy = meta.GaussianPolicy(
        state_dim=outer.m,
        action_dim=outer.m,
        seed=seed,
        action_anchor=base_params[mask.indices],
        log_std_init=config.log_std_init,
    )
    act_rng = derive_rng(seed, STREAM_ACTIONS)
    shuffle_rng = derive_rng(seed, STREAM_SHUFFLE)
    rnorm = meta.RunningNorm() if config.normalize_rewards else None
    buffer = meta.RolloutBuffer()
    log = RunLog(config=config.to_dict(), seed=seed)

    state = outer.reset()
    best = -math.inf
    inner_steps_cum = 0
    last_stats: meta.UpdateStats | None = None
    try:
        for t in range(1, config.outer_budget + 1):
            t0 = time.perf_counter()
            action, log_prob = meta.gaussian_act(policy, state, act_rng)
            value = policy.value(state)
            transition = outer.step(action)
            raw = transition.reward
            normalized = rnorm.update(raw) if rnorm is not None else raw
            # store the pre-clip action: log_prob is its exact density, and
            # the update's ratios must see the same sample. The outer task is
            # continuing, so segment ends bootstrap and never reset.
            buffer.add(state, action, log_prob, normalized, value, reset=False)
            state = transition.next_state
            if len(buffer) >= hp.segment_length:
                buffer.bootstrap_value = policy.value(state)
                buffer.finalize(hp.gamma, hp.lam)
                if config.mode is Mode.REIN2_PPO:
                    _, last_stats = meta.ppo_update(policy, buffer, hp, shuffle_rng)
                else:
                    _, last_stats = meta.a2c_update(policy, buffer, hp)
                buffer.clear()
            best = max(best, raw)
            report = transition.eval_report
            inner_steps_cum += report.total_inner_steps
            log.records.append(
                StepRecord(
                    outer_step=t,
                    inner_env_steps_cum=inner_steps_cum,
                    raw_reward=raw,
                    normalized_reward=normalized,
                    best_so_far=best,
                    eval_return_min=float(min(report.episode_returns)),
                    eval_return_max=float(max(report.episode_returns)),
                    eval_len_mean=float(np.mean(report.episode_lengths)),
                    loss_policy=last_stats.loss_policy if last_stats else math.nan,
                    loss_value=last_stats.loss_value if last_stats else math.nan,
                    entropy=last_stats.entropy if last_stats else math.nan,
                    approx_kl=last_stats.approx_kl if last_stats else math.nan,
                    wall_ms=(time.perf_counter() - t0) * 1000.0,
                    eval_total_steps=report.total_inner_steps,
                )
            )
    except meta.NumericalAbortError as exc:
        raise NumericalAbort(str(exc), log) from exc
    return log


def _evaluate_stochastic(
    policy: meta.CategoricalPolicy, env_name: EnvName, n_episodes: int, seed: int
) -> inner.EvalReport:
    """Sampled-action counterpart of inner.evaluate, for baseline logging."""
    seeds = [inner.episode_seed(seed, i) for i in range(n_episodes)]
    rngs = [derive_rng(s, STREAM_EVAL_STOCH) for s in seeds]
    batch = BatchEnv(env_name, seeds)
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes, dtype=np.int64)
    active = np.arange(n_episodes)
    while active.size:
        obs = batch.observations_for(active)
        ls = meta.log_softmax(policy.logits_batch(obs))
        cum = np.cumsum(np.exp(ls), axis=1)
        u = np.array([rngs[j].random() for j in active])
        actions = np.minimum(
            (u[:, None] >= cum).sum(axis=1), policy.n_actions - 1
        )
        rewards, terminated, truncated = batch.step_subset(active, actions)
        returns[active] += rewards
        lengths[active] += 1
        active = active[~(terminated | truncated)]
    return inner.EvalReport(
        episode_returns=tuple(float(r) for r in returns),
        episode_lengths=tuple(int(n) for n in lengths),
        mean_return=float(np.mean(returns)),
        total_inner_steps=int(lengths.sum()),
    )


def baseline_eval_points(config: ExperimentConfig) -> list[int]:
    """Env-step counts at which the baseline pauses to evaluate."""
    budget = config.outer_budget
    points = set(range(config.eval_cadence, budget + 1, config.eval_cadence))
    points.update(s for s in config.snapshot_steps if s <= budget)
    points.add(budget)
    return sorted(points)


def run_baseline(config: ExperimentConfig, seed: int) -> RunLog:
    """Train a categorical policy directly on the inner environment.

    The log's step axis is the cumulative env-step count; at each
    evaluation point the greedy policy is scored with N fresh episodes
    (raw_reward) and the stochastic policy alongside (kept off the CSV).
    """
    if config.mode.is_rein2:
        raise ValueError(f"run_baseline requires a baseline mode, got {config.mode.value}")
    hp = config.hyperparams
    env_spec = ENV_SPECS[config.env]
    policy = meta.CategoricalPolicy(env_spec.obs_dim, env_spec.n_actions, seed=seed)
    act_rng = derive_rng(seed, STREAM_ACTIONS)
    shuffle_rng = derive_rng(seed, STREAM_SHUFFLE)
    env = make_env(config.env, derive_seed(seed, STREAM_TRAIN_ENV))
    buffer = meta.RolloutBuffer()
    log = RunLog(config=config.to_dict(), seed=seed)
    eval_points = baseline_eval_points(config)
    greedy_policy = lambda: inner.InnerPolicy(policy.actor_spec, policy.actor_params)

    obs = env.reset()
    best = -math.inf
    last_stats: meta.UpdateStats | None = None
    eval_idx = 0
    t0 = time.perf_counter()
    try:
        for step in range(1, config.outer_budget + 1):
            action, log_prob = meta.categorical_act(policy, obs, act_rng)
            value = policy.value(obs)
            outcome = env.step(action)
            done = outcome.terminated or outcome.truncated
            buffer.add(obs, action, log_prob, outcome.reward, value, reset=done)
            obs = env.reset() if done else outcome.observation
            if len(buffer) >= hp.segment_length:
                buffer.bootstrap_value = 0.0 if done else policy.value(obs)
                buffer.finalize(hp.gamma, hp.lam)
                if config.mode is Mode.BASELINE_PPO:
                    _, last_stats = meta.ppo_update(policy, buffer, hp, shuffle_rng)
                else:
                    _, last_stats = meta.a2c_update(policy, buffer, hp)
                buffer.clear()
            if eval_idx < len(eval_points) and step == eval_points[eval_idx]:
                eval_seed_greedy = (
                    derive_seed(seed, STREAM_EVAL_GREEDY, 0)
                    if config.fixed_eval_seeds
                    else derive_seed(seed, STREAM_EVAL_GREEDY, eval_idx)
                )
                eval_seed_stoch = (
                    derive_seed(seed, STREAM_EVAL_STOCH, 0)
                    if config.fixed_eval_seeds
                    else derive_seed(seed, STREAM_EVAL_STOCH, eval_idx)
                )
                report = inner.evaluate(
                    greedy_policy(), config.env, config.n_eval_episodes, eval_seed_greedy
                )
                stoch = _evaluate_stochastic(
                    policy, config.env, config.n_eval_episodes, eval_seed_stoch
                )
                best = max(best, report.mean_return)
                log.records.append(
                    StepRecord(
                        outer_step=step,
                        inner_env_steps_cum=step,
                        raw_reward=report.mean_return,
                        normalized_reward=math.nan,
                        best_so_far=best,
                        eval_return_min=float(min(report.episode_returns)),
                        eval_return_max=float(max(report.episode_returns)),
                        eval_len_mean=float(np.mean(report.episode_lengths)),
                        loss_policy=last_stats.loss_policy if last_stats else math.nan,
                        loss_value=last_stats.loss_value if last_stats else math.nan,
                        entropy=last_stats.entropy if last_stats else math.nan,
                        approx_kl=last_stats.approx_kl if last_stats else math.nan,
                        wall_ms=(time.perf_counter() - t0) * 1000.0,
                        eval_total_steps=report.total_inner_steps,
                        stochastic_reward=stoch.mean_return,
                    )
                )
                eval_idx += 1
                t0 = time.perf_counter()
    except meta.NumericalAbortError as exc:
        raise NumericalAbort(str(exc), log) from exc
    return log


def run_one(config: ExperimentConfig, seed: int) -> RunLog:
    if config.mode.is_rein2:
        return run_rein2(config, seed)
    return run_baseline(config, seed)


def _worker(payload) -> RunLog:
    config, seed = payload
    return run_one(config, seed)


def max_workers() -> int:
    cap = os.environ.get("REIN2_THREADS")
    cpu = os.cpu_count() or 1
    if cap is not None:
        try:
            return max(1, min(int(cap), cpu))
        except ValueError:
            return 1
    return cpu


def run_seeds(config: ExperimentConfig) -> list[RunLog]:
    """One run per configured seed; seeds run in parallel workers when allowed."""
    workers = min(max_workers(), len(config.seeds))
    if workers <= 1 or len(config.seeds) == 1:
        return [run_one(config, s) for s in config.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, [(config, s) for s in config.seeds]))


# --------------------------------------------------------------------------
# Aggregation and reporting

def exponential_smooth(values: np.ndarray, factor: float) -> np.ndarray:
    """EMA with s_0 = x_0; factor 0 returns the input unchanged."""
    if not 0.0 <= factor < 1.0:
        raise ValueError("smoothing factor must be in [0, 1)")
    out = np.empty_like(np.asarray(values, dtype=np.float64))
    acc = 0.0
    for i, x in enumerate(values):
        acc = x if i == 0 else factor * acc + (1.0 - factor) * x
        out[i] = acc
    return out


@dataclass(frozen=True)
class AggregateCurve:
    label: str
    steps: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    smoothed: np.ndarray
    inner_steps_mean: np.ndarray
    n_seeds: int
    config: dict


def aggregate_seeds(logs: list[RunLog], label: str | None = None) -> AggregateCurve:
    """Per-step mean and min/max envelope across seeds, plus a smoothed mean."""
    if not logs:
        raise ValueError("no logs to aggregate")
    reference = logs[0].config
    for log in logs[1:]:
        if log.config != reference:
            raise ValueError("logs were produced by different configs")
    steps = logs[0].steps()
    for log in logs[1:]:
        if not np.array_equal(log.steps(), steps):
            raise ValueError("logs have mismatched step grids")
    rewards = np.stack([log.raw_rewards() for log in logs])
    inner_steps = np.stack(
        [[r.inner_env_steps_cum for r in log.records] for log in logs]
    ).astype(np.float64)
    mean = rewards.mean(axis=0)
    smoothing = float(reference.get("smoothing", 0.0))
    return AggregateCurve(
        label=label or f"{reference['env']}/{reference['mode']}",
        steps=steps,
        mean=mean,
        lo=rewards.min(axis=0),
        hi=rewards.max(axis=0),
        smoothed=exponential_smooth(mean, smoothing),
        inner_steps_mean=inner_steps.mean(axis=0),
        n_seeds=len(logs),
        config=reference,
    )


def curve_to_tsv(curve: AggregateCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write("step\tmean\tlo\thi\tsmoothed\tinner_steps_mean\n")
        for i in range(len(curve.steps)):
            fh.write(
                f"{curve.steps[i]}\t{curve.mean[i]!r}\t{curve.lo[i]!r}\t"
                f"{curve.hi[i]!r}\t{curve.smoothed[i]!r}\t{curve.inner_steps_mean[i]!r}\n"
            )


@dataclass(frozen=True)
class SnapshotTable:
    steps: tuple[int, ...]
    labels: tuple[str, ...]
    values: np.ndarray  # (rows, cols) mean raw reward
    inner_steps: np.ndarray  # (rows, cols) mean cumulative inner env steps
    is_best: np.ndarray  # (rows, cols) column-max markers

    def render_text(self) -> str:
        header = ["algorithm"] + [f"step {s}" for s in self.steps]
        rows = [header]
        for r, label in enumerate(self.labels):
            cells = [label]
            for c in range(len(self.steps)):
                mark = "*" if self.is_best[r, c] else ""
                cells.append(f"{self.values[r, c]:.2f}{mark} [inner={int(self.inner_steps[r, c])}]")
            rows.append(cells)
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
        lines.append("* column best; [inner=n] = mean cumulative inner env steps at that point")
        return "\n".join(lines)

    def to_tsv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("algorithm\t" + "\t".join(str(s) for s in self.steps) + "\n")
            for r, label in enumerate(self.labels):
                fh.write(label + "\t" + "\t".join(repr(v) for v in self.values[r]) + "\n")


def snapshot_table(curves: list[AggregateCurve], steps: list[int]) -> SnapshotTable:
    """Mean raw reward of every curve at the requested logged steps."""
    if not curves:
        raise ValueError("no curves given")
    values = np.zeros((len(curves), len(steps)))
    inner_steps = np.zeros_like(values)
    for r, curve in enumerate(curves):
        lookup = {int(s): i for i, s in enumerate(curve.steps)}
        for c, step in enumerate(steps):
            if int(step) not in lookup:
                raise ValueError(f"step {step} was not logged by curve {curve.label!r}")
            values[r, c] = curve.mean[lookup[int(step)]]
            inner_steps[r, c] = curve.inner_steps_mean[lookup[int(step)]]
    is_best = values == values.max(axis=0, keepdims=True)
    return SnapshotTable(
        steps=tuple(int(s) for s in steps),
        labels=tuple(curve.label for curve in curves),
        values=values,
        inner_steps=inner_steps,
        is_best=is_best,
    )


@dataclass(frozen=True)
class SweepReport:
    fractions: tuple[float, ...]
    mask_sizes: tuple[int, ...]
    curves: tuple[AggregateCurve, ...]


def run_rbv_sweep(config: ExperimentConfig, fractions: list[float]) -> SweepReport:
    """run_rein2 across fractions x seeds; one aggregate curve per fraction.

    Fractions above 0.5 are rejected: the full-width state space is out of
    its practical range.
    """
    if not fractions:
        raise ValueError("no fractions given")
    for f in fractions:
        if not 0.0 < f <= 0.5:
            raise ValueError(f"sweep fractions must be in (0, 0.5], got {f}")
    if not config.mode.is_rein2:
        raise ValueError("run_rbv_sweep requires a rein2 mode")
    curves = []
    mask_sizes = []
    for f in fractions:
        cfg = with_updates(config, rbv_fraction=f)
        logs = run_seeds(cfg)
        curves.append(aggregate_seeds(logs, label=f"rbv={f:g}"))
        mask_sizes.append(cfg.mask_size())
    return SweepReport(
        fractions=tuple(float(f) for f in fractions),
        mask_sizes=tuple(mask_sizes),
        curves=tuple(curves),
    )
