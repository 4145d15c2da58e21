"""Command-line entry points.

Subcommands: train-rein2, train-baseline, sweep-rbv, report, selftest.
Flags mirror the config-file fields; when both are given, flags win.
Exit codes: 0 ok, 1 config error, 2 numerical abort, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, inner, meta, nn
from .config import ConfigError, ExperimentConfig, Mode, config_from_dict, load_config
from .envs import EnvName, make_env
from .outer_env import OuterEnv, make_mask
from .seeding import derive_seed


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--env", type=str, default=None, help="CartPole-v1 | Acrobot-v1 | MountainCar-v0")
    parser.add_argument("--rbv-fraction", type=float, default=None)
    parser.add_argument("--n-eval-episodes", type=int, default=None)
    parser.add_argument("--outer-budget", type=int, default=None)
    parser.add_argument("--seeds", type=str, default=None, help="comma-separated, e.g. 0,1,2")
    parser.add_argument("--a-max", type=float, default=None)
    parser.add_argument("--fixed-eval-seeds", action="store_true", default=None)
    parser.add_argument("--eval-cadence", type=int, default=None)
    parser.add_argument("--smoothing", type=float, default=None)
    parser.add_argument("--outer-horizon", type=int, default=None)
    parser.add_argument("--log-std-init", type=float, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--segment-length", type=int, default=None)
    parser.add_argument("--entropy-coef", type=float, default=None)
    parser.add_argument("--out", type=str, default="runs", help="output directory")


def _build_config(args, mode: Mode) -> ExperimentConfig:
    overrides = {
        "mode": mode.value,
        "env": args.env,
        "rbv_fraction": args.rbv_fraction,
        "n_eval_episodes": args.n_eval_episodes,
        "outer_budget": args.outer_budget,
        "seeds": [int(s) for s in args.seeds.split(",")] if args.seeds else None,
        "a_max": args.a_max,
        "fixed_eval_seeds": args.fixed_eval_seeds,
        "eval_cadence": args.eval_cadence,
        "smoothing": args.smoothing,
        "outer_horizon": args.outer_horizon,
        "log_std_init": args.log_std_init,
        "hyperparams": {
            "learning_rate": args.learning_rate,
            "segment_length": args.segment_length,
            "entropy_coef": args.entropy_coef,
        },
    }
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict({}, overrides)


def _run_and_write(config: ExperimentConfig, out_dir: Path) -> list[harness.RunLog]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{config.env.value}_{config.mode.value}"
    harness.write_sidecar(config, out_dir / f"{stem}.config.json")
    logs = []
    for seed in config.seeds:
        try:
            log = harness.run_one(config, seed)
        except harness.NumericalAbort as exc:
            exc.partial_log.write_csv(out_dir / f"{stem}_seed{seed}.partial.csv")
            raise
        log.write_csv(out_dir / f"{stem}_seed{seed}.csv")
        logs.append(log)
        final = log.records[-1].raw_reward if log.records else float("nan")
        print(f"[{stem} seed={seed}] {len(log.records)} records, final raw_reward={final:.2f}")
    curve = harness.aggregate_seeds(logs)
    harness.curve_to_tsv(curve, out_dir / f"{stem}.curve.tsv")
    return logs


def _cmd_train(args, rein2: bool) -> int:
    mode = {
        (True, "ppo"): Mode.REIN2_PPO,
        (True, "a2c"): Mode.REIN2_A2C,
        (False, "ppo"): Mode.BASELINE_PPO,
        (False, "a2c"): Mode.BASELINE_A2C,
    }[(rein2, args.algo)]
    config = _build_config(args, mode)
    _run_and_write(config, Path(args.out))
    return harness.EXIT_OK


def _cmd_sweep(args) -> int:
    mode = Mode.REIN2_PPO if args.algo == "ppo" else Mode.REIN2_A2C
    config = _build_config(args, mode)
    fractions = [float(f) for f in args.fractions.split(",")]
    report = harness.run_rbv_sweep(config, fractions)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fraction, size, curve in zip(report.fractions, report.mask_sizes, report.curves):
        harness.curve_to_tsv(curve, out_dir / f"sweep_{config.env.value}_rbv{fraction:g}.tsv")
        print(f"rbv={fraction:g}: mask size {size}, final mean={curve.mean[-1]:.2f}")
    return harness.EXIT_OK


def _load_logs_for_report(paths: list[str]) -> dict[str, list[harness.RunLog]]:
    """Rebuild minimal run logs from CSVs, grouped by <env>_<mode> stem."""
    import csv as _csv

    groups: dict[str, list[harness.RunLog]] = {}
    for raw in paths:
        path = Path(raw)
        sidecar = path.parent / (path.name.split("_seed")[0] + ".config.json")
        config = {}
        if sidecar.exists():
            config = json.loads(sidecar.read_text())["config"]
        log = harness.RunLog(config=config, seed=-1)
        with open(path) as fh:
            for row in _csv.DictReader(fh):
                log.records.append(
                    harness.StepRecord(
                        outer_step=int(row["outer_step"]),
                        inner_env_steps_cum=int(row["inner_env_steps_cum"]),
                        raw_reward=float(row["raw_reward"]),
                        normalized_reward=float(row["normalized_reward"]),
                        best_so_far=float(row["best_so_far"]),
                        eval_return_min=float(row["eval_return_min"]),
                        eval_return_max=float(row["eval_return_max"]),
                        eval_len_mean=float(row["eval_len_mean"]),
                        loss_policy=float(row["loss_policy"]),
                        loss_value=float(row["loss_value"]),
                        entropy=float(row["entropy"]),
                        approx_kl=float(row["approx_kl"]),
                        wall_ms=float(row["wall_ms"]),
                    )
                )
        groups.setdefault(path.name.split("_seed")[0], []).append(log)
    return groups


def _cmd_report(args) -> int:
    groups = _load_logs_for_report(args.logs)
    if not groups:
        print("no logs given", file=sys.stderr)
        return harness.EXIT_IO
    curves = [harness.aggregate_seeds(logs, label=stem) for stem, logs in sorted(groups.items())]
    steps = [int(s) for s in args.steps.split(",")]
    table = harness.snapshot_table(curves, steps)
    print(table.render_text())
    if args.out_tsv:
        table.to_tsv(args.out_tsv)
    return harness.EXIT_OK


def _check(name: str, ok: bool, failures: list[str]) -> None:
    print(f"  {'ok ' if ok else 'FAIL'} {name}")
    if not ok:
        failures.append(name)


def run_selftest() -> int:
    """Fast built-in invariant checks (the pytest suite is the full gate)."""
    failures: list[str] = []
    print("environment determinism and bounds:")
    for name in EnvName:
        rng = np.random.default_rng(0)
        seqs = []
        for _ in range(2):
            env = make_env(name, 123)
            obs = env.reset()
            trace = [obs.copy()]
            ret = 0.0
            r = np.random.default_rng(7)
            for _ in range(300):
                out = env.step(int(r.integers(env.spec.n_actions)))
                trace.append(out.observation.copy())
                ret += out.reward
                if out.terminated or out.truncated:
                    break
            seqs.append((np.concatenate(trace), ret))
        _check(f"{name.value} replay", np.array_equal(seqs[0][0], seqs[1][0]), failures)
        lo = -env.spec.max_episode_steps if name is not EnvName.CARTPOLE_V1 else 1
        hi = -1 if name is not EnvName.CARTPOLE_V1 else env.spec.max_episode_steps
        _check(f"{name.value} return bounds", lo <= seqs[0][1] <= hi, failures)

    print("outer-environment identities:")
    spec = nn.MlpSpec((4, 8, 2))
    base = nn.init_params(spec, 5)
    mask = make_mask(nn.param_count(spec), 0.1, 3)
    outer = OuterEnv(EnvName.CARTPOLE_V1, spec, base, mask, n_eval_episodes=2, eval_seed=11)
    outer.reset()
    rng = np.random.default_rng(2)
    prev = base[mask.indices].copy()
    ok_state = ok_reward = ok_offmask = True
    for _ in range(20):
        action = rng.normal(size=outer.m) * 2.0
        tr = outer.step(action)
        clipped = np.clip(action, -outer.a_max, outer.a_max)
        ok_state &= np.array_equal(tr.next_state, clipped - prev)
        ok_reward &= tr.reward == float(np.mean(tr.eval_report.episode_returns))
        full = np.asarray(outer.base_params)
        ok_offmask &= np.array_equal(np.delete(full, mask.indices), np.delete(base, mask.indices))
        prev = clipped
    _check("state diff identity", ok_state, failures)
    _check("reward equals mean of inner returns", ok_reward, failures)
    _check("off-mask weights untouched", ok_offmask, failures)

    print("advantage estimation identities:")
    buf = meta.RolloutBuffer()
    r = np.random.default_rng(9)
    for _ in range(12):
        buf.add(np.zeros(1), 0, 0.0, float(r.normal()), float(r.normal()), False)
    buf.bootstrap_value = 0.0
    adv0, _ = meta.compute_gae(buf, 0.9, 0.0)
    deltas = [
        buf.rewards[t] + 0.9 * (buf.values[t + 1] if t < 11 else 0.0) - buf.values[t]
        for t in range(12)
    ]
    _check("lambda=0 collapses to TD errors", np.allclose(adv0, deltas, atol=1e-12), failures)
    buf2 = meta.RolloutBuffer()
    for _ in range(12):
        buf2.add(np.zeros(1), 0, 0.0, float(r.normal()), 0.0, False)
    adv1, _ = meta.compute_gae(buf2, 1.0, 1.0)
    _check(
        "gamma=lambda=1, zero values gives reward tails",
        np.allclose(adv1, np.cumsum(buf2.rewards[::-1])[::-1], atol=1e-12),
        failures,
    )

    print("distribution identities:")
    pol = meta.GaussianPolicy(3, 3, hidden=(8,), seed=1)
    state = np.zeros(3)
    mean = pol.action_mean(state)
    lp = meta.gaussian_log_prob(mean[None, :], pol.log_std, mean[None, :])[0]
    expect = -float(np.sum(pol.log_std)) - 1.5 * np.log(2 * np.pi)
    _check("gaussian log-density at the mean", abs(lp - expect) < 1e-12, failures)
    cat = meta.CategoricalPolicy(2, 3, hidden=(8,), seed=2)
    ls = meta.log_softmax(cat.logits(np.ones(2)))
    _check("softmax normalizes", abs(float(np.sum(np.exp(ls))) - 1.0) < 1e-12, failures)

    print("network arithmetic:")
    _check("param_count [4,64,64,2] = 4610", nn.param_count(nn.MlpSpec((4, 64, 64, 2))) == 4610, failures)
    _check("param_count [2,64,64,3] = 4547", nn.param_count(nn.MlpSpec((2, 64, 64, 3))) == 4547, failures)

    if failures:
        print(f"selftest: {len(failures)} check(s) failed")
        return harness.EXIT_NUMERICAL
    print("selftest: all checks passed")
    return harness.EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="rein2", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train-rein2", help="train a weight-emitting meta-learner")
    p_train.add_argument("--algo", choices=("ppo", "a2c"), default="ppo")
    _add_config_flags(p_train)

    p_base = sub.add_parser("train-baseline", help="train a direct PPO/A2C baseline")
    p_base.add_argument("--algo", choices=("ppo", "a2c"), default="ppo")
    _add_config_flags(p_base)

    p_sweep = sub.add_parser("sweep-rbv", help="run the mask-fraction sweep")
    p_sweep.add_argument("--algo", choices=("ppo", "a2c"), default="ppo")
    p_sweep.add_argument("--fractions", type=str, default="0.01,0.1,0.2,0.5")
    _add_config_flags(p_sweep)

    p_report = sub.add_parser("report", help="snapshot table from run CSVs")
    p_report.add_argument("logs", nargs="+", help="run CSV files")
    p_report.add_argument("--steps", type=str, required=True, help="comma-separated step columns")
    p_report.add_argument("--out-tsv", type=str, default=None)

    sub.add_parser("selftest", help="run the built-in invariant checks")

    args = parser.parse_args(argv)
    try:
        if args.command == "train-rein2":
            return _cmd_train(args, rein2=True)
        if args.command == "train-baseline":
            return _cmd_train(args, rein2=False)
        if args.command == "sweep-rbv":
            return _cmd_sweep(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "selftest":
            return run_selftest()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except harness.NumericalAbort as exc:
        print(f"numerical abort: {exc} (partial log flushed)", file=sys.stderr)
        return harness.EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return harness.EXIT_IO
    return harness.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
