"""Frozen-weight Q-network policies and their multi-episode evaluator.

An inner-learner never trains: it is a finished artifact whose greedy
behaviour gets scored.  Evaluation runs N independently seeded episodes
and reports their returns; the mean is the reward signal handed upward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .envs import ENV_SPECS, BatchEnv, EnvName
from .seeding import derive_seed


@dataclass(frozen=True)
class InnerPolicy:
    """A Q-network with frozen parameters."""

    spec: nn.MlpSpec
    params: np.ndarray

    def __post_init__(self):
        if np.asarray(self.params).shape != (nn.param_count(self.spec),):
            raise ValueError("parameter vector does not match network spec")


@dataclass(frozen=True)
class EvalReport:
    """Outcome of one N-episode evaluation."""

    episode_returns: tuple[float, ...]
    episode_lengths: tuple[int, ...]
    mean_return: float
    total_inner_steps: int


def act_greedy(policy: InnerPolicy, obs: np.ndarray) -> int:
    """argmax over Q-values; ties break toward the lowest action index."""
    q = nn.forward(policy.spec, policy.params, obs)
    return int(np.argmax(q))


def episode_seed(eval_seed: int, episode_index: int) -> int:
    return derive_seed(eval_seed, episode_index)


def evaluate(policy: InnerPolicy, env_name: EnvName, n_episodes: int, seed: int) -> EvalReport:
    """Run n_episodes greedy episodes on fresh deterministically-seeded envs.

    Episode i uses a seed derived from (seed, i).  Episodes run in
    lockstep for speed; each row follows exactly the trajectory a
    standalone env with the same seed would produce.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    env_spec = ENV_SPECS[env_name]
    if policy.spec.n_inputs != env_spec.obs_dim or policy.spec.n_outputs != env_spec.n_actions:
        raise ValueError(
            f"policy {policy.spec.layer_sizes} does not match {env_name.value} "
            f"({env_spec.obs_dim} obs, {env_spec.n_actions} actions)"
        )
    seeds = [episode_seed(seed, i) for i in range(n_episodes)]
    batch = BatchEnv(env_name, seeds)
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes, dtype=np.int64)
    active = np.arange(n_episodes)
    while active.size:
        obs = batch.observations_for(active)
        q = nn.forward_batch(policy.spec, policy.params, obs)
        actions = np.argmax(q, axis=1)
        rewards, terminated, truncated = batch.step_subset(active, actions)
        returns[active] += rewards
        lengths[active] += 1
        active = active[~(terminated | truncated)]
    return EvalReport(
        episode_returns=tuple(float(r) for r in returns),
        episode_lengths=tuple(int(n) for n in lengths),
        mean_return=float(np.mean(returns)),
        total_inner_steps=int(lengths.sum()),
    )
