"""The weight-space MDP the meta-learner interacts with.

An action is a vector of inner-network weights restricted to a fixed
random index subset (the batch-vector mask); executing it means building
the full parameter vector, evaluating the resulting frozen policy for N
episodes, and returning the mean episode return as the reward.  States
are the componentwise difference between consecutive (clipped) actions,
zero at reset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import inner, nn
from .envs import ENV_SPECS, EnvName
from .seeding import derive_rng, derive_seed

DEFAULT_ACTION_CLIP = 5.0
DEFAULT_OUTER_HORIZON = 16


@dataclass(frozen=True)
class RbvMask:
    """Fixed, seeded subset of weight indices the meta-learner controls."""

    indices: np.ndarray
    fraction: float
    source_seed: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.shape[0])


def make_mask(k: int, fraction: float, seed: int) -> RbvMask:
    """ceil(fraction*k) distinct indices drawn uniformly, returned sorted."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    size = math.ceil(fraction * k)
    rng = derive_rng(seed)
    indices = np.sort(rng.choice(k, size=size, replace=False))
    return RbvMask(indices=indices, fraction=float(fraction), source_seed=int(seed))


def compose_params(
    base: np.ndarray, mask: RbvMask, action: np.ndarray, a_max: float = DEFAULT_ACTION_CLIP
) -> np.ndarray:
    """Copy of base with the masked entries replaced by the clipped action."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (len(mask),):
        raise ValueError(f"action length {action.shape} does not match mask size {len(mask)}")
    out = np.asarray(base, dtype=np.float64).copy()
    out[mask.indices] = np.clip(action, -a_max, a_max)
    return out


@dataclass(frozen=True)
class OuterTransition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    truncated: bool
    eval_report: inner.EvalReport


class OuterEnv:
    """One meta-training run's environment instance.

    Off-mask weights keep their initialization values for the whole run;
    the mask never changes.  ``truncated`` marks segment boundaries every
    ``horizon`` steps for the learner's rollout bookkeeping only -- nothing
    about the environment resets, the task is continuing.
    """

    def __init__(
        self,
        env_name: EnvName,
        inner_spec: nn.MlpSpec,
        base_params: np.ndarray,
        mask: RbvMask,
        n_eval_episodes: int,
        eval_seed: int,
        a_max: float = DEFAULT_ACTION_CLIP,
        horizon: int = DEFAULT_OUTER_HORIZON,
        fixed_eval_seeds: bool = False,
    ):
        k = nn.param_count(inner_spec)
        base_params = np.asarray(base_params, dtype=np.float64)
        if base_params.shape != (k,):
            raise ValueError("base_params does not match inner_spec")
        if len(mask) and (mask.indices[0] < 0 or mask.indices[-1] >= k):
            raise ValueError("mask indices out of range for inner_spec")
        if n_eval_episodes < 1:
            raise ValueError("n_eval_episodes must be >= 1")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        env_spec = ENV_SPECS[env_name]
        if inner_spec.n_inputs != env_spec.obs_dim or inner_spec.n_outputs != env_spec.n_actions:
            raise ValueError("inner_spec does not match the environment's interface")
        self.env_name = env_name
        self.inner_spec = inner_spec
        self.base_params = base_params.copy()
        self.base_params.setflags(write=False)
        self.mask = mask
        self.n_eval_episodes = int(n_eval_episodes)
        self.a_max = float(a_max)
        self.horizon = int(horizon)
        self.fixed_eval_seeds = bool(fixed_eval_seeds)
        self._eval_rng = derive_rng(eval_seed)
        self._fixed_seed = derive_seed(eval_seed, 0)
        self.prev_masked_action = self.base_params[mask.indices].copy()
        self.outer_elapsed = 0
        self._current_state = np.zeros(len(mask))

    @property
    def m(self) -> int:
        return len(self.mask)

    def _next_eval_seed(self) -> int:
        if self.fixed_eval_seeds:
            return self._fixed_seed
        return int(self._eval_rng.integers(0, 1 << 63))

    def reset(self) -> np.ndarray:
        self.prev_masked_action = self.base_params[self.mask.indices].copy()
        self.outer_elapsed = 0
        self._current_state = np.zeros(self.m)
        return self._current_state.copy()

    def step(self, action: np.ndarray) -> OuterTransition:
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.m,):
            raise ValueError(f"action must have shape ({self.m},), got {action.shape}")
        clipped = np.clip(action, -self.a_max, self.a_max)
        theta_full = compose_params(self.base_params, self.mask, clipped, self.a_max)
        report = inner.evaluate(
            inner.InnerPolicy(self.inner_spec, theta_full),
            self.env_name,
            self.n_eval_episodes,
            self._next_eval_seed(),
        )
        state = self._current_state
        next_state = clipped - self.prev_masked_action
        self.prev_masked_action = clipped.copy()
        self.outer_elapsed += 1
        self._current_state = next_state.copy()
        return OuterTransition(
            state=state,
            action=clipped.copy(),
            reward=report.mean_return,
            next_state=next_state,
            truncated=self.outer_elapsed % self.horizon == 0,
            eval_report=report,
        )
