"""Policy-gradient learners: PPO and A2C over Gaussian or categorical heads.

The Gaussian variant trains the meta-learner on the continuous weight
space; the categorical variant trains the direct baselines on the inner
environments.  Both share the rollout buffer, generalized advantage
estimation, and an Adam optimizer over flat parameter vectors, with all
gradients computed analytically through the dense-network engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .seeding import STREAM_ACTOR, STREAM_CRITIC, derive_seed

LOG_2PI = math.log(2.0 * math.pi)
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


class NumericalAbortError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class MetaHyperparams:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    epochs_per_update: int = 10
    minibatch_size: int = 16
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    segment_length: int = 16

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        for name in ("clip_eps", "learning_rate", "value_coef", "max_grad_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("epochs_per_update", "minibatch_size", "segment_length"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")


@dataclass
class UpdateStats:
    loss_policy: float
    loss_value: float
    entropy: float
    approx_kl: float
    grad_norm: float


class Adam:
    """First/second-moment adaptive steps over one flat parameter vector."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RolloutBuffer:
    """Parallel arrays for one on-policy segment.

    ``resets`` marks steps after which the underlying episode ended (the
    next stored state starts a fresh episode); the advantage recursion is
    cut there.  ``bootstrap_value`` is the critic's estimate for the state
    following the final step, used when the segment ends mid-episode.
    """

    def __init__(self):
        self.clear()

    def clear(self) -> None:
        self.states: list[np.ndarray] = []
        self.actions: list = []
        self.log_probs: list[float] = []
        self.rewards: list[float] = []
        self.values: list[float] = []
        self.resets: list[bool] = []
        self.bootstrap_value = 0.0
        self.advantages: np.ndarray | None = None
        self.returns: np.ndarray | None = None
        self.normalized_advantages: np.ndarray | None = None

    def add(self, state, action, log_prob, reward, value, reset) -> None:
        self.states.append(np.asarray(state, dtype=np.float64))
        self.actions.append(action)
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.resets.append(bool(reset))

    def __len__(self) -> int:
        return len(self.rewards)

    def finalize(self, gamma: float, lam: float):
        self.advantages, self.returns = compute_gae(self, gamma, lam)
        return self.advantages, self.returns


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """delta_t = r_t + gamma*V_{t+1}*(1-reset_t) - V_t, discounted-sum into advantages.

    Returns (advantages, returns) with returns = advantages + values.
    """
    n = len(buffer)
    if n == 0:
        raise ValueError("cannot compute advantages of an empty buffer")
    rewards = np.asarray(buffer.rewards)
    values = np.asarray(buffer.values)
    resets = np.asarray(buffer.resets, dtype=bool)
    advantages = np.empty(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonreset = 0.0 if resets[t] else 1.0
        v_next = buffer.bootstrap_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * v_next * nonreset - values[t]
        last = delta + gamma * lam * nonreset * last
        advantages[t] = last
    return advantages, advantages + values


# --------------------------------------------------------------------------
# Policies

class GaussianPolicy:
    """Diagonal-Gaussian actor with state-independent log-stds, plus a critic.

    ``action_anchor`` centres the initial action distribution: the final
    actor layer's weights are scaled down and its biases set to the anchor,
    so the first emitted actions explore around that point.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden: tuple[int, ...] = (64, 64),
        seed: int = 0,
        action_anchor: np.ndarray | None = None,
        log_std_init: float = -0.5,
    ):
        self.actor_spec = nn.MlpSpec((state_dim, *hidden, action_dim), "tanh")
        self.critic_spec = nn.MlpSpec((state_dim, *hidden, 1), "tanh")
        self.actor_params = nn.init_params(self.actor_spec, derive_seed(seed, STREAM_ACTOR))
        self.critic_params = nn.init_params(self.critic_spec, derive_seed(seed, STREAM_CRITIC))
        if action_anchor is not None:
            anchor = np.asarray(action_anchor, dtype=np.float64)
            if anchor.shape != (action_dim,):
                raise ValueError("action_anchor must have one entry per action dimension")
            w_last, b_last = nn.unflatten(self.actor_spec, self.actor_params)[-1]
            w_last *= 0.01
            b_last[:] = anchor
        self.log_std = np.full(action_dim, float(log_std_init))
        self._adam: dict[str, Adam] | None = None

    @property
    def action_dim(self) -> int:
        return self.actor_spec.n_outputs

    def action_means(self, states: np.ndarray) -> np.ndarray:
        return nn.forward_batch(self.actor_spec, self.actor_params, states)

    def action_mean(self, state: np.ndarray) -> np.ndarray:
        return nn.forward(self.actor_spec, self.actor_params, state)

    def values(self, states: np.ndarray) -> np.ndarray:
        return nn.forward_batch(self.critic_spec, self.critic_params, states)[:, 0]

    def value(self, state: np.ndarray) -> float:
        return float(nn.forward(self.critic_spec, self.critic_params, state)[0])


class CategoricalPolicy:
    """Softmax actor over a discrete action set, plus a critic."""

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        hidden: tuple[int, ...] = (64, 64),
        seed: int = 0,
    ):
        self.actor_spec = nn.MlpSpec((obs_dim, *hidden, n_actions), "tanh")
        self.critic_spec = nn.MlpSpec((obs_dim, *hidden, 1), "tanh")
        self.actor_params = nn.init_params(self.actor_spec, derive_seed(seed, STREAM_ACTOR))
        self.critic_params = nn.init_params(self.critic_spec, derive_seed(seed, STREAM_CRITIC))
        self._adam: dict[str, Adam] | None = None

    @property
    def n_actions(self) -> int:
        return self.actor_spec.n_outputs

    def logits(self, obs: np.ndarray) -> np.ndarray:
        return nn.forward(self.actor_spec, self.actor_params, obs)

    def logits_batch(self, obs: np.ndarray) -> np.ndarray:
        return nn.forward_batch(self.actor_spec, self.actor_params, obs)

    def values(self, states: np.ndarray) -> np.ndarray:
        return nn.forward_batch(self.critic_spec, self.critic_params, states)[:, 0]

    def value(self, state: np.ndarray) -> float:
        return float(nn.forward(self.critic_spec, self.critic_params, state)[0])


def gaussian_log_prob(means: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Exact diagonal-Gaussian log densities, one per row."""
    z = (actions - means) / np.exp(log_std)
    m = log_std.shape[0]
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * m * LOG_2PI


def gaussian_act(
    policy: GaussianPolicy, state: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Sample action ~ Normal(actor(state), exp(log_std)); log-prob is pre-clip."""
    mean = policy.action_mean(state)
    action = mean + np.exp(policy.log_std) * rng.standard_normal(policy.action_dim)
    log_prob = float(gaussian_log_prob(mean[None, :], policy.log_std, action[None, :])[0])
    return action, log_prob


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def categorical_act(
    policy: CategoricalPolicy,
    obs: np.ndarray,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> tuple[int, float]:
    """Sample from softmax(logits); deterministic mode returns the argmax."""
    logits = policy.logits(obs)
    ls = log_softmax(logits)
    if deterministic:
        action = int(np.argmax(logits))
    else:
        p = np.exp(ls)
        u = rng.random()
        action = int(min(np.searchsorted(np.cumsum(p), u, side="right"), policy.n_actions - 1))
    return action, float(ls[action])


# --------------------------------------------------------------------------
# Losses and updates

def _batch_arrays(buffer: RolloutBuffer):
    states = np.stack([np.atleast_1d(s) for s in buffer.states])
    first = buffer.actions[0]
    if np.isscalar(first) or np.asarray(first).ndim == 0:
        actions = np.asarray(buffer.actions, dtype=np.int64)
    else:
        actions = np.stack(buffer.actions)
    old_log_probs = np.asarray(buffer.log_probs)
    return states, actions, old_log_probs


def _loss_and_grads(policy, states, actions, old_logp, advantages, returns, hp, surrogate):
    """Total loss, flat grads per block, and diagnostics for one (mini)batch.

    surrogate: "ppo" for the clipped-ratio objective, "a2c" for plain
    log-prob weighting.  The loss is minimized; the policy term descends
    the negated objective, the value term is an MSE, entropy is a bonus.
    """
    n = states.shape[0]
    is_gaussian = isinstance(policy, GaussianPolicy)

    if is_gaussian:
        means = policy.action_means(states)
        std = np.exp(policy.log_std)
        z = (actions - means) / std
        logp = gaussian_log_prob(means, policy.log_std, actions)
        entropy = float(np.sum(policy.log_std) + 0.5 * policy.action_dim * (1.0 + LOG_2PI))
    else:
        logits = policy.logits_batch(states)
        ls = log_softmax(logits)
        probs = np.exp(ls)
        logp = ls[np.arange(n), actions]
        ent_per = -np.sum(probs * ls, axis=1)
        entropy = float(np.mean(ent_per))

    if surrogate == "ppo":
        ratio = np.exp(logp - old_logp)
        surr1 = ratio * advantages
        surr2 = np.clip(ratio, 1.0 - hp.clip_eps, 1.0 + hp.clip_eps) * advantages
        policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
        unclipped = surr1 <= surr2
        d_loss_d_logp = -(advantages * ratio * unclipped) / n
    else:
        policy_loss = -float(np.mean(logp * advantages))
        d_loss_d_logp = -advantages / n

    vpred = policy.values(states)
    value_err = vpred - returns
    value_loss = float(np.mean(value_err**2))
    total = policy_loss + hp.value_coef * value_loss - hp.entropy_coef * entropy

    if is_gaussian:
        g_mean = d_loss_d_logp[:, None] * (z / std)
        g_actor = nn.backward_batch(policy.actor_spec, policy.actor_params, states, g_mean)
        g_log_std = np.sum(d_loss_d_logp[:, None] * (z * z - 1.0), axis=0)
        g_log_std -= hp.entropy_coef * np.ones(policy.action_dim)
    else:
        onehot = np.zeros_like(probs)
        onehot[np.arange(n), actions] = 1.0
        g_logits = d_loss_d_logp[:, None] * (onehot - probs)
        g_logits += hp.entropy_coef * probs * (ls + ent_per[:, None]) / n
        g_actor = nn.backward_batch(policy.actor_spec, policy.actor_params, states, g_logits)
        g_log_std = None

    g_v = (hp.value_coef * 2.0 * value_err / n)[:, None]
    g_critic = nn.backward_batch(policy.critic_spec, policy.critic_params, states, g_v)

    grads = {"actor": g_actor, "critic": g_critic}
    if g_log_std is not None:
        grads["log_std"] = g_log_std
    stats = {
        "loss_policy": policy_loss,
        "loss_value": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(old_logp - logp)),
    }
    return total, grads, stats


def total_loss(policy, states, actions, old_logp, advantages, returns, hp, surrogate) -> float:
    """The scalar objective _loss_and_grads differentiates (for gradient checks)."""
    loss, _, _ = _loss_and_grads(policy, states, actions, old_logp, advantages, returns, hp, surrogate)
    return loss


def _global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def _apply_grads(policy, grads: dict[str, np.ndarray], hp: MetaHyperparams) -> float:
    norm = _global_norm(grads)
    if not np.isfinite(norm):
        raise NumericalAbortError(f"non-finite gradient norm {norm}")
    scale = 1.0
    if norm > hp.max_grad_norm:
        scale = hp.max_grad_norm / (norm + 1e-6)
    if policy._adam is None:
        policy._adam = {name: Adam(hp.learning_rate) for name in ("actor", "critic", "log_std")}
    policy.actor_params = policy._adam["actor"].step(policy.actor_params, grads["actor"] * scale)
    policy.critic_params = policy._adam["critic"].step(policy.critic_params, grads["critic"] * scale)
    if "log_std" in grads:
        policy.log_std = policy._adam["log_std"].step(policy.log_std, grads["log_std"] * scale)
        np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=policy.log_std)
    return norm


def _require_finalized(buffer: RolloutBuffer) -> None:
    if len(buffer) == 0:
        raise ValueError("buffer is empty")
    if buffer.advantages is None or buffer.returns is None:
        raise ValueError("advantages not computed; call buffer.finalize() first")


def ppo_update(
    policy, buffer: RolloutBuffer, hp: MetaHyperparams, rng: np.random.Generator
):
    """Clipped-surrogate ascent over shuffled minibatches for several epochs.

    Advantages are normalized to zero mean / unit std across the whole
    buffer before the epochs run.  Returns the (mutated) policy and the
    mean diagnostics across all minibatches.
    """
    _require_finalized(buffer)
    states, actions, old_logp = _batch_arrays(buffer)
    adv = buffer.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    buffer.normalized_advantages = adv
    returns = buffer.returns
    n = len(buffer)
    collected: list[dict] = []
    norms: list[float] = []
    for _ in range(hp.epochs_per_update):
        perm = rng.permutation(n)
        for start in range(0, n, hp.minibatch_size):
            mb = perm[start : start + hp.minibatch_size]
            loss, grads, stats = _loss_and_grads(
                policy, states[mb], actions[mb], old_logp[mb], adv[mb], returns[mb], hp, "ppo"
            )
            if not np.isfinite(loss):
                raise NumericalAbortError(f"non-finite PPO loss {loss}")
            norms.append(_apply_grads(policy, grads, hp))
            collected.append(stats)
    return policy, _mean_stats(collected, norms)


def a2c_update(policy, buffer: RolloutBuffer, hp: MetaHyperparams):
    """One gradient step on the whole segment (no ratio, raw advantages)."""
    _require_finalized(buffer)
    states, actions, old_logp = _batch_arrays(buffer)
    loss, grads, stats = _loss_and_grads(
        policy, states, actions, old_logp, buffer.advantages, buffer.returns, hp, "a2c"
    )
    if not np.isfinite(loss):
        raise NumericalAbortError(f"non-finite A2C loss {loss}")
    norm = _apply_grads(policy, grads, hp)
    return policy, _mean_stats([stats], [norm])


def _mean_stats(collected: list[dict], norms: list[float]) -> UpdateStats:
    return UpdateStats(
        loss_policy=float(np.mean([s["loss_policy"] for s in collected])),
        loss_value=float(np.mean([s["loss_value"] for s in collected])),
        entropy=float(np.mean([s["entropy"] for s in collected])),
        approx_kl=float(np.mean([s["approx_kl"] for s in collected])),
        grad_norm=float(np.mean(norms)),
    )


class RunningNorm:
    """Welford running mean/std normalizer for scalar reward streams."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def update(self, x: float) -> float:
        """Fold x into the statistics, then return its normalized value."""
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)
        return (x - self.mean) / (self.std + 1e-8)

    @property
    def std(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self._m2 / self.count)
