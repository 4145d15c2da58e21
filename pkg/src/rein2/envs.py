"""Seedable implementations of the three classic-control tasks.

Dynamics, constants and episode rules follow the public reference
definitions of CartPole-v1, Acrobot-v1 and MountainCar-v0, in 64-bit
floats throughout.  All randomness sits in the initial-state draw; the
transition kernels are deterministic, so equal (name, seed, actions)
always replays the exact same trajectory.

One deliberate departure from the reference Acrobot: the reward is -1 on
*every* step, including the one that reaches the goal height, so episode
returns stay within [-500, -1].

The step kernels operate on (n, state_dim) arrays.  ``EnvInstance`` calls
them with n=1; ``BatchEnv`` runs many episodes in lockstep for fast
policy evaluation.  Both therefore share one source of truth for the
dynamics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .seeding import as_u64

PI = math.pi
TWO_PI = 2.0 * math.pi


class EnvName(enum.Enum):
    CARTPOLE_V1 = "CartPole-v1"
    ACROBOT_V1 = "Acrobot-v1"
    MOUNTAINCAR_V0 = "MountainCar-v0"

    @classmethod
    def parse(cls, name: str) -> "EnvName":
        for member in cls:
            if member.value == name:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown environment {name!r}; expected one of: {valid}")


@dataclass(frozen=True)
class EnvSpec:
    """Static facts about one environment.

    ``reward_range`` is the per-step reward interval (min, max).
    """

    name: EnvName
    obs_dim: int
    n_actions: int
    max_episode_steps: int
    reward_range: tuple[float, float]


ENV_SPECS: dict[EnvName, EnvSpec] = {
    EnvName.CARTPOLE_V1: EnvSpec(EnvName.CARTPOLE_V1, 4, 2, 500, (1.0, 1.0)),
    EnvName.ACROBOT_V1: EnvSpec(EnvName.ACROBOT_V1, 6, 3, 500, (-1.0, -1.0)),
    EnvName.MOUNTAINCAR_V0: EnvSpec(EnvName.MOUNTAINCAR_V0, 2, 3, 200, (-1.0, -1.0)),
}


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


# --------------------------------------------------------------------------
# CartPole: Euler-integrated cart-pole, failure on pole angle or track limit.

CART_GRAVITY = 9.8
CART_MASSCART = 1.0
CART_MASSPOLE = 0.1
CART_TOTAL_MASS = CART_MASSPOLE + CART_MASSCART
CART_LENGTH = 0.5  # half the pole length
CART_POLEMASS_LENGTH = CART_MASSPOLE * CART_LENGTH
CART_FORCE_MAG = 10.0
CART_TAU = 0.02
CART_THETA_THRESHOLD = 12.0 * 2.0 * PI / 360.0
CART_X_THRESHOLD = 2.4


def _cartpole_init(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(low=-0.05, high=0.05, size=(n, 4))


def _cartpole_step(states: np.ndarray, actions: np.ndarray):
    x = states[:, 0]
    x_dot = states[:, 1]
    theta = states[:, 2]
    theta_dot = states[:, 3]
    force = (2.0 * actions - 1.0) * CART_FORCE_MAG
    costheta = np.cos(theta)
    sintheta = np.sin(theta)
    temp = (force + CART_POLEMASS_LENGTH * theta_dot**2 * sintheta) / CART_TOTAL_MASS
    thetaacc = (CART_GRAVITY * sintheta - costheta * temp) / (
        CART_LENGTH * (4.0 / 3.0 - CART_MASSPOLE * costheta**2 / CART_TOTAL_MASS)
    )
    xacc = temp - CART_POLEMASS_LENGTH * thetaacc * costheta / CART_TOTAL_MASS
    new = np.empty_like(states)
    new[:, 0] = x + CART_TAU * x_dot
    new[:, 1] = x_dot + CART_TAU * xacc
    new[:, 2] = theta + CART_TAU * theta_dot
    new[:, 3] = theta_dot + CART_TAU * thetaacc
    terminated = (
        (new[:, 0] < -CART_X_THRESHOLD)
        | (new[:, 0] > CART_X_THRESHOLD)
        | (new[:, 2] < -CART_THETA_THRESHOLD)
        | (new[:, 2] > CART_THETA_THRESHOLD)
    )
    return new, terminated


# --------------------------------------------------------------------------
# MountainCar: underpowered car in a valley, goal at position >= 0.5.

MC_MIN_POSITION = -1.2
MC_MAX_POSITION = 0.6
MC_MAX_SPEED = 0.07
MC_GOAL_POSITION = 0.5
MC_GOAL_VELOCITY = 0.0
MC_FORCE = 0.001
MC_GRAVITY = 0.0025


def _mountaincar_init(rng: np.random.Generator, n: int) -> np.ndarray:
    states = np.zeros((n, 2))
    states[:, 0] = rng.uniform(low=-0.6, high=-0.4, size=n)
    return states


def _mountaincar_step(states: np.ndarray, actions: np.ndarray):
    position = states[:, 0]
    velocity = states[:, 1]
    velocity = velocity + (actions - 1.0) * MC_FORCE + np.cos(3.0 * position) * (-MC_GRAVITY)
    velocity = np.clip(velocity, -MC_MAX_SPEED, MC_MAX_SPEED)
    position = position + velocity
    position = np.clip(position, MC_MIN_POSITION, MC_MAX_POSITION)
    velocity = np.where((position == MC_MIN_POSITION) & (velocity < 0.0), 0.0, velocity)
    new = np.empty_like(states)
    new[:, 0] = position
    new[:, 1] = velocity
    terminated = (position >= MC_GOAL_POSITION) & (velocity >= MC_GOAL_VELOCITY)
    return new, terminated


# --------------------------------------------------------------------------
# Acrobot: two-link underactuated swing-up, book dynamics, RK4 with dt=0.2.
# Internal state is (theta1, theta2, omega1, omega2); observations encode
# the angles as cos/sin pairs.

ACRO_DT = 0.2
ACRO_LINK_LENGTH_1 = 1.0
ACRO_LINK_MASS_1 = 1.0
ACRO_LINK_MASS_2 = 1.0
ACRO_LINK_COM_POS_1 = 0.5
ACRO_LINK_COM_POS_2 = 0.5
ACRO_LINK_MOI = 1.0
ACRO_MAX_VEL_1 = 4.0 * PI
ACRO_MAX_VEL_2 = 9.0 * PI
ACRO_GRAVITY = 9.8


def _acrobot_init(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(low=-0.1, high=0.1, size=(n, 4))


def _acrobot_dsdt(th1, th2, w1, w2, torque):
    m1 = ACRO_LINK_MASS_1
    m2 = ACRO_LINK_MASS_2
    l1 = ACRO_LINK_LENGTH_1
    lc1 = ACRO_LINK_COM_POS_1
    lc2 = ACRO_LINK_COM_POS_2
    i1 = ACRO_LINK_MOI
    i2 = ACRO_LINK_MOI
    g = ACRO_GRAVITY
    cos2 = np.cos(th2)
    sin2 = np.sin(th2)
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2.0 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * cos2) + i2
    phi2 = m2 * lc2 * g * np.cos(th1 + th2 - PI / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * w2**2 * sin2
        - 2.0 * m2 * l1 * lc2 * w2 * w1 * sin2
        + (m1 * lc1 + m2 * l1) * g * np.cos(th1 - PI / 2.0)
        + phi2
    )
    ddw2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * w1**2 * sin2 - phi2) / (
        m2 * lc2**2 + i2 - d2**2 / d1
    )
    ddw1 = -(d2 * ddw2 + phi1) / d1
    return w1, w2, ddw1, ddw2


def _wrap_angle(x: np.ndarray) -> np.ndarray:
    # bounded sweeps: |x| never exceeds pi + max_vel * dt < 3 pi
    while np.any(x > PI):
        x = np.where(x > PI, x - TWO_PI, x)
    while np.any(x < -PI):
        x = np.where(x < -PI, x + TWO_PI, x)
    return x


def _acrobot_step(states: np.ndarray, actions: np.ndarray):
    th1 = states[:, 0]
    th2 = states[:, 1]
    w1 = states[:, 2]
    w2 = states[:, 3]
    torque = actions - 1.0
    dt = ACRO_DT
    a1, a2, a3, a4 = _acrobot_dsdt(th1, th2, w1, w2, torque)
    b1, b2, b3, b4 = _acrobot_dsdt(
        th1 + dt / 2.0 * a1, th2 + dt / 2.0 * a2, w1 + dt / 2.0 * a3, w2 + dt / 2.0 * a4, torque
    )
    c1, c2, c3, c4 = _acrobot_dsdt(
        th1 + dt / 2.0 * b1, th2 + dt / 2.0 * b2, w1 + dt / 2.0 * b3, w2 + dt / 2.0 * b4, torque
    )
    e1, e2, e3, e4 = _acrobot_dsdt(
        th1 + dt * c1, th2 + dt * c2, w1 + dt * c3, w2 + dt * c4, torque
    )
    new = np.empty_like(states)
    new[:, 0] = _wrap_angle(th1 + dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + e1))
    new[:, 1] = _wrap_angle(th2 + dt / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + e2))
    new[:, 2] = np.clip(w1 + dt / 6.0 * (a3 + 2.0 * b3 + 2.0 * c3 + e3), -ACRO_MAX_VEL_1, ACRO_MAX_VEL_1)
    new[:, 3] = np.clip(w2 + dt / 6.0 * (a4 + 2.0 * b4 + 2.0 * c4 + e4), -ACRO_MAX_VEL_2, ACRO_MAX_VEL_2)
    terminated = -np.cos(new[:, 0]) - np.cos(new[:, 1] + new[:, 0]) > 1.0
    return new, terminated


def _acrobot_observe(states: np.ndarray) -> np.ndarray:
    obs = np.empty((states.shape[0], 6))
    obs[:, 0] = np.cos(states[:, 0])
    obs[:, 1] = np.sin(states[:, 0])
    obs[:, 2] = np.cos(states[:, 1])
    obs[:, 3] = np.sin(states[:, 1])
    obs[:, 4] = states[:, 2]
    obs[:, 5] = states[:, 3]
    return obs


def _identity_observe(states: np.ndarray) -> np.ndarray:
    return states.copy()


_KERNELS = {
    EnvName.CARTPOLE_V1: (_cartpole_init, _cartpole_step, _identity_observe, 4, 1.0),
    EnvName.ACROBOT_V1: (_acrobot_init, _acrobot_step, _acrobot_observe, 4, -1.0),
    EnvName.MOUNTAINCAR_V0: (_mountaincar_init, _mountaincar_step, _identity_observe, 2, -1.0),
}


class EnvInstance:
    """One episode-at-a-time environment with its own PRNG.

    Single-owner mutable state: step() after the episode has ended (or
    before the first reset) raises instead of silently continuing.
    """

    def __init__(self, spec: EnvSpec, rng: np.random.Generator):
        self.spec = spec
        self._rng = rng
        init, step, observe, state_dim, reward = _KERNELS[spec.name]
        self._init = init
        self._step = step
        self._observe = observe
        self._state_dim = state_dim
        self._step_reward = reward
        self._state = np.zeros((1, state_dim))
        self.elapsed_steps = 0
        self._needs_reset = True

    @property
    def state(self) -> np.ndarray:
        """Internal physical state (not the observation encoding)."""
        return self._state[0].copy()

    def reset(self) -> np.ndarray:
        self._state = self._init(self._rng, 1)
        self.elapsed_steps = 0
        self._needs_reset = False
        return self._observe(self._state)[0]

    def step(self, action: int) -> StepOutcome:
        if self._needs_reset:
            raise RuntimeError("episode has ended (or never started); call reset()")
        if not 0 <= int(action) < self.spec.n_actions:
            raise ValueError(
                f"action {action} out of range [0, {self.spec.n_actions}) for {self.spec.name.value}"
            )
        acts = np.array([float(action)])
        self._state, term = self._step(self._state, acts)
        self.elapsed_steps += 1
        terminated = bool(term[0])
        truncated = (not terminated) and self.elapsed_steps >= self.spec.max_episode_steps
        self._needs_reset = terminated or truncated
        return StepOutcome(
            observation=self._observe(self._state)[0],
            reward=self._step_reward,
            terminated=terminated,
            truncated=truncated,
        )


def make_env(name: EnvName, seed: int) -> EnvInstance:
    """Environment with a deterministic PRNG; equal (name, seed) replays equally."""
    spec = ENV_SPECS[name]
    rng = np.random.default_rng(as_u64(seed))
    return EnvInstance(spec, rng)


class BatchEnv:
    """n independent episodes of one environment stepped in lockstep.

    Episode i draws its initial state from its own generator seeded with
    seeds[i], so each row replays exactly what make_env(name, seeds[i])
    would produce under the same actions.
    """

    def __init__(self, name: EnvName, seeds: list[int]):
        self.spec = ENV_SPECS[name]
        init, step, observe, state_dim, reward = _KERNELS[name]
        self._init = init
        self._step = step
        self._observe = observe
        self._step_reward = reward
        self.n = len(seeds)
        self.states = np.zeros((self.n, state_dim))
        for i, s in enumerate(seeds):
            rng = np.random.default_rng(as_u64(s))
            self.states[i] = init(rng, 1)[0]
        self.elapsed = np.zeros(self.n, dtype=np.int64)

    def observations_for(self, indices: np.ndarray) -> np.ndarray:
        return self._observe(self.states[indices])

    def step_subset(self, indices: np.ndarray, actions: np.ndarray):
        """Advance the selected episodes; returns (rewards, terminated, truncated)."""
        new, term = self._step(self.states[indices], actions.astype(np.float64))
        self.states[indices] = new
        self.elapsed[indices] += 1
        truncated = ~term & (self.elapsed[indices] >= self.spec.max_episode_steps)
        rewards = np.full(len(indices), self._step_reward)
        return rewards, term, truncated
