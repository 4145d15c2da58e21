"""Independent reference implementations used as test oracles.

Everything here is written in plain scalar Python (math module, explicit
loops) straight from the published equations, so it shares no code with
the package's vectorized implementations.
"""

from __future__ import annotations

import math

import numpy as np

PI = math.pi
TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# CartPole: Euler-integrated cart-pole equations.

def cartpole_step(state, action):
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masspole + masscart
    length = 0.5
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12.0 * 2.0 * PI / 360.0
    x_threshold = 2.4

    x, x_dot, theta, theta_dot = (float(v) for v in state)
    force = (2.0 * float(action) - 1.0) * force_mag
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
    thetaacc = (gravity * sintheta - costheta * temp) / (
        length * (4.0 / 3.0 - masspole * costheta**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    x = x + tau * x_dot
    x_dot = x_dot + tau * xacc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * thetaacc
    terminated = (
        x < -x_threshold or x > x_threshold or theta < -theta_threshold or theta > theta_threshold
    )
    return [x, x_dot, theta, theta_dot], terminated


# --------------------------------------------------------------------------
# MountainCar: force/gravity velocity update with clipping.

def mountaincar_step(state, action):
    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    goal_velocity = 0.0
    force = 0.001
    gravity = 0.0025

    position, velocity = (float(v) for v in state)
    velocity = velocity + (float(action) - 1.0) * force + math.cos(3.0 * position) * (-gravity)
    velocity = min(max(velocity, -max_speed), max_speed)
    position = position + velocity
    position = min(max(position, min_position), max_position)
    if position == min_position and velocity < 0.0:
        velocity = 0.0
    terminated = position >= goal_position and velocity >= goal_velocity
    return [position, velocity], terminated


# --------------------------------------------------------------------------
# Acrobot: book dynamics of the two-link pendulum, one RK4 step of dt=0.2.

def _acrobot_derivs(th1, th2, w1, w2, torque):
    m1 = 1.0
    m2 = 1.0
    l1 = 1.0
    lc1 = 0.5
    lc2 = 0.5
    i1 = 1.0
    i2 = 1.0
    g = 9.8
    cos2 = math.cos(th2)
    sin2 = math.sin(th2)
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2.0 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * cos2) + i2
    phi2 = m2 * lc2 * g * math.cos(th1 + th2 - PI / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * w2**2 * sin2
        - 2.0 * m2 * l1 * lc2 * w2 * w1 * sin2
        + (m1 * lc1 + m2 * l1) * g * math.cos(th1 - PI / 2.0)
        + phi2
    )
    ddw2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * w1**2 * sin2 - phi2) / (
        m2 * lc2**2 + i2 - d2**2 / d1
    )
    ddw1 = -(d2 * ddw2 + phi1) / d1
    return w1, w2, ddw1, ddw2


def _wrap(x):
    while x > PI:
        x = x - TWO_PI
    while x < -PI:
        x = x + TWO_PI
    return x


def acrobot_step(state, action):
    max_vel_1 = 4.0 * PI
    max_vel_2 = 9.0 * PI
    dt = 0.2

    th1, th2, w1, w2 = (float(v) for v in state)
    torque = float(action) - 1.0
    a1, a2, a3, a4 = _acrobot_derivs(th1, th2, w1, w2, torque)
    b1, b2, b3, b4 = _acrobot_derivs(
        th1 + dt / 2.0 * a1, th2 + dt / 2.0 * a2, w1 + dt / 2.0 * a3, w2 + dt / 2.0 * a4, torque
    )
    c1, c2, c3, c4 = _acrobot_derivs(
        th1 + dt / 2.0 * b1, th2 + dt / 2.0 * b2, w1 + dt / 2.0 * b3, w2 + dt / 2.0 * b4, torque
    )
    e1, e2, e3, e4 = _acrobot_derivs(
        th1 + dt * c1, th2 + dt * c2, w1 + dt * c3, w2 + dt * c4, torque
    )
    nth1 = _wrap(th1 + dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + e1))
    nth2 = _wrap(th2 + dt / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + e2))
    nw1 = min(max(w1 + dt / 6.0 * (a3 + 2.0 * b3 + 2.0 * c3 + e3), -max_vel_1), max_vel_1)
    nw2 = min(max(w2 + dt / 6.0 * (a4 + 2.0 * b4 + 2.0 * c4 + e4), -max_vel_2), max_vel_2)
    terminated = -math.cos(nth1) - math.cos(nth2 + nth1) > 1.0
    return [nth1, nth2, nw1, nw2], terminated


ORACLE_STEPS = {
    "CartPole-v1": cartpole_step,
    "MountainCar-v0": mountaincar_step,
    "Acrobot-v1": acrobot_step,
}


# --------------------------------------------------------------------------
# Dense-math oracle: forward pass with explicit Python loops.

def mlp_forward_loops(layer_sizes, hidden_activation, params, x):
    params = list(float(p) for p in params)
    h = [float(v) for v in x]
    offset = 0
    n_layers = len(layer_sizes) - 1
    for li in range(n_layers):
        n_in, n_out = layer_sizes[li], layer_sizes[li + 1]
        out = []
        for j in range(n_out):
            acc = 0.0
            for i in range(n_in):
                acc += params[offset + j * n_in + i] * h[i]
            out.append(acc)
        offset += n_in * n_out
        for j in range(n_out):
            out[j] += params[offset + j]
        offset += n_out
        if li < n_layers - 1:
            if hidden_activation == "relu":
                out = [v if v > 0.0 else 0.0 for v in out]
            else:
                out = [math.tanh(v) for v in out]
        h = out
    return h


# --------------------------------------------------------------------------
# Central finite differences.

def finite_difference_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        bump = np.zeros_like(x)
        bump.flat[i] = h
        grad.flat[i] = (f(x + bump) - f(x - bump)) / (2.0 * h)
    return grad


# --------------------------------------------------------------------------
# Brute-force generalized advantage estimation: O(L^2) double loop.

def gae_brute_force(rewards, values, resets, bootstrap_value, gamma, lam):
    n = len(rewards)
    deltas = []
    for t in range(n):
        if resets[t]:
            v_next = 0.0
        elif t == n - 1:
            v_next = bootstrap_value
        else:
            v_next = values[t + 1]
        deltas.append(rewards[t] + gamma * v_next - values[t])
    advantages = []
    for t in range(n):
        acc = 0.0
        weight = 1.0
        for s in range(t, n):
            acc += weight * deltas[s]
            if resets[s]:
                break
            weight *= gamma * lam
        advantages.append(acc)
    return np.array(advantages)


# --------------------------------------------------------------------------
# A hand-built CartPole solver expressed as a greedy Q-network.
#
# The linear rule "push right iff 0.1*x + 0.3*x_dot + theta + theta_dot > 0"
# holds the pole for the full 500 steps from every tested initial state
# (verified over 1500 seeds).  ReLU pass-through pairs carry the linear
# score through the hidden layers: relu(s) - relu(-s) = s.

CARTPOLE_GAINS = np.array([0.1, 0.3, 1.0, 1.0])


def cartpole_solver_params(spec) -> np.ndarray:
    from rein2.nn import param_count, unflatten

    sizes = spec.layer_sizes
    assert sizes[0] == 4 and sizes[-1] == 2 and spec.hidden_activation == "relu"
    assert all(s >= 2 for s in sizes[1:-1])
    params = np.zeros(param_count(spec))
    layers = unflatten(spec, params)
    w0, _ = layers[0]
    w0[0, :] = CARTPOLE_GAINS
    w0[1, :] = -CARTPOLE_GAINS
    for w, _ in layers[1:-1]:
        w[0, 0] = 1.0
        w[1, 1] = 1.0
    w_last, _ = layers[-1]
    w_last[0, 1] = 1.0  # Q(left)  = relu path of -score
    w_last[1, 0] = 1.0  # Q(right) = relu path of +score
    return params
