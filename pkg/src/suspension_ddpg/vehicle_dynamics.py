"""Two-degree-of-freedom quarter-car model with an active stiffness/damping force.

State vector is ``(x_b, v_b, x_w, v_w)``: body displacement and velocity,
wheel displacement and velocity, all measured from the unloaded equilibrium
(no gravity preload).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import NumericalDivergence

DIVERGENCE_LIMIT = 1e6

K_A_BOUNDS = (-2500.0, 5000.0)
C_A_BOUNDS = (-600.0, 600.0)


class ForceMode(str, enum.Enum):
    PAPER_LITERAL = "paper-literal"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class QuarterCarParams:
    m_b: float = 450.0  # quarter body mass [kg]
    m_w: float = 45.0  # wheel mass [kg]
    k_b: float = 15000.0  # suspension stiffness [N/m]
    c_b: float = 1500.0  # suspension damping [Ns/m]
    k_w: float = 150000.0  # tyre stiffness [N/m]
    c_w: float = 0.0  # tyre damping [Ns/m]
    force_mode: ForceMode = ForceMode.AUGMENTED

    def __post_init__(self):
        if not (self.m_b > 0 and self.m_w > 0):
            raise ValueError("masses must be positive")
        for name in ("k_b", "c_b", "k_w", "c_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "force_mode", ForceMode(self.force_mode))


class ActiveAction(NamedTuple):
    k_a: float  # active stiffness [N/m]
    c_a: float  # active damping [Ns/m]


class RoadInput(NamedTuple):
    x_r: float  # road elevation [m]
    v_r: float  # road elevation rate [m/s]


class OutputVector(NamedTuple):
    rattle_space: float  # x_b - x_w [m]
    body_accel: float  # [m/s^2]


PASSIVE = ActiveAction(0.0, 0.0)
FLAT_ROAD = RoadInput(0.0, 0.0)


def vehicle_state(x_b=0.0, v_b=0.0, x_w=0.0, v_w=0.0):
    return np.array([x_b, v_b, x_w, v_w], dtype=np.float64)


def action_in_bounds(action):
    k_a, c_a = action
    return (K_A_BOUNDS[0] <= k_a <= K_A_BOUNDS[1]) and (C_A_BOUNDS[0] <= c_a <= C_A_BOUNDS[1])


def active_force(state, action, params):
    """Actuator force produced by the active stiffness and damping.

    ``PAPER_LITERAL`` uses absolute body coordinates and re-adds the passive
    coefficients, ``f_a = (k_b + k_a) x_b + (c_b + c_a) v_b``.
    ``AUGMENTED`` acts on the suspension stroke with a restoring sign,
    ``f_a = -k_a (x_b - x_w) - c_a (v_b - v_w)``.
    """
    x_b, v_b, x_w, v_w = state
    k_a, c_a = action
    if params.force_mode is ForceMode.PAPER_LITERAL:
        return (params.k_b + k_a) * x_b + (params.c_b + c_a) * v_b
    return -k_a * (x_b - x_w) - c_a * (v_b - v_w)


def derivative(state, road, f_a, params):
    """Time derivative ``(v_b, a_b, v_w, a_w)`` from Newton's second law."""
    x_b, v_b, x_w, v_w = (float(s) for s in state)
    x_r, v_r = road
    suspension = params.k_b * (x_b - x_w) + params.c_b * (v_b - v_w)
    tyre = params.k_w * (x_w - x_r) + params.c_w * (v_w - v_r)
    a_b = (-suspension + f_a) / params.m_b
    a_w = (suspension - tyre - f_a) / params.m_w
    return np.array([v_b, a_b, v_w, a_w])


def outputs(state, road, f_a, params):
    d = derivative(state, road, f_a, params)
    return OutputVector(float(state[0] - state[2]), float(d[1]))


def check_finite(state, step=None):
    if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > DIVERGENCE_LIMIT:
        raise NumericalDivergence(f"vehicle state diverged: {state!r}", step=step)


def step_rk4(
    state,
    road_fn: Callable[[float], RoadInput],
    action,
    params: QuarterCarParams,
    t: float,
    dt: float,
):
    """Advance one classical RK4 step with the action held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=np.float64)
    r0 = road_fn(t)
    r_mid = road_fn(t + 0.5 * dt)
    r1 = road_fn(t + dt)

    def f(y, road):
        return derivative(y, road, active_force(y, action, params), params)

    k1 = f(state, r0)
    k2 = f(state + 0.5 * dt * k1, r_mid)
    k3 = f(state + 0.5 * dt * k2, r_mid)
    k4 = f(state + dt * k3, r1)
    new = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    check_finite(new)
    return new


def simulate(state0, road_fn, policy, params, dt, n_steps, t0=0.0):
    """Roll out ``n_steps`` RK4 steps; ``policy(t, state)`` gives the held action.

    Returns the ``(n_steps + 1, 4)`` state history and the ``(n_steps, 2)``
    action history.
    """
    states = np.empty((n_steps + 1, 4))
    actions = np.empty((n_steps, 2))
    states[0] = state0
    y = np.asarray(state0, dtype=np.float64)
    for i in range(n_steps):
        t = t0 + i * dt
        a = policy(t, y)
        actions[i] = a
        try:
            y = step_rk4(y, road_fn, a, params, t, dt)
        except NumericalDivergence as exc:
            exc.step = i
            raise
        states[i + 1] = y
    return states, actions


def system_matrix(params):
    """Passive state matrix, assembled column by column from ``derivative``."""
    cols = []
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1.0
        cols.append(derivative(e, FLAT_ROAD, 0.0, params))
    return np.column_stack(cols)


def natural_frequencies(params):
    """Undamped body and wheel mode frequencies in Hz (rough guide only)."""
    body = math.sqrt(params.k_b * params.k_w / (params.k_b + params.k_w) / params.m_b)
    wheel = math.sqrt((params.k_b + params.k_w) / params.m_w)
    return body / (2 * math.pi), wheel / (2 * math.pi)
