"""Motion models for the body (unicycle) and the camera (single integrator).

Models operate on plain numpy state vectors so the trajectory optimizer can
use them directly; small dataclasses wrap the vectors for readability at the
planner level.  All functions are pure and thread-safe.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BodyState",
    "CameraState",
    "ControlBounds",
    "UnicycleModel",
    "SingleIntegratorModel",
    "unicycle_step",
    "integrator_step",
    "rollout",
    "track",
]


@dataclass(frozen=True)
class BodyState:
    x: float
    y: float
    heading: float

    def as_array(self):
        return np.array([self.x, self.y, self.heading])

    @classmethod
    def from_array(cls, arr):
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class CameraState:
    yaw: float
    pitch: float

    def as_array(self):
        return np.array([self.yaw, self.pitch])

    @classmethod
    def from_array(cls, arr):
        return cls(float(arr[0]), float(arr[1]))


class ControlBounds:
    """Per-channel control box plus the per-step position-change cap."""

    def __init__(self, lower, upper, max_step):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("need lower < upper per control channel")
        if max_step <= 0:
            raise ValueError("max_step must be positive")
        self.max_step = float(max_step)

    def clip(self, controls):
        return np.clip(controls, self.lower, self.upper)


class UnicycleModel:
    """Planar unicycle; state (x, y, heading), control (v, omega).

    One step is the exact Euler map of the continuous kinematics:
    x' = x + dt v cos(h), y' = y + dt v sin(h), h' = h + dt w.
    """

    state_dim = 3
    control_dim = 2
    workspace_dims = 2

    def step(self, state, control, dt):
        x, y, h = state
        v, w = control
        return np.array([x + dt * v * np.cos(h), y + dt * v * np.sin(h), h + dt * w])

    def step_batch(self, states, controls, dt):
        h = states[:, 2]
        v = controls[:, 0]
        out = np.empty_like(states)
        out[:, 0] = states[:, 0] + dt * v * np.cos(h)
        out[:, 1] = states[:, 1] + dt * v * np.sin(h)
        out[:, 2] = h + dt * controls[:, 1]
        return out

    def jacobians(self, states, controls, dt):
        """Batched d(step)/dx and d(step)/du, shapes (T, 3, 3) and (T, 3, 2)."""
        states = np.atleast_2d(states)
        controls = np.atleast_2d(controls)
        T = states.shape[0]
        h = states[:, 2]
        v = controls[:, 0]
        A = np.tile(np.eye(3), (T, 1, 1))
        A[:, 0, 2] = -dt * v * np.sin(h)
        A[:, 1, 2] = dt * v * np.cos(h)
        B = np.zeros((T, 3, 2))
        B[:, 0, 0] = dt * np.cos(h)
        B[:, 1, 0] = dt * np.sin(h)
        B[:, 2, 1] = dt
        return A, B

    def workspace_points(self, states):
        return np.atleast_2d(states)[:, :2]

    def speed(self, control):
        return abs(float(control[0]))


class SingleIntegratorModel:
    """First-order point; state and control share the workspace coordinates."""

    state_dim = 2
    control_dim = 2
    workspace_dims = 2

    def step(self, state, control, dt):
        return np.asarray(state, dtype=float) + dt * np.asarray(control, dtype=float)

    def step_batch(self, states, controls, dt):
        return states + dt * controls

    def jacobians(self, states, controls, dt):
        T = np.atleast_2d(states).shape[0]
        A = np.tile(np.eye(2), (T, 1, 1))
        B = np.tile(dt * np.eye(2), (T, 1, 1))
        return A, B

    def workspace_points(self, states):
        return np.atleast_2d(states)

    def speed(self, control):
        return float(np.linalg.norm(control))


def unicycle_step(state: BodyState, control, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    return BodyState.from_array(UnicycleModel().step(state.as_array(), control, dt))


def integrator_step(state: CameraState, control, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    return CameraState.from_array(SingleIntegratorModel().step(state.as_array(), control, dt))


def rollout(model, initial_state, controls, dt):
    """States x_0..x_{T-1} from x_0 = initial_state and x_{t+1} = f(x_t, u_t).

    Returns exactly T = len(controls) states, so the final control only
    enters through the control cost, never through a visible transition.
    """
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    T = controls.shape[0]
    if T < 1:
        raise ValueError("need at least one control")
    states = np.empty((T, model.state_dim))
    states[0] = np.asarray(initial_state, dtype=float)
    for t in range(T - 1):
        states[t + 1] = model.step(states[t], controls[t], dt)
    return states


def track(model, states, controls, dt, noise_std=0.0, rng=None):
    """Execute a plan through the kinematic model with optional actuation noise.

    Noise is multiplicative per control channel (a relative actuation error),
    drawn i.i.d. per step and clipped to three standard deviations.  Returns
    the realized states (same length as the plan) and the commanded path
    length sum(speed(u_t)) * dt over the whole control sequence.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    if states.shape[0] != controls.shape[0] or states.shape[0] < 1:
        raise ValueError("plan must pair equal, nonempty state/control sequences")
    if noise_std > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        wobble = np.clip(rng.normal(0.0, noise_std, size=controls.shape),
                         -3.0 * noise_std, 3.0 * noise_std)
        executed = controls * (1.0 + wobble)
    else:
        executed = controls
    realized = rollout(model, states[0], executed, dt)
    path_length = float(sum(model.speed(u) for u in executed) * dt)
    return realized, path_length
