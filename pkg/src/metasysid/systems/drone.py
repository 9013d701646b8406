"""Planar fully-actuated rotorcraft with quadratic drag and horizontal wind.

State is (x, y, phi, vx, vy, omega); actions are body-frame thrusts and a
torque, normalized and clamped to a box. Drag acts on the body-frame airspeed
components, wind enters through the x-axis relative velocity, and gravity
pulls on y. A PD tracking controller generates rough but bounded training
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..meta import Task
from .integrate import Trajectory, n_steps_exact, rk4_step

GRAVITY = 9.81
BETA1 = 0.1
BETA2 = 1.0
ACTION_BOUND = 20.0
STATE_DIM = 6
ACTION_DIM = 3

WIND_LOW, WIND_HIGH = 0.0, 8.0


@dataclass
class DroneState:
    x: float
    y: float
    phi: float
    vx: float
    vy: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi, self.vx, self.vy, self.omega])

    @classmethod
    def from_array(cls, arr) -> "DroneState":
        vals = np.asarray(arr, dtype=np.float64)
        return cls(*(float(v) for v in vals))


@dataclass
class DroneAction:
    """Normalized thrusts and torque, clamped to the action box."""

    ux: float
    uy: float
    uphi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ux, self.uy, self.uphi])

    def clamped(self) -> "DroneAction":
        lo, hi = -ACTION_BOUND, ACTION_BOUND
        return DroneAction(
            min(max(self.ux, lo), hi),
            min(max(self.uy, lo), hi),
            min(max(self.uphi, lo), hi),
        )


def hover_action() -> np.ndarray:
    return np.array([0.0, GRAVITY, 0.0])


def drone_deriv_arrays(s: np.ndarray, a: np.ndarray, w) -> np.ndarray:
    """Dynamics on raw arrays; broadcasts over any leading batch shape.

    Body-frame airspeed picks up the wind on x, drag is quadratic in each
    body component, the resulting forces rotate back to the world frame, and
    gravity acts on y.
    """
    phi = s[..., 2]
    vx = s[..., 3]
    vy = s[..., 4]
    omega = s[..., 5]
    cos = np.cos(phi)
    sin = np.sin(phi)
    rel = vx - w
    v1 = rel * cos + vy * sin
    v2 = -rel * sin + vy * cos
    bx = a[..., 0] - BETA1 * v1 * np.abs(v1)
    by = a[..., 1] - BETA2 * v2 * np.abs(v2)
    ax = cos * bx - sin * by
    ay = sin * bx + cos * by - GRAVITY
    return np.stack((vx, vy, omega, ax, ay, a[..., 2]), axis=-1)


def drone_derivative(s: DroneState, a: DroneAction, wind_w: float) -> DroneState:
    """State derivative under the given action and constant wind speed."""
    d = drone_deriv_arrays(s.as_array(), a.as_array(), float(wind_w))
    return DroneState.from_array(d)


def drone_step(s: np.ndarray, a: np.ndarray, w, dt: float) -> np.ndarray:
    """One RK4 step of the true dynamics with the wind held fixed."""
    return rk4_step(lambda state: drone_deriv_arrays(state, a, w), s, dt)


def eog_wind(t: float, w_bar: float, w_gust: float, period: float, t0: float) -> float:
    """Extreme-operating-gust speed: dip, spike, dip, recovery around t0."""
    if period <= 0:
        raise ValueError(f"gust period must be > 0, got {period}")
    if t < t0 or t > t0 + period:
        return float(w_bar)
    tau = t - t0
    return float(
        w_bar
        - 0.37
        * w_gust
        * np.sin(3.0 * np.pi * tau / period)
        * (1.0 - np.cos(2.0 * np.pi * tau / period))
    )


@dataclass(frozen=True)
class WindProfile:
    """Constant wind or an extreme operating gust on the x-axis."""

    kind: str = "constant"
    w: float = 0.0
    w_bar: float = 4.0
    w_gust: float = 6.0
    period: float = 3.0
    t0: float = 3.5

    def __post_init__(self):
        if self.kind not in ("constant", "eog"):
            raise ValueError(f"unknown wind kind {self.kind!r}")
        if self.kind == "eog" and (self.period <= 0 or self.w_gust < 0):
            raise ValueError("gust parameters must be positive")

    def at(self, t: float) -> float:
        if self.kind == "constant":
            return float(self.w)
        return eog_wind(t, self.w_bar, self.w_gust, self.period, self.t0)


def gen_reference_trajectory(seed: int, duration: float, dt: float) -> Trajectory:
    """Random-walk waypoints each second, joined by clamped cubic splines.

    States are (x, y, phi, vx, vy, omega): spline positions plus their first
    derivatives. End velocities are zero by construction.
    """
    n = n_steps_exact(duration, dt)
    n_way = max(1, int(round(duration)))  # one waypoint hop per second
    rng = np.random.default_rng(seed)
    steps_xy = rng.uniform(-1.0, 1.0, size=(n_way, 2))
    steps_phi = rng.uniform(-0.3, 0.3, size=(n_way, 1))
    waypoints = np.zeros((n_way + 1, 3))
    waypoints[1:] = np.cumsum(np.concatenate([steps_xy, steps_phi], axis=1), axis=0)
    knots = np.linspace(0.0, duration, n_way + 1)
    times = np.arange(n + 1) * dt
    states = np.empty((n + 1, STATE_DIM))
    for j in range(3):
        spline = CubicSpline(knots, waypoints[:, j], bc_type="clamped")
        states[:, j] = spline(times)
        states[:, 3 + j] = spline(times, 1)
    return Trajectory(dt=dt, states=states)


def pd_controller(
    s: DroneState,
    ref_pos: np.ndarray,
    ref_vel: np.ndarray,
    kp: float = 10.0,
    kd: float = 0.1,
) -> DroneAction:
    """Per-axis PD action with gravity feed-forward on y, clamped to the box."""
    a = _pd_core(
        s.as_array(), np.asarray(ref_pos, dtype=np.float64), np.asarray(ref_vel, dtype=np.float64), kp, kd
    )
    return DroneAction(*(float(v) for v in a))


def _pd_core(s, ref_pos, ref_vel, kp=10.0, kd=0.1):
    a = kp * (ref_pos - s[..., :3]) + kd * (ref_vel - s[..., 3:])
    a[..., 1] += GRAVITY
    return np.clip(a, -ACTION_BOUND, ACTION_BOUND)


@dataclass
class DroneRun:
    """One simulated flight with its constant training wind."""

    trajectory: Trajectory
    wind: float


def collect_drone_dataset(
    n_traj: int = 500,
    duration: float = 10.0,
    dt: float = 0.02,
    seed: int = 0,
    action_noise: float = 2.0,
) -> list[DroneRun]:
    """PD-tracked flights over random references under random constant wind.

    All flights are stepped simultaneously; each starts from rest at the
    origin. Tracking quality is incidental, the point is a broad distribution
    of state-control sequences with known wind; Gaussian exploration noise on
    the recorded actions breaks the policy's action-state correlation so a
    model fitted to the data identifies the control response, not the
    controller.
    """
    n = n_steps_exact(duration, dt)
    rng = np.random.default_rng(seed)
    winds = rng.uniform(WIND_LOW, WIND_HIGH, size=n_traj)
    ref_seeds = np.random.SeedSequence([seed, 0xD0]).generate_state(n_traj)
    refs = np.stack(
        [gen_reference_trajectory(int(s), duration, dt).states for s in ref_seeds]
    )
    states = np.zeros((n_traj, n + 1, STATE_DIM))
    actions = np.zeros((n_traj, n, ACTION_DIM))
    s = states[:, 0].copy()
    for k in range(n):
        a = _pd_core(s, refs[:, k, :3], refs[:, k, 3:])
        if action_noise > 0:
            a = np.clip(
                a + action_noise * rng.standard_normal(a.shape),
                -ACTION_BOUND,
                ACTION_BOUND,
            )
        actions[:, k] = a
        s = rk4_step(lambda st: drone_deriv_arrays(st, a, winds), s, dt)
        states[:, k + 1] = s
    return [
        DroneRun(
            trajectory=Trajectory(dt=dt, states=states[i], actions=actions[i]),
            wind=float(winds[i]),
        )
        for i in range(n_traj)
    ]


def transition_pairs(traj: Trajectory, start: int, count: int):
    """(state, action) inputs and scaled one-step deltas from a window."""
    s = traj.states[start : start + count]
    s_next = traj.states[start + 1 : start + count + 1]
    a = traj.actions[start : start + count]
    x = np.concatenate([s, a], axis=1)
    y = (s_next - s) / traj.dt
    return x, y


def drone_window_task(run: DroneRun, t: int, window: int = 25) -> Task:
    """Meta-task: the trailing window identifies, the leading window scores."""
    if t - window < 0 or t + window > run.trajectory.actions.shape[0]:
        raise ValueError(f"anchor {t} out of range for window {window}")
    ctx_x, ctx_y = transition_pairs(run.trajectory, t - window, window)
    tgt_x, tgt_y = transition_pairs(run.trajectory, t, window)
    return Task(
        context_x=ctx_x, context_y=ctx_y, target_x=tgt_x, target_y=tgt_y, system=run.wind
    )


def drone_tasks_from_dataset(
    runs: list[DroneRun], windows_per_traj: int, seed: int, window: int = 25
) -> list[Task]:
    rng = np.random.default_rng([seed, 0xD1])
    tasks = []
    for run in runs:
        t_max = run.trajectory.actions.shape[0]
        anchors = rng.integers(window, t_max - window + 1, size=windows_per_traj)
        for t in anchors:
            tasks.append(drone_window_task(run, int(t), window))
    return tasks
