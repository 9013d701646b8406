"""Frictionless two-mass, three-spring chain.

State is (x1, x2, v1, v2); accelerations are K @ (x1, x2) with the coupling
matrix K built from masses and spring constants. No friction means total
energy is an exact invariant of the flow, which makes a sharp integrator
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..meta import Task
from .integrate import Trajectory, n_steps_exact, rk4_step

PARAM_LOW, PARAM_HIGH = 0.75, 1.25
STATE_DIM = 4


@dataclass(frozen=True)
class SpringParams:
    """Masses (kg) and spring constants (N/m), all positive."""

    m1: float
    m2: float
    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise ValueError(f"masses must be positive, got {self.m1}, {self.m2}")
        if min(self.k1, self.k2, self.k3) < 0:
            raise ValueError("spring constants must be non-negative")


@dataclass
class SpringState:
    """Positions (m) and velocities (m/s) of the two masses."""

    x1: float
    x2: float
    v1: float
    v2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.v1, self.v2])

    @classmethod
    def from_array(cls, arr) -> "SpringState":
        x1, x2, v1, v2 = np.asarray(arr, dtype=np.float64)
        return cls(float(x1), float(x2), float(v1), float(v2))


def sample_spring_params(rng: np.random.Generator) -> SpringParams:
    vals = rng.uniform(PARAM_LOW, PARAM_HIGH, size=5)
    return SpringParams(*vals)


def spring_coeff_matrix(p: SpringParams) -> np.ndarray:
    """Acceleration coupling matrix of the chain."""
    return np.array(
        [
            [-(p.k1 + p.k2) / p.m1, p.k2 / p.m1],
            [p.k2 / p.m2, -(p.k2 + p.k3) / p.m2],
        ]
    )


def _deriv_core(k00, k01, k10, k11, s: np.ndarray) -> np.ndarray:
    # Shared expression tree for single states (4,) and ensembles (B, 4).
    x1 = s[..., 0]
    x2 = s[..., 1]
    v1 = s[..., 2]
    v2 = s[..., 3]
    a1 = k00 * x1 + k01 * x2
    a2 = k10 * x1 + k11 * x2
    return np.stack((v1, v2, a1, a2), axis=-1)


def spring_derivative(p: SpringParams, s: SpringState) -> SpringState:
    """Time derivative of the state: velocities, then K-coupled accelerations."""
    kmat = spring_coeff_matrix(p)
    d = _deriv_core(kmat[0, 0], kmat[0, 1], kmat[1, 0], kmat[1, 1], s.as_array())
    return SpringState.from_array(d)


def spring_energy(p: SpringParams, s: SpringState) -> float:
    """Kinetic plus elastic potential energy (J); conserved by the dynamics."""
    kinetic = 0.5 * (p.m1 * s.v1**2 + p.m2 * s.v2**2)
    potential = 0.5 * (
        p.k1 * s.x1**2 + p.k2 * (s.x2 - s.x1) ** 2 + p.k3 * s.x2**2
    )
    return kinetic + potential


def simulate_spring(
    p: SpringParams, s0: SpringState, duration: float, dt: float
) -> Trajectory:
    """RK4 rollout; 10 s at dt=1e-3 gives 10001 states."""
    n = n_steps_exact(duration, dt)
    kmat = spring_coeff_matrix(p)
    deriv = lambda s: _deriv_core(kmat[0, 0], kmat[0, 1], kmat[1, 0], kmat[1, 1], s)
    states = np.empty((n + 1, STATE_DIM))
    states[0] = s0.as_array()
    s = states[0]
    for i in range(n):
        s = rk4_step(deriv, s, dt)
        states[i + 1] = s
    return Trajectory(dt=dt, states=states)


def simulate_spring_ensemble(
    params: list[SpringParams], s0: np.ndarray, duration: float, dt: float
) -> np.ndarray:
    """Simultaneous RK4 rollout of many chains; returns (B, T+1, 4).

    Bitwise-identical per trajectory to simulate_spring: the derivative is the
    same elementwise expression evaluated over a batch axis.
    """
    n = n_steps_exact(duration, dt)
    kmats = np.stack([spring_coeff_matrix(p) for p in params])
    k00, k01 = kmats[:, 0, 0], kmats[:, 0, 1]
    k10, k11 = kmats[:, 1, 0], kmats[:, 1, 1]
    deriv = lambda s: _deriv_core(k00, k01, k10, k11, s)
    b = len(params)
    states = np.empty((b, n + 1, STATE_DIM))
    states[:, 0] = np.asarray(s0, dtype=np.float64)
    s = states[:, 0]
    for i in range(n):
        s = rk4_step(deriv, s, dt)
        states[:, i + 1] = s
    return states


@dataclass
class SpringDataset:
    """Simulated trajectories with their generating parameters."""

    dt: float
    params: list[SpringParams]
    states: np.ndarray  # (B, T+1, 4)


def make_spring_dataset(
    seed: int, count: int, duration: float = 10.0, dt: float = 1e-3
) -> SpringDataset:
    """Trajectories from random chains; initial states U(-1, 1)^4."""
    rng = np.random.default_rng(seed)
    params = [sample_spring_params(rng) for _ in range(count)]
    s0 = rng.uniform(-1.0, 1.0, size=(count, STATE_DIM))
    states = simulate_spring_ensemble(params, s0, duration, dt)
    return SpringDataset(dt=dt, params=params, states=states)


def spring_window_task(
    states: np.ndarray, t: int, window: int = 25, system: object = None
) -> Task:
    """Meta-task at anchor t: the two windows before t adapt, the window
    after t is the prediction target.

    Context pair maps flatten(states[t-2w : t-w]) to flatten(states[t-w : t]);
    the target pair maps flatten(states[t-w : t]) to flatten(states[t : t+w]).
    """
    w = window
    if t - 2 * w < 0 or t + w > states.shape[0]:
        raise ValueError(f"anchor {t} out of range for window {w}")
    past = states[t - 2 * w : t - w].ravel()
    recent = states[t - w : t].ravel()
    future = states[t : t + w].ravel()
    return Task(
        context_x=past[None, :],
        context_y=recent[None, :],
        target_x=recent[None, :],
        target_y=future[None, :],
        system=system,
    )


def spring_tasks_from_dataset(
    data: SpringDataset, windows_per_traj: int, seed: int, window: int = 25
) -> list[Task]:
    """Deterministically sampled window anchors across all trajectories."""
    rng = np.random.default_rng([seed, 0xA5])
    tasks = []
    t_max = data.states.shape[1]
    for i in range(data.states.shape[0]):
        anchors = rng.integers(2 * window, t_max - window, size=windows_per_traj)
        for t in anchors:
            tasks.append(
                spring_window_task(data.states[i], int(t), window, data.params[i])
            )
    return tasks
