"""Time stepping and trajectory containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError


@dataclass
class Trajectory:
    """Uniformly sampled state (and optionally action) sequence."""

    dt: float
    states: np.ndarray
    actions: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.states.ndim != 2:
            raise ValueError(f"states must be (T+1, d), got shape {self.states.shape}")
        if self.actions is not None:
            self.actions = np.asarray(self.actions, dtype=np.float64)
            if self.actions.shape[0] != self.states.shape[0] - 1:
                raise ValueError(
                    f"{self.actions.shape[0]} actions for "
                    f"{self.states.shape[0]} states; need one fewer"
                )

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.dt


def n_steps_exact(duration: float, dt: float) -> int:
    """Number of steps when duration is an exact multiple of dt."""
    ratio = duration / dt
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(f"duration {duration} is not an integral multiple of dt {dt}")
    return n


def rk4_step(derivative_fn, state: np.ndarray, dt: float) -> np.ndarray:
    """One classic fourth-order Runge-Kutta step."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    k1 = derivative_fn(state)
    k2 = derivative_fn(state + (dt / 2.0) * k1)
    k3 = derivative_fn(state + (dt / 2.0) * k2)
    k4 = derivative_fn(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite state after RK4 step (bad derivative?)")
    return out
