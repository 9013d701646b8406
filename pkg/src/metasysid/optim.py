"""First-order optimizers and the slow-copy parameter average.

Plain gradient descent carries the inner identification loop, Adam carries the
outer model updates, and the moving-average update maintains the frozen target
copy that decouples the two loops. All three are pure functions: state is a
value the caller threads through.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError
from .mlp import ParameterSet


@dataclass(frozen=True)
class EMAConfig:
    """Mixing weight for the target-parameter update, tau in (0, 1]."""

    tau: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


@dataclass
class AdamState:
    """Adam moments and step counter for one optimized vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), **kw)


def _check_grad(grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericalError(
            f"non-finite gradient entry at index {bad}: {grad.flat[bad]}"
        )


def gd_step(values: np.ndarray, grad: np.ndarray, alpha: float) -> np.ndarray:
    """One gradient-descent step values - alpha * grad."""
    values = np.asarray(values, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if values.shape != grad.shape:
        raise ValueError(f"shape mismatch {values.shape} vs {grad.shape}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    _check_grad(grad)
    return values - alpha * grad


def adam_step(
    values: np.ndarray, grad: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; returns the new vector and advanced state."""
    values = np.asarray(values, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if values.shape != grad.shape or values.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: values {values.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    _check_grad(grad)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_values = values - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_values, replace(state, m=m, v=v, t=t)


def ema_update(
    theta: ParameterSet, theta_bar: ParameterSet, cfg: EMAConfig
) -> ParameterSet:
    """Target update tau*theta + (1-tau)*theta_bar.

    Computed as theta_bar + tau*(theta - theta_bar), which keeps every
    coordinate within [min(theta, theta_bar), max(theta, theta_bar)] in IEEE
    arithmetic, not just in exact math.
    """
    if not theta.same_shape(theta_bar):
        raise ValueError(f"shape mismatch: {theta.shapes} vs {theta_bar.shapes}")
    if cfg.tau == 1.0:
        return theta.copy()
    mixed = theta_bar.values + cfg.tau * (theta.values - theta_bar.values)
    return ParameterSet(mixed, list(theta.shapes))
