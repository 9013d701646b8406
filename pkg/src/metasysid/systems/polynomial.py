"""Quartic polynomial regression tasks.

Systems are degree-4 polynomials with coefficients drawn from U(0.1, 2.5);
inputs live on U(-1, 1) so function values stay at a tabletop scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..meta import Task

COEFF_LOW, COEFF_HIGH = 0.1, 2.5
X_LOW, X_HIGH = -1.0, 1.0
N_COEFFS = 5


@dataclass(frozen=True)
class PolySystem:
    """Polynomial coefficients, ascending degree, always length 5."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) != N_COEFFS:
            raise ValueError(f"need {N_COEFFS} coefficients, got {len(self.coeffs)}")


def eval_poly(system: PolySystem, x):
    """Horner evaluation of the polynomial at x (scalar or array)."""
    acc = np.zeros_like(np.asarray(x, dtype=np.float64))
    for a in reversed(system.coeffs):
        acc = acc * x + a
    return acc if acc.ndim else float(acc)


def sample_poly_system(rng: np.random.Generator, degree: int = 4) -> PolySystem:
    """Coefficients U(0.1, 2.5) up to `degree`, zero above."""
    if not 0 <= degree <= 4:
        raise ValueError(f"degree must be in [0, 4], got {degree}")
    coeffs = np.zeros(N_COEFFS)
    coeffs[: degree + 1] = rng.uniform(COEFF_LOW, COEFF_HIGH, size=degree + 1)
    return PolySystem(tuple(coeffs))


def sample_poly_task(seed: int, n: int = 5, n_prime: int = 15, degree: int = 4) -> Task:
    """One task: n context and n_prime target pairs from a fresh polynomial."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    system = sample_poly_system(rng, degree)
    x = rng.uniform(X_LOW, X_HIGH, size=n + n_prime)
    y = eval_poly(system, x)
    return Task(
        context_x=x[:n, None],
        context_y=y[:n, None],
        target_x=x[n:, None],
        target_y=y[n:, None],
        system=system,
    )


def make_poly_tasks(
    seed: int, count: int, n: int = 5, n_prime: int = 15, degree: int = 4
) -> list[Task]:
    """Deterministic task suite; each task gets an independent child seed."""
    child_seeds = np.random.SeedSequence(seed).generate_state(count)
    return [sample_poly_task(int(s), n, n_prime, degree) for s in child_seeds]
