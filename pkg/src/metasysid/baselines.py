"""Baseline adapters: no adaptation, first-order MAML, set encoder, and
classical least-squares identification.

These share the batching discipline of the main trainer so comparisons see
identical data schedules.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError
from .meta import Task, _exact_colsum, _stack_tasks
from .mlp import (
    MLPSpec,
    ParameterSet,
    backward_batch,
    backward_stack,
    forward_batch,
    forward_stack,
    init_params,
)
from .optim import AdamState, adam_step
from .threads import limit_blas_threads


def _shuffler(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0x5EED])


def train_noadapt(
    tasks: list[Task],
    spec: MLPSpec,
    outer_lr: float,
    epochs: int,
    seed: int,
    batch_size: int = 256,
) -> ParameterSet:
    """Plain supervised regression on the pooled target points, no context."""
    if not tasks:
        raise ValueError("task list is empty")
    limit_blas_threads()
    _, _, tgt_x, tgt_y = _stack_tasks(tasks)
    n_tasks, n_tgt, x_dim = tgt_x.shape
    if spec.in_dim != x_dim:
        raise ValueError(f"spec input dim {spec.in_dim} != data dim {x_dim}")
    theta = init_params(spec, seed)
    adam = AdamState.zeros(spec.n_params)
    rng = _shuffler(seed)
    for epoch in range(epochs):
        order = rng.permutation(n_tasks)
        for start in range(0, n_tasks, batch_size):
            batch = order[start : start + batch_size]
            b = batch.size
            x = tgt_x[batch].reshape(b * n_tgt, x_dim)
            y = tgt_y[batch].reshape(b * n_tgt, -1)
            out, cache = forward_batch(spec, theta, x)
            resid = out - y
            if not np.all(np.isfinite(resid)):
                raise NumericalError(
                    f"loss became non-finite at epoch {epoch}, "
                    f"batch {start // batch_size}"
                )
            g, _ = backward_batch(spec, theta, cache, (2.0 / (b * n_tgt)) * resid)
            values, adam = adam_step(theta.values, g, adam, outer_lr)
            theta = ParameterSet(values, theta.shapes)
    return theta


def fomaml_outer_grad(
    spec: MLPSpec,
    theta: ParameterSet,
    ctx_x: np.ndarray,
    ctx_y: np.ndarray,
    tgt_x: np.ndarray,
    tgt_y: np.ndarray,
    inner_k: int,
    inner_alpha: float,
) -> np.ndarray:
    """First-order meta-gradient for one batch of tasks.

    Adapts a per-task copy of theta with inner_k gradient steps on the context
    loss, then returns the mean over tasks of the target-loss gradient taken
    at the adapted parameters (no second-order terms).
    """
    b, n_ctx, x_dim = ctx_x.shape
    n_tgt = tgt_x.shape[1]
    stack = np.tile(theta.values, (b, 1))
    for _ in range(inner_k):
        out, cache = forward_stack(spec, stack, ctx_x)
        resid = out - ctx_y
        grads, _ = backward_stack(spec, stack, cache, (2.0 / n_ctx) * resid)
        stack = stack - inner_alpha * grads
    out, cache = forward_stack(spec, stack, tgt_x)
    resid = out - tgt_y
    if not np.all(np.isfinite(resid)):
        raise NumericalError("adapted target residual became non-finite")
    grads, _ = backward_stack(spec, stack, cache, (2.0 / n_tgt) * resid)
    return grads.mean(axis=0)


def train_fomaml(
    tasks: list[Task],
    spec: MLPSpec,
    inner_k: int,
    inner_alpha: float,
    outer_lr: float,
    epochs: int,
    seed: int,
    batch_size: int = 256,
) -> ParameterSet:
    """First-order MAML: adapt per-task parameter copies, apply the adapted
    target-loss gradient directly to the shared initialization."""
    if not tasks:
        raise ValueError("task list is empty")
    limit_blas_threads()
    if inner_k < 0:
        raise ValueError(f"inner_k must be >= 0, got {inner_k}")
    ctx_x, ctx_y, tgt_x, tgt_y = _stack_tasks(tasks)
    n_tasks = ctx_x.shape[0]
    if spec.in_dim != ctx_x.shape[2]:
        raise ValueError(f"spec input dim {spec.in_dim} != data dim {ctx_x.shape[2]}")
    theta = init_params(spec, seed)
    adam = AdamState.zeros(spec.n_params)
    rng = _shuffler(seed)
    for epoch in range(epochs):
        order = rng.permutation(n_tasks)
        for start in range(0, n_tasks, batch_size):
            batch = order[start : start + batch_size]
            g = fomaml_outer_grad(
                spec,
                theta,
                ctx_x[batch],
                ctx_y[batch],
                tgt_x[batch],
                tgt_y[batch],
                inner_k,
                inner_alpha,
            )
            values, adam = adam_step(theta.values, g, adam, outer_lr)
            theta = ParameterSet(values, theta.shapes)
    return theta


def fomaml_adapt(
    spec: MLPSpec,
    theta: ParameterSet,
    context_x: np.ndarray,
    context_y: np.ndarray,
    inner_k: int,
    inner_alpha: float,
) -> ParameterSet:
    """Test-time adaptation: inner_k gradient steps on one task's context loss."""
    ctx_x = np.atleast_2d(np.asarray(context_x, dtype=np.float64))[None]
    ctx_y = np.atleast_2d(np.asarray(context_y, dtype=np.float64))[None]
    stack = theta.values[None, :].copy()
    n_ctx = ctx_x.shape[1]
    for _ in range(inner_k):
        out, cache = forward_stack(spec, stack, ctx_x)
        resid = out - ctx_y
        grads, _ = backward_stack(spec, stack, cache, (2.0 / n_ctx) * resid)
        stack = stack - inner_alpha * grads
    return ParameterSet(stack[0], spec.layer_shapes())


def encode_context(
    enc_spec: MLPSpec, psi: ParameterSet, context_x: np.ndarray, context_y: np.ndarray
) -> np.ndarray:
    """Set encoding of one task: shared network per pair, exact mean pool.

    The pooled mean is exactly rounded, so the result is invariant to the
    order of the context pairs.
    """
    ctx_x = np.atleast_2d(np.asarray(context_x, dtype=np.float64))
    ctx_y = np.atleast_2d(np.asarray(context_y, dtype=np.float64))
    pairs = np.concatenate([ctx_x, ctx_y], axis=1)
    enc, _ = forward_batch(enc_spec, psi, pairs)
    return _exact_colsum(enc) / enc.shape[0]


def train_setencoder(
    tasks: list[Task],
    spec: MLPSpec,
    enc_spec: MLPSpec,
    outer_lr: float,
    epochs: int,
    seed: int,
    batch_size: int = 256,
) -> tuple[ParameterSet, ParameterSet]:
    """Jointly train prediction net and permutation-invariant context encoder.

    Each context pair goes through the shared encoder; per-task codes are the
    mean over pairs and enter the prediction net as its context input. Both
    networks take one Adam step per batch on the target-point loss.
    """
    if not tasks:
        raise ValueError("task list is empty")
    limit_blas_threads()
    ctx_x, ctx_y, tgt_x, tgt_y = _stack_tasks(tasks)
    n_tasks, n_ctx, x_dim = ctx_x.shape
    n_tgt = tgt_x.shape[1]
    y_dim = ctx_y.shape[2]
    d_c = enc_spec.out_dim
    if enc_spec.in_dim != x_dim + y_dim:
        raise ValueError(
            f"encoder input dim {enc_spec.in_dim} != pair dim {x_dim + y_dim}"
        )
    if spec.in_dim != x_dim + d_c:
        raise ValueError(f"spec input dim {spec.in_dim} != x_dim + d_c {x_dim + d_c}")
    seeds = np.random.SeedSequence(seed).generate_state(2)
    theta = init_params(spec, int(seeds[0]))
    psi = init_params(enc_spec, int(seeds[1]))
    adam = AdamState.zeros(spec.n_params + enc_spec.n_params)
    rng = _shuffler(seed)
    pairs_all = np.concatenate([ctx_x, ctx_y], axis=2)
    for epoch in range(epochs):
        order = rng.permutation(n_tasks)
        for start in range(0, n_tasks, batch_size):
            batch = order[start : start + batch_size]
            b = batch.size
            pair_rows = pairs_all[batch].reshape(b * n_ctx, x_dim + y_dim)
            enc_out, enc_cache = forward_batch(enc_spec, psi, pair_rows)
            codes = enc_out.reshape(b, n_ctx, d_c).mean(axis=1)
            x_full = np.concatenate(
                [tgt_x[batch].reshape(b * n_tgt, x_dim), np.repeat(codes, n_tgt, axis=0)],
                axis=1,
            )
            out, cache = forward_batch(spec, theta, x_full)
            resid = out - tgt_y[batch].reshape(b * n_tgt, -1)
            if not np.all(np.isfinite(resid)):
                raise NumericalError(
                    f"loss became non-finite at epoch {epoch}, "
                    f"batch {start // batch_size}"
                )
            g_theta, g_in = backward_batch(
                spec, theta, cache, (2.0 / (b * n_tgt)) * resid
            )
            g_codes = g_in[:, x_dim:].reshape(b, n_tgt, d_c).sum(axis=1)
            g_enc_rows = np.repeat(g_codes / n_ctx, n_ctx, axis=0)
            g_psi, _ = backward_batch(enc_spec, psi, enc_cache, g_enc_rows)
            joint = np.concatenate([theta.values, psi.values])
            joint, adam = adam_step(joint, np.concatenate([g_theta, g_psi]), adam, outer_lr)
            theta = ParameterSet(joint[: spec.n_params], theta.shapes)
            psi = ParameterSet(joint[spec.n_params :], psi.shapes)
    return theta, psi


def classical_sysid_poly(
    context_x: np.ndarray, context_y: np.ndarray, degree: int
) -> np.ndarray:
    """Least-squares polynomial coefficients from context points.

    Ascending-degree coefficients; minimum-norm solution when the Vandermonde
    system is underdetermined. Conflicting duplicates are fine, the result is
    still the least-squares fit.
    """
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    x = np.asarray(context_x, dtype=np.float64).ravel()
    y = np.asarray(context_y, dtype=np.float64).ravel()
    if x.size < 1:
        raise ValueError("need at least one point")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    vand = np.vander(x, degree + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(vand, y, rcond=None)
    return coeffs
