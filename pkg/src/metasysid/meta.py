"""Shared-class model training with optimized per-task context.

A single network f(x; c) is trained across a family of related systems. The
class parameters theta are shared; each system is identified at use time by
gradient descent on the low-dimensional context input c, starting from zero.
Training is bi-level: contexts are inferred against a slowly-updated target
copy of the parameters, the live parameters take an Adam step on the target
points, and the target copy then tracks the live one by a small mixing weight.
Keeping the two copies independent means no gradient ever has to flow through
the inner optimization.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kvtext
from .errors import ConfigError, NumericalError
from .mlp import (
    MLPSpec,
    ParameterSet,
    backward_batch,
    backward_preinput,
    first_layer_weight,
    forward,
    forward_batch,
    init_params,
    load_params,
    save_params,
)
from .optim import AdamState, EMAConfig, adam_step, ema_update, gd_step
from .threads import limit_blas_threads

INNER_OPTIMIZERS = ("gd", "adam")


@dataclass
class Task:
    """Context and target pairs drawn from one system instance.

    `system` carries the ground-truth parameters for oracles and diagnostics
    only; no training code may read it.
    """

    context_x: np.ndarray
    context_y: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray
    system: object = None

    def __post_init__(self):
        self.context_x = np.atleast_2d(np.asarray(self.context_x, dtype=np.float64))
        self.context_y = np.atleast_2d(np.asarray(self.context_y, dtype=np.float64))
        self.target_x = np.asarray(self.target_x, dtype=np.float64).reshape(
            -1, self.context_x.shape[1]
        )
        self.target_y = np.asarray(self.target_y, dtype=np.float64).reshape(
            -1, self.context_y.shape[1]
        )
        if self.n_context < 1:
            raise ValueError("a task needs at least one context pair")
        if self.context_x.shape[0] != self.context_y.shape[0]:
            raise ValueError("context_x / context_y length mismatch")
        if self.target_x.shape[0] != self.target_y.shape[0]:
            raise ValueError("target_x / target_y length mismatch")

    @property
    def n_context(self) -> int:
        return self.context_x.shape[0]

    @property
    def n_target(self) -> int:
        return self.target_x.shape[0]


@dataclass
class ContextVector:
    """Identified context fed to the model as extra input."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("context contains non-finite entries")


@dataclass(frozen=True)
class MetaSysIdConfig:
    d_c: int = 32
    inner_steps: int = 100
    inner_alpha: float = 1e-3
    inner_optimizer: str = "gd"
    tau: float = 0.1
    outer_lr: float = 1e-3
    epochs: int = 1000
    batch_size: int = 256

    def __post_init__(self):
        if self.d_c < 1 or self.inner_steps < 1 or self.epochs < 0:
            raise ConfigError(f"invalid config {self}")
        if self.inner_alpha <= 0 or self.outer_lr < 0 or self.batch_size < 1:
            raise ConfigError(f"invalid config {self}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.inner_optimizer not in INNER_OPTIMIZERS:
            raise ConfigError(
                f"inner_optimizer must be one of {INNER_OPTIMIZERS}, "
                f"got {self.inner_optimizer!r}"
            )


@dataclass
class TrainedModel:
    spec: MLPSpec
    theta: ParameterSet
    theta_bar: ParameterSet
    cfg: MetaSysIdConfig

    def __post_init__(self):
        if self.theta.shapes != self.spec.layer_shapes():
            raise ValueError("theta does not match spec")
        if self.theta_bar.shapes != self.spec.layer_shapes():
            raise ValueError("theta_bar does not match spec")

    @property
    def x_dim(self) -> int:
        return self.spec.in_dim - self.cfg.d_c

    @property
    def y_dim(self) -> int:
        return self.spec.out_dim


@dataclass
class TrainingDiagnostics:
    """Counters exposing which network each gradient was taken against."""

    inner_grad_evals_target: int = 0
    inner_grad_evals_live: int = 0
    outer_grad_evals: int = 0
    context_updates_in_outer: int = 0
    batches: int = 0


def _exact_colsum(rows: np.ndarray) -> np.ndarray:
    """Exactly-rounded per-column sum; invariant to row permutation."""
    return np.array([math.fsum(rows[:, j]) for j in range(rows.shape[1])])


def _context_loss_and_grad(spec, params, ctx_x, ctx_y, c, d_c):
    """Mean-over-points squared-error loss at context c, and its c-gradient.

    Cross-point reductions are exactly rounded so the result does not depend
    on the order of the context pairs.
    """
    n = ctx_x.shape[0]
    x_full = np.concatenate([ctx_x, np.tile(c, (n, 1))], axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        out, cache = forward_batch(spec, params, x_full)
        resid = out - ctx_y
        per_point = np.sum(resid * resid, axis=1)
        loss = math.fsum(per_point) / n
        _, g_inputs = backward_batch(
            spec, params, cache, (2.0 / n) * resid, inputs_only=True
        )
        g_c = _exact_colsum(g_inputs[:, -d_c:])
    return loss, g_c


def infer_context(
    model: TrainedModel,
    context_x: np.ndarray,
    context_y: np.ndarray,
    steps: int,
    use_target_net: bool = False,
    alpha: float | None = None,
    optimizer: str | None = None,
) -> tuple[ContextVector, list[float]]:
    """Identify a context from data by running `steps` optimizer iterations.

    The context starts at zero and descends the mean squared context loss;
    the network parameters stay frozen (live copy by default, target copy
    with use_target_net). Returns the final context and the loss trace, one
    entry per visited iterate including the start.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    ctx_x = np.atleast_2d(np.asarray(context_x, dtype=np.float64))
    ctx_y = np.atleast_2d(np.asarray(context_y, dtype=np.float64))
    if ctx_x.shape[0] < 1:
        raise ValueError("need at least one context pair")
    cfg = model.cfg
    alpha = cfg.inner_alpha if alpha is None else float(alpha)
    optimizer = cfg.inner_optimizer if optimizer is None else optimizer
    params = model.theta_bar if use_target_net else model.theta
    c = np.zeros(cfg.d_c)
    adam = AdamState.zeros(cfg.d_c) if optimizer == "adam" else None
    trace: list[float] = []
    for k in range(steps):
        loss, g_c = _context_loss_and_grad(model.spec, params, ctx_x, ctx_y, c, cfg.d_c)
        if not np.isfinite(loss):
            raise NumericalError(f"context loss became non-finite at step {k}")
        trace.append(loss)
        if optimizer == "adam":
            c, adam = adam_step(c, g_c, adam, alpha)
        else:
            c = gd_step(c, g_c, alpha)
    final_loss, _ = _context_loss_and_grad(
        model.spec, params, ctx_x, ctx_y, c, cfg.d_c
    )
    if not np.isfinite(final_loss):
        raise NumericalError(f"context loss became non-finite at step {steps}")
    trace.append(final_loss)
    return ContextVector(c), trace


def infer_contexts_bulk(
    spec: MLPSpec,
    params: ParameterSet,
    ctx_x: np.ndarray,
    ctx_y: np.ndarray,
    d_c: int,
    steps: int,
    alpha: float,
    optimizer: str = "gd",
    c0: np.ndarray | None = None,
) -> np.ndarray:
    """Vectorized context identification for a stack of tasks.

    ctx_x is (B, N, x_dim), ctx_y is (B, N, y_dim); returns contexts (B, d_c).
    Same math as infer_context but with fixed-order batched reductions; use
    it when throughput matters more than the per-point permutation guarantee.
    c0 overrides the zero initialization (warm starts).
    """
    b_tasks, n, x_dim = ctx_x.shape
    y_flat = ctx_y.reshape(b_tasks * n, -1)
    x_base = np.empty((b_tasks, n, x_dim + d_c))
    x_base[:, :, :x_dim] = ctx_x
    x_full = x_base.reshape(b_tasks * n, x_dim + d_c)
    w0_ctx = first_layer_weight(params)[:, x_dim:]
    if c0 is None:
        c = np.zeros((b_tasks, d_c))
    else:
        c = np.array(np.broadcast_to(np.asarray(c0, dtype=np.float64), (b_tasks, d_c)))
    adam = AdamState.zeros(b_tasks * d_c) if optimizer == "adam" else None
    for k in range(steps):
        x_base[:, :, x_dim:] = c[:, None, :]
        with np.errstate(over="ignore", invalid="ignore"):
            out, cache = forward_batch(spec, params, x_full)
            resid = out - y_flat
        if not np.all(np.isfinite(resid)):
            raise NumericalError(f"context residual became non-finite at step {k}")
        dz0 = backward_preinput(spec, params, cache, (2.0 / n) * resid)
        # grad wrt c sums over context points; fold the sum before the gemm
        g_c = dz0.reshape(b_tasks, n, -1).sum(axis=1) @ w0_ctx
        if optimizer == "adam":
            flat, adam = adam_step(c.ravel(), g_c.ravel(), adam, alpha)
            c = flat.reshape(b_tasks, d_c)
        else:
            c = c - alpha * g_c
    return c


def _stack_tasks(tasks):
    ctx_x = np.stack([t.context_x for t in tasks])
    ctx_y = np.stack([t.context_y for t in tasks])
    tgt_x = np.stack([t.target_x for t in tasks])
    tgt_y = np.stack([t.target_y for t in tasks])
    return ctx_x, ctx_y, tgt_x, tgt_y


def meta_train(
    tasks: list[Task],
    spec: MLPSpec,
    cfg: MetaSysIdConfig,
    seed: int,
    diagnostics: TrainingDiagnostics | None = None,
) -> tuple[TrainedModel, list[float]]:
    """Train the shared-class model on a set of tasks.

    Per batch: infer every task's context with K inner steps against the
    frozen target parameters, take one Adam step on the live parameters using
    the target-point loss at those contexts, then let the target parameters
    track the live ones. Returns the model and the per-epoch mean outer loss.
    """
    if not tasks:
        raise ValueError("task list is empty")
    limit_blas_threads()
    for t in tasks:
        if t.n_target < 1:
            raise ValueError("meta-training requires at least one target pair per task")
    ctx_x, ctx_y, tgt_x, tgt_y = _stack_tasks(tasks)
    n_tasks, n_ctx, x_dim = ctx_x.shape
    n_tgt = tgt_x.shape[1]
    if spec.in_dim != x_dim + cfg.d_c:
        raise ValueError(
            f"spec input dim {spec.in_dim} != x_dim {x_dim} + d_c {cfg.d_c}"
        )
    theta = init_params(spec, seed)
    theta_bar = theta.copy()
    adam = AdamState.zeros(spec.n_params)
    ema_cfg = EMAConfig(tau=cfg.tau)
    shuffle_rng = np.random.default_rng([seed, 0x5EED])
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n_tasks)
        sq_sum = 0.0
        row_count = 0
        for start in range(0, n_tasks, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            b = batch.size
            try:
                contexts = infer_contexts_bulk(
                    spec,
                    theta_bar,
                    ctx_x[batch],
                    ctx_y[batch],
                    cfg.d_c,
                    cfg.inner_steps,
                    cfg.inner_alpha,
                    cfg.inner_optimizer,
                )
            except NumericalError as exc:
                raise NumericalError(
                    f"inner loop failed at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}: {exc}"
                ) from exc
            if diagnostics is not None:
                diagnostics.inner_grad_evals_target += cfg.inner_steps
                diagnostics.batches += 1
            x_full = np.concatenate(
                [tgt_x[batch].reshape(b * n_tgt, x_dim), np.repeat(contexts, n_tgt, axis=0)],
                axis=1,
            )
            with np.errstate(over="ignore", invalid="ignore"):
                out, cache = forward_batch(spec, theta, x_full)
                resid = out - tgt_y[batch].reshape(b * n_tgt, -1)
                batch_loss = float(np.sum(resid * resid) / (b * n_tgt))
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"outer loss became non-finite at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}"
                )
            g_theta, _ = backward_batch(
                spec, theta, cache, (2.0 / (b * n_tgt)) * resid
            )
            if diagnostics is not None:
                diagnostics.outer_grad_evals += 1
            new_values, adam = adam_step(theta.values, g_theta, adam, cfg.outer_lr)
            theta = ParameterSet(new_values, theta.shapes)
            theta_bar = ema_update(theta, theta_bar, ema_cfg)
            sq_sum += batch_loss * b * n_tgt
            row_count += b * n_tgt
        epoch_losses.append(sq_sum / row_count)
    model = TrainedModel(spec=spec, theta=theta, theta_bar=theta_bar, cfg=cfg)
    return model, epoch_losses


def predict_adapted(
    model: TrainedModel, c: ContextVector, x: np.ndarray
) -> np.ndarray:
    """Query the live network at input x under the identified context."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size + c.values.size != model.spec.in_dim:
        raise ValueError(
            f"x dim {x.size} + context dim {c.values.size} != "
            f"network input dim {model.spec.in_dim}"
        )
    return forward(model.spec, model.theta, np.concatenate([x, c.values]))


def predict_adapted_batch(
    model: TrainedModel, contexts: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """Vectorized predictions: contexts (B, d_c), x (B, M, x_dim) -> (B, M, y)."""
    b, m, x_dim = x.shape
    x_full = np.concatenate(
        [x.reshape(b * m, x_dim), np.repeat(contexts, m, axis=0)], axis=1
    )
    out, _ = forward_batch(model.spec, model.theta, x_full)
    return out.reshape(b, m, -1)


# ---------------------------------------------------------------------------
# Persistence: two .params files plus a structured-text manifest.
# ---------------------------------------------------------------------------


def dataset_digest(tasks: list[Task]) -> str:
    h = hashlib.sha256()
    for t in tasks:
        for arr in (t.context_x, t.context_y, t.target_x, t.target_y):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def save_model(model: TrainedModel, out_dir, seed: int, data_digest: str = "") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_params(model.theta, out / "theta.params")
    save_params(model.theta_bar, out / "theta_bar.params")
    cfg = model.cfg
    sections = {
        "spec": {
            "layer_sizes": kvtext.fmt_list(model.spec.layer_sizes),
            "activation": kvtext.fmt_list(model.spec.activation) or "identity",
        },
        "cfg": {
            "d_c": str(cfg.d_c),
            "inner_steps": str(cfg.inner_steps),
            "inner_alpha": kvtext.fmt_float(cfg.inner_alpha),
            "inner_optimizer": cfg.inner_optimizer,
            "tau": kvtext.fmt_float(cfg.tau),
            "outer_lr": kvtext.fmt_float(cfg.outer_lr),
            "epochs": str(cfg.epochs),
            "batch_size": str(cfg.batch_size),
        },
        "provenance": {"seed": str(seed), "data_digest": data_digest or "unknown"},
    }
    (out / "manifest.txt").write_text(kvtext.serialize(sections))


def load_model(model_dir) -> tuple[TrainedModel, dict]:
    src = Path(model_dir)
    sections = kvtext.parse((src / "manifest.txt").read_text(), str(src / "manifest.txt"))
    spec_sec = sections.get("spec", {})
    sizes = tuple(int(s) for s in spec_sec["layer_sizes"].split())
    acts = tuple(spec_sec["activation"].split())
    if acts == ("identity",) and len(sizes) == 2:
        spec = MLPSpec(sizes, "identity")
    else:
        spec = MLPSpec(sizes, acts if len(acts) == len(sizes) - 2 else acts[0])
    c = sections.get("cfg", {})
    cfg = MetaSysIdConfig(
        d_c=int(c["d_c"]),
        inner_steps=int(c["inner_steps"]),
        inner_alpha=float(c["inner_alpha"]),
        inner_optimizer=c["inner_optimizer"],
        tau=float(c["tau"]),
        outer_lr=float(c["outer_lr"]),
        epochs=int(c["epochs"]),
        batch_size=int(c["batch_size"]),
    )
    model = TrainedModel(
        spec=spec,
        theta=load_params(src / "theta.params"),
        theta_bar=load_params(src / "theta_bar.params"),
        cfg=cfg,
    )
    return model, dict(sections.get("provenance", {}))
