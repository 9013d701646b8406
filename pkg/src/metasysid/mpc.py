"""Gradient-based receding-horizon control through a dynamics model.

The planner rolls an action window through a one-step model, accumulates the
tracking cost, and descends on the actions with gradients obtained by reverse
accumulation through the rollout. Backtracking (halve the step on an increase)
makes every accepted iterate at least as good as the initialization. The
closed loop re-identifies the context from recent transitions, plans, applies
the first action to the true system, and shifts the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .meta import TrainedModel, infer_contexts_bulk
from .mlp import backward_batch, forward_batch
from .systems.drone import (
    ACTION_BOUND,
    ACTION_DIM,
    STATE_DIM,
    WindProfile,
    drone_deriv_arrays,
    hover_action,
)
from .systems.integrate import Trajectory, n_steps_exact, rk4_step

COST_KINDS = ("track_reference", "stabilize_origin")


@dataclass(frozen=True)
class MPCConfig:
    horizon: int = 10
    plan_iters: int = 20
    plan_lr: float = 0.05
    cost: str = "track_reference"
    action_bound: float = ACTION_BOUND
    max_halvings: int = 5
    # The planner's tracking objective also follows the reference heading.
    # Without it the spin channel is cost-free, and any model error there is
    # exploited until the state leaves the training distribution. Reported
    # step costs stay position-only either way.
    plan_track_heading: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.plan_iters < 1:
            raise ValueError(f"plan_iters must be >= 1, got {self.plan_iters}")
        if self.cost not in COST_KINDS:
            raise ValueError(f"cost must be one of {COST_KINDS}, got {self.cost!r}")


@dataclass
class Plan:
    """An action window with its model-predicted cost."""

    actions: np.ndarray
    predicted_cost: float
    failed: bool = False


@dataclass(frozen=True)
class ContextInferenceConfig:
    """How the closed loop identifies context from recent transitions."""

    steps: int = 50
    alpha: float = 1e-3
    optimizer: str = "adam"
    window: int = 25
    warm_start: bool = False


@dataclass
class EpisodeLog:
    """Per-step records for reporting: contexts, wind, cost, failures."""

    contexts: list = field(default_factory=list)
    winds: list = field(default_factory=list)
    step_costs: list = field(default_factory=list)
    plan_failures: int = 0


class LearnedDynamicsModel:
    """One-step state-delta predictor around a learned network.

    next = s + f(s, a; c) * dt, with the context held fixed during planning.
    The context may be empty (a model trained without adaptation).
    """

    def __init__(self, spec, params, context: np.ndarray, dt: float):
        self.spec = spec
        self.params = params
        self.context = np.asarray(context, dtype=np.float64).ravel()
        self.dt = float(dt)
        self.state_dim = spec.out_dim
        self.action_dim = spec.in_dim - spec.out_dim - self.context.size
        if self.action_dim < 1:
            raise ValueError("model input must include at least one action dim")

    @classmethod
    def from_trained(cls, trained: TrainedModel, context: np.ndarray, dt: float):
        return cls(trained.spec, trained.theta, context, dt)

    def init_action(self) -> np.ndarray:
        return hover_action() if self.action_dim == ACTION_DIM else np.zeros(self.action_dim)

    def _input(self, s, u):
        return np.concatenate([s, u, self.context])[None, :]

    def step(self, s: np.ndarray, u: np.ndarray) -> np.ndarray:
        out, _ = forward_batch(self.spec, self.params, self._input(s, u))
        return s + self.dt * out[0]

    def step_vjp(self, s: np.ndarray, u: np.ndarray, lam: np.ndarray):
        _, cache = forward_batch(self.spec, self.params, self._input(s, u))
        _, g_in = backward_batch(
            self.spec, self.params, cache, (self.dt * lam)[None, :], inputs_only=True
        )
        g_in = g_in[0]
        ds = self.state_dim
        g_s = lam + g_in[:ds]
        g_u = g_in[ds : ds + self.action_dim]
        return g_s, g_u


class OracleDroneModel:
    """The true rotorcraft dynamics exposed through the planner interface.

    Wind is frozen at the value supplied for the current planning window;
    vector-Jacobian products come from central differences on the true step,
    batched over all perturbations.
    """

    state_dim = STATE_DIM
    action_dim = ACTION_DIM

    def __init__(self, wind_value: float, dt: float, fd_eps: float = 1e-6):
        self.wind = float(wind_value)
        self.dt = float(dt)
        self.fd_eps = float(fd_eps)

    def init_action(self) -> np.ndarray:
        return hover_action()

    def step(self, s: np.ndarray, u: np.ndarray) -> np.ndarray:
        return rk4_step(lambda st: drone_deriv_arrays(st, u, self.wind), s, self.dt)

    def step_vjp(self, s: np.ndarray, u: np.ndarray, lam: np.ndarray):
        n_in = self.state_dim + self.action_dim
        h = self.fd_eps
        states = np.tile(s, (2 * n_in, 1))
        actions = np.tile(u, (2 * n_in, 1))
        for i in range(self.state_dim):
            states[2 * i, i] += h
            states[2 * i + 1, i] -= h
        for j in range(self.action_dim):
            i = self.state_dim + j
            actions[2 * i, j] += h
            actions[2 * i + 1, j] -= h
        nxt = rk4_step(
            lambda st: drone_deriv_arrays(st, actions, self.wind), states, self.dt
        )
        proj = nxt @ lam
        grad = (proj[0::2] - proj[1::2]) / (2 * h)
        return grad[: self.state_dim], grad[self.state_dim :]


def _cost_indices(cfg: MPCConfig, state_dim: int) -> np.ndarray:
    if cfg.cost == "track_reference":
        want = 3 if cfg.plan_track_heading else 2
    else:
        want = 3
    return np.arange(min(want, state_dim))


def _rollout_cost(model, s0, actions, ref, idx, horizon):
    states = [np.asarray(s0, dtype=np.float64)]
    cost = 0.0
    for k in range(horizon):
        states.append(model.step(states[-1], actions[k]))
        err = states[-1][idx] - ref[k]
        cost += float(err @ err)
    return states, cost / horizon


def plan(
    model,
    current_state: np.ndarray,
    ref_window: np.ndarray | None,
    cfg: MPCConfig,
    warm_start: Plan | None = None,
) -> Plan:
    """Optimize an action window by gradient descent through the model.

    Initialized from the one-step-shifted warm start (last action repeated)
    or the model's neutral action. Runs cfg.plan_iters descent iterations
    with per-iteration backtracking; actions are clamped to the box after
    every candidate step. A non-finite rollout aborts and returns the
    initialization flagged as failed.
    """
    h = cfg.horizon
    idx = _cost_indices(cfg, model.state_dim)
    if cfg.cost == "track_reference":
        ref = np.asarray(ref_window, dtype=np.float64)
        if ref.shape != (h, idx.size):
            raise ValueError(
                f"reference window shape {ref.shape} != {(h, idx.size)}"
            )
    else:
        ref = np.zeros((h, idx.size))
    bound = cfg.action_bound
    if warm_start is not None:
        actions = np.concatenate([warm_start.actions[1:], warm_start.actions[-1:]])
        actions = np.clip(actions, -bound, bound)
    else:
        actions = np.tile(model.init_action(), (h, 1))
    s0 = np.asarray(current_state, dtype=np.float64)

    def try_rollout(acts):
        with np.errstate(over="ignore", invalid="ignore"):
            states, cost = _rollout_cost(model, s0, acts, ref, idx, h)
        ok = np.isfinite(cost) and all(np.all(np.isfinite(s)) for s in states)
        return states, cost, ok

    states, cost, ok = try_rollout(actions)
    if not ok:
        return Plan(actions=actions, predicted_cost=float("nan"), failed=True)

    for _ in range(cfg.plan_iters):
        lam = np.zeros(model.state_dim)
        grads = np.empty_like(actions)
        for k in range(h, 0, -1):
            direct = np.zeros(model.state_dim)
            direct[idx] = (2.0 / h) * (states[k][idx] - ref[k - 1])
            lam = lam + direct
            g_s, g_u = model.step_vjp(states[k - 1], actions[k - 1], lam)
            grads[k - 1] = g_u
            lam = g_s
        lr = cfg.plan_lr
        accepted = False
        for _halving in range(cfg.max_halvings + 1):
            cand = np.clip(actions - lr * grads, -bound, bound)
            cand_states, cand_cost, ok = try_rollout(cand)
            if not ok:
                return Plan(actions=actions, predicted_cost=cost, failed=True)
            if cand_cost <= cost:
                actions, states, cost = cand, cand_states, cand_cost
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break  # gradient step cannot improve even at the smallest rate
    return Plan(actions=actions, predicted_cost=cost, failed=False)


def control_cost(traj: Trajectory, ref: Trajectory | None) -> float:
    """Mean over time of the squared position error.

    Position means (x, y) against a reference trajectory; against the origin
    the heading angle joins the error as well.
    """
    states = traj.states
    if states.shape[0] < 1 or states.size == 0:
        raise ValueError("empty trajectory")
    if ref is not None:
        if ref.states.shape[0] != states.shape[0]:
            raise ValueError(
                f"trajectory length {states.shape[0]} != reference {ref.states.shape[0]}"
            )
        err = states[:, :2] - ref.states[:, :2]
    else:
        err = states[:, :3]
    return float(np.mean(np.sum(err * err, axis=1)))


def run_episode(
    model,
    inference_cfg: ContextInferenceConfig,
    true_system_stepper,
    wind: WindProfile,
    duration: float,
    dt: float,
    cfg: MPCConfig,
    reference: Trajectory | None = None,
    start_state: np.ndarray | None = None,
    log: EpisodeLog | None = None,
) -> tuple[Trajectory, float]:
    """Closed-loop control of the true system with per-step re-planning.

    Each step re-identifies the context from the trailing transition window
    (skipped for oracle models), plans from the shifted warm start, applies
    the first action to the true system, and records the realized cost. A
    failed plan keeps the previous action and is counted in the log.
    """
    n = n_steps_exact(duration, dt)
    if cfg.cost == "track_reference":
        if reference is None:
            raise ValueError("tracking episodes need a reference trajectory")
        if reference.states.shape[0] < n + 1:
            raise ValueError("reference shorter than the episode")
    learned = isinstance(model, TrainedModel)
    d_c = model.cfg.d_c if learned else 0
    s = np.zeros(STATE_DIM) if start_state is None else np.asarray(start_state, float)
    states = np.empty((n + 1, STATE_DIM))
    actions = np.empty((n, ACTION_DIM))
    states[0] = s
    total_cost = 0.0
    prev_plan: Plan | None = None
    prev_action = hover_action()
    context = np.zeros(d_c)
    plan_idx = _cost_indices(cfg, STATE_DIM)
    # reported step costs are position-only for tracking, pose for stabilize
    report_idx = np.arange(2) if cfg.cost == "track_reference" else np.arange(3)
    for k in range(n):
        t = k * dt
        if learned:
            w_ctx = inference_cfg.window
            lo = max(0, k - w_ctx)
            if k - lo >= 1:
                ctx_s = states[lo : k + 1]
                ctx_a = actions[lo:k]
                ctx_x = np.concatenate([ctx_s[:-1], ctx_a], axis=1)[None]
                ctx_y = ((ctx_s[1:] - ctx_s[:-1]) / dt)[None]
                c0 = context if inference_cfg.warm_start else None
                context = infer_contexts_bulk(
                    model.spec,
                    model.theta,
                    ctx_x,
                    ctx_y,
                    d_c,
                    inference_cfg.steps,
                    inference_cfg.alpha,
                    inference_cfg.optimizer,
                    c0=c0,
                )[0]
            planner_model = LearnedDynamicsModel.from_trained(model, context, dt)
        else:
            planner_model = model.at_time(t) if hasattr(model, "at_time") else model
        if cfg.cost == "track_reference":
            rows = np.arange(k + 1, k + cfg.horizon + 1).clip(max=n)
            ref_window = reference.states[rows][:, : plan_idx.size]
        else:
            ref_window = None
        the_plan = plan(planner_model, s, ref_window, cfg, warm_start=prev_plan)
        if the_plan.failed:
            u = prev_action
            if log is not None:
                log.plan_failures += 1
        else:
            u = the_plan.actions[0]
            prev_plan = the_plan
        actions[k] = u
        prev_action = u
        s = true_system_stepper(s, u, t)
        states[k + 1] = s
        if cfg.cost == "track_reference":
            err = s[report_idx] - reference.states[k + 1, report_idx]
        else:
            err = s[report_idx]
        step_cost = float(err @ err)
        total_cost += step_cost
        if log is not None:
            log.contexts.append(context.copy())
            log.winds.append(wind.at(t))
            log.step_costs.append(step_cost)
    return Trajectory(dt=dt, states=states, actions=actions), total_cost


class OracleDronePlanner:
    """Planner-model family: true dynamics at the wind of the planning time."""

    def __init__(self, wind: WindProfile, dt: float):
        self.wind = wind
        self.dt = float(dt)

    def at_time(self, t: float) -> OracleDroneModel:
        return OracleDroneModel(self.wind.at(t), self.dt)


def drone_true_stepper(wind: WindProfile, dt: float):
    """True-simulator step function for run_episode, wind frozen per step."""

    def stepper(s, u, t):
        return rk4_step(lambda st: drone_deriv_arrays(st, u, wind.at(t)), s, dt)

    return stepper
