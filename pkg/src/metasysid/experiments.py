"""End-to-end studies: data generation, training, evaluation, emission.

Each experiment runs per-seed pipelines that depend only on their own seed,
so seeds can execute in parallel processes and adding a seed never perturbs
another's metrics. Results assemble in seed order; all emitted CSVs are
byte-deterministic for a fixed config and seed set.
"""

from __future__ import annotations

import hashlib
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import (
    classical_sysid_poly,
    train_fomaml,
    train_noadapt,
    train_setencoder,
)
from .config import ExperimentConfig, config_digest, serialize_config
from .errors import ConfigError, NumericalError
from .meta import (
    MetaSysIdConfig,
    Task,
    TrainedModel,
    dataset_digest,
    infer_contexts_bulk,
    meta_train,
    predict_adapted_batch,
    save_model,
)
from .mlp import (
    MLPSpec,
    backward_stack,
    forward_batch,
    forward_stack,
    interpolate_params,
    save_params,
)
from .mpc import (
    ContextInferenceConfig,
    EpisodeLog,
    LearnedDynamicsModel,
    MPCConfig,
    OracleDronePlanner,
    drone_true_stepper,
    run_episode,
)
from .metrics import n_step_mse, pca_1d
from .reporting import (
    MetricsReport,
    render_budget_sweep,
    render_episode,
    render_interpolation_curves,
    render_loss_curve,
    render_mse_vs_context,
    render_rollout_box,
    write_csv,
    write_loss_csv,
    write_metrics_csv,
)
from .systems.drone import (
    WindProfile,
    collect_drone_dataset,
    drone_tasks_from_dataset,
    gen_reference_trajectory,
)
from .systems.polynomial import PolySystem, eval_poly, make_poly_tasks
from .systems.spring import (
    SpringState,
    make_spring_dataset,
    simulate_spring,
    spring_tasks_from_dataset,
)
from .threads import limit_blas_threads


def derive_seed(seed: int, label: str) -> int:
    """Stable per-purpose child seed; isolation between pipeline stages."""
    return int(np.random.SeedSequence([seed, zlib.crc32(label.encode())]).generate_state(1)[0])


@dataclass
class SeedResult:
    seed: int
    metrics: dict
    extras: dict
    data_digest: str


# ---------------------------------------------------------------------------
# Polynomial regression study
# ---------------------------------------------------------------------------


def _poly_specs(cfg: ExperimentConfig):
    hid = cfg.model.hidden
    with_ctx = MLPSpec((1 + cfg.model.d_c, *hid, 1))
    without_ctx = MLPSpec((1, *hid, 1))
    return with_ctx, without_ctx


def _poly_datasets(cfg: ExperimentConfig, seed: int):
    p = cfg.poly
    train = make_poly_tasks(derive_seed(seed, "poly-train"), p.n_train, p.n_context, p.n_target, p.degree)
    test = make_poly_tasks(derive_seed(seed, "poly-test"), p.n_test, p.n_test_context, p.n_target, p.degree)
    return train, test


def _meta_cfg(cfg: ExperimentConfig) -> MetaSysIdConfig:
    t = cfg.training
    return MetaSysIdConfig(
        d_c=cfg.model.d_c,
        inner_steps=t.inner_steps,
        inner_alpha=t.inner_alpha,
        inner_optimizer=t.inner_optimizer,
        tau=t.tau,
        outer_lr=t.outer_lr,
        epochs=t.epochs,
        batch_size=t.batch_size,
    )


def meta_test_mse(model: TrainedModel, tasks: list[Task], n_context: int, steps: int) -> float:
    """Mean test MSE with contexts identified from the first n_context pairs."""
    ctx_x = np.stack([t.context_x[:n_context] for t in tasks])
    ctx_y = np.stack([t.context_y[:n_context] for t in tasks])
    tgt_x = np.stack([t.target_x for t in tasks])
    tgt_y = np.stack([t.target_y for t in tasks])
    contexts = infer_contexts_bulk(
        model.spec, model.theta, ctx_x, ctx_y, model.cfg.d_c,
        steps, model.cfg.inner_alpha, model.cfg.inner_optimizer,
    )
    pred = predict_adapted_batch(model, contexts, tgt_x)
    return float(np.mean((pred - tgt_y) ** 2))


def _fomaml_eval_mse(spec, theta, tasks, n_context, k, alpha) -> float:
    ctx_x = np.stack([t.context_x[:n_context] for t in tasks])
    ctx_y = np.stack([t.context_y[:n_context] for t in tasks])
    tgt_x = np.stack([t.target_x for t in tasks])
    tgt_y = np.stack([t.target_y for t in tasks])
    b, n, _ = ctx_x.shape
    stack = np.tile(theta.values, (b, 1))
    for _ in range(k):
        out, cache = forward_stack(spec, stack, ctx_x)
        grads, _ = backward_stack(spec, stack, cache, (2.0 / n) * (out - ctx_y))
        stack = stack - alpha * grads
    pred, _ = forward_stack(spec, stack, tgt_x)
    return float(np.mean((pred - tgt_y) ** 2))


def _setencoder_eval_mse(spec, enc_spec, theta, psi, tasks, n_context) -> float:
    ctx_x = np.stack([t.context_x[:n_context] for t in tasks])
    ctx_y = np.stack([t.context_y[:n_context] for t in tasks])
    tgt_x = np.stack([t.target_x for t in tasks])
    tgt_y = np.stack([t.target_y for t in tasks])
    b, n, _ = ctx_x.shape
    pairs = np.concatenate([ctx_x, ctx_y], axis=2).reshape(b * n, -1)
    enc, _ = forward_batch(enc_spec, psi, pairs)
    codes = enc.reshape(b, n, -1).mean(axis=1)
    n_tgt = tgt_x.shape[1]
    x_full = np.concatenate(
        [tgt_x.reshape(b * n_tgt, -1), np.repeat(codes, n_tgt, axis=0)], axis=1
    )
    pred, _ = forward_batch(spec, theta, x_full)
    return float(np.mean((pred - tgt_y.reshape(b * n_tgt, -1)) ** 2))


def _poly_seed_worker(cfg: ExperimentConfig, seed: int) -> SeedResult:
    limit_blas_threads()
    train_tasks, test_tasks = _poly_datasets(cfg, seed)
    digest = dataset_digest(train_tasks + test_tasks)
    spec_ctx, spec_plain = _poly_specs(cfg)
    t = cfg.training
    eval_ns = [n for n in cfg.evaluation.eval_contexts if n <= cfg.poly.n_test_context]
    metrics: dict = {}
    extras: dict = {}
    if cfg.method == "meta_sysid":
        model, losses = meta_train(train_tasks, spec_ctx, _meta_cfg(cfg), seed)
        extras["losses"] = losses
        extras["model"] = model
        for n in eval_ns:
            metrics[f"mse_n{n}"] = meta_test_mse(
                model, test_tasks, n, cfg.evaluation.inference_steps
            )
    elif cfg.method == "fomaml":
        theta = train_fomaml(
            train_tasks, spec_plain, t.fomaml_k, t.fomaml_alpha, t.outer_lr,
            t.epochs, seed, t.batch_size,
        )
        extras["theta"] = theta
        for n in eval_ns:
            metrics[f"mse_n{n}"] = _fomaml_eval_mse(
                spec_plain, theta, test_tasks, n, t.fomaml_k, t.fomaml_alpha
            )
    elif cfg.method == "set_encoder":
        enc_spec = MLPSpec((2, *cfg.model.enc_hidden, cfg.model.d_c))
        theta, psi = train_setencoder(
            train_tasks, spec_ctx, enc_spec, t.outer_lr, t.epochs, seed, t.batch_size
        )
        extras["theta"] = theta
        for n in eval_ns:
            metrics[f"mse_n{n}"] = _setencoder_eval_mse(
                spec_ctx, enc_spec, theta, psi, test_tasks, n
            )
    elif cfg.method == "no_adapt":
        theta = train_noadapt(train_tasks, spec_plain, t.outer_lr, t.epochs, seed, t.batch_size)
        extras["theta"] = theta
        tgt_x = np.stack([task.target_x for task in test_tasks])
        tgt_y = np.stack([task.target_y for task in test_tasks])
        out, _ = forward_batch(spec_plain, theta, tgt_x.reshape(-1, 1))
        mse = float(np.mean((out - tgt_y.reshape(-1, 1)) ** 2))
        for n in eval_ns:
            metrics[f"mse_n{n}"] = mse
    elif cfg.method == "classical_sysid":
        for n in eval_ns:
            errs = []
            for task in test_tasks:
                coef = classical_sysid_poly(task.context_x[:n], task.context_y[:n], cfg.poly.degree)
                pred = eval_poly(PolySystem(tuple(np.pad(coef, (0, 5 - coef.size)))), task.target_x.ravel())
                errs.append(float(np.mean((pred - task.target_y.ravel()) ** 2)))
            metrics[f"mse_n{n}"] = float(np.mean(errs))
    elif cfg.method == "oracle":
        for n in eval_ns:
            errs = []
            for task in test_tasks:
                pred = eval_poly(task.system, task.target_x.ravel())
                errs.append(float(np.mean((pred - task.target_y.ravel()) ** 2)))
            metrics[f"mse_n{n}"] = float(np.mean(errs))
    else:
        raise ConfigError(f"method {cfg.method!r} not supported for polynomial")
    return SeedResult(seed, metrics, extras, digest)


# ---------------------------------------------------------------------------
# Mass-spring prediction study
# ---------------------------------------------------------------------------


def _spring_specs(cfg: ExperimentConfig, window: int):
    dim = 4 * window
    hid = cfg.model.hidden
    return MLPSpec((dim + cfg.model.d_c, *hid, dim)), MLPSpec((dim, *hid, dim))


def spring_eval_windows(data, window: int):
    """Evaluation slices: adaptation pair, current window, truth blocks."""
    states = data.states
    w = window
    ctx_x = states[:, 0:w].reshape(states.shape[0], 1, -1)
    ctx_y = states[:, w : 2 * w].reshape(states.shape[0], 1, -1)
    current = ctx_y[:, 0, :]
    return ctx_x, ctx_y, current


def _spring_seed_worker(cfg: ExperimentConfig, seed: int) -> SeedResult:
    limit_blas_threads()
    sp = cfg.spring
    train_data = make_spring_dataset(derive_seed(seed, "spring-train"), sp.n_train, sp.duration, sp.dt)
    test_data = make_spring_dataset(derive_seed(seed, "spring-test"), sp.n_test, sp.duration, sp.dt)
    tasks = spring_tasks_from_dataset(train_data, sp.windows_per_traj, derive_seed(seed, "spring-windows"), sp.window)
    digest = dataset_digest(tasks)
    spec_ctx, spec_plain = _spring_specs(cfg, sp.window)
    t = cfg.training
    w = sp.window
    n_blocks = 39  # 975-step rollout = 39 blocks of 25
    horizon = n_blocks * w
    states = test_data.states
    n_test = states.shape[0]
    metrics: dict = {}
    extras: dict = {}

    def eval_predictor(predict_block_batch):
        """predict_block_batch: (B, 4w) flattened windows -> next windows."""
        mse25 = np.empty(n_test)
        mse975 = np.empty(n_test)
        _, _, current = spring_eval_windows(test_data, w)
        pred = predict_block_batch(current)
        for i in range(n_test):
            truth = states[i, 2 * w : 3 * w]
            mse25[i] = n_step_mse(pred[i].reshape(w, 4), truth, w)
        block = current.copy()
        preds = np.empty((n_test, horizon, 4))
        diverged = np.zeros(n_test, dtype=bool)
        for b in range(n_blocks):
            block = predict_block_batch(block)
            bad = ~np.isfinite(block).all(axis=1)
            diverged |= bad
            block = np.where(np.isfinite(block), block, 0.0)
            preds[:, b * w : (b + 1) * w] = block.reshape(n_test, w, 4)
        for i in range(n_test):
            if diverged[i]:
                mse975[i] = float("inf")
            else:
                truth = states[i, 2 * w : 2 * w + horizon]
                mse975[i] = float(np.mean((preds[i] - truth) ** 2))
        return mse25, mse975

    if cfg.method == "meta_sysid":
        model, losses = meta_train(tasks, spec_ctx, _meta_cfg(cfg), seed)
        extras["losses"] = losses
        extras["model"] = model
        ctx_x, ctx_y, _ = spring_eval_windows(test_data, w)
        contexts = infer_contexts_bulk(
            model.spec, model.theta, ctx_x, ctx_y, model.cfg.d_c,
            cfg.evaluation.inference_steps, model.cfg.inner_alpha, model.cfg.inner_optimizer,
        )

        def predict(block):
            x_full = np.concatenate([block, contexts], axis=1)
            out, _ = forward_batch(spec_ctx, model.theta, x_full)
            return out

        mse25, mse975 = eval_predictor(predict)
    elif cfg.method == "no_adapt":
        theta = train_noadapt(tasks, spec_plain, t.outer_lr, t.epochs, seed, t.batch_size)
        extras["theta"] = theta

        def predict(block):
            out, _ = forward_batch(spec_plain, theta, block)
            return out

        mse25, mse975 = eval_predictor(predict)
    elif cfg.method == "oracle":
        def predict_oracle(block):
            out = np.empty_like(block)
            for i in range(n_test):
                last = SpringState.from_array(block[i].reshape(w, 4)[-1])
                traj = simulate_spring(test_data.params[i], last, w * sp.dt, sp.dt)
                out[i] = traj.states[1 : w + 1].ravel()
            return out

        mse25, mse975 = eval_predictor(predict_oracle)
    else:
        raise ConfigError(f"method {cfg.method!r} not supported for mass_spring")

    metrics["median_mse_25"] = float(np.median(mse25))
    metrics["median_rollout_975"] = float(np.median(mse975))
    extras["per_traj_mse25"] = mse25
    extras["per_traj_mse975"] = mse975
    return SeedResult(seed, metrics, extras, digest)


# ---------------------------------------------------------------------------
# Drone MPC study
# ---------------------------------------------------------------------------


class StaticPlanner:
    """Planner family around a fixed dynamics model (no context inference)."""

    def __init__(self, model):
        self.model = model

    def at_time(self, t):
        return self.model


def _drone_seed_worker(cfg: ExperimentConfig, seed: int) -> SeedResult:
    limit_blas_threads()
    d = cfg.drone
    runs = collect_drone_dataset(
        d.n_traj, d.duration, d.dt, derive_seed(seed, "drone-data"), d.action_noise
    )
    tasks = drone_tasks_from_dataset(runs, d.windows_per_traj, derive_seed(seed, "drone-windows"), d.window)
    digest = dataset_digest(tasks)
    hid = cfg.model.hidden
    t = cfg.training
    metrics: dict = {}
    extras: dict = {}
    model = None
    theta_plain = None
    if cfg.method == "meta_sysid":
        spec = MLPSpec((9 + cfg.model.d_c, *hid, 6))
        model, losses = meta_train(tasks, spec, _meta_cfg(cfg), seed)
        extras["losses"] = losses
        extras["model"] = model
    elif cfg.method == "no_adapt":
        spec_plain = MLPSpec((9, *hid, 6))
        theta_plain = train_noadapt(tasks, spec_plain, t.outer_lr, t.epochs, seed, t.batch_size)
        extras["theta"] = theta_plain
    elif cfg.method != "oracle":
        raise ConfigError(f"method {cfg.method!r} not supported for drone_mpc")

    m = cfg.mpc
    mpc_cfg = MPCConfig(
        horizon=m.horizon, plan_iters=m.plan_iters, plan_lr=m.plan_lr, cost=m.cost
    )
    infer_cfg = ContextInferenceConfig(
        steps=m.inference_steps,
        alpha=m.inference_alpha,
        optimizer=m.inference_optimizer,
        window=m.inference_window,
        warm_start=m.warm_start_context,
    )
    wind_rng = np.random.default_rng(derive_seed(seed, "episode-winds"))
    episode_rows = []
    costs = np.empty(m.episodes)
    for e in range(m.episodes):
        if cfg.wind.kind == "constant":
            w_val = float(wind_rng.uniform(0.0, 8.0)) if cfg.wind.w == 0.0 else cfg.wind.w
            wind = WindProfile(kind="constant", w=w_val)
            wind_desc = f"constant:{w_val!r}"
        else:
            wind = WindProfile(
                kind="eog", w_bar=cfg.wind.w_bar, w_gust=cfg.wind.w_gust,
                period=cfg.wind.period, t0=cfg.wind.t0,
            )
            wind_desc = f"eog:{cfg.wind.w_bar!r}:{cfg.wind.w_gust!r}"
            wind_rng.uniform(0.0, 8.0)  # keep the stream aligned across kinds
        if m.cost == "track_reference":
            reference = gen_reference_trajectory(
                derive_seed(seed, f"episode-ref-{e}"), m.episode_duration, d.dt
            )
        else:
            reference = None
        if cfg.method == "meta_sysid":
            episode_model = model
        elif cfg.method == "no_adapt":
            episode_model = StaticPlanner(
                LearnedDynamicsModel(
                    MLPSpec((9, *hid, 6)), theta_plain, np.zeros(0), d.dt
                )
            )
        else:
            episode_model = OracleDronePlanner(wind, d.dt)
        log = EpisodeLog()
        traj, total = run_episode(
            episode_model,
            infer_cfg,
            drone_true_stepper(wind, d.dt),
            wind,
            m.episode_duration,
            d.dt,
            mpc_cfg,
            reference=reference,
            log=log,
        )
        costs[e] = total
        episode_rows.append((e, wind_desc, total))
        if e == 0:
            extras["first_episode"] = (traj, log)
    metrics["mean_total_cost"] = float(np.mean(costs))
    metrics["median_total_cost"] = float(np.median(costs))
    extras["episode_rows"] = episode_rows
    return SeedResult(seed, metrics, extras, digest)


# ---------------------------------------------------------------------------
# Budget sweep and interpolation studies
# ---------------------------------------------------------------------------


def _budget_seed_worker(cfg: ExperimentConfig, seed: int) -> SeedResult:
    limit_blas_threads()
    train_tasks, test_tasks = _poly_datasets(cfg, seed)
    digest = dataset_digest(train_tasks + test_tasks)
    spec_ctx, _ = _poly_specs(cfg)
    model, losses = meta_train(train_tasks, spec_ctx, _meta_cfg(cfg), seed)
    metrics = {}
    for steps in cfg.evaluation.budget_steps:
        metrics[f"mse_steps_{steps}"] = meta_test_mse(
            model, test_tasks, cfg.poly.n_context, steps
        )
    return SeedResult(seed, metrics, {"losses": losses, "model": model}, digest)


def _interp_seed_worker(cfg: ExperimentConfig, seed: int) -> SeedResult:
    limit_blas_threads()
    p = cfg.poly
    linear = make_poly_tasks(derive_seed(seed, "interp-linear"), p.n_train, p.n_context, p.n_target, 1)
    quad = make_poly_tasks(derive_seed(seed, "interp-quadratic"), p.n_train, p.n_context, p.n_target, 2)
    digest = dataset_digest(linear + quad)
    spec_ctx, _ = _poly_specs(cfg)
    model_lin, _ = meta_train(linear, spec_ctx, _meta_cfg(cfg), derive_seed(seed, "interp-train-lin"))
    model_quad, _ = meta_train(quad, spec_ctx, _meta_cfg(cfg), derive_seed(seed, "interp-train-quad"))
    ev = cfg.evaluation
    rng = np.random.default_rng(derive_seed(seed, "interp-contexts"))
    contexts = rng.uniform(-ev.context_scale, ev.context_scale, size=(ev.n_interp_contexts, cfg.model.d_c))
    x_grid = np.linspace(-1.0, 1.0, ev.curve_points)
    curves = []
    for lam in ev.lambdas:
        theta_mix = interpolate_params(model_lin.theta, model_quad.theta, lam)
        for ci in range(ev.n_interp_contexts):
            x_full = np.concatenate(
                [x_grid[:, None], np.tile(contexts[ci], (ev.curve_points, 1))], axis=1
            )
            y, _ = forward_batch(spec_ctx, theta_mix, x_full)
            curves.append((float(lam), ci, x_grid, y.ravel()))
    metrics = {"n_curves": float(len(curves))}
    return SeedResult(seed, metrics, {"curves": curves}, digest)


_WORKERS = {
    "polynomial": _poly_seed_worker,
    "mass_spring": _spring_seed_worker,
    "drone_mpc": _drone_seed_worker,
    "budget_sweep": _budget_seed_worker,
    "interpolation": _interp_seed_worker,
}


def _run_seed(args):
    cfg, seed = args
    return _WORKERS[cfg.experiment](cfg, seed)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    parallel: bool = True,
    max_workers: int = 2,
    figures: bool = True,
) -> MetricsReport:
    """Run the configured study across its seeds and emit reports.

    Stage failures are recorded in the report rather than aborting other
    seeds; callers map a non-empty failure list to a nonzero exit.
    """
    limit_blas_threads()
    digest = config_digest(cfg)
    report = MetricsReport(
        experiment=cfg.experiment,
        method=cfg.method,
        config_digest=digest,
        dataset_digest="",
    )
    jobs = [(cfg, seed) for seed in cfg.seeds]
    results: dict[int, SeedResult] = {}
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(max_workers, len(jobs))) as pool:
            futures = {pool.submit(_run_seed, job): job[1] for job in jobs}
            for fut, seed in futures.items():
                try:
                    results[seed] = fut.result()
                except (NumericalError, ValueError, ConfigError) as exc:
                    report.failures.append(f"seed {seed}: {exc}")
    else:
        for job in jobs:
            try:
                results[job[1]] = _run_seed(job)
            except (NumericalError, ValueError, ConfigError) as exc:
                report.failures.append(f"seed {job[1]}: {exc}")
    seed_digests = []
    for seed in sorted(results):
        res = results[seed]
        for metric, value in res.metrics.items():
            report.add(seed, metric, value)
        seed_digests.append(res.data_digest)
    if seed_digests:
        report.dataset_digest = hashlib.sha256(
            "".join(seed_digests).encode()
        ).hexdigest()
    if out_dir is not None:
        _emit_outputs(cfg, report, results, Path(out_dir), figures)
    return report


def _emit_outputs(cfg, report, results, out: Path, figures: bool = True):
    out.mkdir(parents=True, exist_ok=True)
    provenance = {
        "experiment": cfg.experiment,
        "method": cfg.method,
        "config_digest": report.config_digest,
        "dataset_digest": report.dataset_digest,
    }
    (out / "config.txt").write_text(serialize_config(cfg))
    write_metrics_csv(report, out)
    seeds = sorted(results)
    for seed in seeds:
        extras = results[seed].extras
        if "losses" in extras:
            write_loss_csv(extras["losses"], provenance, out, name=f"loss_seed{seed}.csv")
        if "model" in extras:
            save_model(
                extras["model"], out / "models" / f"seed_{seed}", seed,
                results[seed].data_digest,
            )
        elif "theta" in extras:
            model_dir = out / "models" / f"seed_{seed}"
            model_dir.mkdir(parents=True, exist_ok=True)
            save_params(extras["theta"], model_dir / "theta.params")
    if figures and seeds and "losses" in results[seeds[0]].extras:
        render_loss_curve(results[seeds[0]].extras["losses"], out)
    if cfg.experiment in ("polynomial",):
        rows = []
        ns = sorted(
            int(m.split("mse_n")[1]) for m in report.per_seed if m.startswith("mse_n")
        )
        for seed in seeds:
            for n in ns:
                rows.append([seed, n, report.per_seed[f"mse_n{n}"][seed]])
        write_csv(out / "mse_by_context.csv", provenance, ["seed", "n_context", "mse"], rows)
        if figures:
            means = [report.mean(f"mse_n{n}") for n in ns]
            render_mse_vs_context({cfg.method: (ns, means)}, out)
    elif cfg.experiment == "budget_sweep":
        rows = []
        steps = sorted(
            int(m.split("mse_steps_")[1])
            for m in report.per_seed
            if m.startswith("mse_steps_")
        )
        for seed in seeds:
            for s in steps:
                rows.append([seed, s, report.per_seed[f"mse_steps_{s}"][seed]])
        write_csv(out / "budget.csv", provenance, ["seed", "steps", "mse"], rows)
        if figures:
            render_budget_sweep(steps, [report.mean(f"mse_steps_{s}") for s in steps], out)
    elif cfg.experiment == "interpolation":
        rows = []
        all_curves = []
        for seed in seeds:
            for lam, ci, x, y in results[seed].extras["curves"]:
                all_curves.append((lam, x, y))
                for xi, yi in zip(x, y):
                    rows.append([seed, lam, ci, xi, yi])
        write_csv(
            out / "interpolation_curves.csv", provenance,
            ["seed", "lambda", "context_id", "x", "y"], rows,
        )
        if figures and all_curves:
            render_interpolation_curves(all_curves, out)
    elif cfg.experiment == "mass_spring":
        rows = []
        for seed in seeds:
            extras = results[seed].extras
            for i, (a, b) in enumerate(zip(extras["per_traj_mse25"], extras["per_traj_mse975"])):
                rows.append([seed, i, a, b])
        write_csv(
            out / "per_trajectory_mse.csv", provenance,
            ["seed", "trajectory", "mse_25", "mse_975"], rows,
        )
        if figures and seeds:
            extras = results[seeds[0]].extras
            render_rollout_box(
                {
                    "25-step": list(extras["per_traj_mse25"]),
                    "975-rollout": [v for v in extras["per_traj_mse975"] if np.isfinite(v)],
                },
                out,
            )
    elif cfg.experiment == "drone_mpc":
        rows = []
        for seed in seeds:
            for e, wind_desc, total in results[seed].extras["episode_rows"]:
                rows.append([e, seed, wind_desc, total])
        write_csv(out / "summary.csv", provenance, ["episode", "seed", "wind_spec", "total_cost"], rows)
        for seed in seeds:
            first = results[seed].extras.get("first_episode")
            if first is None:
                continue
            traj, log = first
            contexts = np.asarray(log.contexts)
            if contexts.size and contexts.shape[1] > 0 and contexts.shape[0] >= 2:
                proj, _ = pca_1d(contexts)
            else:
                proj = np.zeros(len(log.step_costs))
            ep_rows = []
            for k in range(len(log.step_costs)):
                ep_rows.append(
                    [k * traj.dt]
                    + list(traj.states[k])
                    + list(traj.actions[k])
                    + [proj[k], log.winds[k], log.step_costs[k]]
                )
            write_csv(
                out / f"episode_seed{seed}_0.csv", provenance,
                ["t", "x", "y", "phi", "vx", "vy", "omega", "ux", "uy", "uphi",
                 "context_pca1", "wind", "step_cost"],
                ep_rows,
            )
            if figures and seed == seeds[0]:
                render_episode(
                    traj.states, log.winds, proj, log.step_costs, traj.dt, out
                )
