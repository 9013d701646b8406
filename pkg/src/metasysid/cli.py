"""Command-line interface.

Subcommands: gen-data, train, eval, mpc, sweep-budget, interpolate, gradcheck.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import train_fomaml, train_noadapt, train_setencoder
from .config import (
    ExperimentConfig,
    apply_full_budget,
    config_digest,
    load_config,
)
from .errors import ConfigError, NumericalError
from .experiments import (
    _meta_cfg,
    _poly_datasets,
    _poly_specs,
    _spring_specs,
    derive_seed,
    run_experiment,
)
from .meta import dataset_digest, meta_train, save_model
from .mlp import MLPSpec, ParameterSet, backward, forward, save_params
from .reporting import render_loss_curve, write_csv, write_loss_csv
from .systems.drone import collect_drone_dataset, drone_tasks_from_dataset
from .systems.spring import make_spring_dataset, spring_tasks_from_dataset
from .threads import limit_blas_threads
from . import kvtext

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(p: argparse.ArgumentParser, config_required=True):
    p.add_argument("--config", type=Path, required=config_required,
                   help="experiment config file")
    p.add_argument("--seed", type=int, default=None,
                   help="run a single seed, overriding the config's list")
    p.add_argument("--out", type=Path, default=Path("results"),
                   help="output directory")
    p.add_argument("--full-budget", action="store_true",
                   help="paper-scale training budgets instead of desk-scale")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering, CSV only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metasysid",
        description="Meta-learned system identification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("gen-data", "generate and write the configured datasets"),
        ("train", "train the configured method and save model files"),
        ("eval", "run the full study: train, evaluate, emit reports"),
        ("mpc", "closed-loop control episodes through the configured model"),
        ("sweep-budget", "test MSE versus test-time optimization steps"),
        ("interpolate", "function-class interpolation study"),
    ]:
        _add_common(sub.add_parser(name, help=desc))
    g = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    g.add_argument("--seed", type=int, default=2024)
    g.add_argument("--out", type=Path, default=None)
    g.add_argument("--config", type=Path, default=None, help="ignored")
    g.add_argument("--full-budget", action="store_true", help="ignored")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.full_budget:
        cfg = apply_full_budget(cfg)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seeds=(args.seed,))
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = Path(args.out) / "data"
    digest = config_digest(cfg)
    for seed in cfg.seeds:
        if cfg.experiment in ("polynomial", "budget_sweep", "interpolation"):
            train, test = _poly_datasets(cfg, seed)
            rows = []
            for split, tasks in (("train", train), ("test", test)):
                for ti, task in enumerate(tasks):
                    for x, y in zip(task.context_x.ravel(), task.context_y.ravel()):
                        rows.append([split, ti, "context", x, y])
                    for x, y in zip(task.target_x.ravel(), task.target_y.ravel()):
                        rows.append([split, ti, "target", x, y])
            write_csv(
                out / f"poly_seed{seed}.csv", {"config_digest": digest},
                ["split", "task", "role", "x", "y"], rows,
            )
            manifest = {
                "dataset": {
                    "kind": "polynomial", "seed": str(seed),
                    "n_train": str(cfg.poly.n_train), "n_test": str(cfg.poly.n_test),
                    "coeff_low": "0.1", "coeff_high": "2.5", "x_low": "-1.0", "x_high": "1.0",
                }
            }
        elif cfg.experiment == "mass_spring":
            sp = cfg.spring
            data = make_spring_dataset(derive_seed(seed, "spring-train"), sp.n_train, sp.duration, sp.dt)
            traj_dir = out / f"spring_seed{seed}"
            for i in range(data.states.shape[0]):
                rows = [
                    [k * sp.dt] + list(data.states[i, k])
                    for k in range(data.states.shape[1])
                ]
                write_csv(
                    traj_dir / f"traj_{i:04d}.csv", {"config_digest": digest},
                    ["t", "x1", "x2", "v1", "v2"], rows,
                )
            manifest = {
                "dataset": {
                    "kind": "mass_spring", "seed": str(seed),
                    "count": str(sp.n_train), "dt": kvtext.fmt_float(sp.dt),
                    "duration": kvtext.fmt_float(sp.duration),
                    "param_low": "0.75", "param_high": "1.25",
                }
            }
        elif cfg.experiment == "drone_mpc":
            d = cfg.drone
            runs = collect_drone_dataset(
                d.n_traj, d.duration, d.dt, derive_seed(seed, "drone-data"), d.action_noise
            )
            traj_dir = out / f"drone_seed{seed}"
            for i, run in enumerate(runs):
                traj = run.trajectory
                rows = []
                for k in range(traj.actions.shape[0]):
                    rows.append(
                        [k * d.dt] + list(traj.states[k]) + list(traj.actions[k]) + [run.wind]
                    )
                rows.append(
                    [traj.actions.shape[0] * d.dt] + list(traj.states[-1])
                    + ["", "", ""] + [run.wind]
                )
                write_csv(
                    traj_dir / f"traj_{i:04d}.csv", {"config_digest": digest},
                    ["t", "x", "y", "phi", "vx", "vy", "omega", "ux", "uy", "uphi", "wind"],
                    rows,
                )
            manifest = {
                "dataset": {
                    "kind": "drone", "seed": str(seed), "count": str(d.n_traj),
                    "dt": kvtext.fmt_float(d.dt), "duration": kvtext.fmt_float(d.duration),
                    "wind_low": "0.0", "wind_high": "8.0",
                }
            }
        else:
            raise ConfigError(f"gen-data unsupported for {cfg.experiment}")
        out.mkdir(parents=True, exist_ok=True)
        (out / f"manifest_seed{seed}.txt").write_text(kvtext.serialize(manifest))
    print(f"datasets written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    t = cfg.training
    digest = config_digest(cfg)
    for seed in cfg.seeds:
        if cfg.experiment in ("polynomial", "budget_sweep", "interpolation"):
            tasks, _ = _poly_datasets(cfg, seed)
            spec_ctx, spec_plain = _poly_specs(cfg)
        elif cfg.experiment == "mass_spring":
            sp = cfg.spring
            data = make_spring_dataset(derive_seed(seed, "spring-train"), sp.n_train, sp.duration, sp.dt)
            tasks = spring_tasks_from_dataset(data, sp.windows_per_traj, derive_seed(seed, "spring-windows"), sp.window)
            spec_ctx, spec_plain = _spring_specs(cfg, sp.window)
        elif cfg.experiment == "drone_mpc":
            d = cfg.drone
            runs = collect_drone_dataset(
                d.n_traj, d.duration, d.dt, derive_seed(seed, "drone-data"), d.action_noise
            )
            tasks = drone_tasks_from_dataset(runs, d.windows_per_traj, derive_seed(seed, "drone-windows"), d.window)
            hid = cfg.model.hidden
            spec_ctx = MLPSpec((9 + cfg.model.d_c, *hid, 6))
            spec_plain = MLPSpec((9, *hid, 6))
        else:
            raise ConfigError(f"train unsupported for {cfg.experiment}")
        model_dir = out / "models" / f"seed_{seed}"
        data_digest = dataset_digest(tasks)
        provenance = {"config_digest": digest, "dataset_digest": data_digest}
        if cfg.method == "meta_sysid":
            model, losses = meta_train(tasks, spec_ctx, _meta_cfg(cfg), seed)
            save_model(model, model_dir, seed, data_digest)
            write_loss_csv(losses, provenance, out, name=f"loss_seed{seed}.csv")
            if not args.no_figures:
                render_loss_curve(losses, out, name=f"loss_seed{seed}.png")
        elif cfg.method == "no_adapt":
            theta = train_noadapt(tasks, spec_plain, t.outer_lr, t.epochs, seed, t.batch_size)
            model_dir.mkdir(parents=True, exist_ok=True)
            save_params(theta, model_dir / "theta.params")
        elif cfg.method == "fomaml":
            theta = train_fomaml(
                tasks, spec_plain, t.fomaml_k, t.fomaml_alpha, t.outer_lr,
                t.epochs, seed, t.batch_size,
            )
            model_dir.mkdir(parents=True, exist_ok=True)
            save_params(theta, model_dir / "theta.params")
        elif cfg.method == "set_encoder":
            x_dim = spec_ctx.in_dim - cfg.model.d_c
            y_dim = spec_ctx.out_dim
            enc_spec = MLPSpec((x_dim + y_dim, *cfg.model.enc_hidden, cfg.model.d_c))
            theta, psi = train_setencoder(
                tasks, spec_ctx, enc_spec, t.outer_lr, t.epochs, seed, t.batch_size
            )
            model_dir.mkdir(parents=True, exist_ok=True)
            save_params(theta, model_dir / "theta.params")
            save_params(psi, model_dir / "encoder.params")
        else:
            raise ConfigError(f"method {cfg.method!r} has nothing to train")
        print(f"seed {seed}: model saved under {model_dir}")
    return EXIT_OK


def _run_study(args, expected: str | None = None) -> int:
    cfg = _load(args)
    if expected is not None and cfg.experiment != expected:
        raise ConfigError(
            f"this subcommand expects experiment = {expected}, "
            f"config says {cfg.experiment!r}"
        )
    report = run_experiment(cfg, out_dir=args.out, figures=not args.no_figures)
    for metric, (mean, std) in report.aggregate().items():
        print(f"{metric}: {mean:.6g} +/- {std:.6g}")
    if report.failures:
        for f in report.failures:
            print(f"FAILURE: {f}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"reports written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    limit_blas_threads()
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    checked = 0
    for _ in range(100):
        depth = int(rng.integers(2, 5))
        sizes = [int(rng.integers(1, 9)) for _ in range(depth)]
        act = "silu" if rng.random() < 0.8 else "identity"
        spec = MLPSpec(sizes, act)
        params = ParameterSet(rng.standard_normal(spec.n_params) * 0.7, spec.layer_shapes())
        x = rng.standard_normal(spec.in_dim)
        u = rng.standard_normal(spec.out_dim)
        g = backward(spec, params, x, u)

        def scalar(vals, xin):
            return float(np.dot(u, forward(spec, ParameterSet(vals, spec.layer_shapes()), xin)))

        h = 1e-5
        for i in range(params.values.size):
            vp, vm = params.values.copy(), params.values.copy()
            vp[i] += h
            vm[i] -= h
            fd = (scalar(vp, x) - scalar(vm, x)) / (2 * h)
            worst = max(worst, _rel_err(g.wrt_params[i], fd))
            checked += 1
        for i in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (scalar(params.values, xp) - scalar(params.values, xm)) / (2 * h)
            worst = max(worst, _rel_err(g.wrt_inputs[i], fd))
            checked += 1
    ok = worst < 1e-4
    print(f"gradcheck: {checked} coordinates across 100 networks, "
          f"worst relative error {worst:.3e} -> {'PASS' if ok else 'FAIL'}")
    if args.out is not None:
        write_csv(
            Path(args.out) / "gradcheck.csv", {"seed": args.seed},
            ["coordinates", "worst_rel_err", "pass"], [[checked, worst, int(ok)]],
        )
    return EXIT_OK if ok else EXIT_NUMERICAL


def _rel_err(analytic: float, numeric: float) -> float:
    if abs(analytic) < 1e-4:
        return 0.0 if abs(analytic - numeric) < 1e-7 else 1.0
    return abs(analytic - numeric) / abs(analytic)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    limit_blas_threads()
    try:
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return _run_study(args)
        if args.command == "mpc":
            return _run_study(args, expected="drone_mpc")
        if args.command == "sweep-budget":
            return _run_study(args, expected="budget_sweep")
        if args.command == "interpolate":
            return _run_study(args, expected="interpolation")
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
