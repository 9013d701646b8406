"""Delimited output and figure rendering.

Every CSV starts with `# key=value` provenance comments carrying the config
digest; reports from different digests refuse to aggregate. Figures are
rendered next to each CSV on the report path; the CSV stays the canonical,
byte-deterministic record.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


@dataclass
class MetricsReport:
    """Per-seed metric values with aggregate mean and population std."""

    experiment: str
    method: str
    config_digest: str
    dataset_digest: str
    per_seed: dict = field(default_factory=dict)  # metric -> {seed: value}
    failures: list = field(default_factory=list)

    def add(self, seed: int, metric: str, value: float) -> None:
        self.per_seed.setdefault(metric, {})[seed] = float(value)

    def aggregate(self) -> dict:
        out = {}
        for metric, by_seed in sorted(self.per_seed.items()):
            vals = np.array([by_seed[s] for s in sorted(by_seed)])
            out[metric] = (float(vals.mean()), float(vals.std()))
        return out

    def mean(self, metric: str) -> float:
        return self.aggregate()[metric][0]


def merge_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Combine per-seed shards of one study; mixed digests are refused."""
    if not reports:
        raise ValueError("nothing to merge")
    digests = {r.config_digest for r in reports}
    if len(digests) != 1:
        raise ValueError(f"refusing to aggregate across config digests: {digests}")
    base = reports[0]
    merged = MetricsReport(
        experiment=base.experiment,
        method=base.method,
        config_digest=base.config_digest,
        dataset_digest=base.dataset_digest,
    )
    for r in reports:
        if (r.experiment, r.method) != (base.experiment, base.method):
            raise ValueError("refusing to aggregate different studies")
        for metric, by_seed in r.per_seed.items():
            for seed, value in by_seed.items():
                merged.add(seed, metric, value)
        merged.failures.extend(r.failures)
    return merged


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, provenance: dict, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for key in sorted(provenance):
            f.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    provenance = {}
    rows = []
    header: list[str] = []
    with open(path) as f:
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                provenance[key.strip()] = value
                continue
            reader = csv.reader([line] + list(f))
            parsed = [r for r in reader if r]
            header = parsed[0]
            rows = parsed[1:]
            break
    return provenance, header, rows


def write_metrics_csv(report: MetricsReport, out_dir, name="metrics.csv") -> Path:
    provenance = {
        "experiment": report.experiment,
        "method": report.method,
        "config_digest": report.config_digest,
        "dataset_digest": report.dataset_digest,
    }
    rows = []
    for metric, by_seed in sorted(report.per_seed.items()):
        for seed in sorted(by_seed):
            rows.append([seed, metric, by_seed[seed]])
    for metric, (mean, std) in report.aggregate().items():
        rows.append(["aggregate_mean", metric, mean])
        rows.append(["aggregate_std", metric, std])
    return write_csv(Path(out_dir) / name, provenance, ["seed", "metric", "value"], rows)


def write_loss_csv(losses: list[float], provenance: dict, out_dir, name="loss.csv") -> Path:
    rows = [[epoch, loss] for epoch, loss in enumerate(losses)]
    return write_csv(
        Path(out_dir) / name, provenance, ["epoch", "mean_outer_loss"], rows
    )


# ---------------------------------------------------------------------------
# Figures. One rendering per study, saved beside the CSV it draws from.
# ---------------------------------------------------------------------------


def _save(fig, out_dir, name) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def render_loss_curve(losses, out_dir, name="loss.png", title="training loss"):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(np.arange(len(losses)), losses, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean outer loss")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return _save(fig, out_dir, name)


def render_mse_vs_context(per_method: dict, out_dir, name="mse_vs_context.png"):
    """per_method: method -> (context counts, mean MSEs)."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for method, (ns, mses) in sorted(per_method.items()):
        ax.plot(ns, mses, marker="o", label=method)
    ax.set_xlabel("context points")
    ax.set_ylabel("test MSE")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, out_dir, name)


def render_budget_sweep(steps, mses, out_dir, name="budget_sweep.png"):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(steps, mses, marker="s")
    ax.set_xlabel("test-time optimization steps")
    ax.set_ylabel("test MSE")
    ax.grid(alpha=0.3)
    return _save(fig, out_dir, name)


def render_interpolation_curves(curves, out_dir, name="interpolation.png"):
    """curves: list of (lambda, x grid, y values) with repeated lambdas."""
    lams = sorted({lam for lam, _, _ in curves})
    cmap = plt.get_cmap("viridis")
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for lam, x, y in curves:
        ax.plot(x, y, color=cmap(lam), alpha=0.55, lw=0.9)
    sm = plt.cm.ScalarMappable(cmap=cmap, norm=plt.Normalize(min(lams), max(lams)))
    fig.colorbar(sm, ax=ax, label="interpolation weight")
    ax.set_xlabel("x")
    ax.set_ylabel("f(x; c)")
    ax.grid(alpha=0.3)
    return _save(fig, out_dir, name)


def render_episode(traj_states, winds, pca_proj, step_costs, dt, out_dir, name="episode.png"):
    times = np.arange(len(winds)) * dt
    fig, axes = plt.subplots(3, 1, figsize=(6, 6), sharex=True)
    axes[0].plot(times, traj_states[1:, 0], label="x")
    axes[0].plot(times, traj_states[1:, 1], label="y")
    axes[0].set_ylabel("position (m)")
    axes[0].legend(fontsize=8)
    axes[1].plot(times, winds, color="tab:gray")
    axes[1].set_ylabel("wind (m/s)")
    ax_pca = axes[1].twinx()
    if pca_proj is not None and len(pca_proj):
        ax_pca.plot(times, pca_proj, color="tab:green", alpha=0.7)
        ax_pca.set_ylabel("context PC1")
    axes[2].plot(times, step_costs, color="tab:red")
    axes[2].set_ylabel("step cost")
    axes[2].set_xlabel("time (s)")
    for ax in axes:
        ax.grid(alpha=0.3)
    return _save(fig, out_dir, name)


def render_rollout_box(per_method: dict, out_dir, name="rollout_mse.png"):
    """per_method: method -> list of per-trajectory MSEs (one seed)."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    labels = sorted(per_method)
    ax.boxplot([per_method[m] for m in labels], tick_labels=labels, showfliers=False)
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    return _save(fig, out_dir, name)
