"""Experiment configuration: strict schema over the key-value text format.

Every field has a default, a type, and bounds; unknown sections or keys are
rejected so hyperparameter typos fail loudly. The canonical serialization
(all fields, sorted) feeds the provenance digest carried by every report.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from . import kvtext
from .errors import ConfigError

EXPERIMENTS = ("polynomial", "mass_spring", "drone_mpc", "interpolation", "budget_sweep")
METHODS = ("meta_sysid", "fomaml", "set_encoder", "no_adapt", "classical_sysid", "oracle")

_ALLOWED_METHODS = {
    "polynomial": set(METHODS),
    "mass_spring": {"meta_sysid", "no_adapt", "oracle"},
    "drone_mpc": {"meta_sysid", "no_adapt", "oracle"},
    "interpolation": {"meta_sysid"},
    "budget_sweep": {"meta_sysid"},
}


@dataclass(frozen=True)
class PolyDataConfig:
    n_train: int = 500
    n_test: int = 200
    n_context: int = 5
    n_target: int = 15
    n_test_context: int = 10
    degree: int = 4


@dataclass(frozen=True)
class SpringDataConfig:
    n_train: int = 100
    n_test: int = 50
    duration: float = 10.0
    dt: float = 1e-3
    window: int = 25
    windows_per_traj: int = 20


@dataclass(frozen=True)
class DroneDataConfig:
    n_traj: int = 100
    duration: float = 10.0
    dt: float = 0.02
    window: int = 25
    windows_per_traj: int = 8
    action_noise: float = 2.0


@dataclass(frozen=True)
class ModelConfig:
    d_c: int = 32
    hidden: tuple[int, ...] = (64, 32)
    enc_hidden: tuple[int, ...] = (64,)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 1000
    batch_size: int = 256
    inner_steps: int = 100
    inner_alpha: float = 1e-3
    inner_optimizer: str = "gd"
    tau: float = 0.1
    outer_lr: float = 1e-3
    fomaml_k: int = 4
    fomaml_alpha: float = 1e-3


@dataclass(frozen=True)
class EvalConfig:
    inference_steps: int = 100
    eval_contexts: tuple[int, ...] = (1, 3, 5, 10)
    budget_steps: tuple[int, ...] = (10, 20, 40, 60, 80, 100)
    lambdas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    n_interp_contexts: int = 16
    context_scale: float = 0.025
    curve_points: int = 101


@dataclass(frozen=True)
class MPCSection:
    horizon: int = 10
    plan_iters: int = 20
    plan_lr: float = 200.0
    cost: str = "track_reference"
    episodes: int = 20
    episode_duration: float = 10.0
    inference_steps: int = 50
    inference_alpha: float = 1e-3
    inference_optimizer: str = "adam"
    inference_window: int = 25
    warm_start_context: bool = False


@dataclass(frozen=True)
class WindSection:
    kind: str = "constant"
    w: float = 0.0
    w_bar: float = 4.0
    w_gust: float = 6.0
    period: float = 3.0
    t0: float = 3.5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "polynomial"
    method: str = "meta_sysid"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    poly: PolyDataConfig = field(default_factory=PolyDataConfig)
    spring: SpringDataConfig = field(default_factory=SpringDataConfig)
    drone: DroneDataConfig = field(default_factory=DroneDataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    mpc: MPCSection = field(default_factory=MPCSection)
    wind: WindSection = field(default_factory=WindSection)


_SECTION_FIELDS = {
    kvtext.TOP: ("experiment", "method", "seeds"),
    "poly": PolyDataConfig,
    "spring": SpringDataConfig,
    "drone": DroneDataConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "evaluation": EvalConfig,
    "mpc": MPCSection,
    "wind": WindSection,
}

_POSITIVE = {
    ("poly", "n_train"), ("poly", "n_test"), ("poly", "n_context"), ("poly", "n_target"),
    ("poly", "n_test_context"),
    ("spring", "n_train"), ("spring", "n_test"), ("spring", "duration"), ("spring", "dt"),
    ("spring", "window"), ("spring", "windows_per_traj"),
    ("drone", "n_traj"), ("drone", "duration"), ("drone", "dt"), ("drone", "window"),
    ("drone", "windows_per_traj"),
    ("model", "d_c"),
    ("training", "batch_size"), ("training", "inner_steps"), ("training", "inner_alpha"),
    ("training", "fomaml_alpha"),
    ("evaluation", "inference_steps"), ("evaluation", "n_interp_contexts"),
    ("evaluation", "curve_points"),
    ("mpc", "horizon"), ("mpc", "plan_iters"), ("mpc", "plan_lr"), ("mpc", "episodes"),
    ("mpc", "inference_steps"), ("mpc", "inference_alpha"), ("mpc", "inference_window"),
    ("wind", "period"),
}

_ENUMS = {
    (kvtext.TOP, "experiment"): EXPERIMENTS,
    (kvtext.TOP, "method"): METHODS,
    ("training", "inner_optimizer"): ("gd", "adam"),
    ("mpc", "inference_optimizer"): ("gd", "adam"),
    ("mpc", "cost"): ("track_reference", "stabilize_origin"),
    ("wind", "kind"): ("constant", "eog"),
}


def _parse_value(raw: str, template, where: str):
    if isinstance(template, bool):
        return kvtext.parse_bool(raw, where)
    if isinstance(template, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from exc
    if isinstance(template, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from exc
    if isinstance(template, tuple):
        elem = template[0] if template else 0
        parts = raw.split()
        if not parts:
            raise ConfigError(f"{where}: expected a non-empty list")
        return tuple(_parse_value(p, elem, where) for p in parts)
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return kvtext.fmt_float(value)
    if isinstance(value, tuple):
        return " ".join(_format_value(v) for v in value)
    return str(value)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate; unknown sections or keys are rejected."""
    sections = kvtext.parse(text, source)
    cfg = ExperimentConfig()
    updates: dict = {}
    for sec_name, entries in sections.items():
        if sec_name not in _SECTION_FIELDS:
            raise ConfigError(f"{source}: unknown section [{sec_name}]")
        if sec_name == kvtext.TOP:
            for key, raw in entries.items():
                if key not in _SECTION_FIELDS[kvtext.TOP]:
                    raise ConfigError(f"{source}: unknown key {key!r}")
                template = getattr(cfg, key)
                updates[key] = _parse_value(raw, template, f"{source}:{key}")
            continue
        sub_cls = _SECTION_FIELDS[sec_name]
        sub = getattr(cfg, sec_name)
        sub_updates = {}
        known = {f.name for f in fields(sub_cls)}
        for key, raw in entries.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec_name}]")
            template = getattr(sub, key)
            sub_updates[key] = _parse_value(raw, template, f"{source}:{sec_name}.{key}")
        updates[sec_name] = replace(sub, **sub_updates)
    cfg = replace(cfg, **updates)
    validate_config(cfg, source)
    return cfg


def validate_config(cfg: ExperimentConfig, source: str = "<config>") -> None:
    for (sec, key), allowed in _ENUMS.items():
        holder = cfg if sec == kvtext.TOP else getattr(cfg, sec)
        value = getattr(holder, key)
        if value not in allowed:
            raise ConfigError(f"{source}: {key} must be one of {allowed}, got {value!r}")
    for sec, key in _POSITIVE:
        value = getattr(getattr(cfg, sec), key)
        if not value > 0:
            raise ConfigError(f"{source}: {sec}.{key} must be > 0, got {value}")
    if not cfg.seeds:
        raise ConfigError(f"{source}: seeds must be non-empty")
    if cfg.training.epochs < 0 or cfg.training.outer_lr < 0:
        raise ConfigError(f"{source}: training epochs/outer_lr must be >= 0")
    if not 0.0 < cfg.training.tau <= 1.0:
        raise ConfigError(f"{source}: training.tau must be in (0, 1]")
    if cfg.training.fomaml_k < 0:
        raise ConfigError(f"{source}: training.fomaml_k must be >= 0")
    if cfg.method not in _ALLOWED_METHODS[cfg.experiment]:
        raise ConfigError(
            f"{source}: method {cfg.method!r} is not available for "
            f"experiment {cfg.experiment!r}"
        )
    if cfg.experiment == "drone_mpc" and cfg.wind.kind == "constant" and cfg.wind.w < 0:
        raise ConfigError(f"{source}: wind.w must be >= 0")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical full dump; parse(serialize(cfg)) == cfg."""
    sections: kvtext.Sections = {
        kvtext.TOP: {
            "experiment": cfg.experiment,
            "method": cfg.method,
            "seeds": _format_value(cfg.seeds),
        }
    }
    for sec_name, sub_cls in _SECTION_FIELDS.items():
        if sec_name == kvtext.TOP:
            continue
        sub = getattr(cfg, sec_name)
        sections[sec_name] = {
            f.name: _format_value(getattr(sub, f.name)) for f in fields(sub_cls)
        }
    return kvtext.serialize(sections)


def config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read(), source=str(path))


def apply_full_budget(cfg: ExperimentConfig) -> ExperimentConfig:
    """Paper-scale budgets; the defaults above are desk-scale."""
    if cfg.experiment in ("polynomial", "budget_sweep", "interpolation"):
        training = replace(cfg.training, epochs=4048)
        return replace(cfg, training=training)
    if cfg.experiment == "mass_spring":
        training = replace(cfg.training, epochs=512)
        return replace(cfg, training=training)
    if cfg.experiment == "drone_mpc":
        training = replace(cfg.training, epochs=512)
        drone = replace(cfg.drone, n_traj=500)
        return replace(cfg, training=training, drone=drone)
    return cfg


def default_config(experiment: str, method: str = "meta_sysid") -> ExperimentConfig:
    """Desk-scale defaults for one experiment/method pair."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = ExperimentConfig(experiment=experiment, method=method)
    if experiment == "mass_spring":
        cfg = replace(
            cfg,
            seeds=(0, 1, 2),
            spring=replace(cfg.spring, windows_per_traj=1),
            training=replace(
                cfg.training, epochs=128, batch_size=512, inner_steps=50,
                fomaml_k=5,
            ),
        )
    elif experiment == "drone_mpc":
        cfg = replace(
            cfg,
            seeds=(0,),
            drone=replace(cfg.drone, windows_per_traj=12),
            training=replace(
                cfg.training, epochs=80, batch_size=64, inner_steps=50,
                inner_optimizer="adam",
            ),
        )
    validate_config(cfg)
    return cfg
