"""Run configuration: one JSON file wiring every stage together.

Parsing is strict: unknown fields are errors (with their path named), and
the schema carries a version field.  All stage randomness derives from the
single global seed through labeled substreams, so stages can be re-run
independently yet reproducibly.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .control import ControllerGains, default_gains
from .core import NormalizationConfig
from .plant import PlantParams
from .policy import PolicyArch, TrainConfig
from .teach import HandParams, TaskScript, TeachSetup

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Config file failed to parse or validate; message names the field."""


@dataclass(frozen=True)
class GainOverrides:
    kp: float = 1600.0
    kd: float = 80.0
    kf: float = 2.0
    g_dob: float = 40.0
    g_rfob: float = 40.0
    torque_limit: float = 20.0
    friction_mismatch: float = 1.0


@dataclass(frozen=True)
class TeachGrid:
    frequencies_hz: tuple[float, ...] = (0.4, 0.6, 0.8)
    heights_m: tuple[float, ...] = (0.10, 0.15)
    repeats: int = 3
    amplitude_jitter: float = 0.05
    phase_jitter: float = 0.05


@dataclass(frozen=True)
class ScriptConfig:
    press_duration_s: float = 5.0
    press_force_n: float = 5.0
    wipe_amplitude_m: float = 0.05
    total_duration_s: float = 40.0
    home_x_m: float = 0.32
    home_z_m: float = 0.30
    descent_speed_mps: float = 0.06
    press_bias_m: float = 0.006


@dataclass(frozen=True)
class TrainingSection:
    hidden_dim: int = 64
    num_layers: int = 2
    learning_rate: float = 2e-3
    epochs: int = 20
    batch_size: int = 32
    grad_clip: float = 1.0
    val_holdout: int = 20


@dataclass(frozen=True)
class BenchmarkGrid:
    labels_hz: tuple[float, ...] = (0.2, 0.6, 1.0, 1.4)
    heights_m: tuple[float, ...] = (0.10, 0.15)
    trials_per_cell: int = 5
    theta_jitter_rad: float = 0.02


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    output_root: str = "runs"
    scheduler_mode: str = "single-carry"
    jobs: int = 1
    plant: PlantParams = field(default_factory=PlantParams)
    gains: GainOverrides = field(default_factory=GainOverrides)
    hand: HandParams = field(default_factory=HandParams)
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    teach: TeachGrid = field(default_factory=TeachGrid)
    script: ScriptConfig = field(default_factory=ScriptConfig)
    training: TrainingSection = field(default_factory=TrainingSection)
    benchmark: BenchmarkGrid = field(default_factory=BenchmarkGrid)

    def controller_gains(self) -> ControllerGains:
        return default_gains(self.plant, **dataclasses.asdict(self.gains))

    def task_script(self, wipe_frequency: float = 0.6) -> TaskScript:
        s = self.script
        return TaskScript(
            wipe_frequency=wipe_frequency,
            press_duration=s.press_duration_s,
            press_force=s.press_force_n,
            wipe_amplitude=s.wipe_amplitude_m,
            total_duration=s.total_duration_s,
            home=(s.home_x_m, s.home_z_m),
            descent_speed=s.descent_speed_mps,
            press_bias=s.press_bias_m,
        )

    def teach_setup(self) -> TeachSetup:
        return TeachSetup(
            plant=self.plant,
            gains=self.controller_gains(),
            hand=self.hand,
            script=self.task_script(),
            control_rate=self.normalization.control_rate,
            amplitude_jitter=self.teach.amplitude_jitter,
            phase_jitter=self.teach.phase_jitter,
        )

    def policy_arch(self, dof: int = 2) -> PolicyArch:
        return PolicyArch(
            input_dim=3 * dof + 1,
            hidden_dim=self.training.hidden_dim,
            num_layers=self.training.num_layers,
            output_dim=6 * dof,
        )

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(
            learning_rate=t.learning_rate,
            epochs=t.epochs,
            batch_size=t.batch_size,
            grad_clip=t.grad_clip,
            seed=self.seed,
            val_holdout=t.val_holdout,
        )

    def home_xz(self) -> tuple[float, float]:
        return (self.script.home_x_m, self.script.home_z_m)


_TUPLE_FIELDS = {
    "link_lengths", "link_masses", "viscous_friction", "coulomb_friction",
    "frequencies_hz", "heights_m", "labels_hz",
}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown field {path + '.' if path else ''}{key}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        sub = f"{path + '.' if path else ''}{name}"
        if dataclasses.is_dataclass(f.type) or (
                isinstance(f.type, str) and f.type in _DATACLASS_NAMES):
            kwargs[name] = _build(_DATACLASS_NAMES[str(f.type)]
                                  if isinstance(f.type, str) else f.type,
                                  value, sub)
        elif name in _TUPLE_FIELDS:
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{sub}: expected a list")
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


_DATACLASS_NAMES = {
    c.__name__: c
    for c in (PlantParams, GainOverrides, HandParams, NormalizationConfig,
              TeachGrid, ScriptConfig, TrainingSection, BenchmarkGrid)
}


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    version = data.get("schema_version", None)
    if version is None:
        raise ConfigError("missing field schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    cfg = _build(RunConfig, data, "")
    if cfg.scheduler_mode not in ("single-carry", "exact-carry"):
        raise ConfigError(f"scheduler_mode: unknown mode {cfg.scheduler_mode!r}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def save_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
    return path
