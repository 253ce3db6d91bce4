"""Domain types and the time-normalization pipeline.

Trajectories are stored as (N, 6*dof) sample matrices with the column layout
``leader theta | leader omega | leader tau | follower theta | follower omega |
follower tau`` (each block has one column per joint).  Per-tick values use the
light-weight ``RobotResponse`` / ``RobotCommand`` tuples; joint vectors are
plain float tuples so the 500 Hz loops stay cheap.

Time normalization rescales a demonstration recorded at motion frequency
``f_i`` so that, read back at the control rate, the motion appears at the base
frequency ``f0``: the samples are linearly resampled onto a grid of
``sample_rate * f_i / f0`` and every velocity channel is multiplied by
``f0 / f_i``.  Phase-shifted decimation then splits the result into
``decimation`` interleaved low-rate episodes.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np


def seed_stream(seed: int, *tags) -> np.random.Generator:
    """Deterministic, platform-stable RNG substream labeled by tags.

    Stages (teaching, training, evaluation) draw from disjoint substreams of
    one global seed so they can be re-run independently yet reproducibly.
    """
    words = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            words.append(zlib.crc32(tag.encode()))
        else:
            words.append(int(tag) & 0xFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


class SimulationDiverged(RuntimeError):
    """Plant state became non-finite; carries the simulation time."""

    def __init__(self, sim_time: float, detail: str = ""):
        super().__init__(f"simulation diverged at t={sim_time:.4f} s {detail}".rstrip())
        self.sim_time = sim_time


class TeachFailure(RuntimeError):
    """The scripted operator could not complete the task protocol."""


class TrainingFailure(RuntimeError):
    """Optimization diverged; carries the update index."""

    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"training failed at update {step} {detail}".rstrip())
        self.step = step


class InsufficientMotion(RuntimeError):
    """Signal carries too few direction reversals to estimate a frequency."""


class ModelLoadError(RuntimeError):
    """Model container is missing, corrupt, or incompatible."""


class RobotResponse(NamedTuple):
    """Measured joint state: angles (rad), velocities (rad/s), and the
    observer-estimated reaction torque (N*m, positive when the robot pushes
    on its environment)."""

    theta: tuple[float, ...]
    omega: tuple[float, ...]
    tau: tuple[float, ...]


class RobotCommand(NamedTuple):
    """Command triple mirroring RobotResponse (theta/omega/tau targets)."""

    theta: tuple[float, ...]
    omega: tuple[float, ...]
    tau: tuple[float, ...]


def _check_finite_triple(name: str, triple) -> None:
    for block in triple:
        for v in block:
            if not math.isfinite(v):
                raise ValueError(f"{name} contains non-finite entry {v!r}")


PHASE_PRESS = 0
PHASE_WIPE = 1
PHASE_NAMES = {PHASE_PRESS: "press", PHASE_WIPE: "wipe"}
PHASE_CODES = {v: k for k, v in PHASE_NAMES.items()}


def sample_columns(dof: int) -> list[str]:
    """Column names of the demonstration sample matrix."""
    cols = []
    for side in ("l", "f"):
        for ch in ("theta", "omega", "tau"):
            cols.extend(f"{side}_{ch}{j}" for j in range(dof))
    return cols


def velocity_column_mask(dof: int) -> np.ndarray:
    """Boolean mask selecting the omega columns of a sample matrix."""
    mask = np.zeros(6 * dof, dtype=bool)
    mask[dof:2 * dof] = True          # leader omega
    mask[4 * dof:5 * dof] = True      # follower omega
    return mask


@dataclass(frozen=True)
class NormalizationConfig:
    """Rates tying the recorder, the model, and the normalization together.

    base_frequency is the motion frequency every demonstration is rescaled
    to; model_rate is the policy step rate at that base frequency.
    """

    base_frequency: float = 0.6
    model_rate: float = 25.0
    control_rate: float = 500.0
    decimation: int = 20

    def __post_init__(self):
        if self.base_frequency <= 0 or self.model_rate <= 0 or self.control_rate <= 0:
            raise ValueError("rates must be positive")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.control_rate < self.model_rate:
            raise ValueError("control_rate must be >= model_rate")
        if abs(self.control_rate / self.model_rate - self.decimation) > 1e-9:
            raise ValueError(
                "control_rate / model_rate must equal the decimation factor "
                f"({self.control_rate}/{self.model_rate} != {self.decimation})"
            )


@dataclass
class Demonstration:
    """A dual-robot trajectory recorded at a uniform rate.

    samples holds one row per tick (see sample_columns for layout); phase
    tags every row as press or wipe.
    """

    motion_frequency: float
    surface_height: float
    sample_rate: float
    samples: np.ndarray
    phase: np.ndarray
    dof: int = 2
    seed: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.phase = np.asarray(self.phase, dtype=np.uint8)
        if self.motion_frequency <= 0:
            raise ValueError("motion_frequency must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 2 or self.samples.shape[1] != 6 * self.dof:
            raise ValueError(f"samples must be (N, {6 * self.dof})")
        if len(self.samples) == 0:
            raise ValueError("samples must be non-empty")
        if len(self.phase) != len(self.samples):
            raise ValueError("phase length must match samples")
        if not np.isfinite(self.samples).all():
            raise ValueError("samples contain non-finite values")

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) / self.sample_rate

    def follower_block(self) -> np.ndarray:
        return self.samples[:, 3 * self.dof:]

    def leader_block(self) -> np.ndarray:
        return self.samples[:, :3 * self.dof]


@dataclass
class TrainingSequence:
    """One step-aligned input/target pair sequence for the policy.

    inputs[k] is the follower response at step k (velocities already
    normalized) with the frequency label appended; targets[k] is the
    follower plus leader response at step k + 1.  step_period_original is
    the span of one model step in original (unnormalized) time.
    """

    label: float
    inputs: np.ndarray
    targets: np.ndarray
    step_period_original: float
    source: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets must have equal length")
        if len(self.inputs) and not np.allclose(self.inputs[:, -1], self.label):
            raise ValueError("embedded frequency label must equal the sequence label")


@dataclass
class Standardization:
    """Per-channel mean/std for policy inputs and targets."""

    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def as_dict(self) -> dict:
        return {
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(
            np.asarray(d["input_mean"], dtype=float),
            np.asarray(d["input_std"], dtype=float),
            np.asarray(d["target_mean"], dtype=float),
            np.asarray(d["target_std"], dtype=float),
        )


def linear_resample(series: np.ndarray, rate_src: float, rate_dst: float) -> np.ndarray:
    """Resample a uniform series onto a new rate by linear interpolation.

    The output covers the same real-time span; the first sample is preserved
    exactly, and interior samples interpolate the two bracketing inputs.
    """
    series = np.asarray(series, dtype=float)
    if rate_src <= 0 or rate_dst <= 0:
        raise ValueError("rates must be positive")
    squeeze = series.ndim == 1
    if squeeze:
        series = series[:, None]
    n = len(series)
    if n < 2:
        raise ValueError("need at least 2 samples to resample")
    duration = (n - 1) / rate_src
    m = int(math.floor(duration * rate_dst + 1e-9)) + 1
    # positions in source index space; k * rate_src / rate_dst is exact for
    # the identity case so rate_dst == rate_src reproduces the input
    u = np.arange(m) * (rate_src / rate_dst)
    u = np.clip(u, 0.0, n - 1)
    lo = np.floor(u).astype(np.intp)
    lo = np.minimum(lo, n - 2)
    w = (u - lo)[:, None]
    out = series[lo] * (1.0 - w) + series[lo + 1] * w
    return out[:, 0] if squeeze else out


def resample_labels(labels: np.ndarray, rate_src: float, rate_dst: float) -> np.ndarray:
    """Nearest-neighbor companion to linear_resample for categorical rows."""
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2:
        raise ValueError("need at least 2 samples to resample")
    duration = (n - 1) / rate_src
    m = int(math.floor(duration * rate_dst + 1e-9)) + 1
    u = np.arange(m) * (rate_src / rate_dst)
    idx = np.clip(np.rint(u).astype(np.intp), 0, n - 1)
    return labels[idx]


def scale_velocities(samples: np.ndarray, factor: float, dof: int = 2) -> np.ndarray:
    """Return a copy with every omega column multiplied by factor."""
    if not math.isfinite(factor) or factor <= 0:
        raise ValueError(f"velocity scale factor must be finite and positive, got {factor!r}")
    samples = np.asarray(samples, dtype=float)
    out = samples.copy()
    out[:, velocity_column_mask(dof)] *= factor
    return out


def normalize_demonstration(demo: Demonstration, cfg: NormalizationConfig) -> Demonstration:
    """Rescale a demonstration to the base motion frequency.

    The sample grid is stretched by f_i / f0 (same real-time span, new stored
    rate) and velocities are multiplied by f0 / f_i, so that one motion cycle
    always spans control_rate / f0 samples and the velocity channels stay
    consistent with reading the samples back at the control rate.
    """
    f_i = demo.motion_frequency
    f0 = cfg.base_frequency
    if f_i <= 0:
        raise ValueError("motion frequency must be positive")
    rate_new = demo.sample_rate * (f_i / f0)
    samples = linear_resample(demo.samples, demo.sample_rate, rate_new)
    samples = scale_velocities(samples, f0 / f_i, demo.dof)
    phase = resample_labels(demo.phase, demo.sample_rate, rate_new)
    return replace(demo, sample_rate=rate_new, samples=samples, phase=phase)


def decimate_phases(series: np.ndarray, factor: int) -> list[np.ndarray]:
    """Split a series into `factor` phase-shifted interleaved subsequences.

    Subsequence k takes indices k, k+factor, k+2*factor, ...; together they
    partition the input exactly.
    """
    series = np.asarray(series)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor > len(series):
        raise ValueError(f"factor {factor} exceeds series length {len(series)}")
    return [series[k::factor].copy() for k in range(factor)]


def _sequence_io_arrays(
    block_follower: np.ndarray,
    block_leader: np.ndarray,
    label: float,
) -> tuple[np.ndarray, np.ndarray]:
    n = len(block_follower)
    inputs = np.empty((n - 1, block_follower.shape[1] + 1))
    inputs[:, :-1] = block_follower[:-1]
    inputs[:, -1] = label
    targets = np.concatenate([block_follower[1:], block_leader[1:]], axis=1)
    return inputs, targets


def build_training_set(
    demos: Sequence[Demonstration],
    cfg: NormalizationConfig,
    variable_rate: bool = True,
) -> tuple[list[TrainingSequence], Standardization, dict]:
    """Turn demonstrations into policy training sequences plus a manifest.

    With variable_rate the demonstrations are time-normalized first; without
    it they are decimated as-is at the fixed control_rate / model_rate
    factor.  Standardization statistics are computed per channel over the
    whole resulting set (after normalization, in physical units).
    """
    if not demos:
        raise ValueError("need at least one demonstration")
    sequences: list[TrainingSequence] = []
    entries = []
    for d_idx, demo in enumerate(demos):
        if variable_rate:
            prepared = normalize_demonstration(demo, cfg)
        else:
            prepared = demo
        subs = decimate_phases(prepared.samples, cfg.decimation)
        keep = min(len(s) for s in subs)
        step_period = cfg.base_frequency / (demo.motion_frequency * cfg.model_rate)
        if not variable_rate:
            step_period = 1.0 / cfg.model_rate
        dof = demo.dof
        for k, sub in enumerate(subs):
            sub = sub[:keep]
            inputs, targets = _sequence_io_arrays(
                sub[:, 3 * dof:], sub[:, :3 * dof], demo.motion_frequency
            )
            seq = TrainingSequence(
                label=demo.motion_frequency,
                inputs=inputs,
                targets=targets,
                step_period_original=step_period,
                source=f"demo{d_idx}/offset{k}",
            )
            sequences.append(seq)
            entries.append(
                {
                    "source_demo": d_idx,
                    "offset": k,
                    "length": len(inputs),
                    "label_hz": demo.motion_frequency,
                    "surface_height_m": demo.surface_height,
                }
            )
    stats = compute_standardization(sequences)
    manifest = {
        "schema_version": 1,
        "variable_rate": variable_rate,
        "base_frequency_hz": cfg.base_frequency,
        "model_rate_hz": cfg.model_rate,
        "control_rate_hz": cfg.control_rate,
        "decimation": cfg.decimation,
        "num_sequences": len(sequences),
        "sequences": entries,
        "standardization": stats.as_dict(),
    }
    return sequences, stats, manifest


def compute_standardization(sequences: Sequence[TrainingSequence]) -> Standardization:
    """Zero-mean unit-variance statistics over a training set.

    Channels with (near-)zero spread keep std 1 so single-frequency toy sets
    still standardize cleanly.
    """
    xs = np.concatenate([s.inputs for s in sequences], axis=0)
    ys = np.concatenate([s.targets for s in sequences], axis=0)
    def _stats(a):
        mean = a.mean(axis=0)
        std = a.std(axis=0)
        std = np.where(std < 1e-8, 1.0, std)
        return mean, std
    im, istd = _stats(xs)
    tm, tstd = _stats(ys)
    return Standardization(im, istd, tm, tstd)
