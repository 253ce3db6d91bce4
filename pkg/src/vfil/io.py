"""On-disk formats: demonstrations, training sets, model containers, logs.

Demonstrations are a CSV of samples next to a JSON manifest.  The model
container is a single binary file: magic, a JSON header (architecture,
standardization, pipeline rates, tensor table), then the raw little-endian
float64 payload.  Nothing here writes wall-clock timestamps, so identical
inputs produce identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from .core import (
    Demonstration,
    PHASE_CODES,
    PHASE_NAMES,
    Standardization,
    TrainingSequence,
    sample_columns,
)
from .infer import TrajectoryLog
from .policy import PolicyArch, PolicyParams

MODEL_MAGIC = b"VFILPOL1"


def save_demonstration(out_dir, name: str, demo: Demonstration, meta: dict) -> Path:
    """Write <name>.csv plus <name>.json; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = sample_columns(demo.dof)
    df = pd.DataFrame(demo.samples, columns=cols)
    df.insert(0, "time_s", np.arange(len(demo.samples)) / demo.sample_rate)
    df["phase"] = [PHASE_NAMES[p] for p in demo.phase]
    csv_path = out / f"{name}.csv"
    df.to_csv(csv_path, index=False, float_format="%.12g")
    manifest = {
        "schema_version": 1,
        "motion_frequency_hz": demo.motion_frequency,
        "surface_height_m": demo.surface_height,
        "sample_rate_hz": demo.sample_rate,
        "dof": demo.dof,
        "seed": demo.seed,
        "samples": len(demo.samples),
        "csv": csv_path.name,
        "meta": meta,
    }
    json_path = out / f"{name}.json"
    json_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return json_path


def load_demonstration(json_path) -> tuple[Demonstration, dict]:
    json_path = Path(json_path)
    manifest = json.loads(json_path.read_text())
    df = pd.read_csv(json_path.parent / manifest["csv"])
    dof = manifest["dof"]
    cols = sample_columns(dof)
    samples = df[cols].to_numpy(dtype=float)
    phase = np.array([PHASE_CODES[p] for p in df["phase"]], dtype=np.uint8)
    demo = Demonstration(
        motion_frequency=manifest["motion_frequency_hz"],
        surface_height=manifest["surface_height_m"],
        sample_rate=manifest["sample_rate_hz"],
        samples=samples,
        phase=phase,
        dof=dof,
        seed=manifest["seed"],
    )
    return demo, manifest.get("meta", {})


def save_dataset(out_dir, demos_with_meta, manifest: dict) -> Path:
    """Write a teaching grid: one CSV+JSON pair per cell plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, (demo, meta) in enumerate(demos_with_meta):
        name = (f"demo_{i:02d}_f{demo.motion_frequency:g}"
                f"_h{demo.surface_height:g}_r{meta.get('repeat', 0)}")
        save_demonstration(out, name, demo, meta)
        files.append(f"{name}.json")
    manifest = dict(manifest)
    manifest["files"] = files
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_dataset(dataset_dir) -> tuple[list[tuple[Demonstration, dict]], dict]:
    ddir = Path(dataset_dir)
    manifest = json.loads((ddir / "manifest.json").read_text())
    out = [load_demonstration(ddir / f) for f in manifest["files"]]
    return out, manifest


def save_training_set(out_dir, sequences: list[TrainingSequence],
                      manifest: dict) -> Path:
    """Write one .npz per sequence plus a manifest listing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, seq in enumerate(sequences):
        name = f"seq_{i:04d}.npz"
        np.savez(out / name, inputs=seq.inputs, targets=seq.targets,
                 label=seq.label, step_period=seq.step_period_original)
        files.append(name)
    manifest = dict(manifest)
    manifest["files"] = files
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_training_set(set_dir) -> tuple[list[TrainingSequence], Standardization, dict]:
    sdir = Path(set_dir)
    manifest = json.loads((sdir / "manifest.json").read_text())
    sequences = []
    for name in manifest["files"]:
        with np.load(sdir / name) as z:
            sequences.append(TrainingSequence(
                label=float(z["label"]),
                inputs=z["inputs"],
                targets=z["targets"],
                step_period_original=float(z["step_period"]),
                source=name,
            ))
    stats = Standardization.from_dict(manifest["standardization"])
    return sequences, stats, manifest


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def save_model(path, params: PolicyParams, pipeline: str,
               rates: dict, train_meta: dict | None = None) -> Path:
    """Serialize a policy into the versioned binary container."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    named = params.named_parameters()
    header = {
        "format_version": 1,
        "arch": {
            "input_dim": params.arch.input_dim,
            "hidden_dim": params.arch.hidden_dim,
            "num_layers": params.arch.num_layers,
            "output_dim": params.arch.output_dim,
        },
        "standardization": params.stats.as_dict(),
        "pipeline": pipeline,
        "rates": rates,
        "train_meta": train_meta or {},
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in named],
    }
    if train_meta and "config" in train_meta:
        header["train_config_hash"] = config_hash(train_meta["config"])
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_model(path) -> tuple[PolicyParams, dict]:
    """Read a policy container; raises ModelLoadError on any mismatch."""
    from .core import ModelLoadError

    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    if len(raw) < 12 or raw[:8] != MODEL_MAGIC:
        raise ModelLoadError(f"{path} is not a policy container")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"corrupt model header in {path}") from exc
    arch = PolicyArch(**header["arch"])
    stats = Standardization.from_dict(header["standardization"])
    offset = 12 + hlen
    tensors = {}
    for spec_t in header["tensors"]:
        shape = tuple(spec_t["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw):
            raise ModelLoadError(f"truncated payload in {path}")
        tensors[spec_t["name"]] = np.frombuffer(
            raw[offset:end], dtype="<f8").reshape(shape).astype(float)
        offset = end
    layers = []
    for i in range(arch.num_layers):
        layers.append({
            "w_x": tensors[f"layer{i}.w_x"],
            "w_h": tensors[f"layer{i}.w_h"],
            "b": tensors[f"layer{i}.b"],
        })
    params = PolicyParams(arch, layers, tensors["head.w"], tensors["head.b"], stats)
    return params, header


def save_loss_curve(path, history: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["update,train_loss,grad_norm"]
    for i, (loss, norm) in enumerate(zip(history["train_loss"],
                                         history["grad_norm"])):
        lines.append(f"{i},{loss:.8g},{norm:.8g}")
    lines.append("")
    lines.append("epoch,val_loss")
    for epoch, loss in zip(history["val_epoch"], history["val_loss"]):
        lines.append(f"{epoch},{loss:.8g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def save_trajectory_log(out_dir, name: str, log: TrajectoryLog) -> Path:
    """Write <name>.csv (per tick) and <name>.json (summary)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = sample_columns(log.dof)
    df = pd.DataFrame(log.samples, columns=cols)
    df.insert(0, "time_s", log.time)
    df["normal_force_n"] = log.normal_force
    df["model_step"] = log.model_step.astype(int)
    df["clamped"] = log.clamped.astype(int)
    csv_path = out / f"{name}.csv"
    df.to_csv(csv_path, index=False, float_format="%.12g")
    summary = log.summary()
    summary["csv"] = csv_path.name
    (out / f"{name}.json").write_text(json.dumps(summary, indent=2) + "\n")
    return csv_path


def load_trajectory_log(json_path) -> TrajectoryLog:
    json_path = Path(json_path)
    summary = json.loads(json_path.read_text())
    df = pd.read_csv(json_path.parent / summary["csv"])
    config = summary["config"]
    dof = (len([c for c in df.columns if c.startswith("l_theta")]))
    cols = sample_columns(dof)
    return TrajectoryLog(
        time=df["time_s"].to_numpy(dtype=float),
        samples=df[cols].to_numpy(dtype=float),
        normal_force=df["normal_force_n"].to_numpy(dtype=float),
        model_step=df["model_step"].to_numpy(dtype=bool),
        clamped=df["clamped"].to_numpy(dtype=bool),
        config=config,
        dof=dof,
    )
