"""Scripted teleoperation teacher: a metronome-timed operator drives the
leader through press-then-wipe motions while the follower mirrors it under
four-channel bilateral control, and every control tick is recorded.

The human operator is replaced by a deterministic script holding the leader
through a joint-space spring-damper hand.  The script descends until the
force reflected into the hand crosses a threshold (surface detection), then
wipes sinusoidally with direction reversals on the metronome beats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .control import ControllerGains, Robot, bilateral_refs
from .core import (
    Demonstration,
    PHASE_PRESS,
    PHASE_WIPE,
    RobotResponse,
    TeachFailure,
    seed_stream,
)
from .plant import PlantParams, forward_kinematics, inverse_kinematics, jacobian


@dataclass(frozen=True)
class TaskScript:
    """Parameters of one press-and-wipe trial.

    Beat rate is twice the wipe frequency: the wipe reverses direction on
    every metronome beat.
    """

    wipe_frequency: float
    press_duration: float = 5.0
    press_force: float = 5.0        # N, surface detection threshold
    wipe_amplitude: float = 0.05    # m
    total_duration: float = 40.0
    home: tuple[float, float] = (0.32, 0.30)
    descent_speed: float = 0.06     # m/s
    press_bias: float = 0.006       # m commanded past the detected height
    phase_offset: float = 0.0       # rad, seeded jitter

    def __post_init__(self):
        if self.wipe_frequency <= 0:
            raise ValueError("wipe_frequency must be positive")
        if self.total_duration <= self.press_duration:
            raise ValueError("total_duration must exceed press_duration")
        if self.wipe_amplitude <= 0:
            raise ValueError("wipe_amplitude must be positive")

    @property
    def beats_per_minute(self) -> float:
        return 120.0 * self.wipe_frequency

    def wipe_x(self, t: float) -> float:
        """Tangential wipe target at time t (valid for t >= press_duration)."""
        return self.home[0] + self.wipe_amplitude * math.sin(
            2.0 * math.pi * self.wipe_frequency * (t - self.press_duration)
            + self.phase_offset
        )

    def beat_times(self) -> np.ndarray:
        """Times of the wipe direction reversals (metronome beats)."""
        f = self.wipe_frequency
        first = (math.pi / 2.0 - self.phase_offset) / (2.0 * math.pi * f)
        times = []
        k = 0
        while True:
            t = self.press_duration + first + k / (2.0 * f)
            if t > self.total_duration:
                break
            if t >= self.press_duration:
                times.append(t)
            k += 1
        return np.asarray(times)


@dataclass(frozen=True)
class HandParams:
    """Joint-space impedance of the scripted operator's grip."""

    stiffness: float = 80.0   # N*m/rad
    damping: float = 5.0      # N*m*s/rad
    torque_limit: float = 12.0


class ScriptedOperator:
    """Generates leader joint targets for the press-then-wipe protocol.

    Stateful: it latches the surface height the first time the sensed
    normal-force proxy crosses the press threshold.
    """

    def __init__(self, script: TaskScript, params: PlantParams):
        self.script = script
        self.params = params
        self.detected_z: float | None = None
        self._hold_z = script.home[1]

    def sensed_normal_force(self, sensed: RobotResponse) -> float:
        """Vertical force the leader presses into the operator's hand."""
        jac = jacobian(sensed.theta, self.params)
        det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
        if abs(det) < 1e-9:
            return 0.0
        return (-jac[0][1] * sensed.tau[0] + jac[0][0] * sensed.tau[1]) / det

    def target(self, t: float, sensed: RobotResponse) -> tuple[tuple[float, float], int]:
        """Leader joint target and phase tag at time t."""
        s = self.script
        if t < s.press_duration:
            if self.detected_z is None:
                z = s.home[1] - s.descent_speed * t
                if t > 0.3 and self.sensed_normal_force(sensed) >= s.press_force:
                    self.detected_z = z
                    self._hold_z = z - s.press_bias
            else:
                z = self._hold_z
            x = s.home[0]
            phase = PHASE_PRESS
        else:
            if self.detected_z is None:
                raise TeachFailure(
                    f"surface not detected within the {s.press_duration} s press window"
                )
            x = s.wipe_x(t)
            z = self._hold_z
            phase = PHASE_WIPE
        return inverse_kinematics(x, z, self.params), phase


def hand_torque(target_theta, response: RobotResponse, hand: HandParams
                ) -> tuple[float, float]:
    """Spring-damper torque of the operator's grip on the leader."""
    out = []
    for j in range(len(target_theta)):
        tau = (hand.stiffness * (target_theta[j] - response.theta[j])
               - hand.damping * response.omega[j])
        out.append(max(-hand.torque_limit, min(hand.torque_limit, tau)))
    return tuple(out)


@dataclass(frozen=True)
class TeachSetup:
    """Everything needed to record demonstrations except the grid cell."""

    plant: PlantParams
    gains: ControllerGains
    hand: HandParams
    script: TaskScript
    control_rate: float = 500.0
    amplitude_jitter: float = 0.05
    phase_jitter: float = 0.05


def record_demonstration(setup: TeachSetup, frequency: float,
                         surface_height: float, seed: int
                         ) -> tuple[Demonstration, dict]:
    """Run one teleoperated trial and record both robots at control rate.

    Deterministic per seed.  Returns the demonstration plus a metadata dict
    with the success predicate, observed forces, and saturation counts.
    """
    rng = seed_stream(seed, "teach-jitter")
    amp = setup.script.wipe_amplitude * (
        1.0 + setup.amplitude_jitter * rng.uniform(-1.0, 1.0))
    phase_off = setup.phase_jitter * 2.0 * math.pi * rng.uniform(-1.0, 1.0)
    script = replace(setup.script, wipe_frequency=frequency,
                     wipe_amplitude=amp, phase_offset=phase_off)

    ts = 1.0 / setup.control_rate
    theta0 = inverse_kinematics(*script.home, setup.plant)
    leader = Robot(setup.plant, setup.gains, theta0, None, ts)
    follower = Robot(setup.plant, setup.gains, theta0, surface_height, ts)
    operator = ScriptedOperator(script, setup.plant)

    n = int(round(script.total_duration * setup.control_rate))
    dof = len(theta0)
    samples = np.empty((n, 6 * dof))
    phases = np.empty(n, dtype=np.uint8)
    normal_force = np.empty(n)
    clamp_ticks = 0

    for k in range(n):
        t = k * ts
        lres = leader.response()
        fres = follower.response()
        samples[k, 0:dof] = lres.theta
        samples[k, dof:2 * dof] = lres.omega
        samples[k, 2 * dof:3 * dof] = lres.tau
        samples[k, 3 * dof:4 * dof] = fres.theta
        samples[k, 4 * dof:5 * dof] = fres.omega
        samples[k, 5 * dof:6 * dof] = fres.tau

        target, phase = operator.target(t, lres)
        phases[k] = phase
        tau_op = hand_torque(target, lres, setup.hand)
        lcmd, fcmd = bilateral_refs(lres, fres)
        _, cl1 = leader.step(lcmd, external_torque=tau_op)
        info, cl2 = follower.step(fcmd)
        normal_force[k] = info.normal_force
        clamp_ticks += cl1 + cl2

    demo = Demonstration(
        motion_frequency=frequency,
        surface_height=surface_height,
        sample_rate=setup.control_rate,
        samples=samples,
        phase=phases,
        dof=dof,
        seed=seed,
    )
    wipe = phases == PHASE_WIPE
    press_end_idx = int(np.argmax(wipe)) if wipe.any() else n
    after_press = normal_force[press_end_idx:]
    success = bool((after_press > 0.1).all()) if len(after_press) else False
    meta = {
        "frequency_hz": frequency,
        "surface_height_m": surface_height,
        "seed": seed,
        "success": success,
        "detected_surface_z": operator.detected_z,
        "press_end_index": press_end_idx,
        "min_wipe_normal_force_n": float(after_press.min()) if len(after_press) else 0.0,
        "mean_wipe_normal_force_n": float(after_press.mean()) if len(after_press) else 0.0,
        "controller_saturation_ticks": int(clamp_ticks),
        "wipe_amplitude_m": amp,
        "phase_offset_rad": phase_off,
    }
    return demo, meta


def collect_dataset(setup: TeachSetup, frequencies, heights, repeats: int,
                    seed: int) -> tuple[list[tuple[Demonstration, dict]], dict]:
    """Record the full teaching grid; every cell must succeed.

    Raises TeachFailure naming the first failing cell.  Returns the
    demonstrations in grid order plus a manifest.
    """
    if not frequencies or not heights or repeats < 1:
        raise ValueError("grids must be non-empty and repeats >= 1")
    out = []
    entries = []
    index = 0
    for f in frequencies:
        for h in heights:
            for r in range(repeats):
                cell_seed = int(seed_stream(seed, "teach", index).integers(0, 2**31 - 1))
                try:
                    demo, meta = record_demonstration(setup, f, h, cell_seed)
                except (TeachFailure, Exception) as exc:
                    raise TeachFailure(
                        f"cell f={f} Hz h={h} m repeat={r}: {exc}") from exc
                if not meta["success"]:
                    raise TeachFailure(
                        f"cell f={f} Hz h={h} m repeat={r}: contact lost during wipe "
                        f"(min force {meta['min_wipe_normal_force_n']:.3f} N)")
                meta["repeat"] = r
                out.append((demo, meta))
                entries.append(meta)
                index += 1
    histogram: dict[str, int] = {}
    for f in frequencies:
        histogram[str(f)] = len(heights) * repeats
    manifest = {
        "schema_version": 1,
        "seed": seed,
        "frequencies_hz": list(frequencies),
        "heights_m": list(heights),
        "repeats": repeats,
        "count": len(out),
        "frequency_histogram": histogram,
        "demonstrations": entries,
    }
    return out, manifest
