"""Variable-frequency inference runtime.

A fixed-rate control loop runs the follower at every tick; an accumulator
scheduler decides at which ticks the policy advances.  The policy step
period in real time is (f0/f)/F, so the model runs faster than its base
rate for fast motion labels and slower for slow ones.  At the model
boundary, input velocities are scaled by f0/f and output velocities by
f/f0; with f equal to the base frequency both scales are exactly 1.0 and
the runtime degenerates to the conventional fixed-rate pipeline bit for
bit.

Two remainder-carry rules are provided.  "single-carry" keeps only the
overshoot of the last interval (t_r <- t - threshold), which biases the
mean period upward whenever the threshold is not an integer multiple of
the control period.  "exact-carry" keeps the cumulative residue
(t_r <- t + t_r - threshold) and tracks the ideal rate within one step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import ControllerGains, Robot, RobotCommand, follower_command_from_leader
from .core import NormalizationConfig, RobotResponse, seed_stream
from .plant import PlantParams, inverse_kinematics
from .policy import PolicyParams, init_hidden, policy_apply

SCHEDULER_MODES = ("single-carry", "exact-carry")


@dataclass
class SchedulerState:
    """Accumulator pair deciding when the policy advances.

    t is the elapsed time since the last model step, t_r the carried
    remainder (may be negative in single-carry mode).
    """

    threshold: float
    ts: float
    mode: str = "single-carry"
    t: float = 0.0
    t_r: float = 0.0
    step_count: int = 0

    def __post_init__(self):
        if self.threshold <= 0 or self.ts <= 0:
            raise ValueError("threshold and ts must be positive")
        if self.mode not in SCHEDULER_MODES:
            raise ValueError(f"unknown scheduler mode {self.mode!r}")


def scheduler_init(model_rate: float, base_frequency: float, frequency: float,
                   ts: float, mode: str = "single-carry") -> SchedulerState:
    """Threshold is (f0/f)/F; at f == f0 it equals 1/F exactly."""
    if frequency <= 0 or base_frequency <= 0 or model_rate <= 0:
        raise ValueError("frequencies and the model rate must be positive")
    threshold = (base_frequency / frequency) / model_rate
    return SchedulerState(threshold=threshold, ts=ts, mode=mode)


def scheduler_tick(state: SchedulerState, ts: float | None = None) -> bool:
    """Advance the accumulator by one control tick.

    Returns True when the policy should step now.  Time is credited before
    the comparison, so the first advance happens on the first tick whose
    accumulated time reaches the threshold.
    """
    dt = state.ts if ts is None else ts
    state.t += dt
    if state.t + state.t_r >= state.threshold:
        if state.mode == "single-carry":
            state.t_r = state.t - state.threshold
        else:
            state.t_r = state.t + state.t_r - state.threshold
        state.t = 0.0
        state.step_count += 1
        return True
    return False


def normalize_model_input(response: RobotResponse, frequency: float,
                          base_frequency: float) -> RobotResponse:
    """Scale measured velocities into the base-frequency frame (omega * f0/f)."""
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    scale = base_frequency / frequency
    return RobotResponse(
        theta=response.theta,
        omega=tuple(w * scale for w in response.omega),
        tau=response.tau,
    )


def denormalize_model_output(output: np.ndarray, frequency: float,
                             base_frequency: float, dof: int = 2) -> RobotCommand:
    """Turn a physical-unit policy output into the follower's next command.

    The leader block of the prediction plays the leader's role in the
    bilateral law: its velocities are scaled back by f/f0 and the command
    mapping (including the force-channel negation) is the same one used
    while teaching.
    """
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    scale = frequency / base_frequency
    lead = np.asarray(output, dtype=float)[3 * dof:]
    leader_like = RobotResponse(
        theta=tuple(lead[0:dof]),
        omega=tuple(v * scale for v in lead[dof:2 * dof]),
        tau=tuple(lead[2 * dof:3 * dof]),
    )
    return follower_command_from_leader(leader_like)


@dataclass(frozen=True)
class RolloutConfig:
    """One closed-loop trial of a trained policy."""

    frequency: float
    surface_height: float = 0.15
    duration: float = 40.0
    seed: int = 0
    scheduler_mode: str = "single-carry"
    variable_rate: bool = True
    home: tuple[float, float] = (0.32, 0.30)
    theta_jitter: float = 0.02

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass
class TrajectoryLog:
    """Control-rate record of one rollout.

    samples uses the demonstration column layout; the leader block holds the
    virtual leader (the policy's held prediction driving the follower).
    """

    time: np.ndarray
    samples: np.ndarray
    normal_force: np.ndarray
    model_step: np.ndarray
    clamped: np.ndarray
    config: dict
    dof: int = 2

    def model_step_times(self) -> np.ndarray:
        return self.time[self.model_step.astype(bool)]

    def step_periods(self) -> np.ndarray:
        return np.diff(self.model_step_times())

    def summary(self) -> dict:
        periods = self.step_periods()
        hist: dict[str, int] = {}
        for p in periods:
            key = f"{p:.6f}"
            hist[key] = hist.get(key, 0) + 1
        return {
            "config": self.config,
            "model_steps": int(self.model_step.sum()),
            "mean_step_period_s": float(periods.mean()) if len(periods) else None,
            "step_period_histogram": hist,
            "clamped_ticks": int(self.clamped.sum()),
        }


def rollout(cfg: RolloutConfig, params: PolicyParams, plant: PlantParams,
            gains: ControllerGains, norm: NormalizationConfig) -> TrajectoryLog:
    """Run the full control loop with the policy in the leader's seat.

    The policy is fed the follower's (velocity-normalized) response plus the
    frequency label at every scheduler advance; the command it produced at
    the previous advance is applied from the current advance on and held
    between model steps.
    """
    f = cfg.frequency
    f0 = norm.base_frequency
    ts = 1.0 / norm.control_rate
    if cfg.variable_rate:
        in_scale_enabled = True
        threshold_rate = f
    else:
        in_scale_enabled = False
        threshold_rate = f0
    sched = scheduler_init(norm.model_rate, f0, threshold_rate, ts,
                           cfg.scheduler_mode)

    rng = seed_stream(cfg.seed, "rollout-init")
    theta_home = inverse_kinematics(*cfg.home, plant)
    jitter = rng.uniform(-cfg.theta_jitter, cfg.theta_jitter, size=len(theta_home))
    theta0 = tuple(t + j for t, j in zip(theta_home, jitter))
    robot = Robot(plant, gains, theta0, cfg.surface_height, ts)

    hidden = init_hidden(params)
    dof = len(theta0)
    cmd = RobotCommand(theta=theta0, omega=(0.0,) * dof, tau=(0.0,) * dof)
    pending: RobotCommand | None = None

    n = int(round(cfg.duration * norm.control_rate))
    time_arr = np.empty(n)
    samples = np.empty((n, 6 * dof))
    normal_force = np.empty(n)
    model_step = np.zeros(n, dtype=bool)
    clamped = np.zeros(n, dtype=bool)
    x_in = np.empty(3 * dof + 1)

    for k in range(n):
        res = robot.response()
        if scheduler_tick(sched):
            model_step[k] = True
            if pending is not None:
                cmd = pending
            fed = normalize_model_input(res, f, f0) if in_scale_enabled else res
            x_in[0:dof] = fed.theta
            x_in[dof:2 * dof] = fed.omega
            x_in[2 * dof:3 * dof] = fed.tau
            x_in[3 * dof] = f
            out, hidden = policy_apply(params, hidden, x_in)
            if in_scale_enabled:
                pending = denormalize_model_output(out, f, f0, dof)
            else:
                pending = denormalize_model_output(out, f0, f0, dof)

        time_arr[k] = k * ts
        samples[k, 0:dof] = cmd.theta
        samples[k, dof:2 * dof] = cmd.omega
        samples[k, 2 * dof:3 * dof] = tuple(-t for t in cmd.tau)
        samples[k, 3 * dof:4 * dof] = res.theta
        samples[k, 4 * dof:5 * dof] = res.omega
        samples[k, 5 * dof:6 * dof] = res.tau
        info, cl = robot.step(cmd)
        normal_force[k] = info.normal_force
        clamped[k] = cl

    config = {
        "frequency_hz": f,
        "surface_height_m": cfg.surface_height,
        "duration_s": cfg.duration,
        "seed": cfg.seed,
        "scheduler_mode": cfg.scheduler_mode,
        "variable_rate": cfg.variable_rate,
        "control_rate_hz": norm.control_rate,
        "model_rate_hz": norm.model_rate,
        "base_frequency_hz": f0,
        "link_lengths_m": list(plant.link_lengths),
        "home_xz_m": list(cfg.home),
    }
    return TrajectoryLog(time=time_arr, samples=samples, normal_force=normal_force,
                         model_step=model_step, clamped=clamped, config=config,
                         dof=dof)
