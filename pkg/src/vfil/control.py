"""Per-joint motion control with disturbance and reaction-torque observers,
plus the four-channel bilateral coupling between a leader and a follower.

Conventions: the reaction-torque observer publishes the torque the robot
applies to its environment (pressing down on a surface gives the same sign
as the surface normal mapped through -J^T).  The bilateral law commands each
robot with the other's measured state and the negated reaction estimate,
which drives the position difference and the reaction-torque sum of the pair
to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import RobotCommand, RobotResponse
from .plant import (
    PlantParams,
    PlantState,
    PlantStepInfo,
    gravity_torque,
    mass_matrix,
    plant_step,
)


@dataclass(frozen=True)
class ControllerGains:
    """Joint-servo and observer constants.

    kp/kd act in acceleration dimension (scaled by the nominal inertia), kf
    is the dimensionless force-channel gain.  Nominal inertia, friction, and
    gravity models come from the plant parameters; friction_mismatch scales
    the nominal friction to emulate modeling error.
    """

    kp: float = 1600.0
    kd: float = 80.0
    kf: float = 2.0
    g_dob: float = 40.0
    g_rfob: float = 40.0
    nominal_inertia: tuple[float, float] = (0.08, 0.017)
    nominal_viscous: tuple[float, float] = (0.08, 0.05)
    nominal_coulomb: tuple[float, float] = (0.05, 0.03)
    torque_limit: float = 20.0
    friction_mismatch: float = 1.0
    velocity_epsilon: float = 1e-3

    def __post_init__(self):
        if self.kp <= 0 or self.kd <= 0 or self.g_dob <= 0 or self.g_rfob <= 0:
            raise ValueError("kp, kd, and observer cutoffs must be positive")
        if self.kf < 0:
            raise ValueError("kf must be >= 0")
        if any(j <= 0 for j in self.nominal_inertia):
            raise ValueError("nominal inertia must be positive")


def default_gains(params: PlantParams, reference_theta=(1.2, -1.6), **overrides) -> ControllerGains:
    """Gains with the nominal inertia matched to the plant at a task pose."""
    m11, _, m22 = mass_matrix(reference_theta, params)
    base = dict(
        nominal_inertia=(m11, m22),
        nominal_viscous=params.viscous_friction,
        nominal_coulomb=params.coulomb_friction,
        velocity_epsilon=params.velocity_epsilon,
    )
    base.update(overrides)
    return ControllerGains(**base)


@dataclass
class ObserverState:
    """Low-pass internals and latest estimates of the DOB/RFOB pair."""

    dob_lpf: list[float] = field(default_factory=lambda: [0.0, 0.0])
    rfob_lpf: list[float] = field(default_factory=lambda: [0.0, 0.0])
    tau_dis: tuple[float, ...] = (0.0, 0.0)
    tau_ext: tuple[float, ...] = (0.0, 0.0)


def dob_update(obs: ObserverState, omega, tau_motor, ts: float,
               gains: ControllerGains) -> tuple[float, ...]:
    """Backward-Euler disturbance estimate: everything the motor torque had
    to fight beyond accelerating the nominal inertia."""
    if ts <= 0:
        raise ValueError("ts must be positive")
    g = gains.g_dob
    a = g * ts / (1.0 + g * ts)
    est = []
    for j in range(len(omega)):
        bias = g * gains.nominal_inertia[j] * omega[j]
        u = tau_motor[j] + bias
        y = obs.dob_lpf[j] + a * (u - obs.dob_lpf[j])
        obs.dob_lpf[j] = y
        est.append(y - bias)
    obs.tau_dis = tuple(est)
    return obs.tau_dis


def rfob_update(obs: ObserverState, response: RobotResponse, tau_motor,
                ts: float, gains: ControllerGains,
                nominal_plant: PlantParams) -> tuple[float, ...]:
    """Reaction-torque estimate: the disturbance with the nominal friction
    and gravity removed, published with robot-on-environment sign."""
    if ts <= 0:
        raise ValueError("ts must be positive")
    g = gains.g_rfob
    a = g * ts / (1.0 + g * ts)
    grav = gravity_torque(response.theta, nominal_plant)
    mism = gains.friction_mismatch
    est = []
    for j in range(len(response.omega)):
        w = response.omega[j]
        fric = mism * (gains.nominal_viscous[j] * w
                       + gains.nominal_coulomb[j] * math.tanh(w / gains.velocity_epsilon))
        bias = g * gains.nominal_inertia[j] * w
        u = tau_motor[j] - fric - grav[j] + bias
        y = obs.rfob_lpf[j] + a * (u - obs.rfob_lpf[j])
        obs.rfob_lpf[j] = y
        est.append(y - bias)
    obs.tau_ext = tuple(est)
    return obs.tau_ext


def joint_control(cmd: RobotCommand, res: RobotResponse, obs: ObserverState,
                  gains: ControllerGains) -> tuple[tuple[float, ...], bool]:
    """Position/velocity/force law with disturbance compensation.

    Returns the motor torque clamped to the torque limit and whether any
    joint hit the clamp.
    """
    limit = gains.torque_limit
    out = []
    clamped = False
    for j in range(len(res.theta)):
        tau = (gains.nominal_inertia[j]
               * (gains.kp * (cmd.theta[j] - res.theta[j])
                  + gains.kd * (cmd.omega[j] - res.omega[j]))
               + gains.kf * (cmd.tau[j] - obs.tau_ext[j])
               + obs.tau_dis[j])
        if tau > limit:
            tau = limit
            clamped = True
        elif tau < -limit:
            tau = -limit
            clamped = True
        out.append(tau)
    return tuple(out), clamped


def follower_command_from_leader(leader_state: RobotResponse) -> RobotCommand:
    """Command the follower with the leader's state; the force channel gets
    the negated leader reaction so the pair's reaction sum is servoed to
    zero.  The inference runtime reuses this mapping with predicted leader
    states."""
    return RobotCommand(
        theta=leader_state.theta,
        omega=leader_state.omega,
        tau=tuple(-t for t in leader_state.tau),
    )


def bilateral_refs(leader: RobotResponse, follower: RobotResponse
                   ) -> tuple[RobotCommand, RobotCommand]:
    """Four-channel bilateral references: position channels cross-track,
    force channels are antisymmetric."""
    return follower_command_from_leader(follower), follower_command_from_leader(leader)


class Robot:
    """One plant plus its controller and observers, stepped at a fixed rate.

    Owned by a single control loop; distinct robots are independent.
    """

    def __init__(self, plant_params: PlantParams, gains: ControllerGains,
                 theta0, surface_height: float | None, ts: float):
        self.plant_params = plant_params
        self.gains = gains
        self.ts = ts
        self.state = PlantState(theta=tuple(theta0), omega=(0.0,) * len(theta0),
                                surface_height=surface_height)
        self.obs = ObserverState(
            dob_lpf=[0.0] * len(theta0), rfob_lpf=[0.0] * len(theta0),
            tau_dis=(0.0,) * len(theta0), tau_ext=(0.0,) * len(theta0),
        )
        self.last_info: PlantStepInfo | None = None

    def response(self) -> RobotResponse:
        """Measured state as of the current tick; tau is the latest
        reaction-torque estimate."""
        return RobotResponse(theta=self.state.theta, omega=self.state.omega,
                             tau=self.obs.tau_ext)

    def step(self, cmd: RobotCommand, external_torque=(0.0, 0.0)
             ) -> tuple[PlantStepInfo, bool]:
        """Run one control tick: servo toward cmd, update observers, step
        the plant.  Returns the plant step info and the clamp flag."""
        res = self.response()
        tau_motor, clamped = joint_control(cmd, res, self.obs, self.gains)
        dob_update(self.obs, res.omega, tau_motor, self.ts, self.gains)
        rfob_update(self.obs, res, tau_motor, self.ts, self.gains,
                    self.plant_params)
        self.state, info = plant_step(self.state, tau_motor, self.ts,
                                      self.plant_params, external_torque)
        self.last_info = info
        return info, clamped
