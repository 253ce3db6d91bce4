"""Planar 2-link manipulator with penalty contact on a horizontal surface.

The arm lives in the x-z plane (gravity along -z), links are uniform rods,
and the end effector can press on a surface at a configurable height.  All
math runs on plain floats: at two joints that is considerably faster than
vectorizing, and the 500 Hz loops dominate the runtime of every experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .core import SimulationDiverged


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the simulated arm and its contact surface."""

    link_lengths: tuple[float, float] = (0.25, 0.25)
    link_masses: tuple[float, float] = (1.0, 0.8)
    viscous_friction: tuple[float, float] = (0.08, 0.05)   # N*m*s/rad
    coulomb_friction: tuple[float, float] = (0.05, 0.03)   # N*m
    gravity: float = 9.81
    contact_stiffness: float = 5000.0  # N/m
    contact_damping: float = 50.0      # N*s/m
    contact_mu: float = 0.3
    contact_viscous: float = 1.0       # N*s/m
    velocity_epsilon: float = 1e-3     # Coulomb regularization scale

    def __post_init__(self):
        for name in ("link_lengths", "link_masses", "viscous_friction"):
            if any(v <= 0 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be positive")
        if any(v < 0 for v in self.coulomb_friction):
            raise ValueError("coulomb_friction entries must be >= 0")
        if self.contact_stiffness <= 0 or self.contact_damping < 0:
            raise ValueError("contact parameters out of range")


@dataclass
class PlantState:
    theta: tuple[float, float]
    omega: tuple[float, float]
    sim_time: float = 0.0
    surface_height: float | None = None  # None disables contact


class PlantStepInfo(NamedTuple):
    """Per-step observables returned next to the new state.

    tau_contact is the joint torque the surface exerts on the arm;
    tau_friction is the joint friction torque as applied (opposing motion);
    tau_external is their sum plus any externally applied torque, which is
    the ground truth the observers are asked to reconstruct.
    """

    theta: tuple[float, float]
    omega: tuple[float, float]
    tau_contact: tuple[float, float]
    tau_friction: tuple[float, float]
    tau_external: tuple[float, float]
    normal_force: float
    tangent_force: float
    ee_pos: tuple[float, float]
    penetration: float


def forward_kinematics(theta, params: PlantParams) -> tuple[float, float]:
    """End-effector position (x, z) of the 2-link chain rooted at the origin."""
    l1, l2 = params.link_lengths
    t1, t2 = theta[0], theta[1]
    t12 = t1 + t2
    return (l1 * math.cos(t1) + l2 * math.cos(t12),
            l1 * math.sin(t1) + l2 * math.sin(t12))


def jacobian(theta, params: PlantParams):
    """Rows (dx/dtheta, dz/dtheta) of the end-effector Jacobian."""
    l1, l2 = params.link_lengths
    t1, t2 = theta[0], theta[1]
    t12 = t1 + t2
    s1, c1 = math.sin(t1), math.cos(t1)
    s12, c12 = math.sin(t12), math.cos(t12)
    return ((-l1 * s1 - l2 * s12, -l2 * s12),
            (l1 * c1 + l2 * c12, l2 * c12))


def inverse_kinematics(x: float, z: float, params: PlantParams,
                       elbow_up: bool = True) -> tuple[float, float]:
    """Joint angles reaching (x, z); raises ValueError outside the workspace."""
    l1, l2 = params.link_lengths
    r2 = x * x + z * z
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 > 1.0 + 1e-12 or c2 < -1.0 - 1e-12:
        raise ValueError(f"point ({x}, {z}) is outside the workspace")
    c2 = min(1.0, max(-1.0, c2))
    t2 = math.acos(c2)
    if elbow_up:
        t2 = -t2
    t1 = math.atan2(z, x) - math.atan2(l2 * math.sin(t2), l1 + l2 * math.cos(t2))
    return (t1, t2)


def mass_matrix(theta, params: PlantParams):
    l1, l2 = params.link_lengths
    m1, m2 = params.link_masses
    lc1, lc2 = 0.5 * l1, 0.5 * l2
    i1 = m1 * l1 * l1 / 12.0
    i2 = m2 * l2 * l2 / 12.0
    c2 = math.cos(theta[1])
    m11 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2)
    m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2)
    m22 = i2 + m2 * lc2 * lc2
    return m11, m12, m22


def gravity_torque(theta, params: PlantParams) -> tuple[float, float]:
    """Joint torque needed to hold the arm against gravity (dU/dtheta)."""
    l1, l2 = params.link_lengths
    m1, m2 = params.link_masses
    lc1, lc2 = 0.5 * l1, 0.5 * l2
    g = params.gravity
    c1 = math.cos(theta[0])
    c12 = math.cos(theta[0] + theta[1])
    g1 = g * ((m1 * lc1 + m2 * l1) * c1 + m2 * lc2 * c12)
    g2 = g * m2 * lc2 * c12
    return (g1, g2)


def friction_torque(omega, params: PlantParams) -> tuple[float, float]:
    """Joint friction as applied to the arm (opposes motion)."""
    d1, d2 = params.viscous_friction
    c1, c2 = params.coulomb_friction
    eps = params.velocity_epsilon
    return (-(d1 * omega[0] + c1 * math.tanh(omega[0] / eps)),
            -(d2 * omega[1] + c2 * math.tanh(omega[1] / eps)))


def contact_wrench(state: PlantState, params: PlantParams) -> tuple[float, float]:
    """(normal, tangential) surface force on the end effector.

    Zero above the surface; below it the normal force is a damped spring
    clamped to push only, and the tangential force combines regularized
    Coulomb and viscous sliding friction.
    """
    if state.surface_height is None:
        return (0.0, 0.0)
    x, z = forward_kinematics(state.theta, params)
    if z > state.surface_height:
        return (0.0, 0.0)
    jac = jacobian(state.theta, params)
    xdot = jac[0][0] * state.omega[0] + jac[0][1] * state.omega[1]
    zdot = jac[1][0] * state.omega[0] + jac[1][1] * state.omega[1]
    penetration = state.surface_height - z
    normal = params.contact_stiffness * penetration + params.contact_damping * max(0.0, -zdot)
    normal = max(0.0, normal)
    tangential = -(params.contact_mu * normal * math.tanh(xdot / params.velocity_epsilon)
                   + params.contact_viscous * xdot)
    return (normal, tangential)


def mechanical_energy(state: PlantState, params: PlantParams) -> float:
    """Kinetic plus gravitational potential energy (zero reference at base)."""
    m11, m12, m22 = mass_matrix(state.theta, params)
    w1, w2 = state.omega
    kinetic = 0.5 * (m11 * w1 * w1 + 2.0 * m12 * w1 * w2 + m22 * w2 * w2)
    l1, l2 = params.link_lengths
    m1, m2 = params.link_masses
    s1 = math.sin(state.theta[0])
    s12 = math.sin(state.theta[0] + state.theta[1])
    potential = params.gravity * (m1 * 0.5 * l1 * s1 + m2 * (l1 * s1 + 0.5 * l2 * s12))
    return kinetic + potential


def plant_step(
    state: PlantState,
    tau_input: tuple[float, float],
    ts: float,
    params: PlantParams,
    external_torque: tuple[float, float] = (0.0, 0.0),
) -> tuple[PlantState, PlantStepInfo]:
    """Advance the arm one fixed step with semi-implicit Euler.

    tau_input is the motor torque; external_torque injects additional joint
    torque (the teaching operator's hand).  Deterministic for identical
    arguments.  Raises SimulationDiverged if the state leaves the finite
    range.
    """
    if ts <= 0:
        raise ValueError("ts must be positive")
    t1, t2 = state.theta
    w1, w2 = state.omega

    m11, m12, m22 = mass_matrix(state.theta, params)
    g1, g2 = gravity_torque(state.theta, params)
    fr1, fr2 = friction_torque(state.omega, params)

    # Coriolis/centrifugal vector
    l1 = params.link_lengths[0]
    lc2 = 0.5 * params.link_lengths[1]
    h = params.link_masses[1] * l1 * lc2 * math.sin(t2)
    cor1 = -h * (2.0 * w1 * w2 + w2 * w2)
    cor2 = h * w1 * w1

    normal, tangential = contact_wrench(state, params)
    if normal != 0.0 or tangential != 0.0:
        jac = jacobian(state.theta, params)
        tc1 = jac[0][0] * tangential + jac[1][0] * normal
        tc2 = jac[0][1] * tangential + jac[1][1] * normal
    else:
        tc1 = tc2 = 0.0

    rhs1 = tau_input[0] + external_torque[0] + tc1 + fr1 - cor1 - g1
    rhs2 = tau_input[1] + external_torque[1] + tc2 + fr2 - cor2 - g2
    det = m11 * m22 - m12 * m12
    a1 = (m22 * rhs1 - m12 * rhs2) / det
    a2 = (m11 * rhs2 - m12 * rhs1) / det

    w1n = w1 + a1 * ts
    w2n = w2 + a2 * ts
    t1n = t1 + w1n * ts
    t2n = t2 + w2n * ts
    if not (math.isfinite(t1n) and math.isfinite(t2n)
            and math.isfinite(w1n) and math.isfinite(w2n)):
        raise SimulationDiverged(state.sim_time)

    new_state = replace(state, theta=(t1n, t2n), omega=(w1n, w2n),
                        sim_time=state.sim_time + ts)
    x, z = forward_kinematics(state.theta, params)
    penetration = 0.0
    if state.surface_height is not None and z < state.surface_height:
        penetration = state.surface_height - z
    info = PlantStepInfo(
        theta=(t1n, t2n),
        omega=(w1n, w2n),
        tau_contact=(tc1, tc2),
        tau_friction=(fr1, fr2),
        tau_external=(tc1 + fr1 + external_torque[0], tc2 + fr2 + external_torque[1]),
        normal_force=normal,
        tangent_force=tangential,
        ee_pos=(x, z),
        penetration=penetration,
    )
    return new_state, info
