"""aSLIP equations of motion, guards and phase transitions.

The point mass is integrated in Cartesian coordinates.  Each leg carries an
actuated free length ``L`` with ``L'' = tau``; for a stance leg the
compressed length ``r`` and angle ``theta`` follow from the pinned foot, and
the spring deformation is ``s = L - r``.  Polar quantities are derived, never
integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

from .terrain import TerrainProfile

__all__ = [
    "ModelParams",
    "MassState",
    "LegState",
    "SSP",
    "DSP",
    "WalkPhase",
    "StateDerivative",
    "SingularConfigurationError",
    "leg_force",
    "stance_terms",
    "polar_accelerations",
    "continuous_dynamics",
    "guard_touchdown",
    "touchdown_armed",
    "guard_liftoff",
    "transition_td",
    "transition_lo",
    "total_energy",
]


class SingularConfigurationError(ValueError):
    """Raised when a stance leg collapses to zero length."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the aSLIP (Cassie-like defaults)."""

    m: float = 33.0  # kg
    K: float = 8000.0  # N/m
    D: float = 100.0  # N s/m
    g: float = 9.81  # m/s^2
    tau_max: float = 200.0  # m/s^2, actuator sanity bound


@dataclass(frozen=True)
class MassState:
    x: float
    z: float
    xd: float
    zd: float


@dataclass(frozen=True)
class LegState:
    """One leg.  ``theta`` is measured from vertical, positive when the mass is ahead of the foot."""

    foot_x: float
    foot_z: float
    L: float
    Ld: float
    s: float
    sd: float
    r: float
    rd: float
    theta: float
    thetad: float

    @classmethod
    def stance(cls, mass: MassState, foot_x: float, foot_z: float, L: float, Ld: float) -> "LegState":
        dx, dz = mass.x - foot_x, mass.z - foot_z
        r = math.hypot(dx, dz)
        if r <= 0.0:
            raise SingularConfigurationError("stance leg length is zero")
        rd = (dx * mass.xd + dz * mass.zd) / r
        theta = math.atan2(dx, dz)
        thetad = (dz * mass.xd - dx * mass.zd) / (r * r)
        return cls(foot_x, foot_z, L, Ld, L - r, Ld - rd, r, rd, theta, thetad)

    @classmethod
    def swing(cls, mass: MassState, L: float, Ld: float, theta: float) -> "LegState":
        """Massless swing leg with a relaxed spring; the foot hangs at ``L`` along ``theta``."""
        fx = mass.x - L * math.sin(theta)
        fz = mass.z - L * math.cos(theta)
        return cls(fx, fz, L, Ld, 0.0, 0.0, L, Ld, theta, 0.0)


@dataclass(frozen=True)
class SSP:
    stance: LegState
    swing: LegState
    t_phase: float = 0.0


@dataclass(frozen=True)
class DSP:
    """Double support; ``s1`` is the leg scheduled to lift off."""

    s1: LegState
    s2: LegState
    F0_s1: float
    t_phase: float = 0.0

    def __post_init__(self):
        if self.F0_s1 < 0:
            raise ValueError("lift-off leg must start DSP with a non-negative force")


WalkPhase = Union[SSP, DSP]


@dataclass(frozen=True)
class StateDerivative:
    xd: float
    zd: float
    xdd: float
    zdd: float
    # per stance leg, in phase order (stance) or (s1, s2)
    Ld: tuple
    Ldd: tuple
    sd: tuple
    sdd: tuple


def leg_force(leg: LegState, params: ModelParams = ModelParams()) -> float:
    """Spring-damper force along the leg, ``K s + D s'``."""
    return params.K * leg.s + params.D * leg.sd


def stance_terms(x, z, xd, zd, fx, fz, L, Ld, K, D):
    """Fast scalar kernel: ``(F, ux, uz, r, rd)`` for a leg pinned at ``(fx, fz)``.

    ``(ux, uz)`` is the unit vector from foot to mass.
    """
    dx = x - fx
    dz = z - fz
    r = math.sqrt(dx * dx + dz * dz)
    if r <= 0.0:
        raise SingularConfigurationError("stance leg length is zero")
    ux = dx / r
    uz = dz / r
    rd = ux * xd + uz * zd
    return K * (L - r) + D * (Ld - rd), ux, uz, r, rd


def polar_accelerations(leg: LegState, params: ModelParams = ModelParams()) -> tuple[float, float]:
    """``(r'', theta'')`` of a single stance leg from the polar equations of motion."""
    F = leg_force(leg, params)
    rdd = F / params.m - params.g * math.cos(leg.theta) + leg.r * leg.thetad**2
    thdd = (-2.0 * leg.thetad * leg.rd + params.g * math.sin(leg.theta)) / leg.r
    return rdd, thdd


def _stance_legs(phase: WalkPhase) -> tuple[LegState, ...]:
    if isinstance(phase, SSP):
        return (phase.stance,)
    return (phase.s1, phase.s2)


def continuous_dynamics(
    phase: WalkPhase,
    mass: MassState,
    tau: Sequence[float],
    params: ModelParams = ModelParams(),
) -> StateDerivative:
    """Time derivative of the mass and stance-leg states.

    ``tau`` holds one leg-length acceleration per stance leg (1 in SSP, 2 in
    DSP).  Stance legs in ``phase`` must be consistent with ``mass``.
    """
    legs = _stance_legs(phase)
    if len(tau) != len(legs):
        raise ValueError(f"expected {len(legs)} inputs for {type(phase).__name__}, got {len(tau)}")
    ax, az = 0.0, -params.g
    terms = []
    for leg in legs:
        F, ux, uz, r, rd = stance_terms(
            mass.x, mass.z, mass.xd, mass.zd, leg.foot_x, leg.foot_z, leg.L, leg.Ld, params.K, params.D
        )
        ax += F * ux / params.m
        az += F * uz / params.m
        terms.append((ux, uz, r, rd))
    v2 = mass.xd * mass.xd + mass.zd * mass.zd
    sdd = []
    for (ux, uz, r, rd), t in zip(terms, tau):
        rdd = ux * ax + uz * az + (v2 - rd * rd) / r
        sdd.append(t - rdd)
    return StateDerivative(
        mass.xd,
        mass.zd,
        ax,
        az,
        tuple(leg.Ld for leg in legs),
        tuple(float(t) for t in tau),
        tuple(leg.sd for leg in legs),
        tuple(sdd),
    )


def touchdown_armed(t_phase: float, T_S: float) -> bool:
    """Strikes are ignored during the lift-off half of the swing arc."""
    return t_phase > 0.5 * T_S


def guard_touchdown(phase: SSP, terrain: TerrainProfile) -> float:
    """Swing-foot clearance above the true ground; touchdown on a down-crossing of zero."""
    foot = phase.swing
    return foot.foot_z - terrain.height_at(foot.foot_x)


def guard_liftoff(phase: DSP, params: ModelParams = ModelParams()) -> float:
    """Force on the trailing leg; lift-off on a down-crossing of zero."""
    return leg_force(phase.s1, params)


def transition_td(phase: SSP, mass: MassState, params: ModelParams = ModelParams()) -> DSP:
    """Swing foot strikes: pin it where it is and relabel the legs.

    Mass state is continuous.  The new stance leg keeps its free length and
    rate, so ``s = L - r`` and ``s' = L' - r'`` follow from geometry.  The old
    stance leg becomes ``s1`` and its current force seeds the lift-off tube.
    A negative force on the new leg is left to the caller to flag.
    """
    sw = phase.swing
    new = LegState.stance(mass, sw.foot_x, sw.foot_z, sw.L, sw.Ld)
    old = LegState.stance(mass, phase.stance.foot_x, phase.stance.foot_z, phase.stance.L, phase.stance.Ld)
    F0 = max(leg_force(old, params), 0.0)
    return DSP(s1=old, s2=new, F0_s1=F0, t_phase=0.0)


def transition_lo(phase: DSP, mass: MassState) -> SSP:
    """Trailing leg lifts off; its spring relaxes instantly (massless leg)."""
    s1 = phase.s1
    swing = LegState.swing(mass, s1.L, s1.Ld, s1.theta)
    return SSP(stance=phase.s2, swing=swing, t_phase=0.0)


def total_energy(phase: WalkPhase, mass: MassState, params: ModelParams = ModelParams()) -> float:
    """Kinetic + gravitational + spring potential energy."""
    e = 0.5 * params.m * (mass.xd**2 + mass.zd**2) + params.m * params.g * mass.z
    for leg in _stance_legs(phase):
        e += 0.5 * params.K * leg.s**2
    return e


def with_time(phase: WalkPhase, t_phase: float) -> WalkPhase:
    return replace(phase, t_phase=t_phase)
