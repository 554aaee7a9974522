"""Swing-foot references and swing-leg commands.

Vertically the foot follows a half-sine arc in time on top of the terrain
estimate under it; horizontally it blends from the previous foothold to the
live step target.  The swing leg is massless, so its angle is set
kinematically; its free length is driven to the length that puts the foot at
the desired point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .terrain import TerrainProfile

__all__ = [
    "SwingPlan",
    "TerrainEstimate",
    "z_time",
    "blend",
    "swing_x_ref",
    "swing_z_ref",
    "foot_target",
    "swing_commands",
    "SwingCommand",
]

L_MIN, L_MAX = 0.5, 1.2


@dataclass
class SwingPlan:
    """Per-step swing plan; ``u_des`` is rewritten every control tick."""

    z_max: float
    T_S: float
    u_prev: float
    u_des: float
    stance_foot_x: float

    def __post_init__(self):
        if not self.z_max > 0:
            raise ValueError("swing apex height must be positive")


@dataclass(frozen=True)
class TerrainEstimate:
    """What the swing controller believes about the ground.

    ``mode`` is ``smoothed`` (moving average of the noise-free profile),
    ``noise_free`` or ``true``.
    """

    terrain: TerrainProfile
    mode: str = "smoothed"

    def __post_init__(self):
        if self.mode not in ("smoothed", "noise_free", "true"):
            raise ValueError(f"unknown terrain estimate {self.mode!r}")

    def height(self, x: float) -> float:
        t = self.terrain
        if self.mode == "smoothed":
            return t.smoothed_height_at(x)
        if self.mode == "noise_free":
            return t.noise_free_at(x)
        return t.height_at(x)

    def slope(self, x: float) -> float:
        t = self.terrain
        if self.mode == "smoothed":
            return t.smoothed_slope_at(x)
        if self.mode == "noise_free":
            return t.slope_at(x)
        return t.true_slope_at(x)

    def curvature(self, x: float) -> float:
        if self.mode == "smoothed":
            return self.terrain.smoothed_curvature_at(x)
        return 0.0


def z_time(t: float, z_max: float, T_S: float) -> tuple[float, float, float]:
    """Time part of the vertical foot arc and its first two derivatives.

    Past ``T_S`` the foot keeps descending at the strike-time rate.
    """
    w = math.pi / T_S
    if t <= T_S:
        return z_max * math.sin(w * t), z_max * w * math.cos(w * t), -z_max * w * w * math.sin(w * t)
    v = -z_max * w
    return v * (t - T_S), v, 0.0


def blend(t: float, T_S: float) -> tuple[float, float, float]:
    """``c(t) = (1 - cos(pi t / T_S)) / 2`` clamped to 1 after ``T_S``."""
    if t >= T_S:
        return 1.0, 0.0, 0.0
    if t <= 0.0:
        return 0.0, 0.0, (math.pi / T_S) ** 2 / 2
    w = math.pi / T_S
    return 0.5 * (1 - math.cos(w * t)), 0.5 * w * math.sin(w * t), 0.5 * w * w * math.cos(w * t)


def swing_x_ref(plan: SwingPlan, t: float) -> tuple[float, float, float]:
    """Desired horizontal foot position with rates, ``u_des`` treated as constant."""
    c, cd, cdd = blend(t, plan.T_S)
    span = plan.u_des + plan.u_prev
    return plan.stance_foot_x + c * plan.u_des - (1 - c) * plan.u_prev, cd * span, cdd * span


def swing_z_ref(plan: SwingPlan, estimate: TerrainEstimate, x_sw: float, t: float) -> float:
    return z_time(t, plan.z_max, plan.T_S)[0] + estimate.height(x_sw)


def foot_target(plan: SwingPlan, estimate: TerrainEstimate, t: float):
    """Desired foot point ``((x, x', x''), (z, z', z''))``."""
    x, xd, xdd = swing_x_ref(plan, t)
    zt, ztd, ztdd = z_time(t, plan.z_max, plan.T_S)
    h = estimate.height(x)
    hs = estimate.slope(x)
    hc = estimate.curvature(x)
    return (x, xd, xdd), (zt + h, ztd + hs * xd, ztdd + hc * xd * xd + hs * xdd)


@dataclass(frozen=True)
class SwingCommand:
    theta: float
    tau: float
    L_des: float
    clamped: bool
    x_ref: float
    z_ref: float


def swing_commands(
    plan: SwingPlan,
    estimate: TerrainEstimate,
    t: float,
    L: float,
    Ld: float,
    mass: tuple,
    mass_acc: tuple,
    omega: float = 30.0,
    zeta: float = 1.0,
) -> SwingCommand:
    """Leg angle set-point and free-length acceleration for the swing leg.

    ``mass`` is ``(x, z, x', z')``, ``mass_acc`` is ``(x'', z'')``.  The
    length command is the exact second derivative of the geometric target
    length plus critically damped PD feedback, so with zero tracking error it
    is pure feedforward.
    """
    (fx, fxd, fxdd), (fz, fzd, fzdd) = foot_target(plan, estimate, t)
    x, z, xd, zd = mass
    ax, az = mass_acc
    dx, dz = x - fx, z - fz
    dxd, dzd = xd - fxd, zd - fzd
    dxdd, dzdd = ax - fxdd, az - fzdd
    Ldes = math.hypot(dx, dz)
    Ldes_d = (dx * dxd + dz * dzd) / Ldes
    Ldes_dd = (dxd * dxd + dzd * dzd + dx * dxdd + dz * dzdd) / Ldes - Ldes_d * Ldes_d / Ldes
    clamped = False
    if Ldes < L_MIN or Ldes > L_MAX:
        Ldes = min(max(Ldes, L_MIN), L_MAX)
        Ldes_d = Ldes_dd = 0.0
        clamped = True
    tau = Ldes_dd + 2 * zeta * omega * (Ldes_d - Ld) + omega * omega * (Ldes - L)
    # angle so the foot sits under the desired x at the current length
    sin_th = dx / L
    if abs(sin_th) > 0.99:
        sin_th = math.copysign(0.99, sin_th)
        clamped = True
    return SwingCommand(math.asin(sin_th), tau, Ldes, clamped, fx, fz)
