"""Backstepping-barrier vertical control of the aSLIP mass.

The vertical output ``eta = [z - z_d, z' - z_d']`` obeys
``eta' = f_eta + g_eta F_z`` with the net vertical leg force ``F_z`` as a
virtual input, and ``F_z' = f_z + D tau_z`` with the vertical leg-length
acceleration ``tau_z``.  This module builds the pieces that turn that
strict-feedback chain into QP rows:

* a feedback-linearizing force and its Lyapunov certificate,
* the backstepping CLF row (relaxed by ``delta`` in the QP),
* barrier rows keeping stance forces positive and steering the trailing
  leg's force to zero through a shrinking tube in double support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SSP, MassState, ModelParams, WalkPhase, leg_force
from .qp import AffineIneq, QpProblem

__all__ = [
    "CertificateError",
    "BacksteppingCert",
    "make_certificate",
    "lyapunov_solve",
    "ReferenceFilter",
    "OutputState",
    "ClfTerms",
    "DspForceTube",
    "fbl_force",
    "fz_drift",
    "clf_terms",
    "backstepping_closed_form",
    "clf_inequality",
    "cbf_ssp",
    "cbf_dsp",
    "ssp_problem",
    "dsp_problem",
]


class CertificateError(ValueError):
    pass


def lyapunov_solve(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``P A + A^T P = -Q`` for a 2x2 Hurwitz ``A``."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    tr, det = np.trace(A), np.linalg.det(A)
    if not (tr < 0 and det > 0):
        raise CertificateError("A_cl is not Hurwitz")
    (a11, a12), (a21, a22) = A
    # unknowns (p11, p12, p22)
    M = np.array(
        [
            [2 * a11, 2 * a21, 0.0],
            [a12, a11 + a22, a21],
            [0.0, 2 * a12, 2 * a22],
        ]
    )
    rhs = -np.array([Q[0, 0], 0.5 * (Q[0, 1] + Q[1, 0]), Q[1, 1]])
    p11, p12, p22 = np.linalg.solve(M, rhs)
    return np.array([[p11, p12], [p12, p22]])


@dataclass(frozen=True)
class BacksteppingCert:
    """Gains and Lyapunov data for the vertical output.

    ``rate_bound`` is ``lambda_min(Q) / lambda_max(P)``.  ``decay_margin`` is
    ``lambda_min(Q - gamma P)``; it is non-negative exactly when the CLF row
    holds automatically at ``F_delta = 0``.
    """

    Kp: float
    Kd: float
    Q: np.ndarray
    P: np.ndarray
    k: float
    gamma: float
    A_cl: np.ndarray = field(init=False)
    rate_bound: float = field(init=False)
    decay_margin: float = field(init=False)

    def __post_init__(self):
        if not (self.Kp < 0 and self.Kd < 0):
            raise CertificateError("K_IO entries must be negative")
        if not (self.k > 0 and self.gamma > 0):
            raise CertificateError("backstepping gain and CLF rate must be positive")
        A = np.array([[0.0, 1.0], [self.Kp, self.Kd]])
        object.__setattr__(self, "A_cl", A)
        if np.max(np.linalg.eigvals(A).real) >= 0:
            raise CertificateError("A_cl is not Hurwitz")
        Q, P = np.asarray(self.Q, float), np.asarray(self.P, float)
        for name, M in (("Q", Q), ("P", P)):
            if not np.allclose(M, M.T, atol=1e-12) or np.linalg.eigvalsh(M).min() <= 0:
                raise CertificateError(f"{name} must be symmetric positive definite")
        if np.abs(P @ A + A.T @ P + Q).max() > 1e-10 * max(1.0, np.abs(Q).max()):
            raise CertificateError("P does not solve the Lyapunov equation")
        object.__setattr__(self, "rate_bound", float(np.linalg.eigvalsh(Q).min() / np.linalg.eigvalsh(P).max()))
        margin = float(np.linalg.eigvalsh(Q - self.gamma * P).min())
        object.__setattr__(self, "decay_margin", margin)
        if margin < -1e-12:
            raise CertificateError(
                f"gamma={self.gamma} too fast for this certificate: Q - gamma P is indefinite"
            )

    def residual(self) -> float:
        return float(np.abs(self.P @ self.A_cl + self.A_cl.T @ self.P + self.Q).max())


def make_certificate(
    Kp: float = -400.0,
    Kd: float = -40.0,
    gamma: float = 10.0,
    k: float = 10.0,
    Q: np.ndarray | None = None,
) -> BacksteppingCert:
    """Build a certificate, designing ``Q`` when none is given.

    Without ``Q``, ``P`` solves the Lyapunov equation of the shifted matrix
    ``A_cl + gamma/2 I`` with identity right-hand side, and then
    ``Q = I + gamma P``, so ``Q - gamma P = I``.  That needs every pole of
    ``A_cl`` faster than ``gamma / 2``.
    """
    A = np.array([[0.0, 1.0], [Kp, Kd]])
    if Q is None:
        P = lyapunov_solve(A + 0.5 * gamma * np.eye(2), np.eye(2))
        Q = -(P @ A + A.T @ P)
        Q = 0.5 * (Q + Q.T)
    else:
        P = lyapunov_solve(A, Q)
    return BacksteppingCert(Kp, Kd, np.asarray(Q, float), P, k, gamma)


@dataclass(frozen=True)
class ReferenceFilter:
    """Critically damped second-order filter producing a smooth ``z_d``.

    Its state ``(z_d, z_d')`` is integrated alongside the mechanics.  Given
    the raw target and its rate, it yields the acceleration and jerk
    analytically.
    """

    omega: float = 20.0

    def accel(self, zd: float, zd_dot: float, target: float) -> float:
        w = self.omega
        return w * w * (target - zd) - 2.0 * w * zd_dot

    def jerk(self, zd_dot: float, zd_ddot: float, target_rate: float) -> float:
        w = self.omega
        return w * w * (target_rate - zd_dot) - 2.0 * w * zd_ddot


@dataclass(frozen=True)
class OutputState:
    eta1: float
    eta2: float
    zd: float
    zd_dot: float
    zd_ddot: float
    zd_dddot: float = 0.0


def desired_height(terrain, x: float, xd: float, z0: float, source: str = "smoothed") -> tuple[float, float]:
    """Raw height target ``z0 + terrain estimate`` under the mass, and its rate."""
    if source == "smoothed":
        return z0 + terrain.smoothed_height_at(x), terrain.smoothed_slope_at(x) * xd
    if source == "noise_free":
        return z0 + terrain.noise_free_at(x), terrain.slope_at(x) * xd
    raise ValueError(f"unknown height source {source!r}")


def fbl_force(out: OutputState, cert: BacksteppingCert, params: ModelParams = ModelParams()) -> float:
    """Vertical force that makes ``eta' = A_cl eta``."""
    return params.m * (params.g + out.zd_ddot + cert.Kp * out.eta1 + cert.Kd * out.eta2)


def _leg_drift(F, sd, rdd, theta, thetad, K, D):
    # d/dt (F cos theta) with the tau contribution removed
    c = math.cos(theta)
    return c * (K * sd - D * rdd) - F * math.sin(theta) * thetad


def fz_drift(phase: WalkPhase, mass: MassState, params: ModelParams = ModelParams()) -> tuple[float, float]:
    """``(f_z, g_z)`` with ``F_z' = f_z + g_z tau_z``.

    Uses ``s'' = tau - r''`` and ``F_z = sum F_i cos theta_i``; ``g_z = D``.
    """
    legs = (phase.stance,) if isinstance(phase, SSP) else (phase.s1, phase.s2)
    ax, az = 0.0, -params.g
    forces = []
    for leg in legs:
        F = leg_force(leg, params)
        ux, uz = math.sin(leg.theta), math.cos(leg.theta)
        ax += F * ux / params.m
        az += F * uz / params.m
        forces.append((F, ux, uz))
    v2 = mass.xd**2 + mass.zd**2
    f = 0.0
    for leg, (F, ux, uz) in zip(legs, forces):
        rdd = ux * ax + uz * az + (v2 - leg.rd**2) / leg.r
        f += _leg_drift(F, leg.sd, rdd, leg.theta, leg.thetad, params.K, params.D)
    return f, params.D


@dataclass(frozen=True)
class ClfTerms:
    """Everything the CLF row and the closed-form controller need at one instant."""

    F_z: float
    F_bar: float
    F_bar_dot: float
    F_delta: float
    V_eta: float
    Vdot_eta: float  # along the feedback-linearized flow, = -eta^T Q eta
    dV_g: float  # dV_eta/deta . g_eta
    V: float


def clf_terms(out: OutputState, F_z: float, cert: BacksteppingCert, params: ModelParams = ModelParams()) -> ClfTerms:
    m, g = params.m, params.g
    e1, e2 = out.eta1, out.eta2
    F_bar = m * (g + out.zd_ddot + cert.Kp * e1 + cert.Kd * e2)
    eta2_dot = F_z / m - g - out.zd_ddot
    F_bar_dot = m * (out.zd_dddot + cert.Kp * e2 + cert.Kd * eta2_dot)
    P, Q = cert.P, cert.Q
    p11, p12, p22 = P[0, 0], P[0, 1], P[1, 1]
    V_eta = p11 * e1 * e1 + 2 * p12 * e1 * e2 + p22 * e2 * e2
    Vdot_eta = -(Q[0, 0] * e1 * e1 + 2 * Q[0, 1] * e1 * e2 + Q[1, 1] * e2 * e2)
    dV_g = 2.0 * (p12 * e1 + p22 * e2) / m
    F_delta = F_z - F_bar
    return ClfTerms(F_z, F_bar, F_bar_dot, F_delta, V_eta, Vdot_eta, dV_g, V_eta + 0.5 * F_delta * F_delta)


def backstepping_closed_form(terms: ClfTerms, f_z: float, cert: BacksteppingCert, g_z: float) -> float:
    """``tau_z`` that gives ``F_delta' = -dV_g - k F_delta``."""
    if g_z == 0:
        raise ZeroDivisionError("g_z must be non-zero")
    return (-terms.dV_g - cert.k * terms.F_delta + terms.F_bar_dot - f_z) / g_z


def clf_inequality(terms: ClfTerms, f_z: float, cert: BacksteppingCert, g_z: float) -> AffineIneq:
    """Row ``a tau_z <= b`` enforcing ``V' <= -gamma V``."""
    Fd = terms.F_delta
    a = Fd * g_z
    b = -terms.Vdot_eta - terms.dV_g * Fd - Fd * (f_z - terms.F_bar_dot) - cert.gamma * terms.V
    return AffineIneq((a,), b, "CLF")


def cbf_ssp(F_z: float, f_z: float, theta: float, g_z: float, alpha: float) -> AffineIneq:
    """Row on ``tau_s`` keeping ``h_s = F_z >= 0``: ``-g_z cos(theta) tau_s <= f_z + alpha h_s``."""
    return AffineIneq((-g_z * math.cos(theta),), f_z + alpha * F_z, "CBF_s")


@dataclass(frozen=True)
class DspForceTube:
    """Shrinking admissible band for the trailing-leg force.

    Past ``T_D`` the desired force is held at zero, leaving ``[-dF, dF]``.
    """

    F0: float
    T_D: float
    c: float = 0.5
    dF: float = 20.0
    alpha: float = 500.0

    def __post_init__(self):
        if not (0 < self.c < 1):
            raise ValueError("tube relaxation c must lie in (0, 1)")
        if not (self.dF > 0 and self.T_D > 0 and self.F0 >= 0):
            raise ValueError("need dF > 0, T_D > 0, F0 >= 0")

    def desired(self, t: float) -> float:
        return self.F0 * max(1.0 - t / self.T_D, 0.0)

    def desired_rate(self, t: float) -> float:
        return -self.F0 / self.T_D if t < self.T_D else 0.0

    def bounds(self, t: float) -> tuple[float, float]:
        Fd = self.desired(t)
        return (1 - self.c) * Fd - self.dF, (1 + self.c) * Fd + self.dF

    def barrier(self, F: float, t: float) -> float:
        Fd = self.desired(t)
        return (self.c * Fd + self.dF) ** 2 - (F - Fd) ** 2


def cbf_dsp(
    tube: DspForceTube,
    t: float,
    F1: float,
    f1: float,
    F2: float,
    f2: float,
    D: float,
    alpha: float,
) -> tuple[AffineIneq, AffineIneq]:
    """Rows on ``tau_s1`` (tube) and ``tau_s2`` (positivity).

    ``f1``, ``f2`` are the leg-force drifts, ``F_i' = f_i + D tau_i``.
    """
    Fd = tube.desired(t)
    Fd_dot = tube.desired_rate(t)
    w = tube.c * Fd + tube.dF
    err = F1 - Fd
    h1 = w * w - err * err
    # h1' = 2 w c Fd' - 2 err (f1 + D tau1 - Fd') >= -alpha h1
    row1 = AffineIneq((2.0 * err * D,), alpha * h1 + 2.0 * w * tube.c * Fd_dot - 2.0 * err * (f1 - Fd_dot), "CBF_s1")
    row2 = AffineIneq((-D,), f2 + alpha * F2, "CBF_s2")
    return row1, row2


def ssp_problem(clf: AffineIneq, cbf: AffineIneq, theta: float, delta_weight: float = 1.0) -> QpProblem:
    """QP over ``(tau_s, delta)``; the CLF row carries ``-delta``."""
    c = math.cos(theta)
    rows = (
        AffineIneq((clf.a[0] * c, -1.0), clf.b, "CLF"),
        AffineIneq((cbf.a[0], 0.0), cbf.b, cbf.label),
    )
    return QpProblem((1.0, delta_weight), rows)


def dsp_problem(
    clf: AffineIneq,
    cbf1: AffineIneq,
    cbf2: AffineIneq,
    theta1: float,
    theta2: float,
    delta_weight: float = 1.0,
) -> QpProblem:
    """QP over ``(tau_s1, tau_s2, delta)``."""
    a = clf.a[0]
    rows = (
        AffineIneq((a * math.cos(theta1), a * math.cos(theta2), -1.0), clf.b, "CLF"),
        AffineIneq((cbf1.a[0], 0.0, 0.0), cbf1.b, cbf1.label),
        AffineIneq((0.0, cbf2.a[0], 0.0), cbf2.b, cbf2.label),
    )
    return QpProblem((1.0, 1.0, delta_weight), rows)
