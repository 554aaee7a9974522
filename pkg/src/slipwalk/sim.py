"""Closed-loop aSLIP walking simulation.

One run starts from a static double-support stance and executes the walking
loop: H-LIP stepping and swing-foot tracking plus the single-support BBF-QP
in SSP, the double-support BBF-QP in DSP.  Control is evaluated on a fixed
1 kHz grid and additionally right after every phase transition; inputs are
held between evaluations while fixed-step RK4 advances the mechanics.
Touchdown and lift-off crossings are refined by bisection.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import hlip
from .dynamics import ModelParams, stance_terms
from .qp import AffineIneq, QpInfeasibleError, QpProblem, solve
from .swing import SwingPlan, TerrainEstimate, swing_commands
from .terrain import TerrainProfile, TerrainRangeError
from .vertical_ctrl import (
    DspForceTube,
    OutputState,
    ReferenceFilter,
    _leg_drift,
    backstepping_closed_form,
    cbf_dsp,
    cbf_ssp,
    clf_inequality,
    clf_terms,
    make_certificate,
)

log = logging.getLogger(__name__)

__all__ = [
    "ScenarioConfig",
    "TrajectoryLog",
    "StepSample",
    "run",
    "step_extractor",
    "STATUS_CODES",
    "TICK_COLUMNS",
    "STEP_COLUMNS",
    "EVENT_COLUMNS",
]

STATUS_CODES = {"ok": 0, "fall": 2, "kinematic": 3, "qp_infeasible": 4}

R_MIN, R_MAX = 0.5, 1.2
EVENT_DT = 1e-8
EVENT_TOL = 1e-7
# a foot reaching a stair nosing this far below the upper tread lands on the
# corner; deeper means it hit the riser
EDGE_LANDING_TOL = 5e-3


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    terrain: TerrainProfile = field(default_factory=TerrainProfile)
    v_star: float = 0.5
    z0: float = 1.0
    T_S: float = 0.4
    T_D: float = 0.1
    # vertical control
    alpha: float = 500.0
    gamma: float = 10.0
    k: float = 10.0
    c: float = 0.5
    dF: float = 20.0
    Kp: float = -400.0
    Kd: float = -40.0
    Q: tuple | None = None  # ((q11, q12), (q12, q22)); None designs Q from gamma
    delta_weight: float = 1.0
    vertical_mode: str = "qp"  # or "closed_form"
    ref_omega: float = 20.0
    zd_source: str = "smoothed"
    # swing
    z_max_sw: float = 0.12
    swing_omega: float = 30.0
    swing_terrain: str = "smoothed"
    # stepping
    velocity_convention: str = "pre_impact"
    initial_liftoff: str = "front"
    # model
    m: float = 33.0
    K: float = 8000.0
    D: float = 100.0
    g: float = 9.81
    tau_max: float = 200.0
    # simulation
    dt_physics: float = 2.5e-4
    dt_control: float = 1e-3
    duration: float = 20.0
    seed: int | None = None  # overrides the terrain noise seed when set
    fall_margin: float = 0.2
    log_ticks: bool = True

    def __post_init__(self):
        ratio = self.dt_control / self.dt_physics
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_physics must divide dt_control")
        if self.vertical_mode not in ("qp", "closed_form"):
            raise ValueError(f"unknown vertical_mode {self.vertical_mode!r}")
        if self.initial_liftoff not in ("front", "rear"):
            raise ValueError("initial_liftoff must be 'front' or 'rear'")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.m, self.K, self.D, self.g, self.tau_max)

    def effective_terrain(self) -> TerrainProfile:
        if self.seed is None or self.seed == self.terrain.noise_seed:
            return self.terrain
        return replace(self.terrain, noise_seed=self.seed)

    def scalar_items(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "terrain":
                continue
            out[f.name] = getattr(self, f.name)
        return out


TICK_COLUMNS = (
    "t", "phase", "step", "event", "x", "z", "xd", "zd",
    "zd_ref", "zd_dot_ref", "eta1", "eta2", "V", "F_delta", "delta",
    "F_z", "F_st", "F_s1", "F_s2", "Fd_s1", "tube_lo", "tube_hi",
    "h_s", "h_s1", "h_s2", "tau_a", "tau_b", "tau_sw", "theta_sw",
    "u_cmd", "foot_x_sw", "foot_z_sw", "x_sw_ref", "z_sw_ref", "t_phase",
    "clf_cf_margin", "saturated", "swing_clamped",
)  # fmt: skip

EVENT_COLUMNS = ("t", "kind", "guard")
STEP_COLUMNS = (
    "k", "t", "ssp_duration", "p", "pd", "x", "z", "u_cmd", "u_real",
    "stance_x", "foot_x", "foot_z", "F_td", "failed",
)  # fmt: skip


@dataclass
class TrajectoryLog:
    name: str
    status: str
    message: str
    duration: float
    tick_rows: list = field(default_factory=list)
    step_rows: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (t, kind, guard value)
    meta: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return STATUS_CODES[self.status]

    def ticks(self, name: str) -> np.ndarray:
        i = TICK_COLUMNS.index(name)
        return np.array([r[i] for r in self.tick_rows], dtype=float)

    def steps(self, name: str) -> np.ndarray:
        i = STEP_COLUMNS.index(name)
        return np.array([r[i] for r in self.step_rows], dtype=float)

    def write_csv(self, out_dir: str | os.PathLike) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tick_path, step_path = out / "ticks.csv", out / "steps.csv"
        _write_rows(tick_path, TICK_COLUMNS, self.tick_rows)
        _write_rows(step_path, STEP_COLUMNS, self.step_rows)
        with open(out / "events.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EVENT_COLUMNS)
            for t, kind, g in self.events:
                w.writerow((_fmt(t), kind, _fmt(g)))
        with open(out / "run.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("key", "value"))
            w.writerow(("name", self.name))
            w.writerow(("status", self.status))
            w.writerow(("exit_code", self.exit_code))
            w.writerow(("message", self.message))
            w.writerow(("duration", _fmt(self.duration)))
            for k, v in sorted(self.meta.items()):
                w.writerow((k, _fmt(v) if isinstance(v, float) else v))
        return tick_path, step_path

    @classmethod
    def read_csv(cls, run_dir: str | os.PathLike) -> "TrajectoryLog":
        d = Path(run_dir)
        meta = {}
        with open(d / "run.csv", newline="") as fh:
            rd = csv.reader(fh)
            next(rd)
            for k, v in rd:
                meta[k] = v
        ticks = _read_rows(d / "ticks.csv", TICK_COLUMNS) if (d / "ticks.csv").exists() else []
        steps = _read_rows(d / "steps.csv", STEP_COLUMNS)
        events = []
        if (d / "events.csv").exists():
            with open(d / "events.csv", newline="") as fh:
                rd = csv.reader(fh)
                next(rd)
                events = [(float(t), kind, float(g)) for t, kind, g in rd]
        name = meta.pop("name")
        status = meta.pop("status")
        message = meta.pop("message")
        duration = float(meta.pop("duration"))
        meta.pop("exit_code", None)
        return cls(name, status, message, duration, ticks, steps, events, meta)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_rows(path: Path, header: tuple, rows: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])


def _read_rows(path: Path, header: tuple) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        got = tuple(next(rd))
        if got != header:
            raise ValueError(f"{path}: unexpected header {got}")
        return [tuple(float(v) for v in row) for row in rd]


def _solve_bbf(clf_a: tuple, clf_b: float, cbf_rows: tuple, delta_weight: float) -> tuple:
    """BBF-QP over ``(tau..., delta)``; returns the torques followed by ``delta``.

    A finite ``delta_weight`` solves ``min |tau|^2 + w delta^2`` with the CLF
    row relaxed by ``delta``.  ``inf`` enforces the CLF row exactly and only
    relaxes it (with unit weight) when it conflicts with the barrier rows.
    """
    (a,) = clf_a
    n = len(a)
    if math.isinf(delta_weight):
        try:
            sol = solve(QpProblem((1.0,) * n, (AffineIneq(a, clf_b, "CLF"),) + cbf_rows))
            return sol.x + (0.0,)
        except QpInfeasibleError:
            delta_weight = 1.0
    rows = (AffineIneq(a + (-1.0,), clf_b, "CLF"),) + tuple(
        AffineIneq(r.a + (0.0,), r.b, r.label) for r in cbf_rows
    )
    return solve(QpProblem((1.0,) * n + (delta_weight,), rows)).x


class _Abort(Exception):
    def __init__(self, status: str, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f([a + 0.5 * h * b for a, b in zip(y, k1)])
    k3 = f([a + 0.5 * h * b for a, b in zip(y, k2)])
    k4 = f([a + h * b for a, b in zip(y, k3)])
    h6 = h / 6.0
    return [a + h6 * (b + 2.0 * (c + d) + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]


def _linear(x0: float, h0: float, k: float):
    def f(x):
        return h0 + k * (x - x0)

    return f


class _Walker:
    """Mutable simulation state for one run.

    State vector ``y = [x, z, x', z', L0, L0', L1, L1', zr, zr']`` where the
    last pair is the height reference filter.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.p = cfg.params
        self.terrain = cfg.effective_terrain()
        self.model = hlip.s2s_matrices(cfg.T_S, cfg.T_D, cfg.z0, cfg.g)
        self.gait = hlip.make_gait(self.model, cfg.v_star, cfg.velocity_convention)
        Q = None if cfg.Q is None else np.asarray(cfg.Q, float)
        self.cert = make_certificate(cfg.Kp, cfg.Kd, cfg.gamma, cfg.k, Q)
        self.ref = ReferenceFilter(cfg.ref_omega)
        self.estimate = TerrainEstimate(self.terrain, cfg.swing_terrain)
        if cfg.zd_source == "smoothed":
            self._target = self.terrain.smoothed_height_at
            self._target_slope = self.terrain.smoothed_slope_at
        elif cfg.zd_source == "noise_free":
            self._target = self.terrain.noise_free_at
            self._target_slope = self.terrain.slope_at
        else:
            raise ValueError(f"unknown zd_source {cfg.zd_source!r}")
        P = self.cert.P
        self._P = (P[0, 0], P[0, 1], P[1, 1])

        self.ticks: list = []
        self.steps: list = []
        self.events: list = []
        self.n_saturated = 0
        self.n_swing_clamped = 0
        self.failed_steps = 0
        self._init_state()

    # -- setup ----------------------------------------------------------

    def _init_state(self):
        cfg, p, ter = self.cfg, self.p, self.terrain
        u = self.gait.u_star
        xs = (-0.5 * u, 0.5 * u)  # rear, front
        fz = [ter.height_at(x) for x in xs]
        x0 = 0.0
        z0 = cfg.z0 + self._target(x0)
        # static force split: F_r u_r + F_f u_f = (0, m g)
        us = []
        rs = []
        for fx, fzz in zip(xs, fz):
            dx, dz = x0 - fx, z0 - fzz
            r = math.hypot(dx, dz)
            rs.append(r)
            us.append((dx / r, dz / r))
        (a, b), (c, d) = us
        det = a * d - b * c
        if abs(det) < 1e-12:
            F = (0.5 * p.m * p.g / b, 0.5 * p.m * p.g / d)
        else:
            # solve [[a, c], [b, d]] [Fr, Ff] = [0, m g]
            F = ((-c * p.m * p.g) / det, (a * p.m * p.g) / det)
        L = [rs[i] + F[i] / p.K for i in range(2)]
        self.y = [x0, z0, 0.0, 0.0, L[0], 0.0, L[1], 0.0, z0, 0.0]
        self.feet = [xs[0], fz[0], xs[1], fz[1]]
        s1 = 1 if cfg.initial_liftoff == "front" else 0
        self.phase = "DSP"
        self.s1, self.s2 = s1, 1 - s1
        self.F0 = max(F[s1], 0.0)
        self.t = 0.0
        self.t_phase0 = 0.0
        self.k = 0
        self.theta_sw = 0.0
        self.tau = [0.0, 0.0]
        self.u_cmd = self.gait.u_star
        self.plan: SwingPlan | None = None
        self.t_ssp0 = 0.0

    # -- dynamics ---------------------------------------------------------

    def _rhs_factory(self):
        p = self.p
        m, K, D, g = p.m, p.K, p.D, p.g
        w = self.ref.omega
        w2 = w * w
        z0 = self.cfg.z0
        piece = None
        if self.cfg.zd_source == "smoothed":
            # the mass moves well under 5 cm per control interval
            x = self.y[0]
            piece = self.terrain.linear_piece(x - 0.05, x + 0.05)
        target = self._target if piece is None else _linear(*piece)

        tau0, tau1 = self.tau
        f = self.feet
        if self.phase == "SSP":
            i = self.stance
            fx, fz = f[2 * i], f[2 * i + 1]
            Li = 4 + 2 * i
            sqrt = math.sqrt

            def rhs(y):
                x, z, xd, zd = y[0], y[1], y[2], y[3]
                dx, dz = x - fx, z - fz
                r = sqrt(dx * dx + dz * dz)
                ux, uz = dx / r, dz / r
                F = (K * (y[Li] - r) + D * (y[Li + 1] - ux * xd - uz * zd)) / m
                zr_dot = y[9]
                return [
                    xd, zd, F * ux, F * uz - g,
                    y[5], tau0, y[7], tau1,
                    zr_dot, w2 * (z0 + target(x) - y[8]) - 2.0 * w * zr_dot,
                ]  # fmt: skip

        else:
            fx0, fz0, fx1, fz1 = f
            sqrt = math.sqrt

            def rhs(y):
                x, z, xd, zd = y[0], y[1], y[2], y[3]
                dx0, dz0 = x - fx0, z - fz0
                r0 = sqrt(dx0 * dx0 + dz0 * dz0)
                dx1, dz1 = x - fx1, z - fz1
                r1 = sqrt(dx1 * dx1 + dz1 * dz1)
                F0 = (K * (y[4] - r0) + D * (y[5] - (dx0 * xd + dz0 * zd) / r0)) / (m * r0)
                F1 = (K * (y[6] - r1) + D * (y[7] - (dx1 * xd + dz1 * zd) / r1)) / (m * r1)
                zr_dot = y[9]
                return [
                    xd, zd, F0 * dx0 + F1 * dx1, F0 * dz0 + F1 * dz1 - g,
                    y[5], tau0, y[7], tau1,
                    zr_dot, w2 * (z0 + target(x) - y[8]) - 2.0 * w * zr_dot,
                ]  # fmt: skip

        return rhs

    def _swing_foot(self, y):
        j = self.swing
        L = y[4 + 2 * j]
        return y[0] - L * math.sin(self.theta_sw), y[1] - L * math.cos(self.theta_sw)

    def _guard(self, y) -> float:
        if self.phase == "SSP":
            fx, fz = self._swing_foot(y)
            return fz - self.terrain.height_at(fx)
        i = self.s1
        F, *_ = stance_terms(y[0], y[1], y[2], y[3], self.feet[2 * i], self.feet[2 * i + 1], y[4 + 2 * i], y[5 + 2 * i], self.p.K, self.p.D)
        return F

    # -- control ----------------------------------------------------------

    def _leg_kin(self, y, i, ax=None, az=None):
        x, z, xd, zd = y[0], y[1], y[2], y[3]
        fx, fz = self.feet[2 * i], self.feet[2 * i + 1]
        L, Ld = y[4 + 2 * i], y[5 + 2 * i]
        F, ux, uz, r, rd = stance_terms(x, z, xd, zd, fx, fz, L, Ld, self.p.K, self.p.D)
        theta = math.atan2(x - fx, z - fz)
        thetad = (uz * xd - ux * zd) / r
        return F, ux, uz, r, rd, theta, thetad, Ld - rd

    def _output(self, y) -> OutputState:
        x, xd = y[0], y[2]
        zr, zrd = y[8], y[9]
        tgt = self.cfg.z0 + self._target(x)
        tgt_rate = self._target_slope(x) * xd
        zrdd = self.ref.accel(zr, zrd, tgt)
        zrddd = self.ref.jerk(zrd, zrdd, tgt_rate)
        return OutputState(y[1] - zr, y[3] - zrd, zr, zrd, zrdd, zrddd)

    def _clamp(self, v):
        tm = self.p.tau_max
        if v > tm:
            self.n_saturated += 1
            return tm, True
        if v < -tm:
            self.n_saturated += 1
            return -tm, True
        return v, False

    def control(self, event: bool):
        y, p, cfg, cert = self.y, self.p, self.cfg, self.cert
        m, K, D, g = p.m, p.K, p.D, p.g
        x, z, xd, zd = y[0], y[1], y[2], y[3]
        v2 = xd * xd + zd * zd
        out = self._output(y)
        t_phase = self.t - self.t_phase0
        nan = math.nan
        F_st = F_s1 = F_s2 = Fd = lo = hi = h_s = h_s1 = h_s2 = nan
        tau_sw = theta_sw = fsx = fsz = xref = zref = nan
        sat = clamped = False

        if self.phase == "SSP":
            i = self.stance
            F, ux, uz, r, rd, th, thd, sd = self._leg_kin(y, i)
            ax, az = F * ux / m, F * uz / m - g
            rdd = ux * ax + uz * az + (v2 - rd * rd) / r
            f_z = _leg_drift(F, sd, rdd, th, thd, K, D)
            F_z = F * math.cos(th)
            terms = clf_terms(out, F_z, cert, p)
            clf = clf_inequality(terms, f_z, cert, D)
            cbf = cbf_ssp(F_z, f_z, th, D, cfg.alpha)
            tau_cf = backstepping_closed_form(terms, f_z, cert, D)
            c = math.cos(th)
            if cfg.vertical_mode == "qp":
                tau_s, delta = _solve_bbf(
                    ((clf.a[0] * c,),), clf.b, (AffineIneq((cbf.a[0],), cbf.b, "CBF_s"),), cfg.delta_weight
                )
            else:
                tau_s, delta = tau_cf / c, 0.0
            tau_s, sat = self._clamp(tau_s)
            F_st, h_s = F, F_z

            # stepping and swing
            self.u_cmd = hlip.stepping(x - self.feet[2 * i], xd, t_phase, self.gait, self.model)
            self.plan.u_des = self.u_cmd
            j = self.swing
            cmd = swing_commands(
                self.plan, self.estimate, t_phase, y[4 + 2 * j], y[5 + 2 * j],
                (x, z, xd, zd), (ax, az), cfg.swing_omega,
            )  # fmt: skip
            if self._armed(t_phase) and self._theta_contact(cmd.theta):
                return self.control(True)
            self.theta_sw = cmd.theta
            tau_sw, s2 = self._clamp(cmd.tau)
            sat = sat or s2
            if cmd.clamped:
                clamped = True
                self.n_swing_clamped += 1
            theta_sw = cmd.theta
            fsx, fsz = self._swing_foot(y)
            xref, zref = cmd.x_ref, cmd.z_ref
            tau = [0.0, 0.0]
            tau[i] = tau_s
            tau[j] = tau_sw
            self.tau = tau
            tau_a, tau_b = tau_s, nan
        else:
            i1, i2 = self.s1, self.s2
            F1, ux1, uz1, r1, rd1, th1, thd1, sd1 = self._leg_kin(y, i1)
            F2, ux2, uz2, r2, rd2, th2, thd2, sd2 = self._leg_kin(y, i2)
            ax = (F1 * ux1 + F2 * ux2) / m
            az = (F1 * uz1 + F2 * uz2) / m - g
            rdd1 = ux1 * ax + uz1 * az + (v2 - rd1 * rd1) / r1
            rdd2 = ux2 * ax + uz2 * az + (v2 - rd2 * rd2) / r2
            f_z = _leg_drift(F1, sd1, rdd1, th1, thd1, K, D) + _leg_drift(F2, sd2, rdd2, th2, thd2, K, D)
            c1, c2 = math.cos(th1), math.cos(th2)
            F_z = F1 * c1 + F2 * c2
            terms = clf_terms(out, F_z, cert, p)
            clf = clf_inequality(terms, f_z, cert, D)
            tube = DspForceTube(self.F0, cfg.T_D, cfg.c, cfg.dF, cfg.alpha)
            row1, row2 = cbf_dsp(tube, t_phase, F1, K * sd1 - D * rdd1, F2, K * sd2 - D * rdd2, D, cfg.alpha)
            tau_cf = backstepping_closed_form(terms, f_z, cert, D)
            if cfg.vertical_mode == "qp":
                a = clf.a[0]
                t1, t2, delta = _solve_bbf(
                    ((a * c1, a * c2),),
                    clf.b,
                    (
                        AffineIneq((row1.a[0], 0.0), row1.b, "CBF_s1"),
                        AffineIneq((0.0, row2.a[0]), row2.b, "CBF_s2"),
                    ),
                    cfg.delta_weight,
                )
            else:
                # split the closed-form vertical command in proportion to cos(theta)
                cc = c1 * c1 + c2 * c2
                t1, t2, delta = tau_cf * c1 / cc, tau_cf * c2 / cc, 0.0
            t1, s_1 = self._clamp(t1)
            t2, s_2 = self._clamp(t2)
            sat = s_1 or s_2
            tau = [0.0, 0.0]
            tau[i1], tau[i2] = t1, t2
            self.tau = tau
            F_s1, F_s2 = F1, F2
            Fd = tube.desired(t_phase)
            lo, hi = tube.bounds(t_phase)
            h_s1 = tube.barrier(F1, t_phase)
            h_s2 = F2
            tau_a, tau_b = t1, t2

        margin = clf.b - clf.a[0] * tau_cf
        if cfg.log_ticks:
            self.ticks.append(
                (
                    self.t, 0 if self.phase == "SSP" else 1, self.k, int(event),
                    x, z, xd, zd, out.zd, out.zd_dot, out.eta1, out.eta2,
                    terms.V, terms.F_delta, delta, terms.F_z,
                    F_st, F_s1, F_s2, Fd, lo, hi, h_s, h_s1, h_s2,
                    tau_a, tau_b, tau_sw, theta_sw, self.u_cmd,
                    fsx, fsz, xref, zref, t_phase, margin, int(sat), int(clamped),
                )
            )  # fmt: skip

    def _theta_contact(self, theta_new: float) -> bool:
        """Touch down if re-aiming the swing leg would push the foot into the ground.

        The leg angle is a held set-point, so the foot moves discontinuously at
        control ticks.  The contact angle between the old and new set-points is
        found by bisection and the touchdown map is applied there.
        """
        theta_old = self.theta_sw
        self.theta_sw = theta_new
        g_new = self._guard(self.y)
        self.theta_sw = theta_old
        if g_new > 0.0:
            return False
        lo, hi = theta_old, theta_new
        g_hi = g_new
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            self.theta_sw = mid
            gm = self._guard(self.y)
            if gm > 0.0:
                lo = mid
            else:
                hi, g_hi = mid, gm
            if abs(hi - lo) < 1e-12 and abs(g_hi) < EVENT_TOL:
                break
        self.theta_sw = hi
        self.touchdown(g_hi)
        return True

    @property
    def stance(self) -> int:
        return self.s2 if self.phase == "SSP" else None

    @property
    def swing(self) -> int:
        return self.s1 if self.phase == "SSP" else None

    # -- transitions --------------------------------------------------------

    def touchdown(self, g_val: float):
        y = self.y
        i, j = self.stance, self.swing
        fx, fz = self._swing_foot(y)
        stance_x = self.feet[2 * i]
        F_old, *_ = self._leg_kin(y, i)
        self.feet[2 * j], self.feet[2 * j + 1] = fx, fz
        F_new, *_ = self._leg_kin(y, j)
        failed = F_new < 0
        if failed:
            self.failed_steps += 1
            log.info("step %d: negative force %.3f N on the new stance leg", self.k, F_new)
        self.steps.append(
            (
                self.k, self.t, self.t - self.t_ssp0, y[0] - stance_x, y[2], y[0], y[1],
                self.u_cmd, fx - stance_x, stance_x, fx, fz, F_new, int(failed),
            )
        )  # fmt: skip
        self.events.append((self.t, "touchdown", g_val))
        self.k += 1
        self.phase = "DSP"
        self.s1, self.s2 = i, j
        self.F0 = max(F_old, 0.0)
        self.t_phase0 = self.t

    def liftoff(self, g_val: float):
        y = self.y
        i1 = self.s1
        fx, fz = self.feet[2 * i1], self.feet[2 * i1 + 1]
        self.theta_sw = math.atan2(y[0] - fx, y[1] - fz)
        self.events.append((self.t, "liftoff", g_val))
        self.phase = "SSP"  # stance = s2, swing = s1
        j = self.s2
        self.plan = SwingPlan(
            z_max=self.cfg.z_max_sw,
            T_S=self.cfg.T_S,
            u_prev=self.feet[2 * j] - fx,
            u_des=self.u_cmd,
            stance_foot_x=self.feet[2 * j],
        )
        self.t_phase0 = self.t
        self.t_ssp0 = self.t

    # -- checks -------------------------------------------------------------

    def _check(self, y):
        x, z = y[0], y[1]
        try:
            ground = self.terrain.height_at(x)
        except TerrainRangeError as exc:
            raise _Abort("fall", f"left terrain range: {exc}") from None
        if z < ground + self.cfg.fall_margin:
            raise _Abort("fall", f"mass too close to ground at t={self.t:.4f}")
        legs = (self.stance,) if self.phase == "SSP" else (self.s1, self.s2)
        for i in legs:
            dx, dz = x - self.feet[2 * i], z - self.feet[2 * i + 1]
            r = math.hypot(dx, dz)
            if not (R_MIN <= r <= R_MAX) or dz <= 0:
                raise _Abort("kinematic", f"stance leg {i} out of bounds (r={r:.4f}) at t={self.t:.4f}")
        tp = self.t - self.t_phase0
        if self.phase == "SSP" and tp > 2.5 * self.cfg.T_S:
            raise _Abort("fall", f"no touchdown after {tp:.3f} s of single support")
        if self.phase == "DSP" and tp > 5.0 * self.cfg.T_D:
            raise _Abort("fall", f"no lift-off after {tp:.3f} s of double support")

    def _armed(self, t_phase):
        return self.phase == "DSP" or t_phase > 0.5 * self.cfg.T_S

    def _locate_event(self, f, y0, h, g0):
        """Bisect the crossing inside a step of size ``h`` from ``y0``."""
        lo, hi = 0.0, 1.0
        y_hi = None
        g_hi = None
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            ym = _rk4(f, y0, mid * h)
            gm = self._guard(ym)
            if gm > 0:
                lo = mid
            else:
                hi, y_hi, g_hi = mid, ym, gm
            if (hi - lo) * h < EVENT_DT and g_hi is not None and abs(g_hi) < EVENT_TOL:
                break
            if (hi - lo) * h < 1e-13:
                break
        if y_hi is None:
            y_hi = _rk4(f, y0, h)
            g_hi = self._guard(y_hi)
        return hi * h, y_hi, g_hi

    def advance(self, t_end: float) -> bool:
        """Integrate to ``t_end``; returns True if a transition happened."""
        f = self._rhs_factory()
        dtp = self.cfg.dt_physics
        g_prev = None
        while self.t < t_end - 1e-15:
            h = min(dtp, t_end - self.t)
            y0 = self.y
            y1 = _rk4(f, y0, h)
            if self._armed(self.t + h - self.t_phase0):
                if g_prev is None:
                    g_prev = self._guard(y0)
                g0 = g_prev
                g1 = g_prev = self._guard(y1)
                if g1 <= 0.0:
                    if g0 <= 0.0 and self.phase == "SSP":
                        raise _Abort("kinematic", f"swing foot inside terrain when touchdown armed at t={self.t:.4f}")
                    if g0 > 0.0:
                        dt_e, y_e, g_e = self._locate_event(f, y0, h, g0)
                        self.t += dt_e
                        self.y = y_e
                        if abs(g_e) > EVENT_TOL and not (self.phase == "SSP" and g_e >= -EDGE_LANDING_TOL):
                            raise _Abort(
                                "kinematic",
                                f"discontinuous contact (guard {g_e:.3g}) at t={self.t:.4f}: foot hit a terrain edge",
                            )
                        self._check(self.y)
                        if self.phase == "SSP":
                            self.touchdown(g_e)
                        else:
                            self.liftoff(g_e)
                        return True
            self.y = y1
            self.t += h
            self._check(y1)
        self.t = t_end
        return False


def run(cfg: ScenarioConfig) -> TrajectoryLog:
    """Simulate one scenario; failures end the run with a diagnostic status."""
    w = _Walker(cfg)
    dtc = cfg.dt_control
    n_ticks = int(round(cfg.duration / dtc))
    status, message = "ok", ""
    n = 0
    event = False
    try:
        while n < n_ticks:
            w.control(event)
            t_next = (n + 1) * dtc
            event = w.advance(t_next)
            if not event:
                n += 1
            elif w.t >= t_next - 1e-12:
                n += 1
    except _Abort as exc:
        status, message = exc.status, exc.message
    except QpInfeasibleError as exc:
        status, message = "qp_infeasible", f"{exc} (row {exc.row.label if exc.row else '?'}) at t={w.t:.4f}"
    except TerrainRangeError as exc:
        status, message = "fall", f"left terrain range: {exc}"
    log.info("%s: %s after %.3f s, %d steps", cfg.name, status, w.t, w.k)
    meta = {
        "v_star": cfg.v_star,
        "velocity_convention": cfg.velocity_convention,
        "u_star": w.gait.u_star,
        "p_star": float(w.gait.x_star[0]),
        "pd_star": float(w.gait.x_star[1]),
        "k1": float(w.gait.K_db[0]),
        "k2": float(w.gait.K_db[1]),
        "T_S": cfg.T_S,
        "T_D": cfg.T_D,
        "z0": cfg.z0,
        "g": cfg.g,
        "gamma": cfg.gamma,
        "c": cfg.c,
        "dF": cfg.dF,
        "saturations": w.n_saturated,
        "swing_clamps": w.n_swing_clamped,
        "failed_steps": w.failed_steps,
        "edge_landings": sum(1 for e in w.events if abs(e[2]) > EVENT_TOL),
        "t_end": w.t,
    }
    return TrajectoryLog(cfg.name, status, message, w.t, w.ticks, w.steps, w.events, meta)


@dataclass(frozen=True)
class StepSample:
    k: int
    x: np.ndarray  # pre-impact [p, pdot]
    u: float  # realized step size
    w: np.ndarray  # x_{k+1} - A x_k - B u_k
    e: np.ndarray  # x_k - x*
    eps: float  # u_k - u* - K e_k, step left unexplained by the stepping law


def step_extractor(log: TrajectoryLog, model: hlip.S2SModel, gait: hlip.Gait) -> list[StepSample]:
    """Per-step S2S residuals from a run's touchdown records."""
    rows = log.step_rows
    if len(rows) < 2:
        raise ValueError("need at least two completed steps")
    ip, ipd, iu = STEP_COLUMNS.index("p"), STEP_COLUMNS.index("pd"), STEP_COLUMNS.index("u_real")
    xs = [np.array([r[ip], r[ipd]]) for r in rows]
    out = []
    for k in range(len(rows) - 1):
        u = rows[k][iu]
        w = xs[k + 1] - model.A @ xs[k] - model.B * u
        e = xs[k] - gait.x_star
        eps = u - gait.u_star - float(gait.K_db @ e)
        out.append(StepSample(k, xs[k], u, w, e, eps))
    return out
