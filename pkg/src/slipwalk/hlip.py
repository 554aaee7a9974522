"""Hybrid-LIP step-to-step model and stepping controller.

The H-LIP walks at constant height ``z0``: ``p'' = lam^2 p`` in single
support (``p`` is mass minus stance foot), ``p'' = 0`` in double support.
Sampling the horizontal state just before each touchdown gives an exactly
linear step-to-step map ``x+ = A x + B u`` with the step size ``u`` as input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "S2SModel",
    "Gait",
    "Box",
    "ConvexPolygon",
    "s2s_matrices",
    "orbit_for_velocity",
    "deadbeat_gain",
    "make_gait",
    "ssp_flow",
    "stepping",
    "error_invariant_set",
    "bounding_box",
    "GAIT_CSV_HEADER",
]


@dataclass(frozen=True)
class S2SModel:
    T_S: float
    T_D: float
    z0: float
    g: float
    lam: float
    A: np.ndarray
    B: np.ndarray  # shape (2,)


def s2s_matrices(T_S: float, T_D: float, z0: float, g: float = 9.81) -> S2SModel:
    if not (T_S > 0 and T_D >= 0 and z0 > 0):
        raise ValueError("need T_S > 0, T_D >= 0, z0 > 0")
    lam = math.sqrt(g / z0)
    ch = math.cosh(T_S * lam)
    sh = math.sinh(T_S * lam)
    A = np.array(
        [
            [ch, T_D * ch + sh / lam],
            [lam * sh, ch + T_D * lam * sh],
        ]
    )
    B = np.array([-ch, -lam * sh])
    return S2SModel(T_S, T_D, z0, g, lam, A, B)


@dataclass(frozen=True)
class Gait:
    v_star: float
    u_star: float
    x_star: np.ndarray  # pre-impact [p*, pdot*]
    K_db: np.ndarray  # shape (2,)


def orbit_for_velocity(model: S2SModel, v_star: float, velocity: str = "pre_impact") -> tuple[float, np.ndarray]:
    """Period-1 orbit ``(u*, x*)`` for a target walking velocity.

    ``velocity="pre_impact"`` makes ``v_star`` the pre-impact velocity of the
    orbit (the symmetric single-support arc gives ``p* = v/lam tanh(lam T_S/2)``).
    ``velocity="average"`` instead treats ``v_star`` as the mean speed over a
    step, ``u* = v_star (T_S + T_D)``.  Either way ``x*`` solves
    ``(I - A) x* = B u*``.
    """
    if velocity == "pre_impact":
        p = v_star / model.lam * math.tanh(0.5 * model.lam * model.T_S)
        u = 2.0 * p + model.T_D * v_star
    elif velocity == "average":
        u = v_star * (model.T_S + model.T_D)
    else:
        raise ValueError(f"unknown velocity convention {velocity!r}")
    M = np.eye(2) - model.A
    if abs(np.linalg.det(M)) < 1e-12:
        raise ValueError("I - A is singular; no period-1 orbit")
    x = np.linalg.solve(M, model.B * u)
    return float(u), x


def deadbeat_gain(model: S2SModel) -> np.ndarray:
    """Gain ``K`` with ``(A + B K)^2 = 0``.

    For a 2x2 closed loop, nilpotency means zero trace and zero determinant.
    Both are linear in ``K``: ``K.B = -tr A`` and, by the determinant lemma,
    ``K.(A^-1 B) = -1``.
    """
    A, B = model.A, model.B
    Ainv_B = np.linalg.solve(A, B)
    M = np.vstack([B, Ainv_B])
    if abs(np.linalg.det(M)) < 1e-12:
        raise ValueError("deadbeat synthesis failed: (A, B) not controllable")
    return np.linalg.solve(M, np.array([-np.trace(A), -1.0]))


def make_gait(model: S2SModel, v_star: float, velocity: str = "pre_impact") -> Gait:
    u, x = orbit_for_velocity(model, v_star, velocity)
    return Gait(float(v_star), u, x, deadbeat_gain(model))


def closed_loop_matrix(model: S2SModel, K: np.ndarray) -> np.ndarray:
    return model.A + np.outer(model.B, K)


def ssp_flow(p: float, pd: float, dt: float, lam: float) -> tuple[float, float]:
    """Exact single-support H-LIP flow over ``dt``."""
    if dt <= 0.0:
        return p, pd
    ch = math.cosh(lam * dt)
    sh = math.sinh(lam * dt)
    return p * ch + pd * sh / lam, p * lam * sh + pd * ch


def stepping(p: float, pd: float, t_phase: float, gait: Gait, model: S2SModel) -> float:
    """Desired step size from the current single-support state.

    The state is first flowed to the nominal pre-impact time ``T_S`` under
    the H-LIP dynamics, then the linear stepping law is applied.
    """
    pp, pdp = ssp_flow(p, pd, model.T_S - t_phase, model.lam)
    k1, k2 = gait.K_db
    return gait.u_star + k1 * (pp - gait.x_star[0]) + k2 * (pdp - gait.x_star[1])


# -- sets -------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError("box lower corner exceeds upper corner")

    def vertices(self) -> list[tuple[float, float]]:
        (x0, y0), (x1, y1) = self.lo, self.hi
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]

    def contains(self, pt: Sequence[float], tol: float = 0.0) -> bool:
        return all(l - tol <= v <= h + tol for v, l, h in zip(pt, self.lo, self.hi))

    def inflate(self, frac: float) -> "Box":
        lo, hi = [], []
        for l, h in zip(self.lo, self.hi):
            pad = 0.5 * frac * (h - l)
            lo.append(l - pad)
            hi.append(h + pad)
        return Box(tuple(lo), tuple(hi))


def bounding_box(points: Iterable[Sequence[float]], inflation: float = 0.0) -> Box:
    pts = np.asarray(list(points), dtype=float)
    if pts.size == 0:
        raise ValueError("cannot bound an empty point set")
    return Box(tuple(pts.min(axis=0)), tuple(pts.max(axis=0))).inflate(inflation)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class ConvexPolygon:
    """Counter-clockwise hull vertices; may degenerate to a segment or a point."""

    vertices: tuple

    @classmethod
    def hull(cls, points: Iterable[Sequence[float]], eps: float = 0.0) -> "ConvexPolygon":
        pts = sorted(set((float(p[0]), float(p[1])) for p in points))
        if len(pts) <= 2:
            return cls(tuple(pts))
        lower, upper = [], []
        for p in pts:
            while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= eps:
                lower.pop()
            lower.append(p)
        for p in reversed(pts):
            while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= eps:
                upper.pop()
            upper.append(p)
        return cls(tuple(lower[:-1] + upper[:-1]))

    def contains(self, pt: Sequence[float], tol: float = 1e-9) -> bool:
        v = self.vertices
        x, y = float(pt[0]), float(pt[1])
        if len(v) == 0:
            return False
        if len(v) == 1:
            return math.hypot(x - v[0][0], y - v[0][1]) <= tol
        if len(v) == 2:
            (ax, ay), (bx, by) = v
            dx, dy = bx - ax, by - ay
            t = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
            t = min(max(t, 0.0), 1.0)
            return math.hypot(x - ax - t * dx, y - ay - t * dy) <= tol
        n = len(v)
        for i in range(n):
            ax, ay = v[i]
            bx, by = v[(i + 1) % n]
            el = math.hypot(bx - ax, by - ay)
            # signed distance to the left of edge a->b
            if ((bx - ax) * (y - ay) - (by - ay) * (x - ax)) / el < -tol:
                return False
        return True

    def extent(self, axis: int) -> tuple[float, float]:
        vals = [p[axis] for p in self.vertices]
        return min(vals), max(vals)

    def area(self) -> float:
        v = self.vertices
        if len(v) < 3:
            return 0.0
        return 0.5 * sum(v[i][0] * v[(i + 1) % len(v)][1] - v[(i + 1) % len(v)][0] * v[i][1] for i in range(len(v)))


def error_invariant_set(M: np.ndarray, W: Box) -> ConvexPolygon:
    """``E = W + M W`` (Minkowski sum) for a nilpotent closed loop ``M``.

    With ``M^2 = 0`` this satisfies ``M E + W = E`` exactly.
    """
    MW = [tuple(M @ np.asarray(v)) for v in W.vertices()]
    sums = [(a[0] + b[0], a[1] + b[1]) for a in W.vertices() for b in MW]
    return ConvexPolygon.hull(sums)


GAIT_CSV_HEADER = ("T_S", "T_D", "z0", "v_star", "u_star", "p_star", "pd_star", "k1", "k2")


def gait_csv_row(model: S2SModel, gait: Gait) -> tuple:
    return (
        model.T_S,
        model.T_D,
        model.z0,
        gait.v_star,
        gait.u_star,
        float(gait.x_star[0]),
        float(gait.x_star[1]),
        float(gait.K_db[0]),
        float(gait.K_db[1]),
    )
