"""Exact solver for tiny diagonal-Hessian QPs.

    minimize    sum_i h_i x_i^2
    subject to  a_j . x <= b_j,   j = 1..m  (m <= 4)

The minimizer is the weighted projection of the origin onto a polyhedron.
Every candidate active set is tried in order of size, then lexicographically;
the first set whose equality-constrained solution is primal feasible with
non-negative multipliers is the unique global optimum.  With at most 16
candidates this is exact, deterministic and fast enough for a 1 kHz loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

__all__ = ["AffineIneq", "QpProblem", "QpSolution", "QpInfeasibleError", "solve"]

FEAS_TOL = 1e-9
MULT_TOL = -1e-12
_PIVOT_TOL = 1e-14


@dataclass(frozen=True)
class AffineIneq:
    """Row ``a . x <= b``; ``label`` is one of CLF, CBF_s, CBF_s1, CBF_s2."""

    a: tuple
    b: float
    label: str = ""


@dataclass(frozen=True)
class QpProblem:
    H: tuple  # diagonal weights, all > 0
    ineqs: tuple

    def __post_init__(self):
        if any(not h > 0 for h in self.H):
            raise ValueError("QP weights must be positive")
        if len(self.ineqs) > 4:
            raise ValueError("at most four inequality rows are supported")
        n = len(self.H)
        for row in self.ineqs:
            if len(row.a) != n:
                raise ValueError("row width does not match variable count")

    @property
    def n(self) -> int:
        return len(self.H)


@dataclass(frozen=True)
class QpSolution:
    x: tuple
    active: tuple  # indices into ineqs
    multipliers: tuple  # one per row, zero for inactive rows
    objective: float


class QpInfeasibleError(RuntimeError):
    def __init__(self, message: str, row: AffineIneq | None = None):
        super().__init__(message)
        self.row = row


def _solve_small(G, rhs):
    """Gaussian elimination with partial pivoting; returns None if singular."""
    k = len(rhs)
    M = [list(G[i]) + [rhs[i]] for i in range(k)]
    for c in range(k):
        p = max(range(c, k), key=lambda i: abs(M[i][c]))
        if abs(M[p][c]) < _PIVOT_TOL:
            return None
        if p != c:
            M[c], M[p] = M[p], M[c]
        piv = M[c][c]
        for i in range(c + 1, k):
            f = M[i][c] / piv
            if f:
                Mi, Mc = M[i], M[c]
                for j in range(c, k + 1):
                    Mi[j] -= f * Mc[j]
    out = [0.0] * k
    for i in range(k - 1, -1, -1):
        acc = M[i][k]
        for j in range(i + 1, k):
            acc -= M[i][j] * out[j]
        out[i] = acc / M[i][i]
    return out


def _candidate_sets(m: int):
    for size in range(m + 1):
        yield from combinations(range(m), size)


_CANDIDATES = [tuple(_candidate_sets(m)) for m in range(5)]


def _nu(S, gram, b):
    """Scaled multipliers for active set ``S``; None if the rows are dependent."""
    k = len(S)
    if k == 1:
        i = S[0]
        g = gram[i][i]
        return None if g == 0.0 else [-b[i] / g]
    if k == 2:
        i, j = S
        g11, g12, g22 = gram[i][i], gram[i][j], gram[j][j]
        det = g11 * g22 - g12 * g12
        if abs(det) < _PIVOT_TOL * max(1.0, g11 * g22):
            return None
        return [(-b[i] * g22 + b[j] * g12) / det, (-b[j] * g11 + b[i] * g12) / det]
    return _solve_small([[gram[i][j] for j in S] for i in S], [-b[i] for i in S])


def solve(p: QpProblem) -> QpSolution:
    """Global minimizer of ``p``.

    Raises :class:`QpInfeasibleError` when no candidate set is KKT-valid,
    naming a row that is violated at every candidate.  That only happens for
    a zero-coefficient row with a negative right-hand side (or a genuinely
    empty polyhedron).
    """
    H = p.H
    n = len(H)
    rows = p.ineqs
    m = len(rows)
    A = [r.a for r in rows]
    b = [r.b for r in rows]
    tol = [FEAS_TOL * max(1.0, abs(v)) for v in b]
    hinv = [1.0 / h for h in H]
    # stationarity 2 H x + A_S^T mu = 0; solve for nu = mu / 2
    scaled = [[ai[k] * hinv[k] for k in range(n)] for ai in A]
    gram = [[sum(si[k] * aj[k] for k in range(n)) for aj in A] for si in scaled]

    for S in _CANDIDATES[m]:
        if S:
            nu = _nu(S, gram, b)
            if nu is None or min(nu) < MULT_TOL:
                continue
            x = [0.0] * n
            for v, i in zip(nu, S):
                si = scaled[i]
                for k in range(n):
                    x[k] -= v * si[k]
        else:
            nu = ()
            x = [0.0] * n
        for j in range(m):
            aj = A[j]
            if sum(aj[k] * x[k] for k in range(n)) > b[j] + tol[j]:
                break
        else:
            mult = [0.0] * m
            for v, i in zip(nu, S):
                mult[i] = 2.0 * v
            obj = sum(H[k] * x[k] * x[k] for k in range(n))
            return QpSolution(tuple(x), tuple(S), tuple(mult), obj)

    bad = None
    for r in rows:
        if all(abs(c) == 0.0 for c in r.a) and r.b < 0:
            bad = r
            break
    raise QpInfeasibleError("no feasible active set", bad if bad is not None else (rows[0] if rows else None))


def make_problem(H: Sequence[float], rows: Sequence[AffineIneq]) -> QpProblem:
    return QpProblem(tuple(float(h) for h in H), tuple(rows))
