"""Slow, independent reference routines used to cross-check the closed
forms elsewhere in the package: golden-section minimization, central
finite differences, bisection cubic roots and a Cholesky reference solve.

Nothing here is performance-tuned; these exist so every closed-form path
has a brute-force counterpart in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    reference: float
    candidate: float

    @property
    def abs_deviation(self) -> float:
        return abs(self.reference - self.candidate)

    @property
    def rel_deviation(self) -> float:
        scale = max(abs(self.reference), abs(self.candidate), 1e-300)
        return self.abs_deviation / scale


def golden_section(phi: Callable[[float], float], tol: float = 1e-10,
                   grid: int = 0) -> float:
    """Minimize phi over [0, 1].

    Without a grid the function must be unimodal.  With ``grid`` > 0 a
    uniform pre-scan isolates the basin of the global minimizer first
    (pitch 1/grid), which is enough for quartics on [0, 1].
    """
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    lo, hi = 0.0, 1.0
    if grid > 0:
        gammas = np.linspace(0.0, 1.0, grid + 1)
        values = [phi(g) for g in gammas]
        best = int(np.argmin(values))
        lo = gammas[max(best - 1, 0)]
        hi = gammas[min(best + 1, grid)]
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = phi(c), phi(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = phi(d)
    gamma = 0.5 * (a + b)
    # endpoints win whenever the bracket degenerated onto them
    candidates = [(phi(0.0), 0.0), (phi(gamma), gamma), (phi(1.0), 1.0)]
    return min(candidates, key=lambda t: (t[0], t[1]))[1]


def finite_diff_block_gradient(f: Callable[[np.ndarray], float],
                               x: np.ndarray, sl: slice,
                               eps: float = 1e-6) -> np.ndarray:
    """Central differences of f along the coordinates in ``sl``."""
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    x = np.asarray(x, dtype=float)
    out = np.empty(sl.stop - sl.start)
    work = x.copy()
    for i, j in enumerate(range(sl.start, sl.stop)):
        orig = work[j]
        work[j] = orig + eps
        up = f(work)
        work[j] = orig - eps
        down = f(work)
        work[j] = orig
        out[i] = (up - down) / (2.0 * eps)
    return out


def real_cubic_roots(c3: float, c2: float, c1: float, c0: float,
                     tol: float = 1e-12) -> np.ndarray:
    """All real roots of c3 t^3 + c2 t^2 + c1 t + c0 by bracketed
    bisection over [-R, R], R = 1 + max |c_i / c3|; double roots are
    recovered from the critical points.
    """
    if c3 == 0:
        raise InvalidArgumentError("leading coefficient must be nonzero")
    a, b, c = c2 / c3, c1 / c3, c0 / c3

    def p(t: float) -> float:
        return ((t + a) * t + b) * t + c

    radius = 1.0 + max(abs(a), abs(b), abs(c))
    grid = np.linspace(-radius, radius, 2049)
    vals = np.array([p(t) for t in grid])
    roots: list[float] = []
    for i in range(len(grid) - 1):
        lo, hi = grid[i], grid[i + 1]
        flo, fhi = vals[i], vals[i + 1]
        if flo == 0.0:
            roots.append(lo)
            continue
        if flo * fhi < 0.0:
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                fmid = p(mid)
                if fmid == 0.0 or (hi - lo) < tol * max(1.0, abs(mid)):
                    break
                if flo * fmid < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            roots.append(0.5 * (lo + hi))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    # even-multiplicity roots sit at critical points where p touches zero
    disc = a * a - 3.0 * b
    if disc >= 0.0:
        for t in ((-a + np.sqrt(disc)) / 3.0, (-a - np.sqrt(disc)) / 3.0):
            if abs(p(t)) <= 1e-10 * max(1.0, abs(t) ** 3):
                roots.append(t)
    roots.sort()
    unique: list[float] = []
    for r in roots:
        if not unique or abs(r - unique[-1]) > 1e-8 * max(1.0, abs(r)):
            unique.append(r)
    return np.array(unique)


def dense_spd_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M x = r for symmetric positive definite M via an explicit
    Cholesky factorization and hand-rolled triangular substitutions."""
    M = np.asarray(matrix, dtype=float)
    r = np.asarray(rhs, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise InvalidArgumentError("matrix must be symmetric")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgumentError("matrix is not positive definite") from exc
    n = M.shape[0]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (r[i] - L[i, :i] @ y[:i]) / L[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x
