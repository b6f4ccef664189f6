"""Stepsize computation on [0, 1].

All searches operate on the constructed differentiable profile

    phi(gamma) = f(x + gamma * d) - f(x) + gamma * (g(B) - g(x)),

whose nonsmooth part enters only through the constant slope term, so the
profile is smooth even when g is not.  Quadratic and quartic profiles
admit closed-form minimizers (the quartic via the real roots of its
derivative cubic); everything else goes through Armijo backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, LineSearchError

_BRANCH_RTOL = 1e-12


@dataclass(frozen=True)
class StepResult:
    """A stepsize in [0, 1] plus how it was found."""

    gamma: float
    armijo_exponent: int | None = None     # None for exact searches
    profile_value: float = 0.0             # profile at gamma, profile(0) = 0


@dataclass(frozen=True)
class ScalarProfile:
    """Polynomial or opaque scalar profile on [0, 1].

    Coefficients follow the convention
    quadratic: (1/2) a2 g^2 + a1 g, quartic:
    (1/4) v4 g^4 + (1/3) v3 g^3 + (1/2) v2 g^2 + v1 g.
    """

    kind: str                               # "quadratic" | "quartic" | "callable"
    coeffs: tuple[float, ...] = ()
    fn: Callable[[float], float] | None = None

    def with_slope_offset(self, delta_g: float) -> "ScalarProfile":
        """Fold the nonsmooth slope term gamma * delta_g into the profile."""
        if self.kind == "quadratic":
            a2, a1 = self.coeffs
            return ScalarProfile("quadratic", (a2, a1 + delta_g))
        if self.kind == "quartic":
            v4, v3, v2, v1 = self.coeffs
            return ScalarProfile("quartic", (v4, v3, v2, v1 + delta_g))
        fn = self.fn
        return ScalarProfile("callable", fn=lambda g: fn(g) + g * delta_g)

    def value(self, gamma: float) -> float:
        if self.kind == "quadratic":
            a2, a1 = self.coeffs
            return 0.5 * a2 * gamma * gamma + a1 * gamma
        if self.kind == "quartic":
            v4, v3, v2, v1 = self.coeffs
            return gamma * (v1 + gamma * (0.5 * v2 + gamma * (v3 / 3.0 + gamma * 0.25 * v4)))
        return self.fn(gamma)

    def minimize(self) -> StepResult:
        """Exact minimizer over [0, 1]; degenerate leading coefficients
        cascade down (quartic -> quadratic -> linear)."""
        if self.kind == "quadratic":
            a2, a1 = self.coeffs
            if a2 > 0.0:
                return exact_quadratic_step(a2, a1)
            return _linear_step(a1)
        if self.kind == "quartic":
            v4, v3, v2, v1 = self.coeffs
            if v4 > 0.0:
                return exact_quartic_step(v4, v3, v2, v1)
            if v3 != 0.0:
                # cubic profile: candidate stationary points from the
                # quadratic derivative, endpoints always in play
                return _polynomial_argmin(self, np.roots([v3, v2, v1]))
            return ScalarProfile("quadratic", (v2, v1)).minimize()
        raise InvalidArgumentError("callable profiles have no exact minimizer")


def quadratic_profile(a2: float, a1: float) -> ScalarProfile:
    return ScalarProfile("quadratic", (float(a2), float(a1)))


def quartic_profile(v4: float, v3: float, v2: float, v1: float) -> ScalarProfile:
    return ScalarProfile("quartic", (float(v4), float(v3), float(v2), float(v1)))


def callable_profile(fn: Callable[[float], float]) -> ScalarProfile:
    return ScalarProfile("callable", fn=fn)


def _linear_step(slope: float) -> StepResult:
    gamma = 1.0 if slope < 0.0 else 0.0
    return StepResult(gamma, None, slope * gamma)


def _polynomial_argmin(profile: ScalarProfile, stationary) -> StepResult:
    candidates = [0.0, 1.0]
    for r in np.atleast_1d(stationary):
        if abs(np.imag(r)) < 1e-9:
            g = float(np.real(r))
            if 0.0 < g < 1.0:
                candidates.append(g)
    best = min(candidates, key=lambda g: (profile.value(g), g))
    return StepResult(best, None, profile.value(best))


# ---------------------------------------------------------------------------
# closed-form exact steps
# ---------------------------------------------------------------------------

def exact_quadratic_step(a2: float, a1: float) -> StepResult:
    """Minimize (1/2) a2 g^2 + a1 g over [0, 1]; requires a2 > 0."""
    if a2 <= 0.0:
        raise InvalidArgumentError("quadratic profile needs a2 > 0")
    gamma = min(1.0, max(0.0, -a1 / a2))
    return StepResult(gamma, None, 0.5 * a2 * gamma * gamma + a1 * gamma)


def exact_quartic_step(v4: float, v3: float, v2: float, v1: float) -> StepResult:
    """Minimize (1/4)v4 g^4 + (1/3)v3 g^3 + (1/2)v2 g^2 + v1 g over [0, 1].

    The interior stationary points are the real roots of the derivative
    cubic; the quartic is evaluated at those roots inside [0, 1] and at
    both endpoints, and the argmin wins (ties go to the smaller gamma).
    Requires v4 > 0.
    """
    if v4 <= 0.0:
        raise InvalidArgumentError("quartic profile needs v4 > 0")
    profile = quartic_profile(v4, v3, v2, v1)
    try:
        roots = cubic_real_roots(v4, v3, v2, v1)
    except FloatingPointError:
        roots = np.array([])
    if roots.size and not np.all(np.isfinite(roots)):
        return _grid_golden(profile)
    return _polynomial_argmin(profile, roots)


def _grid_golden(profile: ScalarProfile, grid: int = 1000,
                 tol: float = 1e-12) -> StepResult:
    """Last-resort minimizer: uniform scan then golden-section refine."""
    gammas = np.linspace(0.0, 1.0, grid + 1)
    values = [profile.value(g) for g in gammas]
    i = int(np.argmin(values))
    a, b = gammas[max(i - 1, 0)], gammas[min(i + 1, grid)]
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = profile.value(c), profile.value(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = profile.value(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = profile.value(d)
    gamma = 0.5 * (a + b)
    return StepResult(gamma, None, profile.value(gamma))


# ---------------------------------------------------------------------------
# cubic roots (Cardano with a trigonometric branch)
# ---------------------------------------------------------------------------

def cubic_real_roots(c3: float, c2: float, c1: float, c0: float) -> np.ndarray:
    """Sorted real roots of c3 t^3 + c2 t^2 + c1 t + c0, c3 != 0.

    The depressed-cubic discriminant picks between the one-real-root
    Cardano branch (in the cancellation-safe u - p/(3u) form) and the
    trigonometric three-root branch, with repeated-root closed forms at
    the near-zero boundary.  Closed-form seeds are Newton-polished to
    convergence, the quadratic left after deflating the most accurate
    root supplies any root the trigonometric branch mangled (its arccos
    loses the moderate roots under extreme coefficient spreads), and
    only candidates with a rounding-level residual survive.
    """
    if c3 == 0.0:
        raise InvalidArgumentError("cubic needs a nonzero leading coefficient")
    a = c2 / c3
    b = c1 / c3
    c = c0 / c3
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    shift = -a / 3.0
    half_q = -0.5 * q
    third_p = p / 3.0
    disc = half_q * half_q + third_p ** 3
    scale = max(half_q * half_q, abs(third_p) ** 3, 1e-300)

    if disc > _BRANCH_RTOL * scale:
        sq = math.sqrt(disc)
        t1 = half_q + sq if half_q >= 0.0 else half_q - sq
        u = math.copysign(abs(t1) ** (1.0 / 3.0), t1)
        s = u - third_p / u if u != 0.0 else 0.0
        seeds = [s + shift]
    elif disc < -_BRANCH_RTOL * scale:
        # three distinct real roots, p < 0 here
        rho = math.sqrt(-third_p)
        cosarg = min(1.0, max(-1.0, half_q / rho ** 3))
        theta = math.acos(cosarg)
        seeds = [2.0 * rho * math.cos((theta - 2.0 * math.pi * j) / 3.0) + shift
                 for j in range(3)]
    else:
        if abs(p) ** 3 <= 1e-300 or abs(third_p) ** 3 <= _BRANCH_RTOL * scale:
            seeds = [shift]                       # triple root
        else:
            seeds = [3.0 * q / p + shift,         # simple root
                     -1.5 * q / p + shift]        # double root

    candidates = [_newton_polish(t, a, b, c) for t in seeds]
    best = min(candidates, key=lambda t: _residual_quality(t, a, b, c))
    candidates.extend(_newton_polish(t, a, b, c)
                      for t in _deflated_pair(best, a, b))
    roots = sorted(t for t in candidates
                   if _residual_quality(t, a, b, c) <= 64.0)
    unique: list[float] = []
    for r in roots:
        if not unique or abs(r - unique[-1]) > 1e-10 * max(1.0, abs(r)):
            unique.append(r)
    if not unique:
        unique = [best]    # a cubic always has one real root
    while len(unique) > 3:
        # rounding can leave a cluster around a repeated root; merge the
        # closest pair until the algebra is respected
        gaps = [unique[i + 1] - unique[i] for i in range(len(unique) - 1)]
        i = gaps.index(min(gaps))
        unique[i:i + 2] = [0.5 * (unique[i] + unique[i + 1])]
    return np.array(unique)


def _residual_quality(t: float, a: float, b: float, c: float) -> float:
    """|p(t)| against the rounding floor of its own evaluation."""
    val = ((t + a) * t + b) * t + c
    floor = 1e-16 * (abs(t) ** 3 + abs(a) * t * t + abs(b * t) + abs(c) + 1e-300)
    return abs(val) / floor


def _deflated_pair(root: float, a: float, b: float) -> list[float]:
    """Real roots of the quadratic left after dividing out ``root`` from
    the monic cubic, via the cancellation-safe quadratic formula; a
    discriminant within rounding of zero counts as a double root."""
    lin = a + root
    const = b + root * lin
    disc = lin * lin - 4.0 * const
    if disc < 0.0:
        # barely-negative means a double root split by coefficient
        # rounding; report the double point and let the residual filter
        # judge (a genuinely complex pair fails it)
        if disc >= -4e-12 * (lin * lin + 4.0 * abs(const)):
            return [-0.5 * lin]
        return []
    sq = math.sqrt(disc)
    major = -0.5 * (lin + math.copysign(sq, lin))
    if major == 0.0:
        return [0.0]
    return [major, const / major]


def _newton_polish(t: float, a: float, b: float, c: float,
                   max_iterations: int = 60) -> float:
    # plain Newton converges linearly on repeated roots, hence the budget
    for _ in range(max_iterations):
        val = ((t + a) * t + b) * t + c
        der = (3.0 * t + 2.0 * a) * t + b
        if der == 0.0:
            break
        step = val / der
        t -= step
        if abs(step) <= 1e-16 * max(1.0, abs(t)):
            break
    return t


# ---------------------------------------------------------------------------
# successive (Armijo) search and the descent quantity
# ---------------------------------------------------------------------------

def successive_step(phi_smooth: Callable[[float], float], delta_g: float,
                    d: float, alpha: float = 0.1, beta: float = 0.5,
                    m_max: int = 60) -> StepResult:
    """Smallest m with phi(b^m) + b^m*delta_g <= phi(0) + alpha*b^m*d.

    ``d`` must be a strictly negative descent quantity; the inequality is
    checked on the constructed smooth profile, so g is never re-evaluated
    during backtracking.
    """
    if not d < 0.0:
        raise LineSearchError(f"descent quantity must be negative, got {d}")
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
        raise InvalidArgumentError("alpha and beta must lie in (0, 1)")
    phi0 = phi_smooth(0.0)
    gamma = 1.0
    for m in range(m_max + 1):
        lhs = phi_smooth(gamma) + gamma * delta_g
        if lhs <= phi0 + alpha * gamma * d:
            return StepResult(gamma, m, lhs - phi0)
        gamma *= beta
    raise LineSearchError(
        f"no Armijo stepsize within {m_max} halvings (d={d}); "
        "the descent quantity or direction is suspect")


def descent_quantity(grad_k: np.ndarray, minimizer: np.ndarray,
                     x_k: np.ndarray, g_at_minimizer: float,
                     g_at_x: float) -> float:
    """(B - x_k)' grad + g(B) - g(x_k); negative certifies descent."""
    return float((minimizer - x_k) @ grad_k + g_at_minimizer - g_at_x)
