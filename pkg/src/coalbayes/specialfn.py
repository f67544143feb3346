"""Incomplete gamma function and the generalized exponential integral E_J."""
from __future__ import annotations

import dataclasses
import math

from scipy import integrate

EULER_GAMMA = 0.57721566490153286061
_TINY = 1e-300


class ConvergenceError(ArithmeticError):
    pass


@dataclasses.dataclass(frozen=True)
class Tolerance:
    rel: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        if not 0 < self.rel <= 1e-6:
            raise ValueError("rel must lie in (0, 1e-6]")
        if self.max_iter < 50:
            raise ValueError("max_iter must be at least 50")


DEFAULT_TOL = Tolerance()


def _gamma_series(s: float, x: float, tol: Tolerance) -> float:
    # sum_{n>=0} x^n / (s (s+1) ... (s+n)); gamma(s, x) = e^{-x} x^s * this
    term = 1.0 / s
    total = term
    ap = s
    for _ in range(tol.max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol.rel * 0.1:
            return total
    raise ConvergenceError(
        f"incomplete gamma series did not converge: s={s}, x={x}, "
        f"last term {term:.3e}, partial sum {total:.6e}"
    )


def _gamma_cf(s: float, x: float, tol: Tolerance) -> float:
    # modified Lentz for Gamma(s, x) = e^{-x} x^s * this
    b = x + 1.0 - s
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, tol.max_iter + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < tol.rel * 0.1:
            return h
    raise ConvergenceError(
        f"incomplete gamma continued fraction did not converge: s={s}, x={x}, "
        f"last step {step:.16f}"
    )


def _check(s: float, x: float):
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    if not x >= 0:
        raise ValueError(f"x must be nonnegative, got {x}")


def regularized_lower_gamma(s: float, x: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """P(s, x) = gamma(s, x) / Gamma(s), evaluated without forming Gamma(s)."""
    _check(s, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    log_pref = -x + s * math.log(x) - math.lgamma(s)
    if x < s + 1.0:
        return min(1.0, math.exp(log_pref) * _gamma_series(s, x, tol))
    return max(0.0, 1.0 - math.exp(log_pref) * _gamma_cf(s, x, tol))


def lower_incomplete_gamma(s: float, x: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """gamma(s, x) = int_0^x t^{s-1} e^{-t} dt.

    Power series below x = s + 1; above it the upper function comes from a
    continued fraction and the result is Gamma(s) minus that.
    """
    _check(s, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return math.gamma(s)
    log_pref = -x + s * math.log(x)
    if x < s + 1.0:
        return math.exp(log_pref) * _gamma_series(s, x, tol)
    upper = math.exp(log_pref) * _gamma_cf(s, x, tol)
    return math.gamma(s) - upper


def _e1(c: float, tol: Tolerance) -> float:
    if c <= 1.0:
        # ascending series; the continued fraction converges slowly here
        total = -EULER_GAMMA - math.log(c)
        term = 1.0
        for k in range(1, tol.max_iter + 1):
            term *= -c / k
            add = -term / k
            total += add
            if abs(add) < abs(total) * tol.rel * 0.1:
                return total
        raise ConvergenceError(f"E_1 series did not converge at c={c}")
    # Lentz continued fraction for e^{c} E_1(c)
    b = c + 1.0
    cc = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, tol.max_iter + 1):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        cc = b + an / cc
        step = cc * d
        h *= step
        if abs(step - 1.0) < tol.rel * 0.1:
            return h * math.exp(-c)
    raise ConvergenceError(f"E_1 continued fraction did not converge at c={c}")


def _exp_integral_quad(J: int, c: float) -> float:
    val, err = integrate.quad(lambda z: math.exp(-c * z - J * math.log(z)), 1.0, math.inf,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def exp_integral_generalized(J: int, c: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """E_J(c) = int_1^inf e^{-cz} z^{-J} dz by upward recurrence from E_1(c)."""
    if J < 1 or int(J) != J:
        raise ValueError(f"J must be a positive integer, got {J}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    e = _e1(c, tol)
    emc = math.exp(-c)
    for j in range(1, int(J)):
        e = (emc - c * e) / j
        if e <= 0:
            return _exp_integral_quad(int(J), c)
    return e
