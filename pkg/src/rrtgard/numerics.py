"""Beta-function special functions.

Log-Beta, the regularized incomplete Beta function I_x(a, b) and its
inverse.  Thresholds downstream use shapes a = (n - p - k)/2 with b = 1/2,
which gets very skewed for large a, so the inverse is a bracketed Newton
iteration in log-space rather than a plain Newton solve.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_TINY = 1e-300
_CF_EPS = 1e-16
# below this quantile beta_inv_cdf gives up and returns 0 (flagged)
UNDERFLOW_QUANTILE = 1e-300


def _check_shapes(a, b):
    if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"Beta shapes must be positive and finite, got a={a}, b={b}")


def _stirling_tail(x):
    """lgamma(x) minus its Stirling approximation, for x >= 10."""
    x2 = 1.0 / (x * x)
    return (1.0 / 12.0 - x2 * (1.0 / 360.0 - x2 * (1.0 / 1260.0 - x2 * (
        1.0 / 1680.0 - x2 * (1.0 / 1188.0 - x2 * (691.0 / 360360.0 - x2 / 156.0)))))) / x


def _lgamma_ratio(a, b):
    """lgamma(a) - lgamma(a + b) for a >= 10, without cancellation."""
    s = a + b
    return ((a - 0.5) * math.log1p(-b / s) - b * math.log(s) + b
            + _stirling_tail(a) - _stirling_tail(s))


def log_beta(a, b):
    """Natural log of the Beta function B(a, b).

    Large arguments go through a Stirling-difference form so that
    ln B stays accurate to ~1e-15 relative even when lgamma(a) ~ 1e7.
    """
    a = float(a)
    b = float(b)
    _check_shapes(a, b)
    lo, hi = min(a, b), max(a, b)
    if hi < 10.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    if lo < 10.0:
        return math.lgamma(lo) + _lgamma_ratio(hi, lo)
    s = a + b
    return (_HALF_LOG_2PI - 0.5 * math.log(s)
            + (a - 0.5) * math.log1p(-b / s) + (b - 0.5) * math.log1p(-a / s)
            + _stirling_tail(a) + _stirling_tail(b) - _stirling_tail(s))


def _betacf(a, b, x):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    max_iter = 2000 + int(20.0 * math.sqrt(a + b))
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ConvergenceError(
        f"incomplete Beta continued fraction did not converge (a={a}, b={b}, x={x})", best=h)


def _log_front(a, b, x, lbeta):
    return a * math.log(x) + b * math.log1p(-x) - lbeta


def _use_direct(a, b, x):
    return x < (a + 1.0) / (a + b + 2.0)


def _check_x(x):
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x}")


def beta_cdf(a, b, x):
    """Regularized incomplete Beta function I_x(a, b)."""
    a = float(a)
    b = float(b)
    x = float(x)
    _check_shapes(a, b)
    _check_x(x)
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    lbeta = log_beta(a, b)
    if _use_direct(a, b, x):
        return math.exp(_log_front(a, b, x, lbeta)) * _betacf(a, b, x) / a
    upper = math.exp(_log_front(a, b, x, lbeta)) * _betacf(b, a, 1.0 - x) / b
    return 1.0 - upper


def log_beta_cdf(a, b, x):
    """log I_x(a, b); finite far into the lower tail where I_x underflows."""
    a = float(a)
    b = float(b)
    x = float(x)
    _check_shapes(a, b)
    _check_x(x)
    if x == 0.0:
        return -math.inf
    if x == 1.0:
        return 0.0
    lbeta = log_beta(a, b)
    if _use_direct(a, b, x):
        return _log_front(a, b, x, lbeta) + math.log(_betacf(a, b, x)) - math.log(a)
    upper = math.exp(_log_front(a, b, x, lbeta)) * _betacf(b, a, 1.0 - x) / b
    return math.log1p(-upper)


def _log_pdf(a, b, x, lbeta):
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - lbeta


def _solve_lower(a, b, log_q, max_iter):
    """Find x with log I_x(a, b) = log_q, where log_q <= log(1/2).

    Newton in u = ln x: the lower tail is close to a power law in x, so
    the iteration is nearly linear in u.  The bracket [u_lo, u_hi] is
    kept throughout and any step that leaves it is replaced by bisection.
    """
    lbeta = log_beta(a, b)
    u_lo, u_hi = -math.inf, 0.0
    # power-law tail guess: I_x ~ x^a / (a B(a, b))
    u = (log_q + math.log(a) + lbeta) / a
    if not (u < 0.0) or not math.isfinite(u):
        u = math.log(0.5)
    for _ in range(max_iter):
        x = math.exp(u)
        if x >= 1.0:
            x = math.nextafter(1.0, 0.0)
        if x <= 0.0:
            g = -math.inf
        else:
            g = log_beta_cdf(a, b, x) - log_q
        if g == 0.0:
            return x
        if g < 0.0:
            u_lo = u
        else:
            u_hi = u
        if x > 0.0 and math.isfinite(g):
            # d(log I)/du = x * pdf(x) / I_x
            log_slope = math.log(x) + _log_pdf(a, b, x, lbeta) - (g + log_q)
            step = g / math.exp(log_slope) if log_slope < 700.0 else 0.0
            u_new = u - step
        else:
            u_new = math.nan
        if not (u_lo < u_new < u_hi):
            if math.isinf(u_lo):
                u_new = u_hi - max(1.0, abs(u_hi))
            else:
                u_new = 0.5 * (u_lo + u_hi)
        if abs(u_new - u) <= 4e-16 * max(1.0, abs(u)):
            return math.exp(u_new)
        if math.isfinite(u_lo) and (u_hi - u_lo) <= 4e-16 * max(1.0, abs(u_lo)):
            return math.exp(0.5 * (u_lo + u_hi))
        u = u_new
    raise ConvergenceError(
        f"Beta quantile search did not converge (a={a}, b={b}, log q={log_q})",
        best=math.exp(u))


def beta_inv_cdf(a, b, q, full_output=False, max_iter=400):
    """Inverse of the regularized incomplete Beta function.

    Returns x with I_x(a, b) = q.  Quantiles below ``UNDERFLOW_QUANTILE``
    return 0; with ``full_output=True`` the result is ``(x, underflowed)``.
    """
    a = float(a)
    b = float(b)
    q = float(q)
    _check_shapes(a, b)
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"q must lie in [0, 1], got {q}")
    underflowed = False
    if q == 0.0:
        x = 0.0
    elif q == 1.0:
        x = 1.0
    elif q < UNDERFLOW_QUANTILE:
        x, underflowed = 0.0, True
    elif q <= 0.5:
        x = _solve_lower(a, b, math.log(q), max_iter)
    else:
        # I_x(a, b) = 1 - I_{1-x}(b, a)
        x = 1.0 - _solve_lower(b, a, math.log1p(-q), max_iter)
    return (x, underflowed) if full_output else x


def beta_inv_cdf_log(a, b, log_q, max_iter=400):
    """beta_inv_cdf taking log(q); reaches quantiles far below 1e-300."""
    a = float(a)
    b = float(b)
    log_q = float(log_q)
    _check_shapes(a, b)
    if log_q > 0.0:
        raise DomainError(f"log q must be <= 0, got {log_q}")
    if log_q == -math.inf:
        return 0.0
    if log_q == 0.0:
        return 1.0
    if log_q <= math.log(0.5):
        return _solve_lower(a, b, log_q, max_iter)
    return 1.0 - _solve_lower(b, a, math.log(-math.expm1(log_q)), max_iter)


beta_cdf_vec = np.vectorize(beta_cdf, otypes=[float])


@dataclass(frozen=True)
class BetaParams:
    """Shape pair (a, b) of a Beta distribution."""

    a: float
    b: float

    def __post_init__(self):
        _check_shapes(self.a, self.b)

    def log_beta(self):
        return log_beta(self.a, self.b)

    def cdf(self, x):
        return beta_cdf(self.a, self.b, x)

    def ppf(self, q):
        return beta_inv_cdf(self.a, self.b, q)
