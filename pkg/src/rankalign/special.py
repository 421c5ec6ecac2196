"""Self-contained special functions for the significance tests.

Everything here is scalar double precision: the regularized incomplete beta
function (continued-fraction evaluation in the style of Cephes / Numerical
Recipes) and the Student-t and F distribution functions built on top of it.
The package deliberately avoids a scipy runtime dependency; scipy is used in
the test suite as an independent oracle.
"""

import math

from rankalign.errors import ValidationError

_MAX_ITER = 500
_EPS = 3.0e-16
_TINY = 1.0e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
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
        if abs(delta - 1.0) < _EPS:
            return h
    raise ValidationError(
        f"incomplete beta continued fraction failed to converge "
        f"(a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function.

    Valid for a > 0, b > 0 and 0 <= x <= 1.  Uses the continued fraction
    directly when x < (a+1)/(a+b+2) and the symmetry
    I_x(a, b) = 1 - I_{1-x}(b, a) otherwise, so the fraction always converges
    quickly.
    """
    if a <= 0.0 or b <= 0.0:
        raise ValidationError(f"beta parameters must be positive (a={a}, b={b})")
    if math.isnan(x):
        raise ValidationError("x must not be NaN")
    if x <= 0.0:
        if x < 0.0:
            raise ValidationError(f"x out of domain [0, 1]: {x}")
        return 0.0
    if x >= 1.0:
        if x > 1.0:
            raise ValidationError(f"x out of domain [0, 1]: {x}")
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """CDF of Student's t distribution with ``df`` degrees of freedom."""
    if df <= 0.0:
        raise ValidationError(f"degrees of freedom must be positive: {df}")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
    return tail if t < 0.0 else 1.0 - tail


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t."""
    if df <= 0.0:
        raise ValidationError(f"degrees of freedom must be positive: {df}")
    if math.isinf(t):
        return 0.0
    # 2 * (1 - CDF(|t|)) without cancellation: equals I_x(df/2, 1/2) directly.
    x = df / (df + t * t)
    return regularized_incomplete_beta(0.5 * df, 0.5, x)


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValidationError(f"degrees of freedom must be positive: ({d1}, {d2})")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    y = d1 * x / (d1 * x + d2)
    return regularized_incomplete_beta(0.5 * d1, 0.5 * d2, y)


def f_sf(x: float, d1: float, d2: float) -> float:
    """Survival function 1 - f_cdf(x, d1, d2), computed without cancellation."""
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValidationError(f"degrees of freedom must be positive: ({d1}, {d2})")
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    y = d2 / (d1 * x + d2)
    return regularized_incomplete_beta(0.5 * d2, 0.5 * d1, y)


def f_ppf(q: float, d1: float, d2: float) -> float:
    """Quantile function of the F distribution (inverse of f_cdf).

    Solved by bracketing plus bisection on the monotone CDF; precision is
    limited only by double rounding of the CDF itself.
    """
    if not 0.0 < q < 1.0:
        raise ValidationError(f"quantile level must lie in (0, 1): {q}")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < q:
        hi *= 2.0
        if hi > 1e300:
            raise ValidationError(
                f"F quantile out of range (q={q}, d1={d1}, d2={d2})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f_cdf(mid, d1, d2) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
