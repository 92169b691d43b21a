"""Modified Bessel functions of the second kind, orders 0 and 1.

Three branches:

* ``x <= 2``: ascending series (A&S 9.6.13 / 9.6.11).
* ``2 < x <= 25``: piecewise Chebyshev fits of ``exp(x) sqrt(x) K_nu(x)`` on
  intervals growing by 1.5x.  The fits are built at import from the trapezoid
  rule on ``K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt``, whose integrand
  is entire and decays doubly exponentially, so the rule converges geometrically
  in ``1/h``; the step shrinks with the peak width ``~1/sqrt(x)``.  Only ``x = 0``
  is singular, so each interval sees a Bernstein ellipse of ratio ~10 and 21
  terms reach rounding level.
* ``x > 25``: Hankel asymptotic expansion, optimally truncated (error ~ ``exp(-2x)``).

The asymptotic series alone cannot reach 1e-10 near x = 2 (its best error
there is ~1e-2), which is why the middle branch exists.

The helpers :func:`one_minus_x_k1` and :func:`log_plus_k0` evaluate
``1 - x K1(x)`` and ``log x + K0(x)`` without the cancellation the naive
expressions suffer as ``x -> 0``.
"""
import math

import numpy as np
from numba import njit, vectorize

EULER_GAMMA = 0.57721566490153286061
SERIES_MAX = 2.0
ASYMPTOTIC_MIN = 25.0
_TRAP_H = 0.2
_TRAP_CUT = 42.0  # stop once x*(cosh t - 1) exceeds this (e^-42 ~ 6e-19)
# beyond this, x K1(x) and K0(x) are below half an ulp of 1 and log x
_NEGLIGIBLE = 40.0


@njit(cache=True)
def _series_parts(x):
    """Return (I0-1, I1, S0, S1) for the ascending series.

    S0 = sum_{k>=1} H_k t^k / (k!)^2
    S1 = sum_{k>=0} (psi(k+1) + psi(k+2)) t^k / (k! (k+1)!)
    with t = x^2/4.
    """
    t = 0.25 * x * x
    i0m1 = 0.0
    i1s = 0.0
    s0 = 0.0
    s1 = 0.0
    a = 1.0  # t^k / (k!)^2
    b = 1.0  # t^k / (k! (k+1)!)
    hk = 0.0
    for k in range(60):
        if k > 0:
            a *= t / (k * k)
            b *= t / (k * (k + 1.0))
            hk += 1.0 / k
            i0m1 += a
            s0 += hk * a
        i1s += b
        s1 += (2.0 * hk + 1.0 / (k + 1.0) - 2.0 * EULER_GAMMA) * b
        if k > 2 and b < 1e-18 * i1s:
            break
    return i0m1, 0.5 * x * i1s, s0, s1


@njit(cache=True)
def _trap(x, nu):
    # the integrand's peak narrows like 1/sqrt(x); keep ~7 nodes across it
    h = _TRAP_H * min(1.0, math.sqrt(2.0 / x))
    total = 0.5
    t = 0.0
    while True:
        t += h
        arg = x * (math.cosh(t) - 1.0)
        if arg > _TRAP_CUT:
            break
        if nu == 0:
            total += math.exp(-arg)
        else:
            total += math.exp(-arg) * math.cosh(t)
    return h * total * math.exp(-x)


_CHEB_RATIO = 1.5
_CHEB_DEG = 20
_CHEB_EDGES = SERIES_MAX * _CHEB_RATIO ** np.arange(
    int(math.ceil(math.log(ASYMPTOTIC_MIN / SERIES_MAX) / math.log(_CHEB_RATIO))) + 1)


def _build_cheb():
    coef = np.empty((2, len(_CHEB_EDGES) - 1, _CHEB_DEG + 1))
    for nu in (0, 1):
        for k, (a, b) in enumerate(zip(_CHEB_EDGES[:-1], _CHEB_EDGES[1:])):
            def scaled(z, a=a, b=b, nu=nu):
                x = 0.5 * (a + b) + 0.5 * (b - a) * z
                return np.array([math.exp(v) * math.sqrt(v) * _trap(v, nu) for v in x])
            coef[nu, k] = np.polynomial.chebyshev.chebinterpolate(scaled, _CHEB_DEG)
    return coef


_CHEB_COEF = _build_cheb()


@njit(cache=True)
def _cheb(x, nu):
    k = int(math.log(x / SERIES_MAX) / math.log(_CHEB_RATIO))
    if k >= _CHEB_COEF.shape[1]:
        k = _CHEB_COEF.shape[1] - 1
    a = _CHEB_EDGES[k]
    b = _CHEB_EDGES[k + 1]
    z = (2.0 * x - a - b) / (b - a)
    c = _CHEB_COEF[nu, k]
    b1 = 0.0
    b2 = 0.0
    for j in range(c.shape[0] - 1, 0, -1):
        b1, b2 = 2.0 * z * b1 - b2 + c[j], b1
    return (z * b1 - b2 + c[0]) * math.exp(-x) / math.sqrt(x)


@njit(cache=True)
def _asymptotic(x, nu):
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = 1.0
    for k in range(1, 60):
        term *= (mu - (2.0 * k - 1.0) ** 2) / (k * 8.0 * x)
        if abs(term) > abs(prev) or abs(term) < 1e-17 * abs(total):
            break
        total += term
        prev = term
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total


@njit(cache=True)
def k0_scalar(x):
    if x <= SERIES_MAX:
        i0m1, _, s0, _ = _series_parts(x)
        return -(math.log(0.5 * x) + EULER_GAMMA) * (1.0 + i0m1) + s0
    if x <= ASYMPTOTIC_MIN:
        return _cheb(x, 0)
    return _asymptotic(x, 0)


@njit(cache=True)
def k1_scalar(x):
    if x <= SERIES_MAX:
        _, i1, _, s1 = _series_parts(x)
        return 1.0 / x + math.log(0.5 * x) * i1 - 0.25 * x * s1
    if x <= ASYMPTOTIC_MIN:
        return _cheb(x, 1)
    return _asymptotic(x, 1)


@njit(cache=True)
def one_minus_x_k1_scalar(x):
    if x == 0.0:
        return 0.0
    if x <= SERIES_MAX:
        _, i1, _, s1 = _series_parts(x)
        return -x * math.log(0.5 * x) * i1 + 0.25 * x * x * s1
    if x >= _NEGLIGIBLE:
        return 1.0
    return 1.0 - x * k1_scalar(x)


@njit(cache=True)
def log_plus_k0_scalar(x):
    if x == 0.0:
        return math.log(2.0) - EULER_GAMMA
    if x <= SERIES_MAX:
        i0m1, _, s0, _ = _series_parts(x)
        return math.log(2.0) - EULER_GAMMA - (math.log(0.5 * x) + EULER_GAMMA) * i0m1 + s0
    if x >= _NEGLIGIBLE:
        return math.log(x)
    return math.log(x) + k0_scalar(x)


@vectorize(["float64(float64)"], cache=True)
def _k0_ufunc(x):
    return k0_scalar(x)


@vectorize(["float64(float64)"], cache=True)
def _k1_ufunc(x):
    return k1_scalar(x)


@vectorize(["float64(float64)"], cache=True)
def _one_minus_x_k1_ufunc(x):
    return one_minus_x_k1_scalar(x)


@vectorize(["float64(float64)"], cache=True)
def _log_plus_k0_ufunc(x):
    return log_plus_k0_scalar(x)


def _positive(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError(f"{name} is defined for x > 0 only")
    return arr


def _unwrap(out):
    return float(out) if np.ndim(out) == 0 else out


def bessel_k0(x):
    """K0(x) for x > 0 (scalar or array)."""
    return _unwrap(_k0_ufunc(_positive(x, "bessel_k0")))


def bessel_k1(x):
    """K1(x) for x > 0 (scalar or array)."""
    return _unwrap(_k1_ufunc(_positive(x, "bessel_k1")))


def one_minus_x_k1(x):
    """``1 - x K1(x)`` for x >= 0; equals 0 at the origin."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("one_minus_x_k1 needs x >= 0")
    return _unwrap(_one_minus_x_k1_ufunc(arr))


def log_plus_k0(x):
    """``log x + K0(x)`` for x >= 0; finite limit ``log 2 - gamma`` at 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("log_plus_k0 needs x >= 0")
    return _unwrap(_log_plus_k0_ufunc(arr))
