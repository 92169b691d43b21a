"""Smoothing-kernel families and the filtered Biot-Savart / Green kernels.

A kernel is described by its radial profile ``h_r`` at scale 1. Everything the
dynamics needs follows from two radial functions:

* ``P_K(r) = 2 pi int_0^r s h_r(s) ds``, the h-mass inside radius r, so that
  ``K^eps(x) = K(x) P_K(|x|/eps)``;
* ``G_r(r)``, the radial Green profile with ``G_r'(r) = P_K(r) / (2 pi r)``,
  normalised so that ``G_r(r) - log(r)/(2 pi) -> 0`` at infinity.

Built-in kernels have closed forms. Custom kernels are tabulated on a
log-spaced grid and evaluated with cubic Hermite interpolation in ``log r``
using the exact slopes ``dP/dlog r = 2 pi r^2 h_r(r)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit
from scipy import integrate, optimize

from .bessel import bessel_k0, log_plus_k0_scalar, one_minus_x_k1_scalar

TWO_PI = 2.0 * math.pi

# kernel kinds understood by the compiled pair loops
UNFILTERED = -1
BLOB = 0
ALPHA = 1
TABLE = 2

# layout of the scalar parameter vector for TABLE kernels
_U0, _DU, _A_TAIL, _P_TAIL, _P_HEAD, _Q_HEAD, _G_HEAD, _G_ORIGIN, _R_MIN, _R_MAX = range(10)

_EMPTY_TAB = np.zeros((3, 2))
_EMPTY_TP = np.zeros(10)


class KernelError(ValueError):
    """Raised when a radial profile cannot define a smoothing kernel."""


@dataclass(frozen=True, eq=False)
class SmoothingKernel:
    name: str
    kind: int
    h_radial: Callable
    has_origin_singularity: bool = False
    g_origin_finite: bool = True
    mass_scale: float = 1.0
    tab: np.ndarray = field(default=_EMPTY_TAB, repr=False)
    tp: np.ndarray = field(default=_EMPTY_TP, repr=False)
    source: str = ""

    def pk(self, r):
        """Radial velocity profile P_K at scale 1."""
        return _apply(_pk_many, self, r)

    def g_radial(self, r):
        """Radial Green profile G_r at scale 1."""
        r_arr = np.asarray(r, dtype=float)
        if not self.g_origin_finite and np.any(r_arr == 0):
            raise ValueError(f"G_r(0) is not finite for kernel {self.name!r}")
        return _apply(_g_many, self, r_arr)


@dataclass
class AdmissibilityReport:
    l1_mass: float
    w1_l1: float
    w3_linf: float
    positive: bool
    passed: bool
    inconclusive: bool = False
    notes: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# compiled radial profiles


@njit(cache=True)
def _hermite(u, u0, du, tab, iy, im, mscale):
    # cubic Hermite on row iy of tab with slopes mscale * tab[im]; indexes rows
    # in place because slicing allocates inside the pair loops
    n = tab.shape[1]
    s = (u - u0) / du
    i = int(math.floor(s))
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    s -= i
    s2 = s * s
    s3 = s2 * s
    dm = du * mscale
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * tab[iy, i] + (s3 - 2.0 * s2 + s) * dm * tab[im, i]
            + (-2.0 * s3 + 3.0 * s2) * tab[iy, i + 1] + (s3 - s2) * dm * tab[im, i + 1])


@njit(cache=True)
def _table_pk(s, tab, tp):
    if s <= 0.0:
        return 0.0
    if s < tp[_R_MIN]:
        return tp[_P_HEAD] * (s / tp[_R_MIN]) ** tp[_Q_HEAD]
    if s > tp[_R_MAX]:
        if tp[_A_TAIL] <= 0.0:
            return 1.0
        return 1.0 - tp[_A_TAIL] * (s / tp[_R_MAX]) ** (-tp[_P_TAIL])
    return _hermite(math.log(s), tp[_U0], tp[_DU], tab, 0, 1, 1.0)


@njit(cache=True)
def _table_g(s, tab, tp):
    if s == 0.0:
        return tp[_G_ORIGIN]
    if s < tp[_R_MIN]:
        q = tp[_Q_HEAD]
        return tp[_G_HEAD] - tp[_P_HEAD] / (TWO_PI * q) * (1.0 - (s / tp[_R_MIN]) ** q)
    if s > tp[_R_MAX]:
        tail = 0.0
        if tp[_A_TAIL] > 0.0:
            tail = tp[_A_TAIL] / tp[_P_TAIL] * (s / tp[_R_MAX]) ** (-tp[_P_TAIL])
        return (math.log(s) + tail) / TWO_PI
    return _hermite(math.log(s), tp[_U0], tp[_DU], tab, 2, 0, 1.0 / TWO_PI)


@njit(cache=True)
def pk_scalar(kind, s, tab, tp):
    if kind == BLOB:
        s2 = s * s
        return s2 / (s2 + 1.0)
    if kind == ALPHA:
        return one_minus_x_k1_scalar(s)
    if kind == TABLE:
        return _table_pk(s, tab, tp)
    return 1.0


@njit(cache=True)
def g_scalar(kind, s, tab, tp):
    if kind == BLOB:
        return math.log1p(s * s) / (2.0 * TWO_PI)
    if kind == ALPHA:
        return log_plus_k0_scalar(s) / TWO_PI
    if kind == TABLE:
        return _table_g(s, tab, tp)
    return math.log(s) / TWO_PI


@njit(cache=True)
def _pk_many(kind, s, tab, tp):
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        out[i] = pk_scalar(kind, s[i], tab, tp)
    return out


@njit(cache=True)
def _g_many(kind, s, tab, tp):
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        out[i] = g_scalar(kind, s[i], tab, tp)
    return out


def _apply(fn, kernel, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("radial argument must be nonnegative")
    out = fn(kernel.kind, np.ascontiguousarray(r_arr.ravel()), kernel.tab, kernel.tp)
    return float(out[0]) if r_arr.ndim == 0 else out.reshape(r_arr.shape)


# ---------------------------------------------------------------------------
# built-in kernels


def _blob_h(r):
    r = np.asarray(r, dtype=float)
    return 1.0 / (math.pi * (r * r + 1.0) ** 2)


def _alpha_h(r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("the alpha profile K0(r)/(2 pi) is singular at r = 0")
    return bessel_k0(r_arr) / TWO_PI


def make_blob_kernel() -> SmoothingKernel:
    """Vortex-blob filter h(x) = 1 / (pi (|x|^2 + 1)^2)."""
    return SmoothingKernel(name="blob", kind=BLOB, h_radial=_blob_h, source="blob")


def make_alpha_kernel() -> SmoothingKernel:
    """Euler-alpha filter h(x) = K0(|x|) / (2 pi)."""
    return SmoothingKernel(name="alpha", kind=ALPHA, h_radial=_alpha_h,
                           has_origin_singularity=True, source="alpha")


def make_unfiltered_kernel() -> SmoothingKernel:
    """The singular Biot-Savart kernel (P_K = 1); used only as a limit reference."""
    return SmoothingKernel(name="unfiltered", kind=UNFILTERED, h_radial=lambda r: np.zeros_like(r),
                           g_origin_finite=False, source="unfiltered")


# ---------------------------------------------------------------------------
# custom kernels

_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)
_SPLIT = 0.5 * (3.0 - math.sqrt(5.0))


def _interval_integrals(f, a, b, rule):
    x, w = rule
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    return half * (f(nodes) @ w)


def _adaptive_gl(f, a, b, tol=1e-15, max_depth=80):
    """Split until a 16-point Gauss-Legendre estimate matches its two parts.

    Comparing against the parts (not against a lower-order rule on the same
    interval) keeps a jump discontinuity from going unnoticed: the interval
    holding it keeps being split until its contribution is negligible.
    """

    def gl(lo, hi):
        return _interval_integrals(f, np.array([lo]), np.array([hi]), _GL16)[0]

    total = 0.0
    stack = [(a, b, gl(a, b), 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        # off-centre split: a jump sitting on a symmetric split point can fool the test
        mid = lo + _SPLIT * (hi - lo)
        left, right = gl(lo, mid), gl(mid, hi)
        if abs(left + right - whole) <= tol + 1e-13 * abs(whole) or depth >= max_depth:
            total += left + right
        else:
            stack.append((mid, hi, right, depth + 1))
            stack.append((lo, mid, left, depth + 1))
    return total


def _quad_checked(f, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(lambda s: float(f(s)), a, b, epsabs=kw.get("epsabs", 1e-13),
                                      epsrel=kw.get("epsrel", 1e-12), limit=kw.get("limit", 400))
            ok = math.isfinite(val)
        except integrate.IntegrationWarning:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(lambda s: float(f(s)), a, b, limit=kw.get("limit", 400))
            ok = False
    return val, err, ok


def make_custom_kernel(h_radial: Callable, *, name: str = "custom", r_min: float = 1e-6,
                       r_max: float = 200.0, du: float = 0.01, mass_tol: float = 1e-10,
                       source: str = "") -> SmoothingKernel:
    """Tabulate P_K and G_r for an arbitrary nonnegative radial profile.

    ``h_radial`` must accept numpy arrays of r > 0. The profile is rescaled to
    unit mass when its integral differs from 1 by more than ``mass_tol``; the
    applied factor is kept in ``mass_scale``.
    """
    n = int(math.ceil((math.log(r_max) - math.log(r_min)) / du)) + 1
    u = np.linspace(math.log(r_min), math.log(r_max), n)
    du = u[1] - u[0]
    r = np.exp(u)

    def h(x):
        return np.asarray(h_radial(np.asarray(x, dtype=float)), dtype=float)

    hr = h(r)
    if not np.all(np.isfinite(hr)):
        raise KernelError("profile is not finite on (0, r_max]")
    if np.any(hr < 0):
        raise KernelError("profile takes negative values; only nonnegative filters are supported")

    def dmass_du(uu):
        rr = np.exp(uu)
        return TWO_PI * rr * rr * h(rr)

    head, _, ok_head = _quad_checked(lambda s: TWO_PI * s * h(s), 0.0, r_min)
    if not ok_head:
        raise KernelError("s*h(s) is not integrable at the origin")
    a, b = u[:-1], u[1:]
    pieces = _interval_integrals(dmass_du, a, b, _GL16)
    coarse = _interval_integrals(dmass_du, a, b, _GL8)
    for i in np.nonzero(np.abs(pieces - coarse) > 1e-14 + 1e-12 * np.abs(pieces))[0]:
        pieces[i] = _adaptive_gl(lambda x: TWO_PI * x * h(x), r[i], r[i + 1])
    # decades first so that kinks or cut-offs of tabulated profiles are resolved
    far_edge = r_max * 1e6
    edges = np.geomspace(r_max, far_edge, 7)
    tail = sum(_adaptive_gl(lambda x: TWO_PI * x * h(x), lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    rest, err, ok_tail = _quad_checked(lambda s: TWO_PI * s * h(s), far_edge, np.inf)
    # quad may only complain about round-off on a negligible remainder
    ok_tail = ok_tail or (math.isfinite(rest) and abs(rest) + err < 1e-10)
    tail += rest
    if not ok_tail or not math.isfinite(tail):
        raise KernelError("cumulative mass diverges: profile is not integrable")

    cumulative = head + np.concatenate([[0.0], np.cumsum(pieces)])
    total = cumulative[-1] + tail
    if not total > 0:
        raise KernelError("profile has zero mass")
    scale = 1.0 / total if abs(total - 1.0) > mass_tol else 1.0

    p = cumulative * scale
    dp = TWO_PI * r * r * hr * scale
    dp = _monotone_slopes(p, dp, du)

    # power-law tail 1 - P(r) = a_tail (r / r_max)^(-p_tail); below round-off it is dropped
    a_tail = tail * scale if tail * scale > 1e-14 else 0.0
    p_tail = TWO_PI * r[-1] ** 2 * hr[-1] * scale / a_tail if a_tail > 0 else 0.0
    if a_tail > 0 and p_tail <= 0:
        raise KernelError("cannot extrapolate the mass tail beyond r_max")
    q_head = dp[0] / p[0] if p[0] > 0 else 2.0

    # G_r(r) = (log r + int_r^inf (1 - P(s)) ds/s) / (2 pi); Hermite-exact cell integrals
    f = 1.0 - p
    fp = -dp
    cells = du * 0.5 * (f[:-1] + f[1:]) + du * du * (fp[:-1] - fp[1:]) / 12.0
    far = a_tail / p_tail if a_tail > 0 else 0.0
    tail_integral = far + np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    g = (u + tail_integral) / TWO_PI
    g_origin = g[0] - p[0] / (TWO_PI * q_head)

    tab = np.ascontiguousarray(np.vstack([p, dp, g]))
    tp = np.zeros(10)
    tp[_U0], tp[_DU] = u[0], du
    tp[_A_TAIL], tp[_P_TAIL] = a_tail, p_tail
    tp[_P_HEAD], tp[_Q_HEAD], tp[_G_HEAD], tp[_G_ORIGIN] = p[0], q_head, g[0], g_origin
    tp[_R_MIN], tp[_R_MAX] = r_min, r_max

    with np.errstate(all="ignore"):
        h0 = h(np.array([1e-12]))[0]
    singular = not math.isfinite(h0) or h0 > hr[0] * (1.0 + 1e-6) + 1e-300

    def h_scaled(x):
        return scale * h(x)

    return SmoothingKernel(name=name, kind=TABLE, h_radial=h_scaled, has_origin_singularity=singular,
                           g_origin_finite=bool(q_head > 0 and math.isfinite(g_origin)),
                           mass_scale=scale, tab=tab, tp=tp, source=source or name)


def _monotone_slopes(p, dp, du):
    """Limit Hermite slopes so the interpolant of a monotone table stays monotone."""
    dp = dp.copy()
    delta = np.diff(p) / du
    for i, d in enumerate(delta):
        if d <= 0:
            dp[i] = dp[i + 1] = 0.0
            continue
        al, be = dp[i] / d, dp[i + 1] / d
        ss = al * al + be * be
        if ss > 9.0:
            t = 3.0 / math.sqrt(ss)
            dp[i] = t * al * d
            dp[i + 1] = t * be * d
    return dp


def tabulated_profile(path) -> Callable:
    """Radial profile from a two-column text table ``r h_r(r)``.

    Linear interpolation between rows; constant below the first radius,
    zero beyond the last.
    """
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise KernelError(f"{path}: expected two columns (r, h_r)")
    order = np.argsort(data[:, 0])
    rs, hs = data[order, 0], data[order, 1]

    def h(r):
        return np.interp(r, rs, hs, left=hs[0], right=0.0)

    return h


def load_kernel(selection: str) -> SmoothingKernel:
    """Kernel from a selection string: ``blob``, ``alpha`` or ``custom:<path>``."""
    selection = selection.strip()
    if selection == "blob":
        return make_blob_kernel()
    if selection == "alpha":
        return make_alpha_kernel()
    if selection == "unfiltered":
        return make_unfiltered_kernel()
    if selection.startswith("custom:"):
        path = Path(selection[len("custom:"):])
        if not path.is_file():
            raise FileNotFoundError(f"kernel table not found: {path}")
        return make_custom_kernel(tabulated_profile(path), name=f"custom:{path}", source=selection)
    raise KernelError(f"unknown kernel {selection!r}; expected 'blob', 'alpha' or 'custom:<path>'")


# ---------------------------------------------------------------------------
# filtered kernels


def biot_savart(x):
    """Unfiltered K(x) = x^perp / (2 pi |x|^2); x has shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    perp = np.stack([-x[..., 1], x[..., 0]], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return perp / (TWO_PI * r2)[..., None]


def eval_K_eps(kernel: SmoothingKernel, x, eps: float):
    """Filtered Biot-Savart kernel K^eps(x) = K(x) P_K(|x|/eps); zero at x = 0."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    r = np.sqrt(r2)
    p = kernel.pk(r / eps)
    perp = np.stack([-x[..., 1], x[..., 0]], axis=-1)
    safe = np.where(r2 > 0, r2, 1.0)
    return np.where((r2 > 0)[..., None], perp * (p / (TWO_PI * safe))[..., None], 0.0)


def eval_G_eps(kernel: SmoothingKernel, r, eps: float):
    """Filtered Green function G^eps(r) = G_r(r/eps) + log(eps)/(2 pi)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    if np.any(r == 0) and not kernel.g_origin_finite:
        raise ValueError(f"G^eps(0) is undefined for kernel {kernel.name!r}")
    out = kernel.g_radial(r / eps) + math.log(eps) / TWO_PI
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# admissibility


def _radial_integral(f, r, r_min=1e-6):
    """int_0^r f with quad near the origin and adaptive Gauss-Legendre on decades.

    The adaptive rule resolves the kinks of tabulated profiles that defeat quad.
    """
    if r <= r_min:
        val, _, ok = _quad_checked(f, 0.0, r)
        return val, ok
    val, _, ok = _quad_checked(f, 0.0, r_min)
    edges = np.geomspace(r_min, r, max(2, int(math.ceil(math.log10(r / r_min))) + 1))
    val += sum(_adaptive_gl(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    return val, ok


def radial_mass(h: Callable, radii) -> np.ndarray:
    """2 pi int_0^r s h(s) ds at each radius, computed directly from the profile.

    Radii are visited in increasing order and the integral is accumulated
    piece by piece, so many radii cost about as much as the largest one.
    """
    radii = np.asarray(radii, dtype=float)
    f = lambda s: TWO_PI * s * h(s)  # noqa: E731
    flat = radii.ravel()
    order = np.argsort(flat)
    out = np.empty(len(flat))
    r_min = 1e-6
    acc, pos = 0.0, 0.0
    for k in order:
        r = flat[k]
        if r <= r_min:
            acc = _quad_checked(f, 0.0, r)[0] if r > 0 else 0.0
            pos = r
        else:
            if pos < r_min:
                acc = _quad_checked(f, 0.0, r_min)[0]
                pos = r_min
            edges = np.geomspace(pos, r, max(2, int(math.ceil(math.log10(r / pos))) + 1)) if r > pos else []
            acc += sum(_adaptive_gl(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
            pos = r
        out[k] = acc
    return out.reshape(radii.shape)


def _moment(h, k, r_max, notes, label):
    """2 pi int_0^inf s^(1+k) h(s) ds with a doubling-sequence divergence probe."""

    def f(s):
        return TWO_PI * s ** (1 + k) * h(s)

    body, ok = _radial_integral(f, r_max)
    incs = []
    lo = r_max
    for _ in range(6):
        val, _, good = _quad_checked(f, lo, 2 * lo)
        incs.append(val)
        ok &= good
        lo *= 2
    if incs[-2] > 0 and incs[-1] / incs[-2] > 2.0 ** -0.25:
        notes.append(f"{label}: increments over doublings do not decay (ratio "
                     f"{incs[-1] / incs[-2]:.3g}); divergent")
        return math.inf, True
    tail, _, good = _quad_checked(f, r_max, np.inf)
    if not good:
        notes.append(f"{label}: tail quadrature did not converge")
        return float(body + tail), False
    if not ok:
        notes.append(f"{label}: body quadrature did not converge")
    return float(body + tail), ok


def _weighted_sup(h, r_max, notes):
    r = np.geomspace(1e-8, 64 * r_max, 6000)
    with np.errstate(all="ignore"):
        g = r ** 3 * h(r)
    if not np.all(np.isfinite(g)):
        notes.append("w3: |x|^3 h is not finite on the sample grid")
        return math.inf
    i = int(np.argmax(g))
    if i >= len(r) - 3:
        notes.append("w3: |x|^3 h still growing at the end of the sample range; unbounded")
        return math.inf
    lo, hi = r[max(i - 1, 0)], r[i + 1]
    res = optimize.minimize_scalar(lambda s: -float(s ** 3 * h(np.array([s]))[0]), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return max(float(-res.fun), float(g[i]))


def check_admissibility(kernel: SmoothingKernel, r_max: float = 1e3) -> AdmissibilityReport:
    """Check positivity, unit mass, |x| h in L^1 and |x|^3 h in L^inf."""
    notes: list[str] = []
    h = kernel.h_radial
    probe = np.geomspace(1e-6, r_max, 2000)
    hp = np.asarray(h(probe), dtype=float)
    # exact zeros are tolerated only where the profile has already underflowed
    last_nonzero = np.maximum.accumulate(np.where(hp > 0, np.arange(len(hp)), 0))
    underflowed = (hp == 0) & (hp[last_nonzero] < 1e-250)
    positive = bool(np.all((hp > 0) | underflowed))
    if not positive:
        notes.append("profile is not strictly positive on (0, r_max]")
    mass, ok_mass = _moment(h, 0, r_max, notes, "mass")
    w1, ok_w1 = _moment(h, 1, r_max, notes, "w1")
    w3 = _weighted_sup(h, r_max, notes)
    inconclusive = not (ok_mass and ok_w1)
    passed = (math.isfinite(mass) and math.isfinite(w1) and math.isfinite(w3)
              and positive and not inconclusive)
    if math.isfinite(mass) and abs(mass - 1.0) > 1e-8:
        notes.append(f"mass {mass:.12g} differs from 1")
    return AdmissibilityReport(l1_mass=mass, w1_l1=w1, w3_linf=w3, positive=positive,
                               passed=bool(passed), inconclusive=inconclusive, notes=notes)
