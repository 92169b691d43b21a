"""Point-vortex discretizations of area densities and vortex sheets."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate, optimize

from .kernels import SmoothingKernel, make_blob_kernel

AREA = "area_density"
SHEET = "sheet_curve"

# 4-point Gauss-Legendre nodes/weights on [-1/2, 1/2]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * _GL_X
_GL_W = 0.5 * _GL_W


class DiscretizationError(ValueError):
    pass


@dataclass(frozen=True)
class InitialVorticity:
    """A vorticity measure: an area density on a box or a weighted curve.

    Area densities supply ``density(x, y)`` (vectorized).  An optional
    ``cell_integral(x0, x1, y0, y1)`` returns exact integrals over rectangles
    and replaces the tensor Gauss rule when present.

    Sheets supply ``curve(s) -> (n, 2)`` on ``param_range`` and the circulation
    per unit parameter ``gamma(s)``.  ``cumulative``/``inverse_cumulative``
    are optional closed forms of ``s -> int_a^s gamma``.
    """
    kind: str
    name: str = "custom"
    support_box: tuple = (0.0, 0.0, 0.0, 0.0)  # (xmin, xmax, ymin, ymax)
    sign: str = "nonnegative"
    density: Optional[Callable] = None
    cell_integral: Optional[Callable] = None
    total: Optional[float] = None
    curve: Optional[Callable] = None
    gamma: Optional[Callable] = None
    param_range: tuple = (0.0, 1.0)
    cumulative: Optional[Callable] = None
    inverse_cumulative: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (AREA, SHEET):
            raise DiscretizationError(f"unknown vorticity kind {self.kind!r}")
        if self.sign not in ("nonnegative", "signed"):
            raise DiscretizationError(f"sign must be 'nonnegative' or 'signed', got {self.sign!r}")
        if self.kind == AREA:
            if self.density is None and self.cell_integral is None:
                raise DiscretizationError("area density needs density or cell_integral")
            x0, x1, y0, y1 = self.support_box
            if not (x1 > x0 and y1 > y0):
                raise DiscretizationError(f"degenerate support box {self.support_box}")
        elif self.curve is None or self.gamma is None:
            raise DiscretizationError("sheet needs curve and gamma")


@dataclass(frozen=True, eq=False)
class VortexSystem:
    positions: np.ndarray
    circulations: np.ndarray
    eps: float
    kernel: SmoothingKernel
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        gam = np.array(self.circulations, dtype=float).reshape(-1)
        if len(pos) < 1 or len(pos) != len(gam):
            raise ValueError(f"need N >= 1 with matching lengths, got {len(pos)} positions "
                             f"and {len(gam)} circulations")
        if not (np.isfinite(pos).all() and np.isfinite(gam).all()):
            raise ValueError("positions and circulations must be finite")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be positive and finite, got {self.eps}")
        pos.flags.writeable = False
        gam.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "circulations", gam)
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "time", float(self.time))

    @property
    def n(self):
        return len(self.circulations)

    def moved(self, positions, time):
        return VortexSystem(positions, self.circulations, self.eps, self.kernel, time, self.meta)


# ---------------------------------------------------------------------------
# area densities


def _cell_range(lo, hi, eta, off):
    """Integer indices j whose cells [(j+off-1/2)eta, (j+off+1/2)eta] meet [lo, hi]."""
    j0 = math.floor(lo / eta - off + 0.5)
    j1 = math.ceil(hi / eta - off - 0.5)
    # trim cells that only touch the box edge
    if (j0 + off + 0.5) * eta <= lo:
        j0 += 1
    if (j1 + off - 0.5) * eta >= hi:
        j1 -= 1
    return np.arange(j0, max(j0, j1) + 1)


def _gauss_cells(density, cx, cy, eta):
    """4x4 tensor Gauss integral of ``density`` over squares centred at (cx, cy)."""
    total = np.zeros(cx.shape)
    for xi, wi in zip(_GL_X, _GL_W):
        for yj, wj in zip(_GL_X, _GL_W):
            total += wi * wj * np.asarray(density(cx + xi * eta, cy + yj * eta), dtype=float)
    return total * eta * eta


def discretize_density(iv: InitialVorticity, eta: float, *, drop_tol: float = 0.0,
                       eps: Optional[float] = None, kernel: Optional[SmoothingKernel] = None,
                       offset=(0.0, 0.0)) -> VortexSystem:
    """Sample an area density on squares of side ``eta`` centred at ``(j + offset) * eta``.

    Each vortex carries the integral of the density over its square.  ``eps``
    defaults to ``eta`` and ``kernel`` to the blob.
    """
    if iv.kind != AREA:
        raise DiscretizationError("discretize_density needs an area density")
    if not (eta > 0):
        raise DiscretizationError(f"eta must be positive, got {eta}")
    x0, x1, y0, y1 = iv.support_box
    if eta >= max(x1 - x0, y1 - y0):
        warnings.warn(f"eta = {eta} exceeds the support box; the grid has very few cells",
                      stacklevel=2)
    jx = _cell_range(x0, x1, eta, offset[0])
    jy = _cell_range(y0, y1, eta, offset[1])
    cx, cy = np.meshgrid((jx + offset[0]) * eta, (jy + offset[1]) * eta, indexing="ij")
    cx, cy = cx.ravel(), cy.ravel()
    if iv.cell_integral is not None:
        h = 0.5 * eta
        gam = np.asarray(iv.cell_integral(cx - h, cx + h, cy - h, cy + h), dtype=float)
    else:
        gam = _gauss_cells(iv.density, cx, cy, eta)
    if iv.sign == "nonnegative" and np.any(gam < 0):
        raise DiscretizationError(f"{iv.name}: negative cell circulation for a nonnegative density")
    keep = (gam != 0) & (np.abs(gam) >= drop_tol * eta * eta)
    if not keep.any():
        raise DiscretizationError(f"{iv.name}: every cell was dropped (eta={eta}, drop_tol={drop_tol})")
    meta = {"source": iv.name, "eta": float(eta), "cells": int(len(gam)),
            "dropped": int((~keep).sum()), "dropped_circulation": float(gam[~keep].sum()),
            "grid_total": float(gam.sum())}
    eps = eta if eps is None else eps
    meta["eta_over_eps"] = float(eta / eps)
    return VortexSystem(np.column_stack([cx[keep], cy[keep]]), gam[keep], eps,
                        kernel or make_blob_kernel(), 0.0, meta)


def disc_rectangle_area(radius, x0, x1, y0, y1):
    """Exact area of the disc |x| <= radius intersected with [x0,x1] x [y0,y1]."""
    a, b = max(x0, -radius), min(x1, radius)
    if b <= a or y1 <= y0:
        return 0.0
    r2 = radius * radius

    def point(x):
        # (x, chord half-height, angle); asin(x / radius) loses half its digits near the rim
        half = math.sqrt(max((radius - x) * (radius + x), 0.0))
        return x, half, math.atan2(x, half)

    def arc(p):  # antiderivative of the half-chord
        return 0.5 * (p[0] * p[1] + r2 * p[2])

    cuts = {a: point(a), b: point(b)}
    for y in (y0, y1):
        if abs(y) < radius:
            xc = math.sqrt((radius - abs(y)) * (radius + abs(y)))
            for c in (-xc, xc):
                if a < c < b:
                    cuts[c] = (c, abs(y), math.atan2(c, abs(y)))
    pts = [cuts[k] for k in sorted(cuts)]
    area = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        s = point(0.5 * (lo[0] + hi[0]))[1]
        top_is_chord = s < y1
        bot_is_chord = -s > y0
        if min(s, y1) <= max(-s, y0):
            continue
        width = hi[0] - lo[0]
        area += (arc(hi) - arc(lo)) if top_is_chord else y1 * width
        area -= -(arc(hi) - arc(lo)) if bot_is_chord else y0 * width
    return area


def _uniform_patch(radius=1.0, strength=1.0, center=(0.0, 0.0)):
    radius, strength = float(radius), float(strength)
    if radius <= 0 or strength < 0:
        raise DiscretizationError("uniform_patch needs radius > 0 and strength >= 0")
    ox, oy = map(float, center)

    def density(x, y):
        return strength * (((np.asarray(x) - ox) ** 2 + (np.asarray(y) - oy) ** 2) <= radius ** 2)

    def cells(x0, x1, y0, y1):
        out = np.empty(len(x0))
        for i in range(len(x0)):
            a, b, c, d = x0[i] - ox, x1[i] - ox, y0[i] - oy, y1[i] - oy
            near = math.hypot(min(max(0.0, a), b) if a > 0 or b < 0 else 0.0,
                              min(max(0.0, c), d) if c > 0 or d < 0 else 0.0)
            far = math.hypot(max(abs(a), abs(b)), max(abs(c), abs(d)))
            if near >= radius:
                out[i] = 0.0
            elif far <= radius:
                out[i] = (b - a) * (d - c)
            else:
                out[i] = disc_rectangle_area(radius, a, b, c, d)
        return strength * out

    return InitialVorticity(AREA, "uniform_patch", (ox - radius, ox + radius, oy - radius, oy + radius),
                            density=density, cell_integral=cells, total=strength * math.pi * radius ** 2,
                            params={"radius": radius, "strength": strength, "center": [ox, oy]})


def _gaussian_patch(amplitude=1.0, sigma=1.0, center=(0.0, 0.0), cutoff=6.0):
    amplitude, sigma = float(amplitude), float(sigma)
    if sigma <= 0 or amplitude < 0:
        raise DiscretizationError("gaussian_patch needs sigma > 0 and amplitude >= 0")
    ox, oy = map(float, center)
    rc = cutoff * sigma

    def density(x, y):
        r2 = (np.asarray(x) - ox) ** 2 + (np.asarray(y) - oy) ** 2
        return np.where(r2 <= rc * rc, amplitude * np.exp(-r2 / sigma ** 2), 0.0)

    total = amplitude * math.pi * sigma ** 2 * -math.expm1(-cutoff ** 2)
    return InitialVorticity(AREA, "gaussian_patch", (ox - rc, ox + rc, oy - rc, oy + rc),
                            density=density, total=total,
                            params={"amplitude": amplitude, "sigma": sigma, "center": [ox, oy],
                                    "cutoff": cutoff})


def _uniform_box(box=(0.0, 1.0, 0.0, 1.0), strength=1.0):
    bx0, bx1, by0, by1 = map(float, box)
    strength = float(strength)

    def density(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return strength * ((x >= bx0) & (x <= bx1) & (y >= by0) & (y <= by1))

    def cells(x0, x1, y0, y1):
        w = np.clip(np.minimum(x1, bx1) - np.maximum(x0, bx0), 0.0, None)
        h = np.clip(np.minimum(y1, by1) - np.maximum(y0, by0), 0.0, None)
        return strength * w * h

    return InitialVorticity(AREA, "uniform_box", (bx0, bx1, by0, by1), density=density,
                            cell_integral=cells, total=strength * (bx1 - bx0) * (by1 - by0),
                            sign="nonnegative" if strength >= 0 else "signed",
                            params={"box": [bx0, bx1, by0, by1], "strength": strength})


def density_from_file(path) -> InitialVorticity:
    """Bilinear density from a whitespace table of (x, y, q) on a tensor grid."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 3:
        raise DiscretizationError(f"{path}: expected three columns x y q")
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    if len(xs) * len(ys) != len(data) or len(xs) < 2 or len(ys) < 2:
        raise DiscretizationError(f"{path}: points do not form a full tensor grid")
    q = np.zeros((len(xs), len(ys)))
    q[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
    interp = interpolate.RegularGridInterpolator((xs, ys), q, bounds_error=False, fill_value=0.0)

    def density(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return interp(np.stack([x.ravel(), y.ravel()], axis=1)).reshape(x.shape)

    sign = "nonnegative" if (q >= 0).all() else "signed"
    return InitialVorticity(AREA, f"file:{path}", (xs[0], xs[-1], ys[0], ys[-1]), sign=sign,
                            density=density, params={"path": str(path)})


# ---------------------------------------------------------------------------
# sheets


def _numeric_cumulative(iv):
    a, b = iv.param_range
    grid = np.linspace(a, b, 513)
    steps = np.array([integrate.quad(lambda s: abs(float(iv.gamma(s))), lo, hi, limit=200)[0]
                      for lo, hi in zip(grid[:-1], grid[1:])])
    acc = np.concatenate([[0.0], np.cumsum(steps)])

    def cumulative(s):
        i = min(max(np.searchsorted(grid, s) - 1, 0), len(steps) - 1)
        if s <= grid[i]:
            return acc[i]  # also keeps quad off an integrable endpoint singularity
        return acc[i] + integrate.quad(lambda u: abs(float(iv.gamma(u))), grid[i], s, limit=200)[0]

    def inverse(level):
        i = min(max(np.searchsorted(acc, level) - 1, 0), len(steps) - 1)
        lo, hi = grid[i], grid[i + 1]
        if cumulative(hi) - level <= 0:
            return hi
        return optimize.brentq(lambda s: cumulative(s) - level, lo, hi, xtol=1e-15, rtol=1e-15)

    return cumulative, inverse, acc[-1]


def discretize_sheet(iv: InitialVorticity, n_markers: int, *, eps: float = 0.1,
                     kernel: Optional[SmoothingKernel] = None) -> VortexSystem:
    """Markers at equal increments of cumulative |circulation| along a sheet.

    Marker k sits at the curve point where the cumulative |circulation|
    reaches (k - 1/2)/n of the total and carries the signed circulation of
    its piece.
    """
    if iv.kind != SHEET:
        raise DiscretizationError("discretize_sheet needs a sheet_curve")
    if int(n_markers) != n_markers or n_markers < 2:
        raise DiscretizationError(f"n_markers must be an integer >= 2, got {n_markers}")
    n = int(n_markers)
    a, b = iv.param_range
    if iv.cumulative is not None and iv.inverse_cumulative is not None and iv.sign == "nonnegative":
        cumulative, inverse = iv.cumulative, iv.inverse_cumulative
        total = float(cumulative(b))
    else:
        cumulative, inverse, total = _numeric_cumulative(iv)
    if not (total > 0):
        raise DiscretizationError(f"{iv.name}: sheet carries zero circulation")
    step = total / n
    s_mid = np.array([inverse((k + 0.5) * step) for k in range(n)], dtype=float)
    if iv.sign == "nonnegative":
        gam = np.full(n, step)
    else:
        edges = [a] + [inverse((k + 1) * step) for k in range(n - 1)] + [b]
        gam = np.array([integrate.quad(lambda s: float(iv.gamma(s)), lo, hi, limit=200)[0]
                        for lo, hi in zip(edges[:-1], edges[1:])])
    pos = np.asarray(iv.curve(s_mid), dtype=float).reshape(n, 2)
    meta = {"source": iv.name, "n_markers": n, "sheet_total": float(total)}
    return VortexSystem(pos, gam, eps, kernel or make_blob_kernel(), 0.0, meta)


def _flat_sheet(half_length=1.0, density=1.0, profile="uniform"):
    half, dens = float(half_length), float(density)
    if half <= 0 or dens <= 0:
        raise DiscretizationError("flat_sheet needs half_length > 0 and density > 0")

    def curve(s):
        s = np.asarray(s, dtype=float)
        return np.stack([s, np.zeros_like(s)], axis=-1)

    if profile == "uniform":
        gamma = lambda s: dens + 0.0 * np.asarray(s, dtype=float)  # noqa: E731
        cum = lambda s: dens * (s + half)  # noqa: E731
        inv = lambda c: c / dens - half  # noqa: E731
    elif profile == "elliptic":
        # density / sqrt(1 - (x/L)^2): the cumulative is an arcsine
        def gamma(s):
            with np.errstate(divide="ignore"):
                return dens / np.sqrt(1.0 - (np.asarray(s, dtype=float) / half) ** 2)

        def cum(s):
            return dens * half * (math.asin(min(max(s / half, -1.0), 1.0)) + 0.5 * math.pi)

        def inv(c):
            return -half * math.cos(c / (dens * half))
    else:
        raise DiscretizationError(f"flat_sheet profile must be 'uniform' or 'elliptic', got {profile!r}")
    return InitialVorticity(SHEET, "flat_sheet", (-half, half, 0.0, 0.0), curve=curve, gamma=gamma,
                            param_range=(-half, half), cumulative=cum, inverse_cumulative=inv,
                            params={"half_length": half, "density": dens, "profile": profile})


def _circular_sheet(radius=1.0, density=1.0, center=(0.0, 0.0)):
    rad, dens = float(radius), float(density)
    if rad <= 0 or dens <= 0:
        raise DiscretizationError("circular_sheet needs radius > 0 and density > 0")
    ox, oy = map(float, center)

    def curve(th):
        th = np.asarray(th, dtype=float)
        return np.stack([ox + rad * np.cos(th), oy + rad * np.sin(th)], axis=-1)

    lin = dens * rad  # circulation per radian
    return InitialVorticity(SHEET, "circular_sheet", (ox - rad, ox + rad, oy - rad, oy + rad),
                            curve=curve, gamma=lambda th: lin + 0.0 * np.asarray(th, dtype=float),
                            param_range=(0.0, 2.0 * math.pi), cumulative=lambda th: lin * th,
                            inverse_cumulative=lambda c: c / lin,
                            params={"radius": rad, "density": dens, "center": [ox, oy]})


BUILTINS = {
    "uniform_patch": _uniform_patch,
    "gaussian_patch": _gaussian_patch,
    "uniform_box": _uniform_box,
    "flat_sheet": _flat_sheet,
    "circular_sheet": _circular_sheet,
}


def builtin_initial_data(name: str, **params) -> InitialVorticity:
    """Canonical nonnegative, compactly supported initial data.

    uniform_patch(radius=1, strength=1, center=(0, 0))
        strength on the disc of the given radius.
    gaussian_patch(amplitude=1, sigma=1, center=(0, 0), cutoff=6)
        amplitude * exp(-|x - center|^2 / sigma^2), truncated at cutoff * sigma.
    uniform_box(box=(0, 1, 0, 1), strength=1)
        strength on an axis-aligned rectangle.
    flat_sheet(half_length=1, density=1, profile="uniform" | "elliptic")
        sheet on [-L, L] x {0}; the elliptic profile is density / sqrt(1 - (x/L)^2).
    circular_sheet(radius=1, density=1, center=(0, 0))
        uniform sheet on a circle, parameterized by angle.
    """
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise DiscretizationError(f"unknown initial data {name!r}; available: "
                                  f"{', '.join(sorted(BUILTINS))}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise DiscretizationError(f"{name}: {exc}") from None


def discretize(iv: InitialVorticity, *, eta: Optional[float] = None, n_markers: Optional[int] = None,
               eps: Optional[float] = None, kernel: Optional[SmoothingKernel] = None,
               drop_tol: float = 0.0) -> VortexSystem:
    if iv.kind == AREA:
        if eta is None:
            raise DiscretizationError("area densities need eta")
        return discretize_density(iv, eta, drop_tol=drop_tol, eps=eps, kernel=kernel)
    if n_markers is None:
        raise DiscretizationError("sheets need n_markers")
    return discretize_sheet(iv, n_markers, eps=0.1 if eps is None else eps, kernel=kernel)
