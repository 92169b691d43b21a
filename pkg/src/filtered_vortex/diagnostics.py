"""Conserved quantities, disc-circulation maxima and weak-form residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import pairwise
from .discretization import VortexSystem
from .dynamics import Trajectory
from .kernels import make_unfiltered_kernel

# open discs are realized as closed discs of radius r (1 - _OPEN)
_OPEN = 1e-9
_ENDPOINT_TOL = 1e-12


class DiagnosticsError(ValueError):
    pass


@dataclass
class DiagnosticsRecord:
    t: float
    total_circulation: float
    second_moment: float
    centroid: np.ndarray
    hamiltonian: float
    hamiltonian_defined: bool = True
    vmf_samples: Optional[np.ndarray] = None  # rows (r, M_r)

    def row(self):
        return (self.t, self.total_circulation, self.second_moment,
                float(self.centroid[0]), float(self.centroid[1]), self.hamiltonian)


def hamiltonian(system: VortexSystem, workers: int = 1) -> float:
    """-sum over m != n of gam_m gam_n G^eps(|x_m - x_n|); NaN where undefined."""
    if not system.kernel.g_origin_finite and system.n > 1:
        d = system.positions[:, None, :] - system.positions[None, :, :]
        coincident = (d[..., 0] == 0) & (d[..., 1] == 0)
        np.fill_diagonal(coincident, False)
        if coincident.any():
            return math.nan
    return -pairwise.pair_energy(system.positions, system.circulations, system.eps, system.kernel,
                                 workers=workers)


def conserved_quantities(system: VortexSystem, workers: int = 1) -> DiagnosticsRecord:
    gam = system.circulations
    pos = system.positions
    h = hamiltonian(system, workers)
    return DiagnosticsRecord(
        t=system.time,
        total_circulation=float(gam.sum()),
        second_moment=float(np.dot(gam, (pos * pos).sum(axis=1))),
        centroid=gam @ pos,
        hamiltonian=h,
        hamiltonian_defined=not math.isnan(h),
    )


# ---------------------------------------------------------------------------
# maximal function


def _require_nonnegative(gam):
    if np.any(np.asarray(gam) < 0):
        raise DiagnosticsError("disc-circulation maxima need nonnegative circulations; the decay "
                               "estimate holds only for vorticity of one sign")


def _grid_max(pos, gam, r, resolution):
    lo = pos.min(axis=0) - r
    hi = pos.max(axis=0) + r
    xs = np.arange(lo[0], hi[0] + resolution, resolution)
    ys = np.arange(lo[1], hi[1] + resolution, resolution)
    best = 0.0
    for x in xs:
        centres = np.column_stack([np.full(len(ys), x), ys])
        d2 = ((centres[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(((d2 < r * r) * gam).sum(axis=1).max()))
    return best


def vorticity_maximal(system: VortexSystem, radii: Sequence[float], *, mode: str = "exact",
                      resolution: float = 0.005) -> np.ndarray:
    """Rows (r, M(r)) with M(r) the largest circulation in an open disc of radius r.

    ``mode="exact"`` tests every centre an optimal disc can be slid to (one
    atom at the centre, or two on the boundary).  ``mode="grid"`` scans centres
    on a square grid of the given resolution and can only under-estimate.
    """
    _require_nonnegative(system.circulations)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if np.any(~(radii > 0)):
        raise DiagnosticsError("radii must be positive")
    pos, gam = system.positions, system.circulations
    out = np.empty((len(radii), 2))
    for k, r in enumerate(radii):
        if mode == "exact":
            val = pairwise.max_disc_circulation(pos, gam, r * (1.0 - _OPEN))
        elif mode == "grid":
            val = _grid_max(pos, gam, r, resolution)
        else:
            raise DiagnosticsError(f"mode must be 'exact' or 'grid', got {mode!r}")
        out[k] = (r, val)
    return out


@dataclass
class DecayReport:
    c0: float
    c_margin: float
    worst_ratio: float
    worst_time: float
    worst_radius: float
    passed: bool
    radii: np.ndarray
    samples: np.ndarray  # rows (t, r, M_r)
    notes: list = field(default_factory=list)


def decay_bound(r, eps):
    return 1.0 / math.sqrt(math.log(1.0 / (2.0 * r + eps)))


def decay_bound_check(trajectory: Trajectory, radii: Sequence[float], *, c_margin: float = 1.5,
                      samples: Optional[np.ndarray] = None) -> DecayReport:
    """Fit c0 at the first snapshot and monitor M(r, t) <= c_margin c0 [log 1/(2r + eps)]^(-1/2).

    ``samples`` may pass precomputed (t, r, M_r) rows in snapshot-major order.
    """
    _require_nonnegative(trajectory.circulations)
    eps = trajectory.eps
    notes = []
    used = []
    for r in np.asarray(radii, dtype=float).reshape(-1):
        if not (0 < r <= 0.25):
            notes.append(f"r = {r!r} excluded: outside (0, 1/4]")
        elif 2 * r + eps >= 1:
            notes.append(f"r = {r!r} excluded: 2r + eps >= 1 makes the bound vacuous")
        else:
            used.append(float(r))
    if not used:
        raise DiagnosticsError("no admissible radii: " + "; ".join(notes))
    used = np.array(used)
    if samples is None:
        rows = []
        for i in range(len(trajectory)):
            vmf = vorticity_maximal(trajectory.state(i), used)
            rows.extend((trajectory.times[i], r, m) for r, m in vmf)
        samples = np.array(rows)
    table = samples[:, 2].reshape(len(trajectory), len(used))
    bounds = np.array([decay_bound(r, eps) for r in used])
    c0 = float((table[0] / bounds).max())
    ratio = table / (c0 * bounds) if c0 > 0 else np.zeros_like(table)
    i, k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    worst = float(ratio[i, k])
    return DecayReport(c0, c_margin, worst, float(trajectory.times[i]), float(used[k]),
                       worst <= c_margin, used, samples, notes)


# ---------------------------------------------------------------------------
# weak form


def _smooth_step_bump(t, t0, t1):
    """C-infinity bump on (t0, t1) with peak 1, and its derivative."""
    t = np.asarray(t, dtype=float)
    s = (2.0 * t - t0 - t1) / (t1 - t0)
    inside = np.abs(s) < 1
    val = np.zeros_like(s)
    der = np.zeros_like(s)
    si = s[inside]
    one = 1.0 - si * si
    val[inside] = np.exp(1.0 - 1.0 / one)
    der[inside] = val[inside] * (-2.0 * si / one ** 2) * 2.0 / (t1 - t0)
    return val, der


@dataclass(frozen=True)
class BumpTestFunction:
    """psi(x, t) = tau(t) * amplitude * (1 - |x - c|^2 / R^2)^3 inside the disc.

    tau is the smooth bump exp(1 - 1/(1 - s^2)) on (t0, t1).
    """
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    amplitude: float = 1.0
    t0: float = 0.0
    t1: float = 1.0

    @property
    def ident(self):
        return (f"bump(center={list(self.center)!r}, radius={self.radius!r}, "
                f"amplitude={self.amplitude!r}, t=({self.t0!r}, {self.t1!r}))")

    def _space(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center, dtype=float)
        q = (d * d).sum(axis=-1) / self.radius ** 2
        w = np.clip(1.0 - q, 0.0, None)
        return d, w

    def value(self, x, t):
        _, w = self._space(x)
        return float(_smooth_step_bump(t, self.t0, self.t1)[0]) * self.amplitude * w ** 3

    def grad(self, x, t):
        d, w = self._space(x)
        tau = float(_smooth_step_bump(t, self.t0, self.t1)[0])
        return (tau * self.amplitude * -6.0 / self.radius ** 2 * w * w)[..., None] * d

    def time_derivative(self, x, t):
        _, w = self._space(x)
        return float(_smooth_step_bump(t, self.t0, self.t1)[1]) * self.amplitude * w ** 3

    def hessian_sup(self, t):
        # eigenvalues -6A/R^2 (1-q)^2 and -6A/R^2 (1-q)(1-5q) peak in size at q = 0
        tau = float(_smooth_step_bump(t, self.t0, self.t1)[0])
        return 6.0 * abs(self.amplitude * tau) / self.radius ** 2


@dataclass(frozen=True)
class QuadraticTestFunction:
    """psi(x, t) = tau(t) |x - c|^2 / 2 with the same time bump (not compact in space)."""
    center: tuple = (0.0, 0.0)
    t0: float = 0.0
    t1: float = 1.0

    @property
    def ident(self):
        return f"quadratic(center={list(self.center)!r}, t=({self.t0!r}, {self.t1!r}))"

    def value(self, x, t):
        d = np.asarray(x, dtype=float) - np.asarray(self.center, dtype=float)
        return float(_smooth_step_bump(t, self.t0, self.t1)[0]) * 0.5 * (d * d).sum(axis=-1)

    def grad(self, x, t):
        d = np.asarray(x, dtype=float) - np.asarray(self.center, dtype=float)
        return float(_smooth_step_bump(t, self.t0, self.t1)[0]) * d

    def time_derivative(self, x, t):
        d = np.asarray(x, dtype=float) - np.asarray(self.center, dtype=float)
        return float(_smooth_step_bump(t, self.t0, self.t1)[1]) * 0.5 * (d * d).sum(axis=-1)

    def hessian_sup(self, t):
        return abs(float(_smooth_step_bump(t, self.t0, self.t1)[0]))


@dataclass
class WeakResidualReport:
    test_function_id: str
    w_linear: float
    w_nonlinear: float
    residual: float
    quadrature_dt: float
    filtered: bool
    max_bound_ratio: float  # max |H| / (sup|Hess psi| / 4 pi); at most 1


def weak_residual(trajectory: Trajectory, psi, *, filtered: bool = True,
                  workers: int = 1) -> WeakResidualReport:
    """Linear and nonlinear weak-form terms of the point-vortex measure.

    Time integrals use the trapezoid rule over the stored snapshots.
    """
    times = trajectory.times
    if len(times) < 2:
        raise DiagnosticsError("weak residual needs at least two snapshots")
    for i in (0, len(times) - 1):
        end = np.abs(psi.value(trajectory.positions[i], times[i])).max()
        if end > _ENDPOINT_TOL:
            raise DiagnosticsError(f"test function does not vanish at t = {times[i]!r} "
                                   f"(|psi| = {end:.3e})")
    kernel = trajectory.kernel if filtered else make_unfiltered_kernel()
    gam = trajectory.circulations
    lin = np.empty(len(times))
    nonlin = np.empty(len(times))
    ratio = 0.0
    for i, t in enumerate(times):
        pos = trajectory.positions[i]
        lin[i] = float(np.dot(gam, psi.time_derivative(pos, t)))
        rows, hmax = pairwise.weak_rows(pos, psi.grad(pos, t), gam, trajectory.eps, kernel,
                                        workers=workers)
        nonlin[i] = float(np.dot(gam, rows))
        bound = psi.hessian_sup(t) / (4.0 * math.pi)
        big = float(hmax.max())
        if big > 0:
            if big > bound * (1.0 + 1e-9) + 1e-300:
                raise DiagnosticsError(f"|H| = {big!r} exceeds sup|Hess psi|/(4 pi) = {bound!r} "
                                       f"at t = {t!r}")
            ratio = max(ratio, big / bound)
    w_l = float(np.trapezoid(lin, times))
    w_nl = float(np.trapezoid(nonlin, times))
    return WeakResidualReport(psi.ident, w_l, w_nl, w_l + w_nl, float(np.diff(times).max()),
                              filtered, ratio)
