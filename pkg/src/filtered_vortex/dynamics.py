"""Time integration of filtered point-vortex systems."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import pairwise
from .discretization import VortexSystem
from .kernels import SmoothingKernel

SCHEMES = ("rk4", "euler", "rk45_adaptive")
BLOWUP_RADIUS = 1e8


class NumericalAbort(RuntimeError):
    """The state left the finite, bounded regime during integration."""


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "rk4"
    dt: float = 1e-2
    t_end: float = 1.0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.scheme == "rk45_adaptive" and not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("adaptive tolerances must be positive")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be a positive integer, got {self.snapshot_stride}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of a vortex system; circulations and eps are shared."""
    times: np.ndarray
    positions: np.ndarray  # (snapshots, N, 2)
    circulations: np.ndarray
    eps: float
    kernel: SmoothingKernel
    meta: Optional[dict] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[0] != len(times) or pos.shape[2] != 2:
            raise ValueError(f"positions shape {pos.shape} does not match {len(times)} times")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("snapshot times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "circulations", np.asarray(self.circulations, dtype=float))

    def __len__(self):
        return len(self.times)

    def state(self, i) -> VortexSystem:
        return VortexSystem(self.positions[i], self.circulations, self.eps, self.kernel,
                            self.times[i], self.meta or {})

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]

    @property
    def final(self) -> VortexSystem:
        return self.state(len(self) - 1)


def _check_finite(pos, gam):
    if not (np.isfinite(pos).all() and np.isfinite(gam).all()):
        raise NumericalAbort("non-finite position or circulation")


def rhs(system: VortexSystem, workers: int = 1) -> np.ndarray:
    """dx_n/dt = sum over m != n of gam_m K^eps(x_n - x_m)."""
    _check_finite(system.positions, system.circulations)
    return _rhs(system.positions, system, workers)


def _rhs(pos, system, workers):
    return pairwise.velocity(pos, pos, system.circulations, system.eps, system.kernel,
                             exclude_self=True, workers=workers)


def velocity_field(system: VortexSystem, targets, workers: int = 1) -> np.ndarray:
    """Filtered velocity induced by the whole system at arbitrary points."""
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    if len(targets) == 0:
        return np.zeros((0, 2))
    return pairwise.velocity(targets, system.positions, system.circulations, system.eps,
                             system.kernel, workers=workers)


def _guard(pos, t, step):
    if not np.isfinite(pos).all():
        raise NumericalAbort(f"non-finite position at step {step}, t = {float(t)!r}")
    big = np.abs(pos).max()
    if big > BLOWUP_RADIUS:
        raise NumericalAbort(f"position magnitude {big:.3e} exceeds {BLOWUP_RADIUS:.0e} "
                             f"at step {step}, t = {float(t)!r}")


def _step_rk4(pos, h, f):
    k1 = f(pos)
    k2 = f(pos + 0.5 * h * k1)
    k3 = f(pos + 0.5 * h * k2)
    k4 = f(pos + h * k3)
    return pos + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_euler(pos, h, f):
    return pos + h * f(pos)


def _step_times(cfg):
    n = max(1, math.ceil(cfg.t_end / cfg.dt - 1e-9))
    times = np.arange(n + 1) * cfg.dt
    times[-1] = cfg.t_end
    return times


def integrate(system: VortexSystem, cfg: IntegratorConfig,
              observers: Iterable[Callable[[VortexSystem], None]] = (),
              workers: int = 1) -> Trajectory:
    """Advance to ``t_end``; snapshot every ``snapshot_stride`` steps and at the end.

    Observers receive each snapshot as an immutable :class:`VortexSystem`.
    Raises :class:`NumericalAbort` on non-finite or runaway positions.
    """
    observers = list(observers)
    _check_finite(system.positions, system.circulations)
    t0 = system.time
    step_times = _step_times(cfg)
    stride = int(cfg.snapshot_stride)
    snap_idx = list(range(0, len(step_times), stride))
    if snap_idx[-1] != len(step_times) - 1:
        snap_idx.append(len(step_times) - 1)

    def f(p):
        return _rhs(p, system, workers)

    snaps, snap_times = [], []

    def record(pos, t):
        snap = system.moved(pos, t)
        snaps.append(snap.positions)
        snap_times.append(snap.time)
        for obs in observers:
            obs(snap)

    pos = np.array(system.positions)
    if cfg.scheme == "rk45_adaptive":
        n = system.n
        evals = 0

        def fun(_t, y):
            nonlocal evals
            evals += 1
            p = y.reshape(n, 2)
            _guard(p, _t, evals)
            return f(p).ravel()

        sol = solve_ivp(fun, (0.0, cfg.t_end), pos.ravel(), method="RK45",
                        t_eval=step_times[snap_idx], rtol=cfg.rel_tol, atol=cfg.abs_tol)
        if sol.status != 0:
            raise NumericalAbort(f"adaptive integrator failed: {sol.message}")
        for k, t in enumerate(sol.t):
            p = sol.y[:, k].reshape(n, 2)
            _guard(p, t, k)
            record(p, t0 + t)
        meta_extra = {"rhs_evaluations": evals}
    else:
        stepper = _step_rk4 if cfg.scheme == "rk4" else _step_euler
        record(pos, t0 + step_times[0])
        wanted = set(snap_idx)
        for k in range(1, len(step_times)):
            pos = stepper(pos, step_times[k] - step_times[k - 1], f)
            _guard(pos, t0 + step_times[k], k)
            if k in wanted:
                record(pos, t0 + step_times[k])
        meta_extra = {"steps": len(step_times) - 1}

    meta = dict(system.meta)
    meta.update(scheme=cfg.scheme, dt=cfg.dt, t_end=cfg.t_end, **meta_extra)
    return Trajectory(np.array(snap_times), np.array(snaps), system.circulations, system.eps, system.kernel, meta)
