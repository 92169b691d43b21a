"""eps -> 0 experiments with the grid size tied to the filter width."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .diagnostics import DiagnosticsError, conserved_quantities, vorticity_maximal
from .discretization import SHEET, VortexSystem, builtin_initial_data, discretize
from .dynamics import IntegratorConfig, NumericalAbort, Trajectory, integrate, velocity_field
from .kernels import load_kernel, make_unfiltered_kernel

CRITERION = ("discrete L2(B_R) Cauchy differences of successive velocity fields "
             "(a strong surrogate for weak L2_loc convergence)")


@dataclass(frozen=True)
class SampleGrid:
    """Cell-centred points of a uniform grid on an axis-aligned box."""
    box: tuple = (-2.5, 2.5, -2.5, 2.5)
    resolution: float = 0.05

    def __post_init__(self):
        x0, x1, y0, y1 = self.box
        if not (x1 > x0 and y1 > y0 and self.resolution > 0):
            raise ValueError(f"invalid sample grid {self.box} at resolution {self.resolution}")

    def axes(self):
        x0, x1, y0, y1 = self.box
        nx = int(round((x1 - x0) / self.resolution))
        ny = int(round((y1 - y0) / self.resolution))
        return (x0 + (np.arange(nx) + 0.5) * self.resolution,
                y0 + (np.arange(ny) + 0.5) * self.resolution)

    @property
    def points(self):
        xs, ys = self.axes()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    @property
    def cell_area(self):
        return self.resolution ** 2


@dataclass(frozen=True, eq=False)
class GriddedField:
    grid: SampleGrid
    values: np.ndarray  # (points, 2)


def l2_local_diff(a: GriddedField, b: GriddedField, radius: float, center=(0.0, 0.0)) -> float:
    """sqrt(sum over grid points in the closed ball of |a - b|^2 * cell area)."""
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise ValueError("fields live on different grids")
    pts = a.grid.points
    inside = ((pts - np.asarray(center, dtype=float)) ** 2).sum(axis=1) <= radius * radius
    d = a.values[inside] - b.values[inside]
    return math.sqrt(float((d * d).sum()) * a.grid.cell_area)


@dataclass(frozen=True)
class ConvergenceConfig:
    kernel: str = "blob"
    initial: str = "gaussian_patch"
    initial_params: dict = field(default_factory=dict)
    eps_list: tuple = (0.4, 0.2, 0.1)
    grid_ratio: float = 1.0
    t_end: float = 1.0
    dt: float = 0.05
    scheme: str = "rk4"
    snapshot_stride: int = 5
    sample_box: tuple = (-2.5, 2.5, -2.5, 2.5)
    sample_resolution: float = 0.05
    local_radius: float = 2.0
    vmf_radii: tuple = (0.02, 0.05, 0.1, 0.2)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps or any(not (e > 0) for e in eps):
            raise ValueError("eps_list must hold positive values")
        if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        if not (self.grid_ratio > 0):
            raise ValueError("grid_ratio must be positive")
        if not (self.local_radius > 0):
            raise ValueError("local_radius must be positive")
        object.__setattr__(self, "eps_list", eps)

    def integrator(self):
        return IntegratorConfig(scheme=self.scheme, dt=self.dt, t_end=self.t_end,
                                snapshot_stride=self.snapshot_stride)

    def as_dict(self):
        return {
            "kernel": self.kernel, "initial": self.initial, "initial_params": self.initial_params,
            "eps_list": list(self.eps_list), "grid_ratio": self.grid_ratio, "t_end": self.t_end,
            "dt": self.dt, "scheme": self.scheme, "snapshot_stride": self.snapshot_stride,
            "sample_box": list(self.sample_box), "sample_resolution": self.sample_resolution,
            "local_radius": self.local_radius, "vmf_radii": list(self.vmf_radii),
        }


@dataclass
class MemberRun:
    eps: float
    eta: float
    trajectory: Trajectory
    diagnostics: list
    vmf: Optional[np.ndarray]  # rows (t, r, M_r)
    velocity: np.ndarray  # (snapshots, points, 2)


@dataclass
class ConvergenceReport:
    config: ConvergenceConfig
    grid: SampleGrid
    members: list
    pairwise: np.ndarray  # rows (t, j, eps_j, eps_j+1, distance)
    kernel_limit: np.ndarray  # rows (eps, distance)
    rates: dict
    trends: dict
    failure: Optional[str] = None

    @property
    def complete(self):
        return self.failure is None


def _fit_rate(eps, values):
    eps, values = np.asarray(eps, float), np.asarray(values, float)
    ok = values > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(eps[ok]), np.log(values[ok]), 1)[0])


def _strictly_decreasing(values):
    return bool(len(values) < 2 or all(b < a for a, b in zip(values[:-1], values[1:])))


def _discretize_member(iv, eps, cfg, kernel):
    eta = cfg.grid_ratio * eps
    if iv.kind == SHEET:
        a, b = iv.param_range
        n = max(2, int(math.ceil((b - a) / eta - 1e-9)))
        return discretize(iv, n_markers=n, eps=eps, kernel=kernel), eta
    return discretize(iv, eta=eta, eps=eps, kernel=kernel), eta


def run_family(cfg: ConvergenceConfig, workers: int = 1) -> ConvergenceReport:
    """One run per eps with eta = grid_ratio * eps, compared on a common sample grid.

    For sheets the markers are spaced by at most eta in the curve parameter.
    A failing member stops the family; the report keeps the completed runs.
    """
    kernel = load_kernel(cfg.kernel)
    iv = builtin_initial_data(cfg.initial, **cfg.initial_params)
    grid = SampleGrid(tuple(cfg.sample_box), cfg.sample_resolution)
    pts = grid.points
    members = []
    failure = None
    for eps in cfg.eps_list:
        try:
            system, eta = _discretize_member(iv, eps, cfg, kernel)
            traj = integrate(system, cfg.integrator(), workers=workers)
        except NumericalAbort as exc:
            failure = f"eps = {eps!r}: {exc}"
            break
        states = traj.states
        diags = [conserved_quantities(s, workers) for s in states]
        vmf = None
        if (traj.circulations >= 0).all() and cfg.vmf_radii:
            try:
                vmf = np.array([(s.time, r, m) for s in states
                                for r, m in vorticity_maximal(s, cfg.vmf_radii)])
            except DiagnosticsError:
                vmf = None
        vel = np.array([velocity_field(s, pts, workers) for s in states])
        members.append(MemberRun(eps, eta, traj, diags, vmf, vel))

    rows = []
    for j in range(len(members) - 1):
        a, b = members[j], members[j + 1]
        if not np.array_equal(a.trajectory.times, b.trajectory.times):
            raise ValueError("member runs were sampled at different times")
        for k, t in enumerate(a.trajectory.times):
            d = l2_local_diff(GriddedField(grid, a.velocity[k]), GriddedField(grid, b.velocity[k]),
                              cfg.local_radius)
            rows.append((t, j, a.eps, b.eps, d))
    pairwise = np.array(rows).reshape(-1, 5)

    limit_rows = []
    if members:
        frozen = members[-1].trajectory.state(0)
        u0 = velocity_field(VortexSystem(frozen.positions, frozen.circulations, frozen.eps,
                                         make_unfiltered_kernel()), pts, workers)
        for eps in cfg.eps_list:
            ue = velocity_field(VortexSystem(frozen.positions, frozen.circulations, eps, kernel),
                                pts, workers)
            limit_rows.append((eps, l2_local_diff(GriddedField(grid, ue), GriddedField(grid, u0),
                                                  cfg.local_radius)))
    kernel_limit = np.array(limit_rows).reshape(-1, 2)

    rates, trends = {}, {}
    if len(pairwise):
        t_final = pairwise[-1, 0]
        last = pairwise[pairwise[:, 0] == t_final]
        trends["pairwise_final_decreasing"] = _strictly_decreasing(last[:, 4])
        trends["pairwise_decreasing_all_times"] = all(
            _strictly_decreasing(pairwise[pairwise[:, 0] == t][:, 4]) for t in np.unique(pairwise[:, 0]))
        rates["pairwise_final"] = _fit_rate(last[:, 3], last[:, 4])
    if len(kernel_limit):
        trends["kernel_limit_decreasing"] = _strictly_decreasing(kernel_limit[:, 1])
        rates["kernel_limit"] = _fit_rate(kernel_limit[:, 0], kernel_limit[:, 1])
    return ConvergenceReport(cfg, grid, members, pairwise, kernel_limit, rates, trends, failure)


def write_report(report: ConvergenceReport, out_dir) -> Path:
    """One trajectory/diagnostics/vmf/velocity file per eps plus tables and a summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pts = report.grid.points
    members = []
    for j, m in enumerate(report.members):
        tag = f"eps{j}"
        io.write_trajectory(out / f"trajectory_{tag}.txt", m.trajectory)
        io.write_diagnostics(out / f"diagnostics_{tag}.txt", m.diagnostics)
        if m.vmf is not None:
            io.write_vmf(out / f"vmf_{tag}.txt", m.vmf)

        def vel_rows(m=m):
            for t, field_t in zip(m.trajectory.times, m.velocity):
                for (x, y), (u, v) in zip(pts, field_t):
                    yield (t, x, y, u, v)

        io.write_table(out / f"velocity_{tag}.txt", "t x y u v", vel_rows(),
                       comments=[f"eps = {m.eps!r}"])
        members.append({"eps": m.eps, "eta": m.eta, "eta_over_eps": m.eta / m.eps,
                        "n_vortices": int(len(m.trajectory.circulations)),
                        "total_circulation": m.diagnostics[0].total_circulation})
    io.write_table(out / "pairwise.txt", "t j eps_a eps_b l2", report.pairwise)
    io.write_table(out / "kernel_limit.txt", "eps l2", report.kernel_limit)
    io.write_json(out / "summary.json", {
        "config": report.config.as_dict(),
        "criterion": CRITERION,
        "members": members,
        "rates": report.rates,
        "trends": report.trends,
        "complete": report.complete,
        "failure": report.failure,
    })
    return out
