"""Command-line front end.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import ast
import configparser
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .convergence import ConvergenceConfig, run_family, write_report
from .diagnostics import (BumpTestFunction, DiagnosticsError, conserved_quantities, decay_bound_check,
                          vorticity_maximal, weak_residual)
from .discretization import (BUILTINS, DiscretizationError, VortexSystem, builtin_initial_data,
                             density_from_file, discretize)
from .dynamics import SCHEMES, IntegratorConfig, NumericalAbort, integrate
from .kernels import TABLE, KernelError, check_admissibility, load_kernel, radial_mass

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config helpers


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


class _Section:
    def __init__(self, parser, name):
        self.name = name
        self.items = dict(parser[name]) if parser.has_section(name) else {}
        self.used = set()

    def _raw(self, key, default):
        self.used.add(key)
        if key not in self.items:
            if default is _REQUIRED:
                raise ConfigError(f"[{self.name}] {key}: missing")
            return default
        return self.items[key]

    def number(self, key, default=None, *, positive=False, integer=False, nonnegative=False):
        raw = self._raw(key, default)
        if raw is None or not isinstance(raw, str):
            return raw
        try:
            val = int(raw) if integer else float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected a number, got {raw!r}") from None
        if not math.isfinite(val):
            raise ConfigError(f"[{self.name}] {key}: must be finite, got {raw!r}")
        if positive and not val > 0:
            raise ConfigError(f"[{self.name}] {key}: must be positive, got {raw!r}")
        if nonnegative and val < 0:
            raise ConfigError(f"[{self.name}] {key}: must be nonnegative, got {raw!r}")
        return val

    def text(self, key, default=None):
        raw = self._raw(key, default)
        return raw.strip() if isinstance(raw, str) else raw

    def numbers(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None or not isinstance(raw, str):
            return raw
        val = _literal(raw)
        if isinstance(val, (int, float)):
            val = [val]
        try:
            return [float(v) for v in val]
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.name}] {key}: expected a list of numbers, got {raw!r}") from None

    def rest(self):
        return {k: _literal(v) for k, v in self.items.items() if k not in self.used}


_REQUIRED = object()


def _read_config(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parser


def _kernel(selection):
    kernel = load_kernel(selection)
    if kernel.kind == TABLE:  # tabulated custom profile: verify before use
        report = check_admissibility(kernel)
        if not report.passed:
            raise ConfigError(f"[run] kernel: {selection!r} is not admissible ({'; '.join(report.notes)})")
    return kernel


def _initial_system(parser, kernel, eps):
    init = _Section(parser, "initial")
    name = init.text("name", _REQUIRED)
    disc = _Section(parser, "discretization")
    if name == "points":
        pos = _literal(init.text("positions", _REQUIRED))
        gam = _literal(init.text("circulations", _REQUIRED))
        try:
            return VortexSystem(np.array(pos, dtype=float), np.array(gam, dtype=float), eps, kernel)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[initial] positions/circulations: {exc}") from None
    if name == "density_file":
        iv = density_from_file(init.text("path", _REQUIRED))
    elif name in BUILTINS:
        iv = builtin_initial_data(name, **init.rest())
    else:
        raise ConfigError(f"[initial] name: unknown {name!r}; expected 'points', 'density_file' or "
                          f"one of {', '.join(sorted(BUILTINS))}")
    return discretize(iv, eta=disc.number("eta", None, positive=True),
                      n_markers=disc.number("n_markers", None, positive=True, integer=True),
                      eps=eps, kernel=kernel, drop_tol=disc.number("drop_tol", 0.0, nonnegative=True))


def _integrator(parser):
    sec = _Section(parser, "integrator")
    scheme = sec.text("scheme", "rk4")
    if scheme not in SCHEMES:
        raise ConfigError(f"[integrator] scheme: expected one of {SCHEMES}, got {scheme!r}")
    return IntegratorConfig(
        scheme=scheme,
        dt=sec.number("dt", _REQUIRED, positive=True),
        t_end=sec.number("t_end", _REQUIRED, positive=True),
        abs_tol=sec.number("abs_tol", 1e-10, positive=True),
        rel_tol=sec.number("rel_tol", 1e-10, positive=True),
        snapshot_stride=sec.number("snapshot_stride", 1, positive=True, integer=True),
    )


def _diag_options(parser):
    sec = _Section(parser, "diagnostics")
    return sec.numbers("vmf_radii", []), sec.number("decay_margin", 1.5, positive=True)


def _decay_outputs(out, traj, radii, margin, samples):
    report = decay_bound_check(traj, radii, c_margin=margin, samples=samples)
    io.write_keyvalue(out / "decay.txt", {
        "c0": report.c0, "c_margin": report.c_margin, "worst_ratio": report.worst_ratio,
        "worst_time": report.worst_time, "worst_radius": report.worst_radius,
        "passed": report.passed, "radii": [float(r) for r in report.radii],
        "notes": report.notes,
    })
    return report


def _admissible_radii(radii, eps):
    return [r for r in radii if 0 < r <= 0.25 and 2 * r + eps < 1]


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(config, out, workers=1):
    parser = _read_config(config)
    run = _Section(parser, "run")
    eps = run.number("eps", _REQUIRED, positive=True)
    kernel = _kernel(run.text("kernel", "blob"))
    system = _initial_system(parser, kernel, eps)
    cfg = _integrator(parser)
    radii, margin = _diag_options(parser)
    if radii and (system.circulations < 0).any():
        raise ConfigError("[diagnostics] vmf_radii: disc maxima need nonnegative circulations")

    records, vmf_rows = [], []

    def observe(snap):
        records.append(conserved_quantities(snap, workers))
        if radii:
            vmf_rows.extend((snap.time, r, m) for r, m in vorticity_maximal(snap, radii))

    traj = integrate(system, cfg, [observe], workers=workers)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out / "trajectory.txt", traj)
    io.write_diagnostics(out / "diagnostics.txt", records)
    summary = {"n_vortices": system.n, "snapshots": len(traj), "eps": eps,
               "kernel": kernel.source or kernel.name}
    if radii:
        io.write_vmf(out / "vmf.txt", vmf_rows)
        used = _admissible_radii(radii, eps)
        if used:
            rows = [row for row in vmf_rows if row[1] in used]
            rep = _decay_outputs(out, traj, used, margin, np.array(rows))
            summary["decay_worst_ratio"] = rep.worst_ratio
    h = np.array([r.hamiltonian for r in records])
    if np.isfinite(h).all() and h[0] != 0:
        summary["hamiltonian_relative_drift"] = float(np.abs(h - h[0]).max() / abs(h[0]))
    io.write_keyvalue(out / "run.txt", summary)
    print(f"simulate: {system.n} vortices, {len(traj)} snapshots written to {out}")
    return EXIT_OK


def _convergence_config(parser):
    sec = _Section(parser, "converge")
    init = _Section(parser, "initial")
    defaults = ConvergenceConfig()
    box = sec.numbers("sample_box", list(defaults.sample_box))
    if len(box) != 4:
        raise ConfigError("[converge] sample_box: expected [xmin, xmax, ymin, ymax]")
    try:
        return ConvergenceConfig(
            kernel=sec.text("kernel", defaults.kernel),
            initial=init.text("name", defaults.initial),
            initial_params=init.rest(),
            eps_list=tuple(sec.numbers("eps_list", _REQUIRED)),
            grid_ratio=sec.number("grid_ratio", defaults.grid_ratio, positive=True),
            t_end=sec.number("t_end", defaults.t_end, positive=True),
            dt=sec.number("dt", defaults.dt, positive=True),
            scheme=sec.text("scheme", defaults.scheme),
            snapshot_stride=sec.number("snapshot_stride", defaults.snapshot_stride, positive=True,
                                       integer=True),
            sample_box=tuple(box),
            sample_resolution=sec.number("sample_resolution", defaults.sample_resolution,
                                         positive=True),
            local_radius=sec.number("local_radius", defaults.local_radius, positive=True),
            vmf_radii=tuple(sec.numbers("vmf_radii", list(defaults.vmf_radii))),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[converge] {exc}") from None


def cmd_converge(config, out, workers=1):
    cfg = _convergence_config(_read_config(config))
    report = run_family(cfg, workers=workers)
    write_report(report, out)
    if not report.complete:
        print(f"converge: stopped early: {report.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"converge: {len(report.members)} runs written to {out}; trends {report.trends}")
    return EXIT_OK


def _pk_suite(kernel, rng):
    """Sampled checks on P_K: origin value, bounds, monotonicity, quadrature agreement."""
    notes = []
    r = np.sort(np.concatenate([[0.0], rng.uniform(0.0, 50.0, 200), np.geomspace(1e-6, 1e3, 200)]))
    p = np.asarray(kernel.pk(r))
    if p[0] != 0.0:
        notes.append(f"P_K(0) = {p[0]!r}")
    if (p < 0).any() or (p > 1 + 1e-12).any():
        notes.append("P_K leaves [0, 1]")
    if (np.diff(p) < -1e-12).any():
        notes.append("P_K is not nondecreasing")
    rr = rng.uniform(0.0, 50.0, 20)
    # h_radial is already normalized
    worst = float(np.abs(radial_mass(kernel.h_radial, rr) - kernel.pk(rr)).max())
    if worst > 1e-7:
        notes.append(f"P_K differs from cumulative mass by {worst:.3e}")
    return not notes, worst, notes


def cmd_kernel_check(selection, out=None, seed=0):
    try:
        kernel = load_kernel(selection)
    except KernelError as exc:
        if selection.startswith("custom:"):
            print(f"kernel-check: {selection}: rejected: {exc}")
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                io.write_keyvalue(out / "kernel_check.txt", {"kernel": selection, "passed": False,
                                                             "rejected": str(exc)})
            return EXIT_NUMERIC
        raise
    report = check_admissibility(kernel)
    pk_ok, pk_err, pk_notes = _pk_suite(kernel, np.random.default_rng(seed))
    passed = report.passed and pk_ok
    items = {"kernel": selection, "l1_mass": report.l1_mass, "w1_l1": report.w1_l1,
             "w3_linf": report.w3_linf, "positive": report.positive,
             "admissible": report.passed, "inconclusive": report.inconclusive,
             "mass_scale": float(kernel.mass_scale), "pk_quadrature_error": float(pk_err),
             "pk_suite": pk_ok, "passed": passed, "notes": report.notes + pk_notes}
    for key, val in items.items():
        print(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io.write_keyvalue(out / "kernel_check.txt", items)
    return EXIT_OK if passed else EXIT_NUMERIC


def cmd_diagnose(trajectory, out, config=None, workers=1):
    traj = io.read_trajectory(trajectory)
    radii, margin = [], 1.5
    weak = None
    if config is not None:
        parser = _read_config(config)
        radii, margin = _diag_options(parser)
        sec = _Section(parser, "weak")
        if sec.items:
            weak = (sec.numbers("center", [0.0, 0.0]), sec.number("radius", 1.0, positive=True),
                    sec.number("amplitude", 1.0), sec.text("filtered", "true").lower() == "true")
    out.mkdir(parents=True, exist_ok=True)
    states = traj.states
    io.write_diagnostics(out / "diagnostics.txt", [conserved_quantities(s, workers) for s in states])
    if radii:
        rows = [(s.time, r, m) for s in states for r, m in vorticity_maximal(s, radii)]
        io.write_vmf(out / "vmf.txt", rows)
        used = _admissible_radii(radii, traj.eps)
        if used:
            _decay_outputs(out, traj, used, margin, np.array([row for row in rows if row[1] in used]))
    if weak is not None:
        center, radius, amplitude, filtered = weak
        if len(center) != 2:
            raise ConfigError("[weak] center: expected two numbers")
        psi = BumpTestFunction(tuple(center), radius, amplitude, float(traj.times[0]),
                               float(traj.times[-1]))
        rep = weak_residual(traj, psi, filtered=filtered, workers=workers)
        io.write_keyvalue(out / "weak_residual.txt", {
            "test_function_id": rep.test_function_id, "w_linear": rep.w_linear,
            "w_nonlinear": rep.w_nonlinear, "residual": rep.residual,
            "quadrature_dt": rep.quadrature_dt, "filtered": rep.filtered,
            "max_bound_ratio": rep.max_bound_ratio})
    print(f"diagnose: {len(traj)} snapshots analysed, output in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage mistakes are user errors, not numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    ap = _Parser(prog="filtered-vortex",
                 description="Filtered point-vortex simulations and diagnostics.")
    common = _Parser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker threads for pair sums")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("simulate", parents=[common], help="integrate one configuration")
    p.add_argument("--config", type=Path, required=True)
    p = sub.add_parser("converge", parents=[common], help="run an eps family")
    p.add_argument("--config", type=Path, required=True)
    p = sub.add_parser("kernel-check", parents=[common], help="admissibility and P_K checks")
    p.add_argument("kernel", help="blob | alpha | custom:<path>")
    p = sub.add_parser("diagnose", parents=[common], help="recompute diagnostics from a trajectory")
    p.add_argument("trajectory", type=Path)
    p.add_argument("--config", type=Path, default=None, help="[diagnostics] and [weak] selection")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.workers)
        if args.command == "converge":
            return cmd_converge(args.config, args.out, args.workers)
        if args.command == "kernel-check":
            return cmd_kernel_check(args.kernel, args.out, args.seed)
        return cmd_diagnose(args.trajectory, args.out, args.config, args.workers)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, KernelError, DiscretizationError, DiagnosticsError, FileNotFoundError,
            configparser.Error, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
