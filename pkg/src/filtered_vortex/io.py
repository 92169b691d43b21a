"""Plain-text data products.

Every float is written with ``repr`` so that reading a file back yields the
exact values that were computed.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .kernels import load_kernel

TRAJECTORY_HEADER = "t n x y gamma"
DIAGNOSTICS_HEADER = "t Q M cx cy H"
VMF_HEADER = "t r M_r"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_table(path, header, rows, comments=()):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(" ".join(fmt(v) for v in row) + "\n")
    return path


def read_table(path, header):
    """Return (comment dict, float array) for a table written by :func:`write_table`."""
    path = Path(path)
    meta = {}
    data = []
    seen_header = False
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            if not seen_header:
                if line.split() != header.split():
                    raise ValueError(f"{path}:{lineno}: expected header {header!r}, got {line!r}")
                seen_header = True
                continue
            data.append([float(v) for v in line.split()])
    if not seen_header:
        raise ValueError(f"{path}: missing header {header!r}")
    ncol = len(header.split())
    arr = np.array(data, dtype=float).reshape(-1, ncol)
    return meta, arr


def write_trajectory(path, traj: Trajectory):
    comments = [f"kernel = {traj.kernel.source or traj.kernel.name}", f"eps = {traj.eps!r}",
                f"meta = {json.dumps(traj.meta or {}, sort_keys=True)}"]

    def rows():
        idx = np.arange(len(traj.circulations))
        for t, pos in zip(traj.times, traj.positions):
            for n, (x, y), g in zip(idx, pos, traj.circulations):
                yield (t, n, x, y, g)

    return write_table(path, TRAJECTORY_HEADER, rows(), comments)


def read_trajectory(path) -> Trajectory:
    meta, arr = read_table(path, TRAJECTORY_HEADER)
    for key in ("kernel", "eps"):
        if key not in meta:
            raise ValueError(f"{path}: missing '# {key} = ...' line")
    if len(arr) == 0:
        raise ValueError(f"{path}: no trajectory rows")
    times, first = np.unique(arr[:, 0], return_index=True)
    n = int(arr[:, 1].max()) + 1
    if len(arr) != n * len(times):
        raise ValueError(f"{path}: expected {n} rows per snapshot")
    order = np.argsort(first)
    arr = arr.reshape(len(times), n, 5)[order]
    if not np.array_equal(arr[:, :, 1], np.broadcast_to(np.arange(n), (len(times), n))):
        raise ValueError(f"{path}: vortex indices out of order")
    gam = arr[0, :, 4]
    if not (arr[:, :, 4] == gam).all():
        raise ValueError(f"{path}: circulations change between snapshots")
    extra = json.loads(meta["meta"]) if "meta" in meta else {}
    return Trajectory(arr[:, 0, 0], arr[:, :, 2:4], gam, float(meta["eps"]),
                      load_kernel(meta["kernel"]), extra)


def write_diagnostics(path, records):
    return write_table(path, DIAGNOSTICS_HEADER, (r.row() for r in records))


def write_vmf(path, samples):
    return write_table(path, VMF_HEADER, samples)


def write_keyvalue(path, items: dict):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for key, val in items.items():
            if isinstance(val, float):
                val = repr(val)
            elif isinstance(val, (list, tuple, dict)):
                val = json.dumps(val)
            fh.write(f"{key} = {val}\n")
    return path


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
