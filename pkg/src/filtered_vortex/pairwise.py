"""Compiled O(N^2) pair sums.

Every sum is accumulated per target in fixed source order, so results are
bitwise identical however the targets are split across worker threads.
"""
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from .kernels import BLOB, TWO_PI, g_scalar, pk_scalar

# below this many targets per worker the thread pool costs more than it saves
_MIN_CHUNK = 256


@njit(nogil=True, cache=True, inline="always")
def _pk_over_r2(kind, r2, eps, tab, tp):
    """P(|x|/eps) / (2 pi |x|^2), with the blob in closed form."""
    if kind == BLOB:
        return 1.0 / (TWO_PI * (r2 + eps * eps))
    return pk_scalar(kind, math.sqrt(r2) / eps, tab, tp) / (TWO_PI * r2)


@njit(nogil=True, cache=True)
def _velocity_block(tx, ty, sx, sy, gam, eps, kind, tab, tp, self_offset, ux, uy):
    n_src = sx.shape[0]
    for i in range(tx.shape[0]):
        skip = self_offset + i if self_offset >= 0 else -1
        ax = 0.0
        ay = 0.0
        for j in range(n_src):
            if j == skip:
                continue
            dx = tx[i] - sx[j]
            dy = ty[i] - sy[j]
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                continue
            c = gam[j] * _pk_over_r2(kind, r2, eps, tab, tp)
            ax -= dy * c
            ay += dx * c
        ux[i] = ax
        uy[i] = ay


@njit(nogil=True, cache=True)
def _velocity_blob(tx, ty, sx, sy, gam, eps, ux, uy):
    # branch-free: a coincident pair has dx = dy = 0 and adds exactly nothing
    e2 = eps * eps
    for i in range(tx.shape[0]):
        ax = 0.0
        ay = 0.0
        for j in range(sx.shape[0]):
            dx = tx[i] - sx[j]
            dy = ty[i] - sy[j]
            c = gam[j] / (TWO_PI * (dx * dx + dy * dy + e2))
            ax -= dy * c
            ay += dx * c
        ux[i] = ax
        uy[i] = ay


@njit(nogil=True, cache=True)
def _green_upper(x, y, gam, eps, kind, tab, tp, start, stop, out):
    """out[i - start] = sum_{m > i} gam[m] G^eps(|x_i - x_m|)."""
    shift = math.log(eps) / TWO_PI
    e2 = eps * eps
    n = x.shape[0]
    for i in range(start, stop):
        acc = 0.0
        for m in range(i + 1, n):
            dx = x[i] - x[m]
            dy = y[i] - y[m]
            r2 = dx * dx + dy * dy
            if kind == BLOB:
                acc += gam[m] * math.log(r2 + e2)
            else:
                acc += gam[m] * (g_scalar(kind, math.sqrt(r2) / eps, tab, tp) + shift)
        if kind == BLOB:
            acc /= 2.0 * TWO_PI
        out[i - start] = acc


@njit(nogil=True, cache=True)
def _weak_rows(x, y, gx, gy, gam, eps, kind, tab, tp, start, stop, out, hmax):
    """out[i] = sum_m gam[m] * 0.5 K(x_i - x_m) . (grad_i - grad_m); hmax[i] = max |H|."""
    n = x.shape[0]
    for i in range(start, stop):
        acc = 0.0
        big = 0.0
        for m in range(n):
            dx = x[i] - x[m]
            dy = y[i] - y[m]
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                # filtered kernels vanish here; the unfiltered one is undefined and skipped
                continue
            c = _pk_over_r2(kind, r2, eps, tab, tp)
            hval = 0.5 * c * (-dy * (gx[i] - gx[m]) + dx * (gy[i] - gy[m]))
            acc += gam[m] * hval
            if abs(hval) > big:
                big = abs(hval)
        out[i - start] = acc
        hmax[i - start] = big


def _chunks(n, workers):
    if workers <= 1 or n < 2 * _MIN_CHUNK:
        return [(0, n)]
    k = min(workers, max(1, n // _MIN_CHUNK))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run(tasks, workers):
    if len(tasks) == 1:
        tasks[0]()
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(t) for t in tasks]:
            fut.result()


def velocity(targets, sources, gammas, eps, kernel, *, exclude_self=False, workers=1):
    """Filtered velocity sum_j gam_j K^eps(t_i - s_j) at each target.

    With ``exclude_self`` the targets must be the sources and the i == j term
    is skipped (it is zero anyway for filtered kernels).
    """
    t = np.ascontiguousarray(targets, dtype=float).reshape(-1, 2)
    s = np.ascontiguousarray(sources, dtype=float).reshape(-1, 2)
    tx, ty = np.ascontiguousarray(t[:, 0]), np.ascontiguousarray(t[:, 1])
    sx, sy = np.ascontiguousarray(s[:, 0]), np.ascontiguousarray(s[:, 1])
    gam = np.ascontiguousarray(gammas, dtype=float)
    ux = np.empty(len(tx))
    uy = np.empty(len(tx))

    def task(a, b):
        if kernel.kind == BLOB:
            return lambda: _velocity_blob(tx[a:b], ty[a:b], sx, sy, gam, float(eps), ux[a:b], uy[a:b])
        return lambda: _velocity_block(tx[a:b], ty[a:b], sx, sy, gam, float(eps), kernel.kind,
                                       kernel.tab, kernel.tp, a if exclude_self else -1,
                                       ux[a:b], uy[a:b])

    _run([task(a, b) for a, b in _chunks(len(tx), workers)], workers)
    return np.column_stack([ux, uy])


def pair_energy(positions, gammas, eps, kernel, workers=1):
    """sum over m != n of gam_m gam_n G^eps(|x_m - x_n|), from the pairs m > n."""
    rows = green_upper(positions, gammas, eps, kernel, workers)
    return 2.0 * float(np.dot(np.asarray(gammas, dtype=float), rows))


def green_upper(positions, gammas, eps, kernel, workers=1):
    pos = np.ascontiguousarray(positions, dtype=float)
    x, y = np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1])
    gam = np.ascontiguousarray(gammas, dtype=float)
    out = np.empty(len(x))

    def task(a, b):
        return lambda: _green_upper(x, y, gam, float(eps), kernel.kind, kernel.tab, kernel.tp,
                                   a, b, out[a:b])

    _run([task(a, b) for a, b in _chunks(len(x), workers)], workers)
    return out


def weak_rows(positions, grads, gammas, eps, kernel, workers=1):
    pos = np.ascontiguousarray(positions, dtype=float)
    x, y = np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1])
    gx = np.ascontiguousarray(grads[:, 0], dtype=float)
    gy = np.ascontiguousarray(grads[:, 1], dtype=float)
    gam = np.ascontiguousarray(gammas, dtype=float)
    out = np.empty(len(x))
    hmax = np.empty(len(x))

    def task(a, b):
        return lambda: _weak_rows(x, y, gx, gy, gam, float(eps), kernel.kind, kernel.tab, kernel.tp,
                                  a, b, out[a:b], hmax[a:b])

    _run([task(a, b) for a, b in _chunks(len(x), workers)], workers)
    return out, hmax


# ---------------------------------------------------------------------------
# disc circulation maxima


@njit(cache=True)
def _cell_index(x, y, x0, y0, size, ny):
    return int(math.floor((x - x0) / size)) * ny + int(math.floor((y - y0) / size))


@njit(cache=True)
def _disc_sum(cx, cy, rr2, x, y, gam, order, starts, x0, y0, size, nx, ny):
    ix = int(math.floor((cx - x0) / size))
    iy = int(math.floor((cy - y0) / size))
    acc = 0.0
    for a in range(ix - 1, ix + 2):
        if a < 0 or a >= nx:
            continue
        for b in range(iy - 1, iy + 2):
            if b < 0 or b >= ny:
                continue
            c = a * ny + b
            for k in range(starts[c], starts[c + 1]):
                j = order[k]
                dx = x[j] - cx
                dy = y[j] - cy
                if dx * dx + dy * dy <= rr2:
                    acc += gam[j]
    return acc


@njit(cache=True)
def _max_disc(x, y, gam, r):
    """Largest circulation in a closed disc of radius r.

    An optimal closed disc can be moved until two atoms sit on its boundary (or
    it is centred on one atom), so it suffices to test those centres.
    """
    n = x.shape[0]
    # cells of at least 2r keep every partner in the 3 x 3 neighbourhood; about n of them suffice
    extent = max(x.max() - x.min(), y.max() - y.min())
    size = max(2.0 * r, extent / math.sqrt(n))
    x0 = x.min() - size
    y0 = y.min() - size
    nx = int(math.floor((x.max() - x0) / size)) + 2
    ny = int(math.floor((y.max() - y0) / size)) + 2
    keys = np.empty(n, dtype=np.int64)
    for j in range(n):
        keys[j] = _cell_index(x[j], y[j], x0, y0, size, ny)
    order = np.argsort(keys, kind="mergesort")
    starts = np.zeros(nx * ny + 1, dtype=np.int64)
    for j in range(n):
        starts[keys[j] + 1] += 1
    for c in range(nx * ny):
        starts[c + 1] += starts[c]
    rr2 = r * r * (1.0 + 1e-12)
    best = 0.0
    for i in range(n):
        v = _disc_sum(x[i], y[i], rr2, x, y, gam, order, starts, x0, y0, size, nx, ny)
        if v > best:
            best = v
        ix = int(math.floor((x[i] - x0) / size))
        iy = int(math.floor((y[i] - y0) / size))
        for a in range(ix - 1, ix + 2):
            if a < 0 or a >= nx:
                continue
            for b in range(iy - 1, iy + 2):
                if b < 0 or b >= ny:
                    continue
                c = a * ny + b
                for k in range(starts[c], starts[c + 1]):
                    j = order[k]
                    if j <= i:
                        continue
                    dx = x[j] - x[i]
                    dy = y[j] - y[i]
                    d2 = dx * dx + dy * dy
                    if d2 == 0.0 or d2 > 4.0 * r * r:
                        continue
                    h = math.sqrt(max(r * r - 0.25 * d2, 0.0) / d2)
                    mx = 0.5 * (x[i] + x[j])
                    my = 0.5 * (y[i] + y[j])
                    for sgn in (-1.0, 1.0):
                        v = _disc_sum(mx - sgn * h * dy, my + sgn * h * dx, rr2, x, y, gam,
                                      order, starts, x0, y0, size, nx, ny)
                        if v > best:
                            best = v
    return best


def max_disc_circulation(positions, gammas, r):
    pos = np.asarray(positions, dtype=float)
    return float(_max_disc(np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1]),
                           np.ascontiguousarray(gammas, dtype=float), float(r)))
