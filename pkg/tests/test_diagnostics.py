import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filtered_vortex.diagnostics import (BumpTestFunction, DiagnosticsError, QuadraticTestFunction,
                                         conserved_quantities, decay_bound, decay_bound_check,
                                         hamiltonian, vorticity_maximal, weak_residual)
from filtered_vortex.discretization import VortexSystem
from filtered_vortex.dynamics import IntegratorConfig, Trajectory, integrate
from filtered_vortex.kernels import (eval_G_eps, eval_K_eps, make_alpha_kernel, make_blob_kernel,
                                     make_unfiltered_kernel)

BLOB = make_blob_kernel()
ALPHA = make_alpha_kernel()
PLAIN = make_unfiltered_kernel()


def direct_hamiltonian(pos, gam, eps, kernel):
    total = 0.0
    for m in range(len(pos)):
        for n in range(len(pos)):
            if m != n:
                total -= gam[m] * gam[n] * float(eval_G_eps(kernel, np.linalg.norm(pos[m] - pos[n]), eps))
    return total


@pytest.mark.parametrize("kernel", [BLOB, ALPHA, PLAIN], ids=lambda k: k.name)
def test_hamiltonian_matches_direct_sum(kernel):
    rng = np.random.default_rng(4)
    pos = rng.normal(size=(30, 2))
    gam = rng.uniform(-1, 1, 30)
    s = VortexSystem(pos, gam, 0.2, kernel)
    assert hamiltonian(s) == pytest.approx(direct_hamiltonian(pos, gam, 0.2, kernel), rel=1e-12)


def test_hamiltonian_two_blobs_closed_form():
    s = VortexSystem([[0, 0], [1, 0]], [1.0, 2.0], 1.0, BLOB)
    # G^1(1) = log(2) / (4 pi)
    assert hamiltonian(s) == pytest.approx(-2 * 2 * math.log(2) / (4 * math.pi), rel=1e-14)


def test_hamiltonian_coincident_points():
    pos = [[0, 0], [0, 0], [1, 0]]
    assert math.isnan(hamiltonian(VortexSystem(pos, [1, 1, 1], 0.1, PLAIN)))
    rec = conserved_quantities(VortexSystem(pos, [1, 1, 1], 0.1, PLAIN))
    assert not rec.hamiltonian_defined
    for k in (BLOB, ALPHA):
        assert math.isfinite(hamiltonian(VortexSystem(pos, [1, 1, 1], 0.1, k)))


def test_hamiltonian_workers_bitwise():
    rng = np.random.default_rng(9)
    s = VortexSystem(rng.normal(size=(1100, 2)), rng.uniform(0, 1, 1100), 0.1, ALPHA)
    assert hamiltonian(s, workers=1) == hamiltonian(s, workers=3)


def test_conserved_quantities_values():
    s = VortexSystem([[1, 0], [0, 2], [-1, -1]], [1.0, 2.0, 3.0], 0.1, BLOB, time=0.7)
    rec = conserved_quantities(s)
    assert rec.t == 0.7
    assert rec.total_circulation == 6.0
    assert rec.second_moment == 1 + 8 + 6
    np.testing.assert_array_equal(rec.centroid, [1 - 3, 4 - 3])
    assert rec.row()[:5] == (0.7, 6.0, 15.0, -2.0, 1.0)


# ---------------------------------------------------------------------------
# disc maxima


def test_maximal_function_example():
    s = VortexSystem([[0, 0], [1, 0]], [0.5, 0.5], 0.1, BLOB)
    out = vorticity_maximal(s, [0.4, 0.5, 0.6])
    np.testing.assert_array_equal(out[:, 0], [0.4, 0.5, 0.6])
    np.testing.assert_allclose(out[:, 1], [0.5, 0.5, 1.0])


def brute_force_max(pos, gam, r):
    """Every candidate centre (atoms and two-point circles) checked with numpy."""
    cands = [p for p in pos]
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            d = pos[j] - pos[i]
            d2 = d @ d
            if 0 < d2 <= 4 * r * r:
                mid = 0.5 * (pos[i] + pos[j])
                h = math.sqrt(max(r * r - d2 / 4, 0) / d2)
                cands += [mid + h * np.array([-d[1], d[0]]), mid - h * np.array([-d[1], d[0]])]
    c = np.array(cands)
    inside = ((c[:, None, :] - pos[None]) ** 2).sum(-1) <= r * r * (1 + 1e-12)
    return float((inside * gam).sum(1).max())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 25), r=st.floats(0.01, 1.0))
def test_maximal_function_candidates(seed, n, r):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-1, 1, (n, 2))
    gam = rng.uniform(0, 1, n)
    s = VortexSystem(pos, gam, 0.1, BLOB)
    exact = vorticity_maximal(s, [r])[0, 1]
    assert exact == pytest.approx(brute_force_max(pos, gam, r * (1 - 1e-9)), abs=1e-12)
    assert gam.max() - 1e-15 <= exact <= gam.sum() + 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 12))
def test_maximal_function_grid_sandwich(seed, n):
    rng = np.random.default_rng(seed)
    s = VortexSystem(rng.uniform(-0.5, 0.5, (n, 2)), rng.uniform(0, 1, n), 0.1, BLOB)
    res = 0.01
    for r in (0.05, 0.2):
        exact = vorticity_maximal(s, [r])[0, 1]
        lo = vorticity_maximal(s, [r], mode="grid", resolution=res)[0, 1]
        hi = vorticity_maximal(s, [r + res / math.sqrt(2)], mode="grid", resolution=res)[0, 1]
        assert lo - 1e-12 <= exact <= hi + 1e-12


def test_maximal_function_monotone_and_limits():
    rng = np.random.default_rng(1)
    s = VortexSystem(rng.normal(size=(200, 2)), rng.uniform(0, 1, 200), 0.1, BLOB)
    radii = np.geomspace(1e-4, 20, 40)
    m = vorticity_maximal(s, radii)[:, 1]
    assert np.all(np.diff(m) >= -1e-14)
    assert m[-1] == pytest.approx(s.circulations.sum(), rel=1e-14)
    assert m[0] == s.circulations.max()


def test_maximal_function_errors():
    s = VortexSystem([[0, 0], [1, 0]], [1.0, -1.0], 0.1, BLOB)
    with pytest.raises(DiagnosticsError):
        vorticity_maximal(s, [0.1])
    s = VortexSystem([[0, 0]], [1.0], 0.1, BLOB)
    with pytest.raises(DiagnosticsError):
        vorticity_maximal(s, [0.0])
    with pytest.raises(DiagnosticsError):
        vorticity_maximal(s, [0.1], mode="fast")


def _static_trajectory(pos, gam, eps, times, drift=0.0):
    pos = np.asarray(pos, float)
    snaps = [pos * (1 + drift * t) for t in times]
    return Trajectory(times, snaps, gam, eps, BLOB)


def test_decay_check_passes_for_static_state():
    rng = np.random.default_rng(0)
    traj = _static_trajectory(rng.normal(size=(50, 2)), rng.uniform(0, 1, 50), 0.05, [0.0, 1.0, 2.0])
    rep = decay_bound_check(traj, [0.01, 0.05, 0.1, 0.3, 0.6])
    assert rep.passed and rep.worst_ratio == pytest.approx(1.0)
    np.testing.assert_array_equal(rep.radii, [0.01, 0.05, 0.1])
    assert len(rep.notes) == 2
    m0 = vorticity_maximal(traj.state(0), rep.radii)[:, 1]
    assert rep.c0 == pytest.approx(max(m0[k] / decay_bound(r, 0.05) for k, r in enumerate(rep.radii)))


def test_decay_check_detects_concentration():
    # two atoms pulled together: M(0.1) doubles once they share a disc
    times = [0.0, 1.0]
    snaps = [[[0, 0], [1, 0]], [[0, 0], [0.05, 0]]]
    traj = Trajectory(times, snaps, [1.0, 1.0], 0.05, BLOB)
    rep = decay_bound_check(traj, [0.1])
    assert rep.worst_ratio == pytest.approx(2.0)
    assert not rep.passed and rep.worst_time == 1.0
    assert decay_bound_check(traj, [0.1], c_margin=2.5).passed


def test_decay_check_needs_admissible_radii():
    traj = _static_trajectory([[0, 0]], [1.0], 0.6, [0.0, 1.0])
    with pytest.raises(DiagnosticsError):
        decay_bound_check(traj, [0.25, 0.5])


# ---------------------------------------------------------------------------
# weak form


def test_bump_derivatives():
    psi = BumpTestFunction(center=(0.3, -0.1), radius=1.2, amplitude=2.0, t0=0.0, t1=2.0)
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1.5, (50, 2))
    h = 1e-6
    for t in (0.3, 1.0, 1.7):
        fd = np.column_stack([(psi.value(x + [h, 0], t) - psi.value(x - [h, 0], t)) / (2 * h),
                              (psi.value(x + [0, h], t) - psi.value(x - [0, h], t)) / (2 * h)])
        np.testing.assert_allclose(psi.grad(x, t), fd, atol=1e-8)
        dt_fd = (psi.value(x, t + h) - psi.value(x, t - h)) / (2 * h)
        np.testing.assert_allclose(psi.time_derivative(x, t), dt_fd, atol=1e-7)
    assert np.all(psi.value(x, 0.0) == 0) and np.all(psi.value(x, 2.0) == 0)
    assert np.all(psi.value(np.array([[5.0, 5.0]]), 1.0) == 0)


def test_bump_hessian_sup():
    psi = BumpTestFunction(center=(0, 0), radius=0.8, amplitude=1.5, t0=0, t1=1)
    t = 0.4
    g = np.linspace(-0.85, 0.85, 121)
    pts = np.array([(a, b) for a in g for b in g])
    h = 1e-5
    worst = 0.0
    for p in pts:
        hx = (psi.grad(p + [h, 0], t) - psi.grad(p - [h, 0], t)) / (2 * h)
        hy = (psi.grad(p + [0, h], t) - psi.grad(p - [0, h], t)) / (2 * h)
        worst = max(worst, np.abs(np.linalg.eigvalsh(0.5 * (np.array([hx, hy]) + np.array([hx, hy]).T))).max())
    assert worst <= psi.hessian_sup(t) * (1 + 1e-6)
    assert worst == pytest.approx(psi.hessian_sup(t), rel=1e-4)


def test_stationary_vortex_residual():
    s = VortexSystem([[0.1, 0.2]], [1.3], 0.2, BLOB)
    traj = integrate(s, IntegratorConfig(dt=0.01, t_end=1.0))
    rep = weak_residual(traj, BumpTestFunction(center=(0, 0), radius=1.0, t0=0, t1=1))
    assert abs(rep.residual) <= 1e-12
    assert rep.w_nonlinear == 0.0


def test_quadratic_test_function_has_no_nonlinear_part():
    rng = np.random.default_rng(6)
    s = VortexSystem(rng.normal(size=(20, 2)), rng.uniform(0, 1, 20), 0.3, BLOB)
    traj = integrate(s, IntegratorConfig(dt=0.01, t_end=1.0))
    for filtered in (True, False):
        rep = weak_residual(traj, QuadraticTestFunction(t0=0, t1=1), filtered=filtered)
        assert abs(rep.w_nonlinear) <= 1e-14
        # the second moment is conserved, so the linear part integrates tau' to zero
        assert abs(rep.w_linear) <= 1e-9
        assert rep.filtered is filtered


def test_weak_residual_rejects_nonvanishing_endpoints():
    s = VortexSystem([[0, 0], [1, 0]], [1.0, 1.0], 0.5, BLOB)
    traj = integrate(s, IntegratorConfig(dt=0.1, t_end=1.0))
    with pytest.raises(DiagnosticsError):
        weak_residual(traj, BumpTestFunction(t0=-0.5, t1=1.5))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 30), eps=st.floats(0.01, 1.0),
       radius=st.floats(0.2, 3.0), which=st.sampled_from(["blob", "alpha", "unfiltered"]))
def test_nonlinear_weight_bound(seed, n, eps, radius, which):
    kernel = {"blob": BLOB, "alpha": ALPHA, "unfiltered": PLAIN}[which]
    rng = np.random.default_rng(seed)
    pos = rng.normal(scale=radius, size=(n, 2))
    times = np.array([0.0, 0.5, 1.0])
    traj = Trajectory(times, [pos] * 3, rng.uniform(0, 1, n), eps, kernel)
    psi = BumpTestFunction(center=tuple(rng.normal(size=2)), radius=radius, t0=0, t1=1)
    rep = weak_residual(traj, psi, filtered=which != "unfiltered")
    assert rep.max_bound_ratio <= 1.0


def test_nonlinear_term_two_vortices():
    # 0.5 * K(x - y) . (grad psi(x) - grad psi(y)) summed over ordered pairs, by hand
    pos = np.array([[0.2, 0.1], [-0.3, 0.4]])
    gam = np.array([0.7, 1.1])
    eps = 0.3
    times = np.linspace(0, 1, 11)
    traj = Trajectory(times, [pos] * 11, gam, eps, BLOB)
    psi = BumpTestFunction(center=(0.1, 0.0), radius=1.0, t0=0, t1=1)
    rep = weak_residual(traj, psi)
    vals = []
    for t in times:
        g = psi.grad(pos, t)
        k = eval_K_eps(BLOB, pos[0] - pos[1], eps)
        h = 0.5 * k @ (g[0] - g[1])
        vals.append(2 * gam[0] * gam[1] * h)
    assert rep.w_nonlinear == pytest.approx(np.trapezoid(vals, times), rel=1e-12)


def test_lattice_disc_maximum():
    g = (np.arange(10) - 4.5) * 0.1
    pos = np.array([(a, b) for a in g for b in g])
    s = VortexSystem(pos, np.full(100, 0.01), 0.1, BLOB)
    exact = vorticity_maximal(s, [0.25])[0, 1]
    res = 0.005
    grid = vorticity_maximal(s, [0.25], mode="grid", resolution=res)[0, 1]
    grown = vorticity_maximal(s, [0.25 + res / math.sqrt(2)], mode="grid", resolution=res)[0, 1]
    assert grid - 1e-12 <= exact <= grown + 1e-12
    # an open disc of radius 0.25 centred on a lattice point holds 21 of them
    assert exact == pytest.approx(0.21, abs=1e-12)
