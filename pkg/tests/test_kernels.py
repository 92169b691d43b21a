import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from filtered_vortex.kernels import (KernelError, biot_savart, check_admissibility, eval_G_eps,
                                     eval_K_eps, load_kernel, make_alpha_kernel, make_blob_kernel,
                                     make_custom_kernel, radial_mass, tabulated_profile)

BLOB = make_blob_kernel()
ALPHA = make_alpha_kernel()
KERNELS = [BLOB, ALPHA]


def blob_profile(r):
    return 1.0 / (np.pi * (np.asarray(r) ** 2 + 1.0) ** 2)


def mass_oracle(h, r):
    """2 pi int_0^r s h(s) ds by adaptive quadrature, independent of the tables."""
    brk = [b for b in (1e-4, 1e-2, 1.0, 10.0) if b < r]
    return integrate.quad(lambda s: 2 * math.pi * s * float(h(s)) if s > 0 else 0.0, 0.0, r,
                          points=brk or None, limit=500, epsabs=1e-14, epsrel=1e-13)[0]


# ---------------------------------------------------------------------------
# closed forms and examples


def test_blob_profile_values():
    assert BLOB.pk(1.0) == pytest.approx(0.5, abs=1e-15)
    assert BLOB.pk(0.0) == 0.0
    np.testing.assert_allclose(BLOB.pk(np.array([0.5, 2.0, 7.0])),
                               [0.2, 0.8, 49.0 / 50.0], rtol=1e-14)


def test_blob_velocity_examples():
    np.testing.assert_allclose(eval_K_eps(BLOB, np.array([1.0, 0.0]), 1.0), [0.0, 1 / (4 * np.pi)],
                               atol=1e-16)
    np.testing.assert_allclose(eval_K_eps(BLOB, np.array([0.0, 2.0]), 1.0), [-1 / (5 * np.pi), 0.0],
                               atol=1e-16)
    assert np.all(eval_K_eps(BLOB, np.zeros(2), 0.3) == 0.0)


def test_alpha_profile_values():
    assert ALPHA.has_origin_singularity
    assert ALPHA.pk(1.0) == pytest.approx(1 - float(mp.besselk(1, 1)), abs=1e-13)
    oracle = float(mp.quad(lambda s: s * mp.besselk(0, s), [0, 1]))
    assert ALPHA.pk(1.0) == pytest.approx(oracle, abs=1e-13)
    assert abs(ALPHA.pk(20.0) - 1.0) < 1e-6
    with pytest.raises(ValueError):
        ALPHA.h_radial(0.0)


def test_blob_green_examples():
    assert eval_G_eps(BLOB, 1.0, 1.0) == pytest.approx(math.log(2) / (4 * math.pi), abs=1e-15)
    assert eval_G_eps(BLOB, 0.0, 1.0) == 0.0
    # oracle: G(r) = G(R) - int_r^R P(s)/(2 pi s) ds with far-field matching G(R) ~ log(R)/(2 pi)
    big = 1e4
    far = math.log(big) / (2 * math.pi) + float(mp.quad(lambda s: (1 - s**2 / (1 + s**2)) / s, [big, mp.inf])) / (2 * math.pi)
    val = far - integrate.quad(lambda s: (s * s / (1 + s * s)) / (2 * math.pi * s), 1.0, big, limit=200)[0]
    assert eval_G_eps(BLOB, 1.0, 1.0) == pytest.approx(val, abs=1e-10)


def test_green_origin_average_oracle():
    # G^eps(0) = int G(y) h^eps(y) dy = int_0^inf log(s)/(2 pi) * 2 pi s h(s) ds
    val = integrate.quad(lambda s: math.log(s) * s * float(blob_profile(s)), 0, np.inf, limit=200)[0]
    assert eval_G_eps(BLOB, 0.0, 1.0) == pytest.approx(val, abs=1e-10)
    val = float(mp.quad(lambda s: mp.log(s) * s * mp.besselk(0, s) / (2 * mp.pi), [0, 1, mp.inf]))
    assert eval_G_eps(ALPHA, 0.0, 1.0) == pytest.approx(val, abs=1e-12)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
def test_green_growth_near_bound(kernel):
    # G^eps(r) <= c (r^2 + 1) for r > 1/2, with one fitted constant over a range of eps
    r = np.geomspace(0.5, 1e3, 200)
    ratios = [eval_G_eps(kernel, r, eps) / (r * r + 1) for eps in (0.01, 0.1, 1.0)]
    c = max(float(np.max(x)) for x in ratios)
    assert math.isfinite(c) and c < 1.0


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
def test_green_near_origin_bound(kernel):
    # for r <= 1/2: G^eps(r) <= c [log(r + eps) + 1], c fitted once per kernel
    c_values = []
    for eps in (1e-3, 1e-2, 0.1, 0.3):
        r = np.concatenate([[0.0], np.geomspace(1e-6, 0.5, 60)])
        g = eval_G_eps(kernel, r, eps)
        rhs = np.log(r + eps) + 1.0
        neg = rhs < 0
        # where the right side is negative the inequality needs c <= g / rhs
        c_values.append((g[neg] / rhs[neg]).min())
        assert np.all(g[~neg] <= 1.0)
    c = min(c_values)
    assert c > 0


# ---------------------------------------------------------------------------
# invariants


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
def test_profile_matches_cumulative_mass(kernel):
    rng = np.random.default_rng(7)
    radii = np.sort(rng.uniform(0.0, 50.0, 200))
    got = kernel.pk(radii)
    worst = max(abs(g - mass_oracle(kernel.h_radial, r)) for g, r in zip(got, radii))
    assert worst <= 1e-7


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
def test_profile_monotone_and_bounded(kernel):
    r = np.concatenate([[0.0], np.geomspace(1e-8, 1e4, 5000)])
    p = kernel.pk(r)
    assert p[0] == 0.0
    assert np.all(np.diff(p) >= 0)
    assert np.all((p >= 0) & (p <= 1 + 1e-12))
    assert 1.0 - p[-1] < 1.01 / (r[-1] * r[-1])  # tails decay at least like the blob's


vectors = st.tuples(st.floats(-20, 20), st.floats(-20, 20)).filter(lambda v: math.hypot(*v) > 1e-6)


@settings(max_examples=200, deadline=None)
@given(v=vectors, eps=st.floats(1e-3, 10.0), which=st.sampled_from([0, 1]))
def test_scale_identity_and_antisymmetry(v, eps, which):
    k = KERNELS[which]
    x = np.array(v)
    a = eval_K_eps(k, x, eps)
    np.testing.assert_allclose(a, eval_K_eps(k, x / eps, 1.0) / eps, rtol=1e-12, atol=1e-300)
    np.testing.assert_array_equal(eval_K_eps(k, -x, eps), -a)
    # filtered kernel never exceeds the singular one
    assert np.linalg.norm(a) <= np.linalg.norm(biot_savart(x)) * (1 + 1e-14)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
def test_consistency_with_unfiltered_kernel(kernel):
    rng = np.random.default_rng(3)
    ang = rng.uniform(0, 2 * np.pi, 400)
    rad = rng.uniform(0.1, 5.0, 400)
    x = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    errs = [np.abs(eval_K_eps(kernel, x, eps) - biot_savart(x)).max() for eps in (1.0, 0.1, 0.01, 0.001)]
    assert all(b < a for a, b in zip(errs[:-1], errs[1:]))
    # the blob error near r = 0.1 is eps^2 / (2 pi r^3) to leading order
    assert errs[-1] < 2e-4


def test_eps_must_be_positive():
    with pytest.raises(ValueError):
        eval_K_eps(BLOB, np.ones(2), 0.0)
    with pytest.raises(ValueError):
        eval_G_eps(BLOB, 1.0, -1.0)


# ---------------------------------------------------------------------------
# tabulated profiles


def test_custom_blob_matches_closed_form():
    k = make_custom_kernel(blob_profile, name="blob-table")
    r = np.concatenate([[0.0], np.linspace(1e-4, 50, 2000)])
    assert np.abs(k.pk(r) - BLOB.pk(r)).max() < 1e-8
    assert np.abs(k.g_radial(r) - BLOB.g_radial(r)).max() < 1e-8
    assert k.mass_scale == 1.0


def test_custom_profile_is_normalized():
    k = make_custom_kernel(lambda r: 3.0 * blob_profile(r))
    assert k.mass_scale == pytest.approx(1 / 3, rel=1e-10)
    assert k.pk(1.0) == pytest.approx(0.5, abs=1e-8)


def test_uniform_disk_profile():
    k = make_custom_kernel(lambda r: np.where(np.asarray(r) <= math.sqrt(2), 1 / (2 * np.pi), 0.0))
    r = np.array([0.1, 0.5, 1.0, 1.3, 1.6, 3.0, 10.0])
    expected = np.where(r <= math.sqrt(2), r * r / 2, 1.0)
    np.testing.assert_allclose(k.pk(r), expected, atol=1e-8)
    assert not check_admissibility(k).passed  # not strictly positive


def test_rejections():
    with pytest.raises(KernelError):
        make_custom_kernel(lambda r: np.zeros_like(r))
    with pytest.raises(KernelError):
        make_custom_kernel(lambda r: np.sin(np.asarray(r)) / (1 + np.asarray(r) ** 4))
    with pytest.raises(KernelError):
        make_custom_kernel(lambda r: 1.0 / (1.0 + np.asarray(r)))  # infinite mass


def test_tabulated_file_kernel(tmp_path):
    r = np.geomspace(1e-4, 300, 3000)
    path = tmp_path / "blob.txt"
    np.savetxt(path, np.column_stack([r, blob_profile(r)]))
    k = load_kernel(f"custom:{path}")
    assert k.source == f"custom:{path}"
    # oracle: exact cumulative mass of the piecewise-linear profile, cut off at r = 300
    a, b, ha, hb = r[:-1], r[1:], blob_profile(r[:-1]), blob_profile(r[1:])
    cells = ha * (b * b - a * a) / 2 + (hb - ha) / (b - a) * ((b**3 - a**3) / 3 - a * (b * b - a * a) / 2)
    mass = 2 * np.pi * (ha[0] * a[0] ** 2 / 2 + np.concatenate([[0.0], np.cumsum(cells)]))
    assert k.mass_scale == pytest.approx(1 / mass[-1], rel=1e-10)
    pick = (r > 1e-3) & (r < 150)
    # cubic Hermite between table nodes smooths the kinks of the linear profile slightly
    np.testing.assert_allclose(k.pk(r[pick]), mass[pick] / mass[-1], rtol=0, atol=1e-8)
    assert np.abs(k.pk(np.linspace(0.01, 20, 300)) - BLOB.pk(np.linspace(0.01, 20, 300))).max() < 1e-4
    assert tabulated_profile(path)(np.array([1e6]))[0] == 0.0
    with pytest.raises(FileNotFoundError):
        load_kernel(f"custom:{tmp_path / 'missing.txt'}")
    with pytest.raises(KernelError):
        load_kernel("gaussian")


# ---------------------------------------------------------------------------
# admissibility


def test_blob_admissibility():
    rep = check_admissibility(BLOB)
    assert rep.passed and rep.positive and not rep.inconclusive
    assert rep.l1_mass == pytest.approx(1.0, abs=1e-9)
    assert rep.w1_l1 == pytest.approx(math.pi / 2, abs=1e-6)
    assert rep.w3_linf == pytest.approx(3 * math.sqrt(3) / (16 * math.pi), abs=1e-6)


def test_alpha_admissibility():
    rep = check_admissibility(ALPHA)
    assert rep.passed
    assert rep.l1_mass == pytest.approx(1.0, abs=1e-9)
    assert rep.w1_l1 == pytest.approx(math.pi / 2, abs=1e-6)
    # sup r^3 K0(r)/(2 pi) from an independent maximization
    f = lambda r: -(r ** 3) * mp.besselk(0, r) / (2 * mp.pi)  # noqa: E731
    r_star = mp.findroot(lambda r: mp.diff(f, r), 2.5)
    assert rep.w3_linf == pytest.approx(float(-f(r_star)), rel=1e-6)


def test_divergent_first_moment_detected():
    k = make_custom_kernel(lambda r: 1.0 / (np.pi * (np.asarray(r) + 1.0) ** 3))
    rep = check_admissibility(k)
    assert not rep.passed
    assert math.isinf(rep.w1_l1)
    assert math.isfinite(rep.l1_mass)


def test_radial_mass_direct_integration(tmp_path):
    radii = np.array([5.0, 0.0, 1e-7, 0.3, 1.0, 40.0])
    np.testing.assert_allclose(radial_mass(blob_profile, radii), radii**2 / (radii**2 + 1), atol=1e-14)
    # kinks of a piecewise-linear table: exact cumulative mass as oracle
    r = np.geomspace(1e-4, 30, 700)
    hv = np.exp(-r * r) / np.pi
    a, b, ha, hb = r[:-1], r[1:], hv[:-1], hv[1:]
    cells = ha * (b * b - a * a) / 2 + (hb - ha) / (b - a) * ((b**3 - a**3) / 3 - a * (b * b - a * a) / 2)
    mass = 2 * np.pi * (ha[0] * a[0] ** 2 / 2 + np.concatenate([[0.0], np.cumsum(cells)]))
    path = tmp_path / "g.txt"
    np.savetxt(path, np.column_stack([r, hv]))
    pick = np.arange(0, 700, 37)
    np.testing.assert_allclose(radial_mass(tabulated_profile(path), r[pick]), mass[pick], rtol=0, atol=1e-12)
