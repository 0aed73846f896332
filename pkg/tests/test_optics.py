import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qlimit.optics import (
    SceneParams,
    density_p0,
    density_p1,
    mode_geometry,
    one_minus_sinc,
    pixel_mass_pairs,
    pixel_masses,
    sinc,
    sinc2_cdf,
)

mpmath.mp.dps = 40


def mp_sinc(x):
    x = mpmath.mpf(x)
    if x == 0:
        return mpmath.mpf(1)
    return mpmath.sin(mpmath.pi * x) / (mpmath.pi * x)


def mp_sinc2_cdf(y):
    # F(y) = 1/2 + Si(2 pi y)/pi - sin(pi y)^2 / (pi^2 y)
    y = mpmath.mpf(y)
    if y == 0:
        return mpmath.mpf(1) / 2
    return mpmath.mpf(1) / 2 + mpmath.si(2 * mpmath.pi * y) / mpmath.pi - mpmath.sin(mpmath.pi * y) ** 2 / (mpmath.pi**2 * y)


# --- sinc ---------------------------------------------------------------------------


def test_sinc_trivial_values():
    assert sinc(0.0) == 1.0
    assert abs(sinc(1.0)) < 1e-16
    assert abs(sinc(0.5) - 2 / math.pi) < 1e-16


@pytest.mark.parametrize("x", [1e-9, 3e-5, 9.99e-5, 1e-4, 0.013, 0.7, 2.5, 17.3])
def test_sinc_matches_high_precision(x):
    want = float(mp_sinc(x))
    assert sinc(x) == pytest.approx(want, rel=1e-14, abs=1e-17)
    assert np.asarray(sinc(np.array([x, -x]))) == pytest.approx([want, want], rel=1e-14, abs=1e-17)


@pytest.mark.parametrize("x", [1e-12, 1e-6, 0.003, 0.01, 0.0101, 0.3, 1.0, 4.5])
def test_one_minus_sinc(x):
    assert one_minus_sinc(x) == pytest.approx(float(1 - mp_sinc(x)), rel=1e-13)


# --- densities and CDF ---------------------------------------------------------------


@pytest.mark.parametrize("mu", [0.0, 0.1, 1.0, 2.7])
def test_densities_normalized(mu):
    # the 1/y^2 tail beyond 400 carries ~5e-4; add it in closed form
    edge = 400.0
    f = (lambda y: density_p0(y)) if mu == 0 else (lambda y: density_p1(y, mu))
    body = sum(quad(f, k, k + 1, limit=50)[0] for k in range(-400, 400))
    tail = 2.0 * float(1 - mp_sinc2_cdf(edge))
    if mu:
        tail = float((1 - mp_sinc2_cdf(edge - mu)) + (1 - mp_sinc2_cdf(edge + mu)))
    assert body + tail == pytest.approx(1.0, abs=1e-9)


def test_density_p1_at_zero_separation_is_p0():
    y = np.linspace(-5, 5, 101)
    assert np.allclose(density_p1(y, 0.0), density_p0(y), rtol=0, atol=1e-16)


@given(y=st.floats(-50, 50), mu=st.floats(0, 10))
def test_density_p1_even(y, mu):
    assert density_p1(y, mu) == pytest.approx(density_p1(-y, mu), rel=1e-12, abs=1e-300)
    assert density_p1(y, mu) >= 0.0


@pytest.mark.parametrize("y", [-80.0, -3.3, -0.2, 0.0, 1e-6, 0.4, 1.0, 7.25, 150.0, 2e4])
def test_sinc2_cdf_closed_form(y):
    assert float(sinc2_cdf(y)) == pytest.approx(float(mp_sinc2_cdf(y)), rel=1e-13, abs=1e-15)


def test_sinc2_cdf_monotone_and_symmetric():
    y = np.linspace(-30, 30, 6001)
    f = sinc2_cdf(y)
    assert np.all(np.diff(f) >= -1e-16)
    assert np.allclose(f + sinc2_cdf(-y), 1.0, atol=1e-15)


# --- pixel masses -------------------------------------------------------------------


@pytest.mark.parametrize("delta,mu", [(0.5, 0.1), (0.02, 0.3), (1.3, 2.0), (1e-3, 0.1)])
def test_pixel_masses_match_cdf_differences(delta, mu):
    n = np.array([-40, -3, -1, 0, 1, 2, 17, 301])
    q0, q1 = pixel_mass_pairs(n, delta, mu)
    for k, a, b in zip(n, q0, q1):
        lo, hi = (k - 0.5) * delta, (k + 0.5) * delta
        want0 = mp_sinc2_cdf(hi) - mp_sinc2_cdf(lo)
        want1 = (
            mp_sinc2_cdf(hi - mu) - mp_sinc2_cdf(lo - mu) + mp_sinc2_cdf(hi + mu) - mp_sinc2_cdf(lo + mu)
        ) / 2
        assert a == pytest.approx(float(want0), rel=1e-10, abs=1e-15)
        assert b == pytest.approx(float(want1), rel=1e-10, abs=1e-15)


def test_pixel_grid_mass_accounting():
    grid = pixel_masses(0.3, 0.5, tail_tol=1e-4)
    assert len(grid.q0) == 2 * grid.half_extent + 1
    assert grid.tail_mass0 <= 1e-4 and grid.tail_mass1 <= 1e-4
    assert math.fsum(grid.q0) + grid.tail_mass0 == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(grid.q1) + grid.tail_mass1 == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(grid.q0, grid.q0[::-1])


def test_pixel_masses_reject_bad_input():
    with pytest.raises(ValueError):
        pixel_masses(0.0, 0.1)
    with pytest.raises(ValueError):
        pixel_masses(0.1, -1.0)
    with pytest.raises(ValueError):
        pixel_masses(0.1, 0.1, tail_tol=0.0)
    with pytest.raises(ValueError):
        pixel_masses(1e-6, 0.1, tail_tol=1e-9)


# --- mode geometry ------------------------------------------------------------------


def mp_geometry(mu):
    s1, s2 = mp_sinc(mu), mp_sinc(2 * mpmath.mpf(mu))
    a = mpmath.sqrt(2) * s1 / mpmath.sqrt(1 + s2)
    b = mpmath.sqrt((1 + s2 - 2 * s1**2) / (1 + s2))
    return a, b, 2 * s1**2 / (1 + s2)


@pytest.mark.parametrize("mu", [1e-4, 3e-3, 0.006, 0.05, 0.1, 0.5, 1.0, 2.2, 3.0])
def test_mode_geometry_against_high_precision(mu):
    g = mode_geometry(mu, 0.01)
    a, b, eta = mp_geometry(mu)
    assert g.a == pytest.approx(float(a), rel=1e-12)
    assert g.b == pytest.approx(float(b), rel=1e-9)
    assert g.eta == pytest.approx(float(eta), rel=1e-12, abs=1e-30)


@given(mu=st.floats(0, 20), n0=st.floats(1e-8, 1.0))
@settings(max_examples=200)
def test_mode_geometry_identities(mu, n0):
    g = mode_geometry(mu, n0)
    assert g.a**2 + g.b**2 == pytest.approx(1.0, abs=1e-12)
    assert g.eta == pytest.approx(g.a**2, abs=1e-12)
    assert g.n1 + g.n2 == pytest.approx(n0, rel=1e-12)
    assert g.n0 == pytest.approx(n0, rel=1e-12)
    assert 0.0 <= g.eta <= 1.0 + 1e-15


def test_mode_geometry_special_points():
    g = mode_geometry(0.0, 0.01)
    assert (g.a, g.b, g.eta, g.n2) == (1.0, 0.0, 1.0, 0.0)
    g = mode_geometry(1.0, 0.01)
    # sinc(1) = sinc(2) = 0: everything lands in modes 2 and 3 equally
    assert abs(g.eta) < 1e-30
    assert g.n1 == pytest.approx(0.005) and g.n2 == pytest.approx(0.005)


# --- scene parameters -----------------------------------------------------------------


def test_scene_params():
    sc = SceneParams(0.1, 0.01, 300)
    assert sc.n_total == pytest.approx(3.0)
    for bad in [(-0.1, 0.01, 1), (0.1, 0.0, 1), (0.1, math.nan, 1), (0.1, 0.01, -1), (0.1, 0.01, 2.5), (math.inf, 0.1, 1)]:
        with pytest.raises(ValueError):
            SceneParams(*bad)
