import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.stats import chisquare, kstest

from qlimit.chernoff import bound_at, continuum_exponent
from qlimit.montecarlo import (
    BLOCK_TRIALS,
    TrialConfig,
    chernoff_bound,
    continuum_loglr,
    estimate_error,
    ml_decide,
    pixel_index,
    pixel_loglr,
    sample_continuum,
    sample_mode_records,
    sample_pixelated,
    sample_positions,
    sample_sinc2,
    wilson_interval,
)
from qlimit.optics import SceneParams, mode_geometry, pixel_masses, sinc, sinc2_cdf
from qlimit.receiver import log_pmf_h1, receiver_exponent

Z95 = 1.959963984540054


def rng(seed=1234):
    return np.random.default_rng(seed)


# --- Wilson interval ------------------------------------------------------------------


@pytest.mark.parametrize("k,n", [(0, 100), (3, 100), (50, 100), (100, 100), (17, 200000)])
def test_wilson_interval_solves_score_equation(k, n):
    # bounds are the roots of (k/n - p)^2 = z^2 p (1 - p) / n
    p_hat = k / n
    score = lambda p: (p_hat - p) ** 2 - Z95**2 * p * (1 - p) / n
    lo, hi = wilson_interval(k, n)
    # p_hat itself is a root when k is 0 or n; bracket away from it
    want_lo = 0.0 if k == 0 else brentq(score, 0.0, p_hat - (1e-9 if k == n else 0.0), xtol=1e-15)
    want_hi = 1.0 if k == n else brentq(score, p_hat + (1e-9 if k == 0 else 0.0), 1.0, xtol=1e-15)
    assert lo == pytest.approx(want_lo, abs=1e-12)
    assert hi == pytest.approx(want_hi, abs=1e-12)


def test_wilson_rejects_empty():
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


# --- samplers ------------------------------------------------------------------------


def test_sinc2_sampler_matches_cdf():
    y = sample_sinc2(rng(), 200_000)
    assert kstest(y, sinc2_cdf).pvalue > 1e-3


def test_sinc2_sampler_tail_fraction():
    n = 400_000
    y = sample_sinc2(rng(7), n)
    p = 2 * (1 - float(sinc2_cdf(64.0)))
    far = np.count_nonzero(np.abs(y) > 64)
    assert abs(far - n * p) < 4 * math.sqrt(n * p)
    p = 2 * (1 - float(sinc2_cdf(500.0)))
    far = np.count_nonzero(np.abs(y) > 500)
    assert abs(far - n * p) < 4 * math.sqrt(n * p) + 1


def test_two_source_positions():
    mu = 0.7
    y = sample_positions(1, mu, rng(3), 200_000)
    cdf = lambda t: 0.5 * (sinc2_cdf(t - mu) + sinc2_cdf(t + mu))
    assert kstest(y, cdf).pvalue > 1e-3


def test_continuum_photon_counts_are_poisson():
    sc = SceneParams(0.3, 0.01, 500)
    g = rng(11)
    counts = np.array([len(sample_continuum(0, sc, g)) for _ in range(4000)])
    assert abs(counts.mean() - 5.0) < 4 * math.sqrt(5.0 / 4000)
    assert counts.var() == pytest.approx(5.0, rel=0.1)


def test_pixel_counts():
    sc = SceneParams(0.5, 0.01, 1000)
    grid = pixel_masses(0.4, 0.5, tail_tol=1e-3)
    g = rng(5)
    tot = np.array([sample_pixelated(1, grid, sc, g).sum() for _ in range(3000)])
    mean = 10.0 * (1 - grid.tail_mass1)
    assert abs(tot.mean() - mean) < 4 * math.sqrt(mean / 3000)


def test_mode_records_match_pmf():
    geom = mode_geometry(0.4, 0.3)
    rec = sample_mode_records(1, geom, 100_000, rng(9))
    keys = [(a, b, c) for a in range(3) for b in range(3) for c in range(3) if a + b + c <= 2]
    probs = np.array([math.exp(log_pmf_h1(*k, geom)) for k in keys])
    observed = np.array([np.count_nonzero(np.all(rec == k, axis=1)) for k in keys])
    observed = np.append(observed, len(rec) - observed.sum())
    probs = np.append(probs, 1 - probs.sum())
    assert chisquare(observed, probs * len(rec)).pvalue > 1e-3


def test_mode_records_under_h0():
    geom = mode_geometry(0.4, 0.3)
    rec = sample_mode_records(0, geom, 50_000, rng(2))
    assert np.all(rec[:, 1:] == 0)
    assert rec[:, 0].mean() == pytest.approx(0.3, abs=4 * math.sqrt(0.3 * 1.3 / 50_000))
    with pytest.raises(ValueError):
        sample_mode_records(2, geom, 3, rng())


# --- decision rule and likelihood ratios ----------------------------------------------


def test_ml_decide():
    assert ml_decide(0.3) == 1
    assert ml_decide(-0.3) == 0
    assert ml_decide(0.0) == 0
    assert ml_decide(math.inf) == 1
    assert ml_decide(-math.inf) == 0
    with pytest.raises(FloatingPointError):
        ml_decide(math.nan)


def test_single_photon_on_axis_favours_one_source():
    mu = 0.2
    lr = continuum_loglr(np.array([0.0]), mu)[0]
    assert lr == pytest.approx(2 * math.log(sinc(mu)), rel=1e-14)
    assert ml_decide(lr) == 0


def test_loglr_at_density_zeros():
    # integers zero the one-source density only (up to sin(pi) round-off)
    lr = continuum_loglr(np.array([1.0, -2.0]), 0.3)
    assert np.all(lr > 60)
    # away from the zeros both densities are positive and the ratio is finite
    lr = continuum_loglr(np.array([0.5 + 1e-9]), 0.5)
    assert np.isfinite(lr).all()


def test_pixel_loglr():
    idx = pixel_index(np.array([0.04, 0.06, -0.26, 1e9]), 0.1)
    assert list(idx[:3]) == [0, 1, -3]
    lr = pixel_loglr(idx, 0.1, 0.3)
    from qlimit.optics import pixel_mass_pairs

    q0, q1 = pixel_mass_pairs(idx[:3], 0.1, 0.3)
    assert np.allclose(lr[:3], np.log(q1 / q0), rtol=1e-13)
    assert np.isfinite(lr[3])


# --- the trial driver ------------------------------------------------------------------


def test_config_validation():
    sc = SceneParams(0.5, 0.01, 10)
    for kw in [dict(receiver="ideal"), dict(trials=0), dict(seed=-1), dict(receiver="pixelated")]:
        with pytest.raises(ValueError):
            TrialConfig(sc, **kw)


def test_reproducible_and_thread_independent():
    cfg = TrialConfig(SceneParams(0.5, 0.01, 200), "continuum", trials=BLOCK_TRIALS + 1000, seed=42)
    a = estimate_error(cfg, threads=1)
    b = estimate_error(cfg, threads=4)
    assert a == b
    c = estimate_error(TrialConfig(cfg.scenario, "continuum", cfg.trials, seed=43))
    assert c != a


def test_no_modes_means_guessing():
    for receiver, delta in [("mode-sorted", None), ("continuum", None), ("pixelated", 0.3)]:
        est = estimate_error(TrialConfig(SceneParams(0.5, 0.01, 0), receiver, 2000, 1, delta=delta))
        assert est.p_hat == 0.5


@pytest.mark.parametrize("m", [10, 40])
def test_mode_sorted_error_is_exactly_the_bound(m):
    # under H0 no record is ever misread; under H1 the error is the chance of no tell-tale click
    mu, n0 = 0.5, 0.05
    cfg = TrialConfig(SceneParams(mu, n0, m), "mode-sorted", 200_000, 3)
    est = estimate_error(cfg)
    exact = 0.5 * math.exp(-m * receiver_exponent(mu, n0).exponent)
    sigma = math.sqrt(exact * (1 - exact) / (2 * cfg.trials))
    assert est.errors_h0 == 0
    assert abs(est.p_hat - exact) < 4 * sigma
    assert chernoff_bound(cfg) == pytest.approx(exact, rel=1e-14)


def test_explicit_records_agree_with_sufficient_statistics():
    sc = SceneParams(0.5, 0.05, 15)
    fast = estimate_error(TrialConfig(sc, "mode-sorted", 20_000, 8))
    slow = estimate_error(TrialConfig(sc, "mode-sorted", 20_000, 9, explicit_records=True))
    pooled = 0.5 * (fast.p_hat + slow.p_hat)
    sigma = math.sqrt(pooled * (1 - pooled) * 2 / (2 * 20_000))
    assert abs(fast.p_hat - slow.p_hat) < 4 * sigma


def test_continuum_error_below_bound():
    cfg = TrialConfig(SceneParams(0.5, 0.01, 300), "continuum", 20_000, 5)
    est = estimate_error(cfg)
    bound = bound_at(continuum_exponent(0.5), 3.0)
    assert chernoff_bound(cfg) == pytest.approx(bound)
    assert est.p_hat <= bound + 3 * est.half_width
    assert est.ci_low <= est.p_hat <= est.ci_high
