"""Monte Carlo error rates of the three receivers under maximum-likelihood decisions.

Trials are split into fixed-size blocks. Each (hypothesis, block) pair owns a
Philox stream spawned from the root seed, so results do not depend on how
many threads process the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from qlimit.chernoff import bound_at, continuum_exponent, pixelated_exponent
from qlimit.optics import (
    ModeGeometry,
    PixelGrid,
    SceneParams,
    _sinc2_upper_tail,
    density_p0,
    density_p1,
    mode_geometry,
    pixel_mass_pairs,
    sinc2_cdf,
)
from qlimit.receiver import log_pmf_h0, log_pmf_h1, receiver_exponent

RECEIVERS = ("continuum", "pixelated", "mode-sorted")
BLOCK_TRIALS = 4096
TABLE_HALF_WIDTH = 64.0
TABLE_STEP = 1e-3
WILSON_Z = 1.959963984540054


@dataclass(frozen=True)
class TrialConfig:
    scenario: SceneParams
    receiver: str = "mode-sorted"
    trials: int = 10_000
    seed: int = 0
    delta: float | None = None
    explicit_records: bool = False

    def __post_init__(self):
        if self.receiver not in RECEIVERS:
            raise ValueError(f"receiver must be one of {RECEIVERS}, got {self.receiver!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.receiver == "pixelated":
            if self.delta is None or not (math.isfinite(self.delta) and self.delta > 0):
                raise ValueError(f"pixelated receiver needs delta > 0, got {self.delta!r}")


@dataclass(frozen=True)
class ErrorEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    trials: int
    errors_h0: int
    errors_h1: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def wilson_interval(errors: int, n: int, z: float = WILSON_Z):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = errors / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


# --- position sampling -----------------------------------------------------------


@lru_cache(maxsize=1)
def _cdf_table():
    y = np.arange(-TABLE_HALF_WIDTH, TABLE_HALF_WIDTH + 0.5 * TABLE_STEP, TABLE_STEP)
    cdf = sinc2_cdf(y)
    cdf = np.maximum.accumulate(cdf)
    return y, cdf


def central_mass() -> float:
    return 1.0 - 2.0 * float(_sinc2_upper_tail(TABLE_HALF_WIDTH))


def sample_sinc2(rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws from ``sinc(y)**2``: inverse-CDF table on ``[-64, 64]`` and
    envelope rejection (Pareto proposal ``64 / u``) beyond."""
    y_tab, cdf = _cdf_table()
    out = np.empty(size)
    tail = rng.random(size) >= central_mass()
    n_c = int(size - tail.sum())
    u = cdf[0] + (cdf[-1] - cdf[0]) * rng.random(n_c)
    out[~tail] = np.interp(u, cdf, y_tab)
    need = int(tail.sum())
    drawn = []
    while need > 0:
        r = TABLE_HALF_WIDTH / (1.0 - rng.random(2 * need + 8))
        keep = rng.random(r.size) < np.sin(np.pi * r) ** 2
        got = r[keep][:need]
        drawn.append(got)
        need -= got.size
    if drawn:
        r = np.concatenate(drawn)
        out[tail] = np.where(rng.random(r.size) < 0.5, -r, r)
    return out


def sample_positions(hypothesis: int, mu: float, rng: np.random.Generator, size: int) -> np.ndarray:
    y = sample_sinc2(rng, size)
    if hypothesis == 1:
        y = y + np.where(rng.random(size) < 0.5, -mu, mu)
    return y


def sample_continuum(hypothesis: int, scenario: SceneParams, rng: np.random.Generator) -> np.ndarray:
    """Photon positions of one integration window: Poisson count with mean ``m * n0``."""
    _check_hypothesis(hypothesis)
    n = rng.poisson(scenario.n_total)
    return sample_positions(hypothesis, scenario.mu, rng, n)


def sample_pixelated(hypothesis: int, grid: PixelGrid, scenario: SceneParams, rng: np.random.Generator) -> np.ndarray:
    """Independent Poisson counts with means ``N q[n]`` over the grid's pixels."""
    _check_hypothesis(hypothesis)
    return rng.poisson(scenario.n_total * grid.mass(hypothesis))


def sample_mode_records(hypothesis: int, geom: ModeGeometry, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` click records as rows ``(k1, k2, k3)``."""
    _check_hypothesis(hypothesis)
    out = np.zeros((m, 3), dtype=np.int64)
    if hypothesis == 0:
        out[:, 0] = rng.geometric(1.0 / (1.0 + geom.n0), size=m) - 1
        return out
    t = rng.geometric(1.0 / (1.0 + geom.n1), size=m) - 1
    out[:, 0] = rng.binomial(t, geom.eta)
    out[:, 2] = t - out[:, 0]
    out[:, 1] = rng.geometric(1.0 / (1.0 + geom.n2), size=m) - 1
    return out


def _check_hypothesis(h):
    if h not in (0, 1):
        raise ValueError(f"hypothesis must be 0 or 1, got {h!r}")


def ml_decide(loglr) -> int:
    """Maximum-likelihood decision from ``log(L1 / L0)``; ties go to H0."""
    loglr = float(loglr)
    if math.isnan(loglr):
        raise FloatingPointError("log-likelihood ratio is NaN")
    return 1 if loglr > 0 else 0


# --- per-photon log-likelihood ratios -------------------------------------------------


def continuum_loglr(y: np.ndarray, mu: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(density_p1(y, mu)) - np.log(density_p0(y))


def pixel_index(y: np.ndarray, delta: float) -> np.ndarray:
    idx = np.rint(np.asarray(y) / delta)
    return np.clip(idx, -(2.0**62), 2.0**62).astype(np.int64)


def pixel_loglr(idx: np.ndarray, delta: float, mu: float) -> np.ndarray:
    uniq, inv = np.unique(idx, return_inverse=True)
    q0, q1 = pixel_mass_pairs(uniq, delta, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(q1) - np.log(q0)
    # far-tail pixels whose masses underflow carry no information
    lr[(q0 == 0) & (q1 == 0)] = 0.0
    return lr[inv]


# --- trial blocks ------------------------------------------------------------------


def _block_rng(seed: int, hypothesis: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(hypothesis, block))))


def _photon_block(config: TrialConfig, hypothesis: int, rng, n_trials: int) -> np.ndarray:
    sc = config.scenario
    counts = rng.poisson(sc.n_total, size=n_trials)
    y = sample_positions(hypothesis, sc.mu, rng, int(counts.sum()))
    if config.receiver == "continuum":
        lr = continuum_loglr(y, sc.mu)
    else:
        # binning a Poisson process over pixels yields independent Poisson pixel counts
        lr = pixel_loglr(pixel_index(y, config.delta), config.delta, sc.mu)
    owner = np.repeat(np.arange(n_trials), counts)
    return _sum_by_owner(lr, owner, n_trials)


def _sum_by_owner(lr, owner, n):
    out = np.zeros(n)
    pos_inf = np.zeros(n, dtype=bool)
    neg_inf = np.zeros(n, dtype=bool)
    finite = np.isfinite(lr)
    np.add.at(out, owner[finite], lr[finite])
    pos_inf[owner[lr == np.inf]] = True
    neg_inf[owner[lr == -np.inf]] = True
    out[pos_inf] = np.inf
    out[neg_inf] = -np.inf
    out[pos_inf & neg_inf] = np.nan
    return out


def mode_sorted_statistics(geom: ModeGeometry):
    """``(c, d)`` with ``loglr = m c + d K1`` for records carrying no clicks in modes 2 and 3."""
    n0, n1, n2 = geom.n0, geom.n1, geom.n2
    c = math.log1p(n0) - math.log1p(n1) - math.log1p(n2)
    d = math.log(geom.eta * n1) - math.log1p(n1) - math.log(n0) + math.log1p(n0) if geom.eta > 0 else -math.inf
    return c, d


def _mode_block(config: TrialConfig, hypothesis: int, rng, n_trials: int) -> np.ndarray:
    sc = config.scenario
    geom = mode_geometry(sc.mu, sc.n0)
    m = int(sc.m)
    if config.explicit_records:
        out = np.empty(n_trials)
        for i in range(n_trials):
            rec = sample_mode_records(hypothesis, geom, m, rng)
            lp1 = log_pmf_h1(rec[:, 0], rec[:, 1], rec[:, 2], geom)
            lp0 = log_pmf_h0(rec[:, 0], rec[:, 1], rec[:, 2], sc.n0)
            with np.errstate(invalid="ignore"):
                out[i] = np.sum(lp1) - np.sum(lp0)
        return out
    c, d = mode_sorted_statistics(geom)
    if hypothesis == 0:
        k1 = rng.negative_binomial(m, 1.0 / (1.0 + sc.n0), size=n_trials) if m > 0 else np.zeros(n_trials)
        compatible = np.ones(n_trials, dtype=bool)
    else:
        stay = 1.0 / ((1.0 + geom.n2) * (1.0 + sc.n0 * geom.B**2 / 4.0))
        compatible = rng.binomial(m, 1.0 - stay, size=n_trials) == 0
        r = geom.eta * geom.n1 / (1.0 + geom.n1)
        k1 = rng.negative_binomial(m, 1.0 - r, size=n_trials) if m > 0 else np.zeros(n_trials)
    with np.errstate(invalid="ignore"):
        lr = m * c + np.where(k1 > 0, d * k1, 0.0)
    return np.where(compatible, lr, np.inf)


def _run_block(config: TrialConfig, hypothesis: int, block: int) -> int:
    start = block * BLOCK_TRIALS
    n = min(BLOCK_TRIALS, config.trials - start)
    rng = _block_rng(config.seed, hypothesis, block)
    if config.receiver == "mode-sorted":
        lr = _mode_block(config, hypothesis, rng, n)
    else:
        lr = _photon_block(config, hypothesis, rng, n)
    if np.isnan(lr).any():
        raise FloatingPointError("log-likelihood ratio is NaN")
    decide_one = lr > 0
    return int(np.sum(decide_one if hypothesis == 0 else ~decide_one))


def estimate_error(config: TrialConfig, threads: int = 1) -> ErrorEstimate:
    """Equal-prior ML error rate over ``config.trials`` trials per hypothesis."""
    if threads < 1:
        raise ValueError("threads must be >= 1")
    n_blocks = -(-config.trials // BLOCK_TRIALS)
    jobs = [(h, b) for h in (0, 1) for b in range(n_blocks)]
    if threads == 1:
        errs = [_run_block(config, h, b) for h, b in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errs = list(pool.map(lambda job: _run_block(config, *job), jobs))
    e0 = sum(e for (h, _), e in zip(jobs, errs) if h == 0)
    e1 = sum(e for (h, _), e in zip(jobs, errs) if h == 1)
    n = 2 * config.trials
    lo, hi = wilson_interval(e0 + e1, n)
    return ErrorEstimate(p_hat=(e0 + e1) / n, ci_low=lo, ci_high=hi, trials=config.trials, errors_h0=e0, errors_h1=e1)


def chernoff_bound(config: TrialConfig) -> float:
    """``exp(-M xi) / 2`` for the configured receiver."""
    sc = config.scenario
    if config.receiver == "mode-sorted":
        return bound_at(receiver_exponent(sc.mu, sc.n0), sc.m)
    if config.receiver == "continuum":
        return bound_at(continuum_exponent(sc.mu), sc.n_total)
    return bound_at(pixelated_exponent(sc.mu, config.delta), sc.n_total)
