"""Photon counting behind a three-mode sorter.

Mode 1 is the on-axis point spread mode, mode 2 the antisymmetric
combination of the displaced modes, and mode 3 the symmetric remainder
orthogonal to mode 1. Under H0 only mode 1 is populated; under H1 modes 1 and
3 share a thermal population split binomially with parameter ``eta`` and
mode 2 holds an independent thermal population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from qlimit.chernoff import ChernoffResult, DiscretePMF, discrete_chernoff
from qlimit.errors import CutoffError
from qlimit.optics import ModeGeometry, mode_geometry, one_minus_sinc, sinc

PMF_TAIL = 1e-12
CUTOFF_TAIL = 1e-10


@dataclass(frozen=True)
class ClickRecord:
    k1: int
    k2: int
    k3: int

    def __post_init__(self):
        for name in ("k1", "k2", "k3"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.k1 + self.k2 + self.k3


def log_thermal(k, n):
    """Log Bose-Einstein mass ``n**k / (1+n)**(k+1)``; ``n = 0`` is the vacuum."""
    k = np.asarray(k, dtype=float)
    return xlogy(k, n) - (k + 1.0) * math.log1p(n)


def _log_binomial_split(k_in, k_out, eta):
    t = k_in + k_out
    return gammaln(t + 1.0) - gammaln(k_in + 1.0) - gammaln(k_out + 1.0) + xlogy(k_in, eta) + xlogy(k_out, 1.0 - eta)


def log_pmf_h0(k1, k2, k3, n0: float):
    k1, k2, k3 = (np.asarray(k, dtype=float) for k in (k1, k2, k3))
    out = log_thermal(k1, n0)
    return np.where((k2 == 0) & (k3 == 0), out, -np.inf)


def log_pmf_h1(k1, k2, k3, geom: ModeGeometry):
    k1, k2, k3 = (np.asarray(k, dtype=float) for k in (k1, k2, k3))
    return log_thermal(k1 + k3, geom.n1) + _log_binomial_split(k1, k3, geom.eta) + log_thermal(k2, geom.n2)


def pmf_h0(rec: ClickRecord, n0: float) -> float:
    """Click probability under one source: Bose-Einstein in mode 1, nothing elsewhere."""
    if not n0 > 0:
        raise ValueError(f"n0 must be > 0, got {n0!r}")
    return float(np.exp(log_pmf_h0(rec.k1, rec.k2, rec.k3, n0)))


def pmf_h1(rec: ClickRecord, geom: ModeGeometry) -> float:
    """Click probability under two sources."""
    return float(np.exp(log_pmf_h1(rec.k1, rec.k2, rec.k3, geom)))


def receiver_exponent(mu: float, n0: float) -> ChernoffResult:
    """Closed-form Chernoff exponent of the sorted-mode receiver.

    ``xi_R = log(1 + n2) + log(1 + (1 - eta) n1)``, attained in the ``s -> 0``
    limit.
    """
    geom = mode_geometry(mu, n0)
    # (1 - eta) n1 = n0 (1 + s2 - 2 s1**2) / 2, kept free of cancellation
    xi = math.log1p(geom.n2) + math.log1p(n0 * geom.B**2 / 4.0)
    return ChernoffResult(exponent=xi, s_star=0.0)


def auto_cutoff(n_max: float, tail: float = PMF_TAIL) -> int:
    """Smallest ``K`` with ``(n/(1+n))**(K+1) < tail``."""
    if n_max <= 0:
        return 0
    ratio = n_max / (1.0 + n_max)
    return max(0, math.floor(math.log(tail) / math.log(ratio)))


def _grid(cutoff):
    k = np.arange(cutoff + 1)
    k1, k2, k3 = np.meshgrid(k, k, k, indexing="ij")
    return k1.ravel(), k2.ravel(), k3.ravel()


def _to_pmf(keys, logp, on_off):
    prob = np.exp(logp)
    tail = max(0.0, 1.0 - math.fsum(prob))
    if tail > CUTOFF_TAIL:
        raise CutoffError(f"count cutoff leaves mass {tail:.3e} (> {CUTOFF_TAIL:g})")
    if on_off:
        clicks = np.minimum(keys, 1)
        code = clicks @ (1 << np.arange(keys.shape[1]))
        prob = np.bincount(code, weights=prob, minlength=1 << keys.shape[1])
        keys = ((np.arange(len(prob))[:, None] >> np.arange(keys.shape[1])) & 1).astype(np.int64)
    return DiscretePMF(keys=keys, prob=prob, tail_mass=tail)


def receiver_exponent_bruteforce(mu: float, n0: float, cutoff: int | None = None, on_off: bool = False) -> ChernoffResult:
    """Chernoff exponent from the full click PMFs over ``{0..cutoff}**3``.

    ``on_off`` coarsens each detector to click/no-click before optimizing.
    """
    geom = mode_geometry(mu, n0)
    if cutoff is None:
        cutoff = auto_cutoff(n0)
    k1, k2, k3 = _grid(cutoff)
    keys = np.stack([k1, k2, k3], axis=1)
    p0 = _to_pmf(keys, log_pmf_h0(k1, k2, k3, n0), on_off)
    p1 = _to_pmf(keys, log_pmf_h1(k1, k2, k3, geom), on_off)
    return discrete_chernoff(p0, p1)


def normalized_receiver_exponent(mu: float, check: bool = True) -> float:
    """``lim_{n0 -> 0} xi_R / n0 = 1 - sinc(mu)**2``."""
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    value = one_minus_sinc(mu) * (1.0 + sinc(mu))
    if check and mu > 0:
        probe = receiver_exponent(mu, 1e-6).exponent / 1e-6
        if abs(probe - value) > 1e-5 * value:
            raise ArithmeticError(f"xi_R/n0 at n0=1e-6 is {probe!r}, limit {value!r}")
    return value


def two_mode_counting_exponent(n1: float, n2: float, eta: float, basis: str = "h0-product", cutoff: int | None = None) -> ChernoffResult:
    """Chernoff exponent of photon counting for thermal(n1) x vac against a
    beamsplitter-mixed thermal(n2) x vac.

    ``h0-product`` counts in the modes where H0 is a product state;
    ``h1-product`` counts in the eigenmodes of H1, where H0 appears mixed.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
    if n1 <= 0 or n2 <= 0:
        raise ValueError("thermal occupations must be > 0")
    if basis not in ("h0-product", "h1-product"):
        raise ValueError(f"unknown basis {basis!r}")
    if cutoff is None:
        cutoff = auto_cutoff(max(n1, n2))
    k = np.arange(cutoff + 1)
    ka, kb = (g.ravel() for g in np.meshgrid(k, k, indexing="ij"))
    keys = np.stack([ka, kb], axis=1)
    product_n, mixed_n = (n1, n2) if basis == "h0-product" else (n2, n1)
    log_product = np.where(kb == 0, log_thermal(ka, product_n), -np.inf)
    log_mixed = log_thermal(ka + kb, mixed_n) + _log_binomial_split(ka.astype(float), kb.astype(float), eta)
    pm = _to_pmf(keys, log_product, False)
    pq = _to_pmf(keys, log_mixed, False)
    if basis == "h0-product":
        return discrete_chernoff(pm, pq)
    return discrete_chernoff(pq, pm)
