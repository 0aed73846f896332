"""Image-plane photon densities, pixel masses and the mode-overlap geometry.

Coordinates are the scaled image-plane coordinate ``y`` in which the hard
1-D aperture produces the point spread ``sinc(y)`` and the two sources under
the alternative hypothesis sit at ``y = +mu`` and ``y = -mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import sici

_SERIES_CUTOFF = 1e-4
_MAX_PIXELS = 20_000_000


@dataclass(frozen=True)
class SceneParams:
    """The three free parameters of the problem.

    mu: normalized half-separation of the two sources (Rayleigh units).
    n0: mean photon number per temporal mode.
    m: number of temporal modes collected.
    """

    mu: float
    n0: float
    m: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu!r}")
        if not (math.isfinite(self.n0) and self.n0 > 0):
            raise ValueError(f"n0 must be finite and > 0, got {self.n0!r}")
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"m must be a non-negative integer, got {self.m!r}")

    @property
    def n_total(self) -> float:
        """Total mean photon number ``N = m * n0``."""
        return self.m * self.n0


@dataclass(frozen=True)
class ModeGeometry:
    s1: float
    s2: float
    A: float
    B: float
    a: float
    b: float
    eta: float
    n1: float
    n2: float

    @property
    def n0(self) -> float:
        return self.n1 + self.n2


@dataclass(frozen=True)
class PixelGrid:
    """Pixel masses of both densities on a grid centred at ``y = 0``.

    ``q0[i]`` and ``q1[i]`` belong to pixel index ``n = i - half_extent``,
    covering ``[(n - 1/2) delta, (n + 1/2) delta]``.
    """

    delta: float
    mu: float
    half_extent: int
    q0: np.ndarray
    q1: np.ndarray
    tail_mass0: float
    tail_mass1: float

    @property
    def index(self) -> np.ndarray:
        return np.arange(-self.half_extent, self.half_extent + 1)

    def mass(self, hypothesis: int) -> np.ndarray:
        return self.q0 if hypothesis == 0 else self.q1

    def tail_mass(self, hypothesis: int) -> float:
        return self.tail_mass0 if hypothesis == 0 else self.tail_mass1


def sinc(x):
    """Normalized sinc ``sin(pi x) / (pi x)``; accepts scalars or arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if abs(x) < _SERIES_CUTOFF:
            z = (math.pi * x) ** 2
            return 1.0 - z / 6.0 + z * z / 120.0
        px = math.pi * x
        return math.sin(px) / px
    x = np.asarray(x, dtype=float)
    px = np.pi * x
    small = np.abs(x) < _SERIES_CUTOFF
    z = px * px
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sin(px) / px
    return np.where(small, 1.0 - z / 6.0 + z * z / 120.0, out)


def one_minus_sinc(x: float) -> float:
    """``1 - sinc(x)`` without cancellation for small ``x``."""
    z = (math.pi * float(x)) ** 2
    if z < 1e-3:
        return z / 6.0 - z * z / 120.0 + z**3 / 5040.0
    return 1.0 - sinc(x)


def density_p0(y):
    """Single on-axis source: ``sinc(y)**2``."""
    return sinc(y) ** 2


def density_p1(y, mu):
    """Two sources at ``+-mu``, each carrying half the light."""
    if np.ndim(y) == 0:
        y = float(y)
    else:
        y = np.asarray(y, dtype=float)
    return 0.5 * (sinc(y - mu) ** 2 + sinc(y + mu) ** 2)


def _sinc2_upper_tail(y):
    """Mass of ``sinc**2`` on ``(y, inf)``, from the sine-integral antiderivative."""
    y = np.asarray(y, dtype=float)
    si, _ = sici(2.0 * np.pi * y)
    with np.errstate(invalid="ignore", divide="ignore"):
        edge = np.where(y == 0.0, 0.0, np.sin(np.pi * y) ** 2 / (np.pi**2 * y))
    return 0.5 - si / np.pi + edge


def sinc2_cdf(y):
    """Closed-form CDF of ``sinc**2``: ``1/2 + Si(2 pi y)/pi - sin(pi y)**2 / (pi**2 y)``."""
    return 1.0 - _sinc2_upper_tail(y)


def tail_envelope_extent(mu: float, tail_tol: float) -> float:
    """Smallest ``Y`` whose two-sided envelope mass ``2 / (pi**2 (Y - mu))`` is below ``tail_tol``."""
    return mu + 1.0 + 2.0 / (math.pi**2 * tail_tol)


@lru_cache(maxsize=64)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=256)
def _pixel_rule_order(delta: float, mu: float) -> int:
    # sinc**2 is entire with derivatives bounded by (2 pi)**k; the central pixels
    # are the worst case, so the order fixed there holds across the grid.
    n = np.arange(0, 64)
    for order in (4, 6, 8, 12, 16, 24, 32, 48, 64):
        lo_, hi_ = _raw_masses(n, delta, mu, order), _raw_masses(n, delta, mu, 2 * order)
        if max(np.max(np.abs(lo_[0] - hi_[0])), np.max(np.abs(lo_[1] - hi_[1]))) < 1e-15:
            return order
    return 128


def _raw_masses(n, delta, mu, order):
    x, w = _gauss_legendre(order)
    centres = np.asarray(n, dtype=float)[:, None] * delta
    y = centres + 0.5 * delta * x[None, :]
    hw = 0.5 * delta * w
    q0 = (density_p0(y) * hw).sum(axis=1)
    q1 = (density_p1(y, mu) * hw).sum(axis=1)
    return q0, q1


def pixel_mass_pairs(n, delta: float, mu: float):
    """Pixel masses ``(q0[n], q1[n])`` for an arbitrary array of pixel indices.

    Each entry is a Gauss-Legendre integral over its pixel, with the rule order
    chosen so the per-pixel absolute error is below 1e-15.
    """
    if not delta > 0:
        raise ValueError(f"pixel width must be > 0, got {delta!r}")
    n = np.atleast_1d(np.asarray(n))
    order = _pixel_rule_order(float(delta), float(mu))
    out0 = np.empty(n.shape, dtype=float)
    out1 = np.empty(n.shape, dtype=float)
    flat = n.ravel()
    step = max(1, 4_000_000 // order)
    for start in range(0, flat.size, step):
        sl = slice(start, start + step)
        q0, q1 = _raw_masses(flat[sl], delta, mu, order)
        out0.ravel()[sl] = q0
        out1.ravel()[sl] = q1
    return out0, out1


def pixel_masses(delta: float, mu: float, tail_tol: float = 1e-4) -> PixelGrid:
    """Integrate both densities over a pixel grid wide enough that each tail mass is below ``tail_tol``.

    The extent comes from the envelope ``p(y) <= 1 / (pi**2 (|y| - mu)**2)``;
    the reported tail masses are exact (sine-integral closed form).
    """
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"pixel width must be > 0, got {delta!r}")
    if not (0.0 < tail_tol < 1.0):
        raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol!r}")
    if not (math.isfinite(mu) and mu >= 0):
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    extent = tail_envelope_extent(mu, tail_tol)
    half = max(0, math.ceil(extent / delta - 0.5))
    if 2 * half + 1 > _MAX_PIXELS:
        raise ValueError(
            f"tail_tol={tail_tol:g} at delta={delta:g} needs {2 * half + 1} pixels "
            f"(limit {_MAX_PIXELS}); loosen tail_tol or widen the pixels"
        )
    pos = np.arange(0, half + 1)
    q0p, q1p = pixel_mass_pairs(pos, delta, mu)
    q0 = np.concatenate([q0p[:0:-1], q0p])
    q1 = np.concatenate([q1p[:0:-1], q1p])
    edge = (half + 0.5) * delta
    tail0 = 2.0 * float(_sinc2_upper_tail(edge))
    tail1 = float(_sinc2_upper_tail(edge - mu) + _sinc2_upper_tail(edge + mu))
    return PixelGrid(
        delta=float(delta),
        mu=float(mu),
        half_extent=int(half),
        q0=q0,
        q1=q1,
        tail_mass0=tail0,
        tail_mass1=tail1,
    )


def _overlap_gap(mu: float, s1: float, s2: float) -> float:
    """``1 + sinc(2 mu) - 2 sinc(mu)**2``, which cancels to O(mu**4) near zero."""
    x = math.pi * mu
    if x < 2e-2:
        x2 = x * x
        # Taylor coefficients of 1 + sin(2x)/(2x) - 2 sin(x)**2/x**2
        return x2 * x2 * (2.0 / 45.0 - x2 * (2.0 / 315.0) + x2 * x2 * (2.0 / 4725.0))
    return max(0.0, 1.0 + s2 - 2.0 * s1 * s1)


def mode_geometry(mu: float, n0: float) -> ModeGeometry:
    """Overlap constants of the three orthonormalized aperture modes."""
    if not (math.isfinite(mu) and mu >= 0):
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    if not (math.isfinite(n0) and n0 > 0):
        raise ValueError(f"n0 must be > 0, got {n0!r}")
    s1 = sinc(mu)
    s2 = sinc(2.0 * mu)
    gap = _overlap_gap(mu, s1, s2)
    denom = 1.0 + s2
    a = math.sqrt(2.0) * s1 / math.sqrt(denom)
    b = math.sqrt(gap / denom)
    eta = 2.0 * s1 * s1 / denom
    n1 = n0 * denom / 2.0
    n2 = n0 * one_minus_sinc(2.0 * mu) / 2.0
    return ModeGeometry(
        s1=s1,
        s2=s2,
        A=2.0 * s1,
        B=math.sqrt(2.0 * gap),
        a=a,
        b=b,
        eta=min(1.0, eta),
        n1=n1,
        n2=n2,
    )
