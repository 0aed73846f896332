"""Classical Chernoff exponents.

Holds the one-dimensional search over the Chernoff parameter ``s``, the
exponent of a discrete pair of distributions, and the normalized exponents of
the continuum and pixelated focal-plane arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from qlimit.errors import ConvergenceError, NonFiniteError
from qlimit.optics import pixel_mass_pairs

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
GRID_POINTS = 65


@dataclass(frozen=True)
class ChernoffResult:
    """Chernoff exponent with its optimizing ``s``.

    ``normalized`` marks per-photon exponents (bound ``exp(-N * exponent) / 2``);
    otherwise the exponent is per temporal mode. Perfectly distinguishable
    hypotheses carry ``infinite=True`` and ``exponent = inf``; use
    :func:`bound_at` rather than exponentiating by hand.
    """

    exponent: float
    s_star: float
    normalized: bool = False
    infinite: bool = False
    error_estimate: float = 0.0

    def __post_init__(self):
        if self.infinite:
            if self.exponent != math.inf:
                raise ValueError("an infinite result must carry exponent=inf")
        elif not (math.isfinite(self.exponent) and self.exponent >= 0.0):
            raise ValueError(f"exponent must be finite and >= 0, got {self.exponent!r}")
        if not 0.0 <= self.s_star <= 1.0:
            raise ValueError(f"s_star must lie in [0, 1], got {self.s_star!r}")

    @classmethod
    def perfectly_distinguishable(cls, s_star=0.5, normalized=False):
        return cls(exponent=math.inf, s_star=s_star, normalized=normalized, infinite=True)


@dataclass(frozen=True)
class DiscretePMF:
    """Probabilities over an explicit outcome list.

    ``keys`` is an array of outcomes (1-D, or 2-D with one row per outcome);
    ``tail_mass`` is the probability left out by truncation.
    """

    keys: np.ndarray
    prob: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        keys = np.asarray(self.keys)
        prob = np.asarray(self.prob, dtype=float)
        if len(keys) != len(prob):
            raise ValueError(f"{len(keys)} keys but {len(prob)} probabilities")
        if np.any(prob < 0) or not np.all(np.isfinite(prob)):
            raise ValueError("probabilities must be finite and non-negative")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be non-negative")
        total = math.fsum(prob) + self.tail_mass
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities plus tail sum to {total!r}, not 1")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "prob", prob)

    def __len__(self):
        return len(self.prob)


def _golden(f, lo, hi, tol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    if fc <= fd:
        return c, fc
    return d, fd


def optimize_unit_interval(f, tol=1e-10, f0=None, f1=None, grid=GRID_POINTS):
    """Minimize ``f`` over ``[0, 1]``.

    ``f`` is only called strictly inside the interval; the endpoint values
    ``f0`` and ``f1`` are limits the caller supplies (they default to ``f(0)``
    and ``f(1)``). A coarse scan on ``grid`` equispaced points picks the
    bracket, golden-section search refines it to ``tol``, and the best of the
    refined interior point and the two endpoints is returned as
    ``(s_star, f_star)``.
    """

    def checked(s):
        v = float(f(s))
        if not math.isfinite(v):
            raise NonFiniteError(f"objective returned {v!r} at s={s!r}")
        return v

    if f0 is None:
        f0 = checked(0.0)
    if f1 is None:
        f1 = checked(1.0)
    for name, v in (("f0", f0), ("f1", f1)):
        if not math.isfinite(v):
            raise NonFiniteError(f"endpoint limit {name} is {v!r}")

    ss = np.linspace(0.0, 1.0, grid)
    vals = np.empty(grid)
    vals[0], vals[-1] = f0, f1
    for i in range(1, grid - 1):
        vals[i] = checked(ss[i])
    i = int(np.argmin(vals[1:-1])) + 1
    s_in, v_in = _golden(checked, ss[i - 1], ss[i + 1], tol)
    if v_in > vals[i]:
        s_in, v_in = float(ss[i]), float(vals[i])

    best_s, best_v = float(s_in), float(v_in)
    if f0 <= best_v:
        best_s, best_v = 0.0, float(f0)
    if f1 < best_v:
        best_s, best_v = 1.0, float(f1)
    return best_s, best_v


def bound_at(exponent, m) -> float:
    """Chernoff bound ``exp(-m * exponent) / 2``.

    ``exponent`` may be a float or a result object. For normalized (per-photon)
    exponents pass the total photon number ``N = m * n0`` as ``m``.
    """
    if hasattr(exponent, "infinite"):
        if exponent.infinite:
            return 0.0 if m > 0 else 0.5
        exponent = exponent.exponent
    exponent = float(exponent)
    if not math.isfinite(exponent):
        raise NonFiniteError("bound_at needs a finite exponent; pass the ChernoffResult for tagged infinities")
    if exponent < 0 or m < 0:
        raise ValueError(f"exponent and m must be non-negative, got {exponent!r}, {m!r}")
    if m == 0:
        return 0.5
    return 0.5 * math.exp(-m * exponent)


def discrete_chernoff(p: DiscretePMF, q: DiscretePMF, tol=1e-10) -> ChernoffResult:
    """Chernoff exponent ``-log min_s sum_k p(k)**s q(k)**(1-s)`` of two PMFs.

    Outcomes where either mass vanishes contribute nothing for ``s`` in (0, 1);
    the endpoint limits are the q-mass on the support of p (``s -> 0``) and the
    p-mass on the support of q (``s -> 1``).
    """
    if len(p) != len(q) or not np.array_equal(p.keys, q.keys):
        raise ValueError("PMFs are defined over different key spaces")
    if p.tail_mass > 1e-9 or q.tail_mass > 1e-9:
        raise ValueError(f"tail masses {p.tail_mass:.3g}, {q.tail_mass:.3g} exceed 1e-9")
    pp, qq = p.prob, q.prob
    both = (pp > 0) & (qq > 0)
    limit0 = math.fsum(qq[pp > 0])
    limit1 = math.fsum(pp[qq > 0])
    if not both.any():
        return ChernoffResult.perfectly_distinguishable()
    lp = np.log(pp[both])
    lq = np.log(qq[both])

    def log_sum(s):
        return math.log(math.fsum(np.exp(s * lp + (1.0 - s) * lq)))

    s_star, f_star = optimize_unit_interval(
        log_sum, tol=tol, f0=math.log(limit0), f1=math.log(limit1)
    )
    return ChernoffResult(exponent=max(0.0, -f_star), s_star=s_star)


def _chernoff_gap(s, p0, p1, log_ratio):
    """Pointwise ``s p0 + (1-s) p1 - p0**s p1**(1-s)`` in a cancellation-free form."""
    with np.errstate(invalid="ignore", over="ignore"):
        gap = p1 * (s * np.expm1(log_ratio) - np.expm1(s * log_ratio))
    return np.where(p1 > 0, gap, s * p0)


# --- continuum focal-plane array ------------------------------------------------


def _tanh_sinh(level):
    """Tanh-sinh rule on [-1, 1] as (distance-to-nearest-end, side, weight)."""
    h = 2.0**-level
    k = np.arange(-int(3.2 / h), int(3.2 / h) + 1) * h
    u = 0.5 * np.pi * np.sinh(k)
    dist = 2.0 / (1.0 + np.exp(2.0 * np.abs(u)))
    w = h * 0.5 * np.pi * np.cosh(k) / np.cosh(u) ** 2
    keep = (dist > 1e-300) & (w > 1e-300)
    return dist[keep], np.sign(k[keep]), w[keep]


class ContinuumIntegrator:
    """Integrates the pointwise Chernoff gap of the two image-plane densities.

    The half line is cut at every zero of either density (integers and
    integers offset by ``+-mu``) and each cell gets a tanh-sinh rule, which
    absorbs the ``|y - n|**(2 s)`` endpoint behaviour. The slowly decaying
    ``1/y**2`` tails are handled by Richardson extrapolation over the
    truncation points ``Y0 * 2**j``, which sit on whole periods of the
    oscillating integrand so the remainder expands in powers of ``1/Y``.
    """

    def __init__(self, mu: float, y0: int = 128, levels: int = 4, level: int = 3):
        from qlimit.optics import density_p0, density_p1

        self.mu = float(mu)
        self.extents = [y0 * 2**j for j in range(levels)]
        y_max = self.extents[-1]
        f = self.mu % 1.0
        pts = np.concatenate(
            [np.arange(0.0, y_max + 1.0), np.arange(0, y_max) + f, np.arange(1, y_max + 1) - f]
        )
        pts = np.unique(pts[(pts >= 0) & (pts <= y_max)])
        pts = pts[np.concatenate([[True], np.diff(pts) > 1e-12])]
        a, b = pts[:-1], pts[1:]
        dist, side, w = _tanh_sinh(level)
        hw = 0.5 * (b - a)
        left = side < 0
        y = np.where(
            left[None, :],
            a[:, None] + hw[:, None] * dist[None, :],
            b[:, None] - hw[:, None] * dist[None, :],
        )
        self._weights = hw[:, None] * w[None, :]
        self._p0 = density_p0(y)
        self._p1 = density_p1(y, self.mu)
        with np.errstate(divide="ignore"):
            self._log_ratio = np.log(self._p0) - np.log(self._p1)
        self._cuts = [int(np.searchsorted(b, e - 1e-9)) for e in self.extents]

    def gap(self, s: float):
        """``C(s)`` extrapolated to infinite extent, with an error estimate."""
        cell = (_chernoff_gap(s, self._p0, self._p1, self._log_ratio) * self._weights).sum(axis=1)
        cum = np.cumsum(cell)
        row = [2.0 * cum[c] for c in self._cuts]
        table = [row]
        for order in range(1, len(row)):
            prev = table[-1]
            fac = 2.0**order
            table.append([(fac * prev[i + 1] - prev[i]) / (fac - 1.0) for i in range(len(prev) - 1)])
        best = table[-1][0]
        err = abs(best - table[-2][-1])
        return best, err


@lru_cache(maxsize=512)
def continuum_exponent(mu: float, tol: float = 1e-10) -> ChernoffResult:
    """Normalized Chernoff exponent of the ideal continuum focal-plane array.

    ``C_mu = max_s [1 - int p0**s p1**(1-s) dy]``; the Chernoff bound on the
    error probability is ``exp(-N C_mu) / 2`` with ``N`` the collected photons.
    """
    mu = float(mu)
    if not (math.isfinite(mu) and mu >= 0):
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    if mu == 0.0:
        return ChernoffResult(exponent=0.0, s_star=0.5, normalized=True)
    for levels in (4, 5, 6):
        integ = ContinuumIntegrator(mu, levels=levels)
        worst = [0.0]

        def neg_gap(s):
            v, e = integ.gap(s)
            worst[0] = max(worst[0], e)
            return -v

        s_star, f_star = optimize_unit_interval(neg_gap, tol=tol, f0=0.0, f1=0.0)
        if worst[0] <= 1e-9:
            break
    else:
        raise ConvergenceError(
            f"continuum quadrature for mu={mu} reached only {worst[0]:.2e}", achieved=worst[0]
        )
    return ChernoffResult(exponent=max(0.0, -f_star), s_star=s_star, normalized=True, error_estimate=worst[0])


# --- pixelated focal-plane array ------------------------------------------------


def _pixel_period(delta: float):
    """``(p, q)`` with ``delta ~= p / q``; the pixel phase pattern repeats every ``q`` pixels."""
    frac = Fraction(delta).limit_denominator(10_000)
    if abs(float(frac) - delta) <= 1e-12 * delta:
        return frac.numerator, frac.denominator
    return None, 1


class PixelSum:
    """Sums the per-pixel Chernoff gap over all pixels.

    Partial sums are taken over whole periods of the pixel/sinc phase pattern
    and Richardson-extrapolated in the extent, like :class:`ContinuumIntegrator`.
    """

    def __init__(self, mu: float, delta: float, y0: float = 128.0, levels: int = 4):
        self.mu, self.delta = float(mu), float(delta)
        p, q = _pixel_period(self.delta)
        if p is None:
            base = max(1, math.ceil(y0 / self.delta))
        else:
            base = q * max(1, math.ceil(y0 / p))
        self.counts = [base * 2**j for j in range(levels)]
        n = np.arange(0, self.counts[-1] + 1)
        self.q0, self.q1 = pixel_mass_pairs(n, self.delta, self.mu)
        with np.errstate(divide="ignore"):
            self._log_ratio = np.log(self.q0) - np.log(self.q1)

    def gap(self, s: float):
        terms = _chernoff_gap(s, self.q0, self.q1, self._log_ratio)
        cum = np.cumsum(terms)
        row = [2.0 * cum[c] - terms[0] for c in self.counts]
        table = [row]
        for order in range(1, len(row)):
            prev = table[-1]
            fac = 2.0**order
            table.append([(fac * prev[i + 1] - prev[i]) / (fac - 1.0) for i in range(len(prev) - 1)])
        return table[-1][0], abs(table[-1][0] - table[-2][-1])


@lru_cache(maxsize=1024)
def pixelated_exponent(mu: float, delta: float, tol: float = 1e-10) -> ChernoffResult:
    """Normalized Chernoff exponent ``C_mu(delta)`` of a focal-plane array with pixel width ``delta``."""
    mu, delta = float(mu), float(delta)
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"pixel width must be > 0, got {delta!r}")
    if not (math.isfinite(mu) and mu >= 0):
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    if mu == 0.0:
        return ChernoffResult(exponent=0.0, s_star=0.5, normalized=True)
    summ = PixelSum(mu, delta)
    worst = [0.0]

    def neg_gap(s):
        v, e = summ.gap(s)
        worst[0] = max(worst[0], e)
        return -v

    s_star, f_star = optimize_unit_interval(neg_gap, tol=tol, f0=0.0, f1=0.0)
    return ChernoffResult(exponent=max(0.0, -f_star), s_star=s_star, normalized=True, error_estimate=worst[0])
