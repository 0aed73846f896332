"""Quantum Chernoff bound for zero-mean phase-insensitive Gaussian states.

States are stored by their symplectic spectrum ``nu`` (vacuum = 1, thermal
with mean photon number N = 2N + 1) and a real orthogonal mode-mixing
matrix ``mix``; the covariance of each quadrature block is
``mix @ diag(nu) @ mix.T`` and the cross-quadrature block vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from qlimit.chernoff import optimize_unit_interval
from qlimit.errors import ConvergenceError, ReconstructionError
from qlimit.optics import ModeGeometry, mode_geometry

ENDPOINT_EPS = (1e-3, 1e-5, 1e-7)
CONVENTIONS = ("matched", "printed")


@dataclass(frozen=True)
class GaussianHypothesis:
    """Zero-mean phase-insensitive state given by ``nu`` and ``mix``.

    ``occ`` optionally carries the eigenmode occupations ``(nu - 1) / 2``
    exactly; for weak light ``nu`` alone would keep only a few digits of them.
    """

    nu: np.ndarray
    mix: np.ndarray
    occ: np.ndarray | None = None

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float).ravel()
        mix = np.asarray(self.mix, dtype=float)
        n = nu.size
        if n < 1 or mix.shape != (n, n):
            raise ValueError(f"mix must be {n}x{n}, got shape {mix.shape}")
        if np.any(nu < 1.0 - 1e-12):
            raise ValueError(f"symplectic eigenvalues must be >= 1, got {nu}")
        if not np.allclose(mix @ mix.T, np.eye(n), atol=1e-10, rtol=0):
            raise ValueError("mix is not orthogonal")
        nu = np.maximum(nu, 1.0)
        if self.occ is None:
            occ = (nu - 1.0) / 2.0
        else:
            occ = np.asarray(self.occ, dtype=float).ravel()
            if occ.shape != nu.shape or np.any(occ < 0):
                raise ValueError("occupations must be non-negative, one per mode")
            if np.max(np.abs(2.0 * occ + 1.0 - nu)) > 1e-12 * np.max(nu):
                raise ValueError("occupations disagree with nu")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "mix", mix)
        object.__setattr__(self, "occ", occ)

    @classmethod
    def from_occupations(cls, occ, mix) -> "GaussianHypothesis":
        occ = np.asarray(occ, dtype=float).ravel()
        return cls(nu=2.0 * occ + 1.0, mix=mix, occ=occ)

    @property
    def n(self) -> int:
        return self.nu.size

    @property
    def occupations(self) -> np.ndarray:
        """Mean photon numbers of the eigenmodes."""
        return self.occ

    def covariance_block(self) -> np.ndarray:
        """Single-quadrature covariance block (vacuum = identity)."""
        return self.mix @ np.diag(self.nu) @ self.mix.T

    def covariance(self) -> np.ndarray:
        """Full ``2n x 2n`` covariance ordered (x_1..x_n, p_1..p_n)."""
        block = self.covariance_block()
        zero = np.zeros_like(block)
        return np.block([[block, zero], [zero, block]])


@dataclass(frozen=True)
class QcbResult:
    q_min: float
    s_star: float
    exponent: float

    def __post_init__(self):
        if not 0.0 < self.q_min <= 1.0:
            raise ValueError(f"q_min must lie in (0, 1], got {self.q_min!r}")
        if not 0.0 <= self.s_star <= 1.0:
            raise ValueError(f"s_star must lie in [0, 1], got {self.s_star!r}")
        if self.exponent < 0.0:
            raise ValueError("exponent must be >= 0")


def thermal(n_mean: float, modes: int = 1) -> GaussianHypothesis:
    """Thermal state in the first mode, vacuum in the rest."""
    occ = np.zeros(modes)
    occ[0] = n_mean
    return GaussianHypothesis.from_occupations(occ, np.eye(modes))


def hypothesis_h0(geom: ModeGeometry, n0: float) -> GaussianHypothesis:
    """One on-axis source: thermal(n0) in the first mode, the other two in vacuum."""
    return GaussianHypothesis.from_occupations([n0, 0.0, 0.0], np.eye(3))


def expected_h1_block(geom: ModeGeometry, n0: float, convention: str = "matched") -> np.ndarray:
    """The H1 quadrature block written entry by entry from the field moments (vacuum = identity).

    ``printed`` uses the moments with both sources at full brightness ``n0``;
    ``matched`` halves each source so the total photon number equals ``n0``
    under both hypotheses.
    """
    c = _energy_scale(n0, convention)
    A, B = geom.A, geom.B
    return np.array(
        [
            [c * A * A + 1.0, 0.0, c * A * B],
            [0.0, 2.0 * c * (1.0 - geom.s2) + 1.0, 0.0],
            [c * A * B, 0.0, c * B * B + 1.0],
        ]
    )


def _energy_scale(n0, convention):
    if convention == "matched":
        return n0 / 2.0
    if convention == "printed":
        return n0
    raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def hypothesis_h1(geom: ModeGeometry, n0: float, convention: str = "matched") -> GaussianHypothesis:
    """Two sources at ``+-mu``.

    Eigenmode occupations are ``(n1, n2, 0)`` (``matched``) or twice that
    (``printed``); the mixing rotates modes 1 and 3 by the overlap constants
    ``(a, b)``. The rebuilt covariance is checked against the moment-derived
    block, and the analytic eigenvectors against a numerical
    eigendecomposition wherever the spectrum is non-degenerate.
    """
    c = _energy_scale(n0, convention)
    scale = 2.0 * c / n0
    a, b = geom.a, geom.b
    mix = np.array([[a, 0.0, -b], [0.0, 1.0, 0.0], [b, 0.0, a]])
    h1 = GaussianHypothesis.from_occupations([scale * geom.n1, scale * geom.n2, 0.0], mix)
    target = expected_h1_block(geom, n0, convention)
    err = np.max(np.abs(h1.covariance_block() - target))
    if err > 1e-10:
        raise ReconstructionError(f"H1 covariance rebuilt with error {err:.3e}")
    _check_eigenvectors(h1, target)
    return h1


def _check_eigenvectors(h: GaussianHypothesis, block: np.ndarray):
    vals, vecs = np.linalg.eigh(block)
    order = np.argsort(h.nu)
    if np.max(np.abs(vals - h.nu[order])) > 1e-9:
        raise ReconstructionError("numerical spectrum differs from the analytic one")
    gaps = np.diff(vals)
    for j in range(len(vals)):
        lo = gaps[j - 1] if j > 0 else np.inf
        hi = gaps[j] if j < len(gaps) else np.inf
        if min(lo, hi) < 1e-6:
            continue
        analytic = h.mix[:, order[j]]
        if abs(abs(analytic @ vecs[:, j]) - 1.0) > 1e-9:
            raise ReconstructionError(f"eigenvector {j} disagrees with the analytic mixing")


def _log_g_and_excess(p: float, n: np.ndarray):
    """``log G_p`` and ``E_p = Lambda_p - 1`` at ``x = 2N + 1``, from the occupation ``N``.

    ``G_p = 1 / ((1+N)**p - N**p)`` and ``E_p = 2 N**p G_p``; both are formed
    from ``expm1``/``log1p`` pieces so weak light keeps full precision.
    """
    n = np.asarray(n, dtype=float)
    up = np.expm1(p * np.log1p(n))
    with np.errstate(divide="ignore"):
        log_n = np.log(np.where(n > 0, n, 1.0))
    down = np.where(n > 0, np.expm1(p * log_n), -1.0)
    npow = np.where(n > 0, np.exp(p * log_n), 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        inv = np.where(n > 0, 1.0 / np.where(n > 0, n, 1.0), 0.0)
    # (1+N)**p - N**p: small-N form from up/down, large-N form factors out N**p
    diff = np.where(npow <= 0.5, up - down, npow * np.expm1(p * np.log1p(inv)))
    log_diff = np.where(npow <= 0.5, np.log1p(up - npow), np.log(diff))
    return -log_diff, 2.0 * npow / diff


def _log_g_and_lambda(p: float, n: np.ndarray):
    lg, excess = _log_g_and_excess(p, n)
    return lg, 1.0 + excess


def g_factor(p: float, x: float) -> float:
    """``G_p(x) = 2**p / ((x+1)**p - (x-1)**p)``; ``G_p(1) = 1``."""
    if x < 1.0 - 1e-12:
        raise ValueError(f"x must be >= 1, got {x!r}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p!r}")
    lg, _ = _log_g_and_lambda(p, (max(x, 1.0) - 1.0) / 2.0)
    return float(np.exp(lg))


def lambda_factor(p: float, x: float) -> float:
    """``Lambda_p(x) = ((x+1)**p + (x-1)**p) / ((x+1)**p - (x-1)**p)``; ``Lambda_p(1) = 1``."""
    if x < 1.0 - 1e-12:
        raise ValueError(f"x must be >= 1, got {x!r}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p!r}")
    _, lam = _log_g_and_lambda(p, (max(x, 1.0) - 1.0) / 2.0)
    return float(lam)


def log_q_of_s(h0: GaussianHypothesis, h1: GaussianHypothesis, s: float, full: bool = False) -> float:
    """Natural log of ``Tr(rho0**s rho1**(1-s))`` from the symplectic data.

    The equal-block structure makes the ``2n x 2n`` determinant the square of
    an ``n x n`` one, evaluated here as ``2**n det(I + X)`` with ``X`` small
    for weak light; ``full=True`` evaluates the unfactored ``2n x 2n``
    determinant of the textbook form instead.
    """
    if h0.n != h1.n:
        raise ValueError(f"mode counts differ: {h0.n} vs {h1.n}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie strictly inside (0, 1), got {s!r}")
    if full:
        lg0, lam0 = _log_g_and_lambda(s, h0.occupations)
        lg1, lam1 = _log_g_and_lambda(1.0 - s, h1.occupations)
        block = h0.mix @ np.diag(lam0) @ h0.mix.T + h1.mix @ np.diag(lam1) @ h1.mix.T
        zero = np.zeros_like(block)
        sign, logdet = np.linalg.slogdet(np.block([[block, zero], [zero, block]]))
        if sign <= 0:
            raise ArithmeticError(f"non-positive determinant at s={s}")
        return h0.n * math.log(2.0) + float(lg0.sum() + lg1.sum()) - 0.5 * float(logdet)
    # det(V0 + V1) = (2**n det(I + X))**2 with X = (S0 E0 S0^T + S1 E1 S1^T) / 2
    lg0, e0 = _log_g_and_excess(s, h0.occupations)
    lg1, e1 = _log_g_and_excess(1.0 - s, h1.occupations)
    x = 0.5 * ((h0.mix * e0) @ h0.mix.T + (h1.mix * e1) @ h1.mix.T)
    lam = np.linalg.eigvalsh(0.5 * (x + x.T))
    if lam.min() <= -1.0:
        raise ArithmeticError(f"non-positive determinant at s={s}")
    return float(lg0.sum() + lg1.sum()) - float(np.sum(np.log1p(lam)))


def q_of_s(h0: GaussianHypothesis, h1: GaussianHypothesis, s: float, full: bool = False) -> float:
    """``Tr(rho0**s rho1**(1-s))`` for ``s`` in (0, 1).

    Within ``eps`` of either end the absolute error grows like ``1e-17 / eps``;
    use :func:`log_support_overlap` for the endpoint limits.
    """
    return math.exp(log_q_of_s(h0, h1, s, full=full))


def _endpoint_sequence(f, eps=ENDPOINT_EPS):
    """Limit of ``f(eps)`` as ``eps -> 0`` by linear extrapolation of the last two samples."""
    vals = [f(e) for e in eps]
    steps = np.abs(np.diff(vals))
    if steps[-1] > 1e-9 * (1.0 + abs(vals[-1])) and steps[-1] > steps[0]:
        raise ConvergenceError(f"endpoint sequence {vals} does not settle", achieved=steps[-1])
    e1, e2 = eps[-2], eps[-1]
    return vals[-1] - e2 * (vals[-2] - vals[-1]) / (e1 - e2)


def log_support_overlap(h_support: GaussianHypothesis, h_other: GaussianHypothesis) -> float:
    """``log Tr(P rho_other)`` with ``P`` the projector onto the support of ``rho_support``.

    The support is spanned by number states that leave the vacuum eigenmodes of
    ``rho_support`` empty, so this is the probability that ``rho_other`` shows
    no photons in those modes: ``1 / det(I + W^T M diag(N) M^T W)``. This is
    the limit of ``log Tr(rho_support**s rho_other**(1-s))`` as ``s -> 0``.
    """
    vac = h_support.occupations == 0.0
    if not vac.any():
        return 0.0
    w = h_support.mix[:, vac]
    proj = w.T @ h_other.mix
    excess = (proj * h_other.occupations) @ proj.T
    lam = np.linalg.eigvalsh(0.5 * (excess + excess.T))
    return -float(np.sum(np.log1p(np.clip(lam, 0.0, None))))


ENDPOINT_SNAP = 1e-6
ENDPOINT_AGREEMENT = 1e-7
INTERIOR_ROUNDOFF = 1e-15


def quantum_chernoff(h0: GaussianHypothesis, h1: GaussianHypothesis, tol: float = 1e-10) -> QcbResult:
    """Quantum Chernoff exponent ``-log min_s Tr(rho0**s rho1**(1-s))``.

    The symplectic formula is singular at ``s = 0`` and ``s = 1`` for
    non-vacuum spectra. The endpoint values are the support overlaps, checked
    against an extrapolated ``eps``-sequence of interior values. A minimizer
    within 1e-6 of an endpoint, or beating it by less than interior round-off,
    is snapped to it: the interior formula loses about ``log(1/s)`` ulps near
    the ends, while the overlap is exact.
    """

    def f(s):
        return log_q_of_s(h0, h1, s)

    f0 = log_support_overlap(h0, h1)
    f1 = log_support_overlap(h1, h0)
    for name, exact, seq in (
        ("s -> 0", f0, _endpoint_sequence(f)),
        ("s -> 1", f1, _endpoint_sequence(lambda e: f(1.0 - e))),
    ):
        if abs(exact - seq) > ENDPOINT_AGREEMENT:
            raise ConvergenceError(
                f"{name} limit: support overlap {exact!r} vs extrapolated {seq!r}", achieved=abs(exact - seq)
            )
    s_star, f_star = optimize_unit_interval(f, tol=tol, f0=f0, f1=f1)
    if s_star < ENDPOINT_SNAP or f_star > f0 - INTERIOR_ROUNDOFF:
        s_star, f_star = 0.0, f0
    if s_star > 1.0 - ENDPOINT_SNAP or (s_star > 0.0 and f_star > f1 - INTERIOR_ROUNDOFF):
        s_star, f_star = 1.0, f1
    f_star = min(f_star, 0.0)
    return QcbResult(q_min=math.exp(f_star), s_star=s_star, exponent=-f_star)


@lru_cache(maxsize=1024)
def quantum_exponent(mu: float, n0: float, convention: str = "matched") -> QcbResult:
    """Quantum Chernoff exponent per temporal mode for one vs two sources."""
    geom = mode_geometry(mu, n0)
    if mu == 0 and convention == "matched":
        # coincident sources: both hypotheses are the same state
        return QcbResult(q_min=1.0, s_star=0.5, exponent=0.0)
    return quantum_chernoff(hypothesis_h0(geom, n0), hypothesis_h1(geom, n0, convention))


def normalized_quantum_exponent(mu: float, n_small=(1e-5, 1e-6), rtol: float = 1e-5) -> float:
    """``lim_{n0 -> 0} xi_Q / n0`` by linear extrapolation in ``n0``."""
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    if mu == 0:
        return 0.0
    na, nb = n_small
    ra = quantum_exponent(mu, na).exponent / na
    rb = quantum_exponent(mu, nb).exponent / nb
    if abs(ra - rb) > rtol * max(abs(ra), abs(rb)):
        raise ConvergenceError(
            f"xi_Q/n0 at n0={na:g} and {nb:g} differ by {abs(ra - rb):.3e}", achieved=abs(ra - rb)
        )
    return rb + (rb - ra) * nb / (na - nb)


def appendix_b_qcb(n1: float, n2: float, eta: float) -> QcbResult:
    """Two-mode problem: thermal(n1) x vacuum against thermal(n2) x vacuum sent through a beamsplitter of transmissivity ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
    if n1 <= 0 or n2 <= 0:
        raise ValueError("thermal occupations must be > 0")
    return quantum_chernoff(thermal(n1, 2), beamsplitter_state(n2, eta))


def beamsplitter_state(n_mean: float, eta: float) -> GaussianHypothesis:
    t, r = math.sqrt(eta), math.sqrt(1.0 - eta)
    return GaussianHypothesis.from_occupations([n_mean, 0.0], np.array([[t, r], [-r, t]]))
