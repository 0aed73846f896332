"""Truncated number-basis oracle for ``Tr(rho0**s rho1**(1-s))``.

Passive linear optics conserves total photon number, so both states are block
diagonal in the total count ``t``. Each block is built exactly: the thermal
eigenmode populations are diagonal there, and the mixing acts as
``exp(sum_ij K_ij a_i^dag a_j)`` with ``K = logm(mix)``, so each block's
eigendecomposition is known and powers are taken on it. Blocks above
``cutoff`` are dropped, and the dropped mass is measured as a trace deficit.

Working set: the largest block has ``C(cutoff + n - 1, n - 1)`` states and a
handful of dense copies of it are held at once; requests beyond
``memory_budget`` bytes are rejected. With the default 256 MiB budget, three
modes are capped near ``cutoff = 62``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import expm, logm

from qlimit.errors import CutoffError
from qlimit.gaussian import GaussianHypothesis

DEFAULT_MEMORY_BUDGET = 256 * 2**20
TRACE_DEFICIT_TOL = 1e-8
_DENSE_COPIES = 8


def block_basis(modes: int, t: int) -> np.ndarray:
    """All occupation tuples of ``modes`` modes with total ``t``, lexicographic."""
    rows = [c for c in itertools.product(range(t + 1), repeat=modes - 1) if sum(c) <= t]
    return np.array([(*c, t - sum(c)) for c in rows], dtype=np.int64).reshape(-1, modes)


def _hopping(basis: np.ndarray, i: int, j: int) -> np.ndarray:
    """Matrix of ``a_i^dag a_j`` restricted to one total-number block."""
    d = len(basis)
    out = np.zeros((d, d))
    if i == j:
        out[np.arange(d), np.arange(d)] = basis[:, i]
        return out
    lookup = {tuple(r): k for k, r in enumerate(basis)}
    for k, occ in enumerate(basis):
        if occ[j] == 0:
            continue
        new = occ.copy()
        new[j] -= 1
        new[i] += 1
        out[lookup[tuple(new)], k] = math.sqrt(occ[j] * (occ[i] + 1))
    return out


def _generator(mix: np.ndarray) -> np.ndarray:
    """Real ``K`` with ``expm(K) == mix`` up to a sign flip of one column.

    A column sign is a pi phase on one eigenmode, which leaves a thermal state
    unchanged.
    """
    mix = np.array(mix, dtype=float)
    if np.linalg.det(mix) < 0:
        mix[:, -1] *= -1.0
    k = np.real(logm(mix))
    k = 0.5 * (k - k.T)
    if np.max(np.abs(expm(k) - mix)) > 1e-10:
        raise ArithmeticError("could not find a real generator for the mixing matrix")
    return k


def _thermal_weights(basis: np.ndarray, occupations: np.ndarray) -> np.ndarray:
    w = np.ones(len(basis))
    for col, n in enumerate(occupations):
        k = basis[:, col]
        if n == 0.0:
            w *= k == 0
        else:
            w *= np.exp(k * math.log(n) - (k + 1) * math.log1p(n))
    return w


def _block_eigen(h: GaussianHypothesis, basis: np.ndarray, gen: np.ndarray):
    """Eigenvalues and (orthogonal) eigenvectors of one block of the state.

    The thermal populations are the eigenvalues and the mixing unitary holds
    the eigenvectors, so fractional powers never touch eigenvalues that a
    numerical solver would return as round-off noise.
    """
    weights = _thermal_weights(basis, h.occupations)
    modes = h.n
    g = np.zeros((len(basis), len(basis)))
    for i in range(modes):
        for j in range(modes):
            if gen[i, j] != 0.0:
                g += gen[i, j] * _hopping(basis, i, j)
    return weights, expm(g)


def _power(weights: np.ndarray, u: np.ndarray, p: float) -> np.ndarray:
    return (u * weights**p) @ u.T


def max_block_dimension(modes: int, cutoff: int) -> int:
    return math.comb(cutoff + modes - 1, modes - 1)


def fock_oracle_q(
    h0: GaussianHypothesis,
    h1: GaussianHypothesis,
    s: float,
    cutoff: int,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> float:
    """``Tr(rho0**s rho1**(1-s))`` summed over total photon numbers ``0..cutoff``.

    Raises ``CutoffError`` if either state loses more than 1e-8 of its trace
    to the truncation, or if the largest block would not fit the memory budget.
    """
    if h0.n != h1.n:
        raise ValueError(f"mode counts differ: {h0.n} vs {h1.n}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie strictly inside (0, 1), got {s!r}")
    if int(cutoff) != cutoff or cutoff < 0:
        raise ValueError(f"cutoff must be a non-negative integer, got {cutoff!r}")
    d_max = max_block_dimension(h0.n, cutoff)
    need = _DENSE_COPIES * 8 * d_max * d_max
    if need > memory_budget:
        raise CutoffError(
            f"cutoff {cutoff} with {h0.n} modes needs ~{need / 2**20:.0f} MiB "
            f"(budget {memory_budget / 2**20:.0f} MiB)"
        )
    g0, g1 = _generator(h0.mix), _generator(h1.mix)
    total = 0.0
    trace0 = trace1 = 0.0
    for t in range(cutoff + 1):
        basis = block_basis(h0.n, t)
        w0, u0 = _block_eigen(h0, basis, g0)
        w1, u1 = _block_eigen(h1, basis, g1)
        trace0 += w0.sum()
        trace1 += w1.sum()
        total += float(np.sum(_power(w0, u0, s) * _power(w1, u1, 1.0 - s)))
    deficit = max(1.0 - trace0, 1.0 - trace1)
    if deficit > TRACE_DEFICIT_TOL:
        raise CutoffError(f"cutoff {cutoff} drops trace {deficit:.3e} (> {TRACE_DEFICIT_TOL:g})")
    return total
