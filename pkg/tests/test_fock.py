import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import fractional_matrix_power

from qlimit.errors import CutoffError
from qlimit.fock import (
    _block_eigen,
    _generator,
    block_basis,
    fock_oracle_q,
    max_block_dimension,
)
from qlimit.gaussian import (
    beamsplitter_state,
    hypothesis_h0,
    hypothesis_h1,
    log_support_overlap,
    q_of_s,
    thermal,
)
from qlimit.optics import mode_geometry


@pytest.mark.parametrize("modes,t", [(1, 0), (1, 5), (2, 4), (3, 0), (3, 6), (4, 3)])
def test_block_basis(modes, t):
    b = block_basis(modes, t)
    assert len(b) == math.comb(t + modes - 1, modes - 1) == max_block_dimension(modes, t)
    assert np.all(b.sum(axis=1) == t) and np.all(b >= 0)
    assert len({tuple(r) for r in b}) == len(b)


def test_thermal_vs_vacuum():
    q = fock_oracle_q(thermal(0.01), thermal(0.0), 0.5, cutoff=25)
    assert q == pytest.approx(1.01**-0.5, rel=1e-12)


def test_identical_states():
    g = mode_geometry(0.3, 0.01)
    h1 = hypothesis_h1(g, 0.01)
    assert fock_oracle_q(h1, h1, 0.4, cutoff=12) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("eta", [0.0, 0.2, 0.5, 0.9, 1.0])
def test_beamsplitter_amplitudes_are_binomial(eta):
    # U |t, 0> has |amplitude|^2 = C(t, k) eta^k (1 - eta)^(t - k) on |k, t - k>
    h = beamsplitter_state(0.3, eta)
    gen = _generator(h.mix)
    for t in (1, 3, 7):
        basis = block_basis(2, t)
        _, u = _block_eigen(h, basis, gen)
        col = next(i for i, r in enumerate(basis) if tuple(r) == (t, 0))
        k = basis[:, 0]
        want = np.array([math.comb(t, int(j)) * eta**j * (1 - eta) ** (t - j) for j in k])
        assert np.allclose(u[:, col] ** 2, want, atol=1e-12)
        assert np.allclose(u.T @ u, np.eye(len(basis)), atol=1e-12)


def test_block_state_against_dense_power():
    # rebuild each block density matrix and take the power with a generic routine
    g = mode_geometry(0.5, 0.2)
    h0, h1 = hypothesis_h0(g, 0.2), hypothesis_h1(g, 0.2)
    g0, g1 = _generator(h0.mix), _generator(h1.mix)
    s, total = 0.35, 0.0
    for t in range(14):
        basis = block_basis(3, t)
        w0, u0 = _block_eigen(h0, basis, g0)
        w1, u1 = _block_eigen(h1, basis, g1)
        rho0 = (u0 * w0) @ u0.T
        rho1 = (u1 * w1) @ u1.T
        assert np.allclose(np.linalg.eigvalsh(rho1), np.sort(w1), atol=1e-14)
        p0 = np.real(fractional_matrix_power(rho0, s)) if w0.any() else np.zeros_like(rho0)
        p1 = np.real(fractional_matrix_power(rho1, 1 - s))
        total += np.trace(p0 @ p1)
    assert total == pytest.approx(fock_oracle_q(h0, h1, s, cutoff=13, memory_budget=2**30), abs=1e-11)


@given(mu=st.sampled_from([0.05, 0.3, 0.7, 1.0, 1.8]), s=st.floats(0.05, 0.95))
@settings(max_examples=25, deadline=None)
def test_matches_gaussian_formula(mu, s):
    n0 = 0.05
    g = mode_geometry(mu, n0)
    h0, h1 = hypothesis_h0(g, n0), hypothesis_h1(g, n0)
    assert fock_oracle_q(h0, h1, s, cutoff=12) == pytest.approx(q_of_s(h0, h1, s), abs=1e-10)


def test_endpoint_limit_matches_support_overlap():
    # as s -> 1 the truncated trace approaches the vacuum-mode overlap
    h0, h1 = thermal(0.02, 2), beamsplitter_state(0.01, 0.7)
    limit = math.exp(log_support_overlap(h1, h0))
    gaps = [fock_oracle_q(h0, h1, 1 - e, cutoff=30) - limit for e in (1e-4, 1e-6, 1e-8, 1e-10)]
    assert all(g > 0 for g in gaps)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-11


def test_cutoff_errors():
    with pytest.raises(CutoffError):
        fock_oracle_q(thermal(0.5), thermal(0.0), 0.5, cutoff=5)
    h = hypothesis_h0(mode_geometry(0.1, 0.01), 0.01)
    with pytest.raises(CutoffError):
        fock_oracle_q(h, h, 0.5, cutoff=25, memory_budget=2**20)
    with pytest.raises(CutoffError):
        fock_oracle_q(h, h, 0.5, cutoff=80)
    for s in (0.0, 1.0):
        with pytest.raises(ValueError):
            fock_oracle_q(h, h, s, cutoff=3)
    with pytest.raises(ValueError):
        fock_oracle_q(h, h, 0.5, cutoff=2.5)
    with pytest.raises(ValueError):
        fock_oracle_q(thermal(0.1), h, 0.5, cutoff=3)


def test_reflection_mixing_handled():
    # det(mix) = -1 needs the column flip before the matrix logarithm
    mix = np.array([[0.6, 0.8], [0.8, -0.6]])
    from qlimit.gaussian import GaussianHypothesis

    h1 = GaussianHypothesis.from_occupations([0.05, 0.0], mix)
    h0 = thermal(0.03, 2)
    assert fock_oracle_q(h0, h1, 0.6, cutoff=25) == pytest.approx(q_of_s(h0, h1, 0.6), abs=1e-12)
