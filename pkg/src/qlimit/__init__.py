"""Chernoff-bound analysis of one-vs-two point source discrimination.

Classical exponents for image-plane photon counting (continuum and pixelated
focal-plane arrays), the quantum Chernoff exponent of the underlying Gaussian
states, the three-mode sorted-mode photon counter, and Monte Carlo checks of
all three receivers.
"""

from qlimit.errors import ConvergenceError, CutoffError, NonFiniteError, ReconstructionError
from qlimit.optics import (
    ModeGeometry,
    PixelGrid,
    SceneParams,
    density_p0,
    density_p1,
    mode_geometry,
    one_minus_sinc,
    pixel_masses,
    sinc,
)
from qlimit.chernoff import (
    ChernoffResult,
    DiscretePMF,
    bound_at,
    continuum_exponent,
    discrete_chernoff,
    optimize_unit_interval,
    pixelated_exponent,
)
from qlimit.gaussian import (
    GaussianHypothesis,
    QcbResult,
    appendix_b_qcb,
    g_factor,
    hypothesis_h0,
    hypothesis_h1,
    lambda_factor,
    normalized_quantum_exponent,
    q_of_s,
    quantum_chernoff,
    quantum_exponent,
)
from qlimit.fock import fock_oracle_q
from qlimit.receiver import (
    ClickRecord,
    normalized_receiver_exponent,
    pmf_h0,
    pmf_h1,
    receiver_exponent,
    receiver_exponent_bruteforce,
    two_mode_counting_exponent,
)

__version__ = "0.1.0"
