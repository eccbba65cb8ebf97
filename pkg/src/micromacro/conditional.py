"""Preparation of the micro-macro state and Alice's conditioning measurement.

Alice's homodyne outcome ``x`` at phase ``theta`` projects Bob onto

    sigma(x) = <x, theta|_A rho_AB |x, theta>_A / p(x)

with ``<a|x, theta> = e^{i a theta} psi_a(x)``. For the ideal delocalised
photon this is ``psi_0(x)|1> + psi_1(x)|0>``: ``x = 0`` leaves Bob in
``|1>``, ``x = +-1/sqrt(2)`` (where ``psi_0 = +-psi_1``) in the cat
components ``(|0> +- |1>)/sqrt(2)``, and large ``|x|`` close to ``|0>``.
Displacement phases are measured from ``arg(alpha_B)``: ``theta_A = 0`` is
the same quadrature as Bob's displacement, ``pi/2`` the orthogonal one.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .channels import ImperfectionParams, admix_vacuum, herald_source
from .frame import DisplacedState, quadrature_family, rotate_micro


@dataclass(frozen=True)
class MicroMacroState:
    """Two-mode micro state ``micro_ab`` with Bob's mode displaced by ``alpha_b``."""

    micro_ab: np.ndarray
    alpha_b: complex = 0.0

    def __post_init__(self):
        rho = np.array(self.micro_ab, dtype=complex)
        fock.check_density_matrix(rho)
        if math.isqrt(rho.shape[0]) ** 2 != rho.shape[0]:
            raise ValueError("two-mode state must have size dim**2")
        rho.setflags(write=False)
        object.__setattr__(self, "micro_ab", rho)
        object.__setattr__(self, "alpha_b", complex(self.alpha_b))

    @property
    def dim(self):
        return math.isqrt(self.micro_ab.shape[0])

    def alice(self):
        return fock.partial_trace(self.micro_ab, "A")

    def bob(self):
        """Bob's unconditional state in the displaced frame."""
        return DisplacedState(fock.partial_trace(self.micro_ab, "B"), self.alpha_b)


@dataclass(frozen=True)
class ConditionalOutcome:
    x_a: float
    theta_a: float
    bob: DisplacedState
    weight: float


def ideal_pair(dim=3):
    """``(|1,0> + |0,1>)/sqrt(2)`` as a two-mode density matrix."""
    psi = np.zeros(dim * dim, dtype=complex)
    psi[1 * dim + 0] = psi[0 * dim + 1] = 1 / math.sqrt(2)
    return fock.ket2dm(psi)


def make_state(params=None, alpha=0.0, dim=3):
    """Herald split on a 50:50 beam splitter, vacuum-admixed, Bob displaced.

    The herald enters Alice's port; with the real beam-splitter convention
    ``|1,0> -> (|1,0> + |0,1>)/sqrt(2)``.
    """
    params = params or ImperfectionParams()
    herald = herald_source(params.epsilon2, dim)
    vac = np.zeros((dim, dim), dtype=complex)
    vac[0, 0] = 1.0
    rho = fock.beam_splitter_apply(np.kron(herald, vac), 0.5)
    rho = admix_vacuum(rho, params.eta)
    return MicroMacroState(0.5 * (rho + rho.conj().T), alpha)


def cat_component(sign, dim=2):
    """``(|0> + sign |1>)/sqrt(2)``."""
    v = np.zeros(dim, dtype=complex)
    v[0] = 1 / math.sqrt(2)
    v[1] = sign / math.sqrt(2)
    return v


def _alice_vectors(x, theta, dim):
    """``<a|x, theta>`` for a < dim; shape ``x.shape + (dim,)``."""
    psi = np.moveaxis(fock.number_wavefunctions(dim, x), 0, -1)
    a = np.arange(dim)
    return psi * np.exp(1j * np.asarray(theta, dtype=float)[..., None] * a)


def bob_conditional(state, x_a, theta_a):
    """Unnormalised Bob micro states for Alice outcomes ``x_a`` (broadcast).

    Returns ``(sigma, p)`` with ``sigma`` of shape ``x.shape + (d, d)`` already
    normalised, and ``p`` the density of ``x_a``.
    """
    d = state.dim
    x_a = np.asarray(x_a, dtype=float)
    v = _alice_vectors(x_a, np.broadcast_to(theta_a, x_a.shape), d)
    r = state.micro_ab.reshape(d, d, d, d)
    sigma = np.einsum("...a,abcd,...c->...bd", v.conj(), r, v)
    p = np.real(np.trace(sigma, axis1=-2, axis2=-1))
    safe = np.where(p > 0, p, 1.0)
    return sigma / safe[..., None, None], p


def alice_marginal(state, x_a, theta_a=0.0):
    """Density of Alice's quadrature outcome."""
    return bob_conditional(state, x_a, theta_a)[1]


def condition_on(state, x_a, theta_a=0.0):
    """Bob's conditional state for a given (not sampled) Alice outcome."""
    sigma, p = bob_conditional(state, float(x_a), theta_a)
    return ConditionalOutcome(float(x_a), float(theta_a) % (2 * math.pi),
                              DisplacedState(0.5 * (sigma + sigma.conj().T), state.alpha_b), float(p))


def alice_condition_batch(state, theta_a, shots, rng):
    """Sample ``shots`` Alice outcomes and Bob's conditional micro states.

    ``theta_a`` may be a scalar or a per-shot array. Returns
    ``(x_a, sigma, p)`` with ``sigma`` of shape ``(shots, d, d)``.
    """
    theta = np.broadcast_to(np.asarray(theta_a, dtype=float), (shots,))
    rho_a = rotate_micro(state.alice(), theta)
    x = quadrature_family(state.dim).sample(rho_a, rng)
    sigma, p = bob_conditional(state, x, theta)
    return x, sigma, p


def alice_condition(state, theta_a, rng):
    """One conditioning event: sample ``x_a`` and collapse Bob's mode."""
    x, sigma, p = alice_condition_batch(state, theta_a, 1, rng)
    s = sigma[0]
    return ConditionalOutcome(float(x[0]), float(theta_a) % (2 * math.pi),
                              DisplacedState(0.5 * (s + s.conj().T), state.alpha_b), float(p[0]))
