"""Imperfection models: vacuum admixture, loss, phase noise, two-photon herald."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from . import fock
from .errors import DomainError, UnsupportedModeError
from .frame import DisplacedState


def _unit_interval(name, value):
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ImperfectionParams:
    """Effective imperfections of the source and channel.

    eta : single-photon preparation efficiency (vacuum fraction ``1 - eta``)
    epsilon2 : two-photon fraction of the heralded source
    sigma_phi : RMS phase noise in radians, one draw per shot
    t : transmission between displacement and undisplacement
    """

    eta: float = 0.54
    epsilon2: float = 0.015
    sigma_phi: float = 0.0
    t: float = 1.0

    def __post_init__(self):
        _unit_interval("eta", self.eta)
        _unit_interval("epsilon2", self.epsilon2)
        _unit_interval("t", self.t)
        if self.sigma_phi < 0:
            raise DomainError(f"sigma_phi must be >= 0, got {self.sigma_phi}")


IDEAL = ImperfectionParams(eta=1.0, epsilon2=0.0, sigma_phi=0.0, t=1.0)


def herald_source(epsilon2, dim=3):
    """Heralded signal ``(1 - eps)|1><1| + eps|2><2|``."""
    _unit_interval("epsilon2", epsilon2)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[1, 1] = 1.0 - epsilon2
    if epsilon2:
        if dim < 3:
            raise DomainError("a two-photon component needs dim >= 3")
        rho[2, 2] = epsilon2
    return rho


def admix_vacuum(rho_ab, eta):
    """``eta rho + (1 - eta)|00><00|``."""
    _unit_interval("eta", eta)
    rho = eta * np.asarray(rho_ab, dtype=complex)
    rho[0, 0] += 1.0 - eta
    return rho


def loss_kraus(t, dim):
    """Kraus operators of the pure-loss channel with transmission ``t``.

    ``K_k = sum_n sqrt(C(n, k) t^(n-k) (1-t)^k) |n-k><n|``, k = 0..dim-1.
    """
    _unit_interval("t", t)
    ops = []
    for k in range(dim):
        K = np.zeros((dim, dim))
        for n in range(k, dim):
            K[n - k, n] = math.sqrt(comb(n, k) * t ** (n - k) * (1.0 - t) ** k)
        ops.append(K)
    return ops


def _apply_kraus(rho, kraus):
    return sum(k @ rho @ k.conj().T for k in kraus)


def loss(state, t):
    """Pass a single-mode state through loss with transmission ``t``.

    For a :class:`DisplacedState` the coherent part rides along exactly:
    ``loss(D(a) rho D(a)^dag) = D(sqrt(t) a) loss(rho) D(sqrt(t) a)^dag``.
    """
    _unit_interval("t", t)
    if isinstance(state, DisplacedState):
        micro = _apply_kraus(state.micro, loss_kraus(t, state.dim))
        return DisplacedState(micro, math.sqrt(t) * state.alpha, state.phase)
    rho = np.asarray(state, dtype=complex)
    return _apply_kraus(rho, loss_kraus(t, rho.shape[0]))


def loss_on_mode(rho_ab, t, mode="B"):
    """Loss on one mode of a two-mode density matrix."""
    rho = np.asarray(rho_ab, dtype=complex)
    dim = math.isqrt(rho.shape[0])
    return fock.apply_local(rho, loss_kraus(t, dim), mode)


def dephase_analytic(rho, sigma_phi):
    """Average over ``phi ~ Normal(0, sigma^2)``: ``rho_mn e^{-sigma^2 (m-n)^2 / 2}``."""
    rho = np.asarray(rho, dtype=complex)
    n = np.arange(rho.shape[0])
    return rho * np.exp(-0.5 * sigma_phi**2 * (n[:, None] - n[None, :]) ** 2)


def dephase(state, sigma_phi, rng=None):
    """Gaussian phase noise on a single-mode state.

    Without ``rng`` the channel is applied analytically (micro states, or a
    :class:`DisplacedState` with ``alpha = 0``). With ``rng`` one phase is
    drawn and the whole frame is rotated, ``alpha -> alpha e^{i phi}`` and
    ``rho -> e^{i phi n} rho e^{-i phi n}``; averaging over shots is left to
    the caller.
    """
    if sigma_phi < 0:
        raise DomainError(f"sigma_phi must be >= 0, got {sigma_phi}")
    if rng is None:
        if isinstance(state, DisplacedState):
            if state.alpha != 0:
                raise UnsupportedModeError(
                    "analytic dephasing of a displaced state is not a micro-state map; sample it"
                )
            return DisplacedState(dephase_analytic(state.micro, sigma_phi), 0.0, state.phase)
        return dephase_analytic(state, sigma_phi)
    phi = rng.normal(0.0, sigma_phi) if sigma_phi > 0 else 0.0
    if isinstance(state, DisplacedState):
        r = fock.rotation(phi, state.dim)
        return DisplacedState(r @ state.micro @ r.conj().T, state.alpha * np.exp(1j * phi), state.phase)
    rho = np.asarray(state, dtype=complex)
    r = fock.rotation(phi, rho.shape[0])
    return r @ rho @ r.conj().T


def choi_matrix(channel, dim):
    """Choi matrix ``sum_ij |i><j| (x) channel(|i><j|)`` of a linear map."""
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1.0
            out += np.kron(e, channel(e))
    return out


def undisplaced_phase_noise(rho_ab, alpha, sigma_phi, shots, rng, mode="B", chunk=20_000):
    """Shot average of displace(alpha) -> dephase -> displace(-alpha) on one mode.

    A phase ``phi`` between the displacement and undisplacement leaves the
    micro state rotated and displaced by ``delta = alpha (e^{i phi} - 1)``:
    ``D(-alpha) R(phi) D(alpha) = e^{i c} D(delta) R(phi)``. Only the block of
    ``D(delta)`` inside the micro dimension is needed for the output block, so
    the map is exact for any ``alpha``; population pushed beyond the
    truncation shows up as a trace deficit.
    """
    rho = np.asarray(rho_ab, dtype=complex)
    dim = math.isqrt(rho.shape[0])
    eye = np.eye(dim)
    out = np.zeros_like(rho)
    n = np.arange(dim)
    for start in range(0, shots, chunk):
        m = min(chunk, shots - start)
        phi = rng.normal(0.0, sigma_phi, m) if sigma_phi > 0 else np.zeros(m)
        delta = alpha * np.expm1(1j * phi)
        u = fock.displacement_block(delta, dim, dim) * np.exp(1j * phi[:, None, None] * n[None, None, :])
        big = np.einsum("ij,skl->sikjl", eye, u) if mode == "B" else np.einsum("skl,ij->skilj", u, eye)
        big = big.reshape(m, dim * dim, dim * dim)
        out += np.einsum("sij,jk,slk->il", big, rho, big.conj())
    return out / shots
