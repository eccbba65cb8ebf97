"""Macroscopically displaced states and their photon-number statistics.

A state ``D(alpha) rho D(alpha)^dagger`` with ``|alpha|^2 ~ 1e8`` cannot be
written down in a Fock basis, but it never has to be: it is stored as the
pair ``(rho, alpha)`` with ``rho`` living in a handful of levels.

Photon-number statistics come from one of two engines:

``exact``
    Columns of the truncated displacement matrix
    (:func:`micromacro.fock.displacement_matrix`). Needs a Fock space of
    size ~|alpha|^2, so it is limited to ``|alpha| <= EXACT_MAX_ABS_ALPHA``.

``asymptotic``
    Large-amplitude engine that never builds a large matrix. With
    ``x = |alpha|^2`` and ``phi = arg(alpha)``,
    ``<m|D(alpha)|n> = sqrt(Poisson(m; x)) e^{i(m-n)phi} q_n(m)`` where
    ``q_n`` are the Charlier polynomials orthonormal under Poisson(x). The
    photon-number law is therefore ``Poisson(m; x)`` times a low-degree
    polynomial fixed by ``rho``; it is tabulated over a window of a few
    tens of ``|alpha|`` around ``|alpha|^2`` and sampled by inverse CDF.
    ``method="linear"`` instead uses the leading-order quadrature
    linearisation ``N = |alpha|^2 + sqrt(2)|alpha| x_phi + n``, with
    ``x_phi`` and ``n`` drawn independently from the micro state.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from . import fock
from ._sampling import HermitianFamily
from .errors import RegimeError, TruncationError

EXACT_MAX_ABS_ALPHA = 20.0
ASYMPTOTIC_MIN_ABS_ALPHA = 20.0
PMF_LEAKAGE_TOL = 1e-4

QUADRATURE_GRID = np.linspace(-8.0, 8.0, 4096)

ENGINES = ("exact", "asymptotic", "linear")


@dataclass(frozen=True)
class DisplacedState:
    """The physical state ``D(alpha) micro D(alpha)^dagger``.

    ``phase`` accumulates the scalar phase of composed displacements,
    ``D(b) D(a) = exp(i Im(b a*)) D(a + b)``; it drops out of every density
    matrix but is kept so that composition is exact.
    """

    micro: np.ndarray
    alpha: complex = 0.0
    phase: float = 0.0

    def __post_init__(self):
        micro = np.array(self.micro, dtype=complex)
        if micro.ndim == 1:
            micro = fock.ket2dm(micro)
        fock.check_density_matrix(micro)
        micro.setflags(write=False)
        object.__setattr__(self, "micro", micro)
        object.__setattr__(self, "alpha", complex(self.alpha))

    @property
    def dim(self):
        return self.micro.shape[0]

    def density_matrix(self, dim=None):
        """Explicit Fock-basis matrix in a space of size ``dim`` (small alpha only)."""
        dim = dim or fock.default_dim(self.alpha) + self.dim
        d = fock.displacement_matrix(self.alpha, dim)[:, : self.dim]
        return d @ self.micro @ d.conj().T


@dataclass(frozen=True)
class PhotonPmf:
    """Photon-number distribution ``P(N = offset + i) = probs[i]``."""

    offset: int
    probs: np.ndarray
    leakage: float = 0.0

    @property
    def support(self):
        return self.offset + np.arange(self.probs.size)

    @property
    def mean(self):
        return float(self.support @ self.probs / self.probs.sum())

    @property
    def variance(self):
        p = self.probs / self.probs.sum()
        n = self.support
        mu = n @ p
        return float(((n - mu) ** 2) @ p)

    def tv_distance(self, samples):
        """Total-variation distance between this pmf and an empirical sample."""
        samples = np.asarray(samples, dtype=np.int64)
        lo = min(int(samples.min()), self.offset)
        hi = max(int(samples.max()), self.offset + self.probs.size - 1)
        emp = np.bincount(samples - lo, minlength=hi - lo + 1) / samples.size
        ref = np.zeros(hi - lo + 1)
        ref[self.offset - lo : self.offset - lo + self.probs.size] = self.probs
        return 0.5 * float(np.abs(emp - ref).sum())


def displace(state, beta):
    """Compose ``D(beta)`` onto the frame: alpha -> alpha + beta, micro unchanged."""
    beta = complex(beta)
    extra = (beta * state.alpha.conjugate()).imag
    return DisplacedState(state.micro, state.alpha + beta, state.phase + extra)


def photon_moments(state):
    """Mean and variance of the photon number of a displaced state.

    Uses ``N = |alpha|^2 + X + n`` with ``X = alpha a^dag + alpha* a``
    evaluated on the micro state, so the large constant never enters the
    variance (no cancellation at |alpha|^2 ~ 1e8).
    """
    d = state.dim + 2
    rho = fock.embed(state.micro, d)
    a, ad = fock.ladder_matrices(d)
    op = state.alpha * ad + state.alpha.conjugate() * a + ad @ a
    first = fock.expectation(rho, op).real
    second = fock.expectation(rho, op @ op).real
    return abs(state.alpha) ** 2 + first, second - first * first


def _micro_eig(micro):
    w, v = np.linalg.eigh(micro)
    keep = w > 1e-15
    return w[keep], v[:, keep]


def photon_pmf_exact(state, dim=None):
    """Photon-number pmf from displacement-matrix columns.

    ``P(m) = sum_k w_k |<m|D(alpha)|phi_k>|^2`` over the micro eigenbasis.
    Raises :class:`TruncationError` if more than ``PMF_LEAKAGE_TOL`` of the
    probability falls outside ``dim`` levels.
    """
    r2 = abs(state.alpha) ** 2
    if abs(state.alpha) > EXACT_MAX_ABS_ALPHA:
        raise RegimeError(
            f"|alpha| = {abs(state.alpha):.4g} exceeds the exact-engine limit "
            f"{EXACT_MAX_ABS_ALPHA}; use the asymptotic engine"
        )
    if dim is None:
        dim = fock.default_dim(state.alpha) + state.dim
    if r2 > dim / 2:
        raise RegimeError(f"dim = {dim} too small for |alpha|^2 = {r2:.4g} (need |alpha|^2 <= dim/2)")
    d = fock.displacement_matrix(state.alpha, dim)[:, : state.dim]
    w, v = _micro_eig(state.micro)
    probs = (np.abs(d @ v) ** 2) @ w
    deficit = 1.0 - probs.sum()
    if deficit > PMF_LEAKAGE_TOL:
        raise TruncationError(f"probability deficit {deficit:.3g} in dim {dim}", deficit)
    return PhotonPmf(0, probs, max(deficit, 0.0))


def rotate_micro(rho, theta):
    """``rho_{nn'} e^{-i(n-n') theta}``: express ``rho`` in the frame of phase ``theta``.

    Broadcasts over stacks of matrices and arrays of ``theta``.
    """
    rho = np.asarray(rho)
    n = np.arange(rho.shape[-1])
    theta = np.asarray(theta, dtype=float)[..., None, None]
    return rho * np.exp(-1j * theta * (n[:, None] - n[None, :]))


# --- engine families -------------------------------------------------------

def charlier_window(alpha, d):
    """Integer support ``[lo, hi]`` holding all but ~1e-20 of the mass."""
    x = abs(alpha) ** 2
    half = (12 + 2 * d) * math.sqrt(x) + 10 * (d + 1)
    return max(0, math.floor(x - half)), math.ceil(x + half)


def charlier_amplitudes(m, x, d):
    """``sqrt(Poisson(m; x)) q_n(m)`` for n < d (real, shape ``(d, len(m))``).

    Normalised Charlier recurrence
    ``q_{n+1} = ((m - n - x) q_n - sqrt(n x) q_{n-1}) / sqrt((n+1) x)``.
    """
    m = np.asarray(m, dtype=float)
    q = np.empty((d, m.size))
    q[0] = 1.0
    if d > 1:
        q[1] = (m - x) / math.sqrt(x)
    for n in range(1, d - 1):
        q[n + 1] = ((m - n - x) * q[n] - math.sqrt(n * x) * q[n - 1]) / math.sqrt((n + 1) * x)
    return np.exp(0.5 * stats.poisson.logpmf(m, x)) * q


@lru_cache(maxsize=64)
def _charlier_family(r, d):
    if r == 0:
        grid = np.arange(d)
        return HermitianFamily(np.eye(d), grid, continuous=False)
    lo, hi = charlier_window(r, d)
    grid = np.arange(lo, hi + 1)
    return HermitianFamily(charlier_amplitudes(grid, r * r, d), grid, continuous=False)


@lru_cache(maxsize=16)
def _exact_family(alpha, d):
    dim = fock.default_dim(alpha) + d
    cols = fock.displacement_matrix(alpha, dim)[:, :d]
    return HermitianFamily(cols.T, np.arange(dim), continuous=False)


@lru_cache(maxsize=8)
def quadrature_family(d):
    """Quadrature sampler over :data:`QUADRATURE_GRID` for micro dimension ``d``."""
    return HermitianFamily(fock.number_wavefunctions(d, QUADRATURE_GRID), QUADRATURE_GRID, continuous=True)


def photon_pmf_asymptotic(state):
    """Photon-number pmf from the Poisson-Charlier factorisation (any alpha)."""
    r = abs(state.alpha)
    fam = _charlier_family(r, state.dim)
    rho = rotate_micro(state.micro, np.angle(state.alpha))
    probs = fam.pdf(rho)
    return PhotonPmf(int(fam.grid[0]), probs, max(0.0, 1.0 - probs.sum()))


def _check_engine(engine, alpha, min_abs_alpha=ASYMPTOTIC_MIN_ABS_ALPHA):
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    r = abs(alpha)
    if engine == "exact" and r > EXACT_MAX_ABS_ALPHA:
        raise RegimeError(
            f"|alpha| = {r:.4g} is beyond the exact engine (limit {EXACT_MAX_ABS_ALPHA}); "
            "use engine='asymptotic'"
        )
    if engine != "exact" and r < min_abs_alpha:
        raise RegimeError(
            f"|alpha| = {r:.4g} is below the asymptotic regime guard {min_abs_alpha}; "
            "use engine='exact' or relax min_abs_alpha"
        )


def sample_photon_numbers(micros, alpha, rng, engine="asymptotic", size=None,
                          min_abs_alpha=ASYMPTOTIC_MIN_ABS_ALPHA):
    """Photon numbers of ``D(alpha) micro D(alpha)^dagger`` for a stack of micro states.

    ``micros`` is ``(S, d, d)`` (one draw each) or a single ``(d, d)``
    state with ``size`` draws. Returns int64 photon counts.
    """
    alpha = complex(alpha)
    _check_engine(engine, alpha, min_abs_alpha)
    micros = np.asarray(micros, dtype=complex)
    d = micros.shape[-1]
    if engine == "exact":
        return _exact_family(alpha, d).sample(micros, rng, size).astype(np.int64)
    if engine == "asymptotic":
        fam = _charlier_family(abs(alpha), d)
        rho = rotate_micro(micros, np.angle(alpha))
        return fam.sample(rho, rng, size).astype(np.int64)
    # leading-order linearisation
    r = abs(alpha)
    rho = rotate_micro(micros, np.angle(alpha))
    x = quadrature_family(d).sample(rho, rng, size)
    pops = np.real(np.diagonal(micros, axis1=-2, axis2=-1))
    cum = np.cumsum(pops, axis=-1)
    u = rng.random(np.shape(x)) * cum[..., -1]
    n_res = (u[..., None] >= cum).sum(axis=-1)
    return np.rint(r * r + math.sqrt(2.0) * r * x + n_res).astype(np.int64)


def photon_sample_exact(state, rng, size=None):
    return sample_photon_numbers(state.micro, state.alpha, rng, "exact", size)


def photon_sample_asymptotic(state, rng, size=None, method="charlier",
                             min_abs_alpha=ASYMPTOTIC_MIN_ABS_ALPHA):
    """Draw photon numbers of a macroscopically displaced state.

    Parameters
    ----------
    state : DisplacedState
    rng : numpy.random.Generator
    size : int, optional
        Number of draws; a scalar is returned when omitted.
    method : {"charlier", "linear"}
        ``"charlier"`` samples the Poisson-Charlier factorisation (exact in
        distribution); ``"linear"`` uses the first-order quadrature
        linearisation, whose error is O(1/|alpha|).
    min_abs_alpha : float
        Regime guard; :class:`RegimeError` below it.
    """
    engine = {"charlier": "asymptotic", "linear": "linear"}[method]
    return sample_photon_numbers(state.micro, state.alpha, rng, engine, size, min_abs_alpha)
