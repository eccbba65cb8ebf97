"""Truncated Fock-space linear algebra.

States and operators are plain complex numpy arrays indexed by photon
number. Two-mode objects use the Kronecker ordering ``index = a * dim + b``
with Alice's mode first.

Quadrature convention: ``x = (a + a^dagger) / sqrt(2)``, so the vacuum has
quadrature variance 1/2, and the phase-``theta`` quadrature is
``x_theta = (a e^{-i theta} + a^dagger e^{i theta}) / sqrt(2)`` with
eigenstates ``<n|x, theta> = e^{i n theta} psi_n(x)``. In this convention a
real displacement ``alpha`` shifts ``x`` by ``sqrt(2) alpha`` and the photon
number of ``D(alpha)|psi>`` reads ``N = alpha^2 + sqrt(2) alpha x + n``.
"""
import math
import warnings

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import DomainError, InvalidDimensionError, TruncationWarning

HERMITIAN_ATOL = 1e-9
UNITARY_ATOL = 1e-8

def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"truncation dimension must be an integer >= 2, got {dim}")
    return int(dim)


def default_dim(alpha):
    """Truncation large enough for the low columns of ``D(alpha)``."""
    r = abs(alpha)
    return max(10, math.ceil(r * r + 8 * r + 10))


def basis(n, dim):
    """Number state ``|n>`` as a length-``dim`` vector."""
    dim = _check_dim(dim)
    if not 0 <= n < dim:
        raise InvalidDimensionError(f"|{n}> does not fit in dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def ket2dm(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def embed(op, dim):
    """Zero-pad a square matrix to ``dim``."""
    op = np.asarray(op)
    d = op.shape[0]
    if d > dim:
        raise InvalidDimensionError(f"cannot embed a {d}x{d} matrix in dimension {dim}")
    out = np.zeros((dim, dim), dtype=complex)
    out[:d, :d] = op
    return out


def check_density_matrix(rho, atol=HERMITIAN_ATOL):
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > atol:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > atol:
        raise ValueError(f"density matrix trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < -atol:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")
    return rho


def is_unitary(u, atol=UNITARY_ATOL):
    u = np.asarray(u)
    return bool(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() <= atol)


def ladder_matrices(dim):
    """Return ``(a, a_dagger)`` truncated to ``dim`` levels."""
    dim = _check_dim(dim)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return a, a.conj().T


def number_operator(dim):
    return np.diag(np.arange(_check_dim(dim), dtype=float)).astype(complex)


def quadrature_operator(dim, theta=0.0):
    a, ad = ladder_matrices(dim)
    return (a * np.exp(-1j * theta) + ad * np.exp(1j * theta)) / math.sqrt(2)


def rotation(phi, dim):
    """Phase rotation ``exp(i phi n)``; maps ``|alpha>`` to ``|alpha e^{i phi}>``."""
    return np.diag(np.exp(1j * phi * np.arange(_check_dim(dim))))


def _lower_diagonals(alpha, size):
    """Lower triangle of ``D(alpha)`` (m >= n) for a batch of amplitudes.

    Along each diagonal ``k = m - n`` the normalised element
    ``g_n = <n+k|D(alpha)|n> e^{-ik arg(alpha)}`` obeys the Laguerre
    three-term recurrence::

        g_{n+1} = ((2n+1+k-x) g_n - sqrt(n(n+k)) g_{n-1}) / sqrt((n+1)(n+k+1))

    with ``x = |alpha|^2`` and ``g_0 = <k|alpha>`` (magnitude). Starting from
    the coherent amplitude the physical solution dominates in the forward
    direction. Each diagonal is carried as mantissa times ``exp(log-scale)``
    and renormalised whenever the mantissa leaves ``[1e-150, 1e150]``.
    """
    alpha = np.asarray(alpha, dtype=complex)
    r = np.abs(alpha)[..., None]
    x = r * r
    k = np.arange(size, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_r = np.log(r)
        log_g0 = -0.5 * x + np.where(k > 0, k * log_r, 0.0) - 0.5 * gammaln(k + 1)
    shape = alpha.shape + (size,)
    scale = np.broadcast_to(log_g0, shape).copy()
    prev = np.zeros(shape)
    cur = np.ones(shape)
    out = np.zeros(alpha.shape + (size, size))
    rows = np.arange(size)
    for n in range(size):
        valid = size - n  # diagonals k < valid still fit at column n
        with np.errstate(under="ignore"):
            vals = cur[..., :valid] * np.exp(np.minimum(scale[..., :valid], 700.0))
        out[..., rows[:valid] + n, n] = vals
        if n == size - 1:
            break
        nxt = ((2 * n + 1 + k - x) * cur - np.sqrt(n * (n + k)) * prev) / np.sqrt((n + 1) * (n + k + 1))
        prev, cur = cur, nxt
        peak = np.maximum(np.abs(prev), np.abs(cur))
        rescale = (peak > 1e150) | ((peak < 1e-150) & (peak > 0))
        if rescale.any():
            f = np.where(rescale, peak, 1.0)
            prev = prev / f
            cur = cur / f
            scale = scale + np.log(f)
    m, n = np.indices((size, size))
    phase = np.exp(1j * np.angle(alpha)[..., None, None] * (m - n))
    return out * phase


def _displacement_full(alpha, size):
    """Lower triangle from :func:`_lower_diagonals`, upper by the reflection
    ``<m|D|n> = (-1)^(n-m) conj(<n|D|m>)``."""
    low = _lower_diagonals(alpha, size)
    m, n = np.indices((size, size))
    sign = np.where((n - m) % 2 == 0, 1.0, -1.0)
    upper = sign * np.conj(np.swapaxes(low, -1, -2))
    return np.where(n > m, upper, low)


def displacement_matrix(alpha, dim, full_output=False):
    """Truncated displacement operator ``D(alpha) = exp(alpha a^dag - alpha* a)``.

    Parameters
    ----------
    alpha : complex
        Displacement amplitude.
    dim : int
        Truncation dimension (>= 2).
    full_output : bool
        Also return the per-column leakage ``1 - sum_m |<m|D|n>|^2``.

    Returns
    -------
    D : ndarray, shape (dim, dim)
    leakage : ndarray, shape (dim,), only if ``full_output``

    Notes
    -----
    Entries are the exact matrix elements of the infinite operator; columns
    whose support extends beyond ``dim`` lose norm, which ``leakage``
    quantifies. A :class:`TruncationWarning` is emitted when
    ``|alpha|^2 > dim``.
    """
    dim = _check_dim(dim)
    alpha = complex(alpha)
    if abs(alpha) ** 2 > dim:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha) ** 2:.4g} exceeds dimension {dim}; "
            "displacement columns are badly truncated",
            TruncationWarning,
            stacklevel=2,
        )
    if alpha == 0:
        d = np.eye(dim, dtype=complex)
    else:
        d = _displacement_full(alpha, dim)
    if full_output:
        leakage = 1.0 - np.sum(np.abs(d) ** 2, axis=0)
        return d, leakage
    return d


def displacement_block(alpha, rows, cols):
    """Exact ``<m|D(alpha)|n>`` for the top-left ``rows x cols`` block.

    Vectorised over an array of amplitudes (result shape
    ``alpha.shape + (rows, cols)``). Intended for small blocks and moderate
    ``|alpha|``, e.g. per-shot residual displacements.
    """
    size = max(rows, cols)
    return _displacement_full(alpha, size)[..., :rows, :cols]


def number_wavefunction(n, x):
    """Position-basis wavefunction ``psi_n(x)`` of the number state ``|n>``.

    ``psi_0(x) = pi^{-1/4} exp(-x^2/2)``, ``psi_1(x) = sqrt(2) x psi_0(x)``
    and higher orders by the normalised Hermite recurrence.
    """
    if n < 0:
        raise ValueError("photon number must be non-negative")
    return number_wavefunctions(n + 1, x)[n]


def number_wavefunctions(count, x):
    """Stack ``psi_0 .. psi_{count-1}`` evaluated at ``x``; shape ``(count,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((count,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if count > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, count):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def two_mode_ops(dim):
    """Ladder operators ``(a, b)`` acting on Alice and Bob in ``A (x) B``."""
    a, _ = ladder_matrices(dim)
    eye = np.eye(dim)
    return np.kron(a, eye), np.kron(eye, a)


def beam_splitter_unitary(transmissivity, dim):
    """Real symmetric beam splitter on ``A (x) B``.

    Maps ``a^dag -> sqrt(T) a^dag + sqrt(1-T) b^dag`` and
    ``b^dag -> sqrt(T) b^dag - sqrt(1-T) a^dag``, so ``|1,0>`` goes to
    ``sqrt(T)|1,0> + sqrt(1-T)|0,1>`` with no factor ``i`` on the cross term.
    Exact on every total-photon-number sector ``n <= dim - 1``.
    """
    if not 0.0 <= transmissivity <= 1.0:
        raise DomainError(f"transmissivity must lie in [0, 1], got {transmissivity}")
    dim = _check_dim(dim)
    a, b = two_mode_ops(dim)
    theta = math.acos(math.sqrt(transmissivity))
    gen = theta * (a @ b.conj().T - a.conj().T @ b)
    return expm(gen)


def _incomplete_sector_weight(rho, dim):
    na, nb = np.divmod(np.arange(dim * dim), dim)
    mask = (na + nb) >= dim
    return float(np.real(np.diag(rho))[mask].sum())


def beam_splitter_apply(rho_two_mode, transmissivity):
    """Apply :func:`beam_splitter_unitary` to a two-mode density matrix.

    The state must carry no weight in total-photon-number sectors that the
    truncation cuts (``n_A + n_B >= dim``); otherwise the result would be
    wrong and ``InvalidDimensionError`` is raised.
    """
    rho = np.asarray(rho_two_mode, dtype=complex)
    dim = math.isqrt(rho.shape[0])
    if dim * dim != rho.shape[0]:
        raise InvalidDimensionError("two-mode matrix must have size dim**2 with equal per-mode dims")
    if _incomplete_sector_weight(rho, dim) > 1e-12:
        raise InvalidDimensionError(
            "state populates photon-number sectors cut by the truncation; increase dim"
        )
    u = beam_splitter_unitary(transmissivity, dim)
    return u @ rho @ u.conj().T


def partial_trace(rho_two_mode, keep):
    """Reduced state of mode ``'A'`` or ``'B'``."""
    rho = np.asarray(rho_two_mode)
    dim = math.isqrt(rho.shape[0])
    r = rho.reshape(dim, dim, dim, dim)
    if keep == "A":
        return np.einsum("abcb->ac", r)
    if keep == "B":
        return np.einsum("abad->bd", r)
    raise ValueError("keep must be 'A' or 'B'")


def apply_local(rho_two_mode, kraus, mode):
    """Apply a single-mode channel, given by Kraus operators, to one mode."""
    rho = np.asarray(rho_two_mode, dtype=complex)
    dim = math.isqrt(rho.shape[0])
    eye = np.eye(dim)
    out = np.zeros_like(rho)
    for k in kraus:
        big = np.kron(eye, k) if mode == "B" else np.kron(k, eye)
        out += big @ rho @ big.conj().T
    return out


def expectation(rho, op):
    return complex(np.trace(np.asarray(rho) @ np.asarray(op)))


def fidelity(rho, sigma):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = sq @ sigma @ sq
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


def trace_distance(rho, sigma):
    d = np.asarray(rho) - np.asarray(sigma)
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())
