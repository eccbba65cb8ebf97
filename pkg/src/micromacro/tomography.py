"""Two-mode homodyne tomography of the undisplaced state.

Joint quadrature samples are drawn from the exact pdf
``p(x_A, x_B) = <x_A, th_A; x_B, th_B| rho |x_A, th_A; x_B, th_B>`` and the
density matrix is recovered by unbinned maximum likelihood.
"""
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import fock
from .channels import ImperfectionParams, loss, loss_on_mode, undisplaced_phase_noise
from .conditional import MicroMacroState, alice_condition_batch, make_state
from .errors import UnsupportedModeError
from .frame import DisplacedState, quadrature_family, rotate_micro

TWO_PI = 2 * math.pi
DEFAULT_PHASES = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)
MIN_RECORDS_PER_PAIR = 100
HEADER = "x_A theta_A x_B theta_B"


def default_phase_pairs():
    """All 16 pairs over {0, pi/4, pi/2, 3pi/4}."""
    return list(product(DEFAULT_PHASES, DEFAULT_PHASES))


@dataclass(frozen=True)
class QuadratureBatch:
    """Homodyne records as four parallel columns."""

    x_a: np.ndarray
    theta_a: np.ndarray
    x_b: np.ndarray
    theta_b: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float) for c in (self.x_a, self.theta_a, self.x_b, self.theta_b)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise ValueError("columns must be 1-d and of equal length")
        if not all(np.isfinite(c).all() for c in cols):
            raise ValueError("records must be finite")
        cols[1] = np.mod(cols[1], TWO_PI)
        cols[3] = np.mod(cols[3], TWO_PI)
        for name, c in zip(("x_a", "theta_a", "x_b", "theta_b"), cols):
            c.setflags(write=False)
            object.__setattr__(self, name, c)

    def __len__(self):
        return self.x_a.size

    @property
    def records(self):
        return np.column_stack([self.x_a, self.theta_a, self.x_b, self.theta_b])

    def pairs(self):
        """Unique ``(theta_a, theta_b)`` pairs and the index of each record's pair."""
        key = np.round(np.column_stack([self.theta_a, self.theta_b]), 12)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        return uniq, inv.ravel()

    def save(self, path):
        np.savetxt(path, self.records, fmt="%.17g", header=HEADER)

    @classmethod
    def load(cls, path):
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 4:
            raise ValueError(f"expected 4 columns ({HEADER}), found {data.shape[1]}")
        return cls(*data.T)

    @classmethod
    def concat(cls, batches):
        return cls(*(np.concatenate([getattr(b, n) for b in batches]) for n in ("x_a", "theta_a", "x_b", "theta_b")))


def sample_quadratures(rho_ab, phase_pairs, shots_per_pair, rng, common_phase_jitter=False):
    """Joint homodyne samples at each ``(theta_a, theta_b)`` pair.

    ``x_A`` is drawn from Alice's marginal and ``x_B`` from Bob's conditional
    state, which is the exact joint law. With ``common_phase_jitter`` both
    local oscillators of a block share one uniformly random offset that is
    not recorded (free-running global phase); the stored phases are nominal.
    """
    if shots_per_pair < 1:
        raise ValueError("shots_per_pair must be >= 1")
    state = MicroMacroState(rho_ab, 0.0)
    fam = quadrature_family(state.dim)
    out = []
    for th_a, th_b in phase_pairs:
        g = rng.uniform(0, TWO_PI) if common_phase_jitter else 0.0
        x_a, sigma, _ = alice_condition_batch(state, th_a + g, shots_per_pair, rng)
        x_b = fam.sample(rotate_micro(sigma, th_b + g), rng)
        n = shots_per_pair
        out.append(QuadratureBatch(x_a, np.full(n, th_a), x_b, np.full(n, th_b)))
    return QuadratureBatch.concat(out)


def inject_residual_offset(batch, alpha_r=10.0):
    """Shift ``x_B`` by the quadrature mean of an uncancelled displacement ``alpha_r``."""
    shift = math.sqrt(2.0) * np.real(complex(alpha_r) * np.exp(-1j * batch.theta_b))
    return QuadratureBatch(batch.x_a, batch.theta_a, batch.x_b + shift, batch.theta_b)


def residual_filter(batch, center_alice=False, min_records=MIN_RECORDS_PER_PAIR):
    """Remove the per-phase-pair empirical mean of ``x_B`` (and optionally ``x_A``)."""
    uniq, inv = batch.pairs()
    counts = np.bincount(inv, minlength=len(uniq))
    if counts.min() < min_records:
        k = int(np.argmin(counts))
        raise ValueError(f"phase pair {tuple(uniq[k])} has {counts[k]} records, need {min_records}")

    def centred(x):
        return x - (np.bincount(inv, weights=x, minlength=len(uniq)) / counts)[inv]

    x_a = centred(batch.x_a) if center_alice else batch.x_a
    return QuadratureBatch(x_a, batch.theta_a, centred(batch.x_b), batch.theta_b)


@dataclass
class ReconstructionResult:
    rho: np.ndarray
    iterations: int
    log_likelihood: float
    converged: bool
    ll_trace: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return math.isqrt(self.rho.shape[0])

    @property
    def leakage(self):
        """Diagonal weight outside the {0,1} x {0,1} block."""
        d = self.dim
        a, b = np.divmod(np.arange(d * d), d)
        return float(np.real(np.diag(self.rho))[(a > 1) | (b > 1)].sum())

    def concurrence(self):
        return concurrence(self.rho)


class _Likelihood:
    """Quadrature projectors grouped by phase pair.

    For a pair ``(ta, tb)`` the projector at ``(x_A, x_B)`` is ``|v><v|``
    with ``v = P h``, ``h_ab = psi_a(x_A) psi_b(x_B)`` real and ``P`` the
    diagonal phase ``e^{i(a ta + b tb)}``; hence ``p = h^T Re(P^dag rho P) h``.
    The products ``h_i h_j`` (i <= j) are tabulated once, so both ``p`` and
    ``R`` reduce to matrix-vector products.
    """

    def __init__(self, batch, dim):
        uniq, inv = batch.pairs()
        size = dim * dim
        a, b = np.divmod(np.arange(size), dim)
        self.iu = np.triu_indices(size)
        self.weight = np.where(self.iu[0] == self.iu[1], 1.0, 2.0)
        self.size = size
        self.n = len(batch)
        self.groups = []
        for k, (ta, tb) in enumerate(uniq):
            sel = inv == k
            pa = fock.number_wavefunctions(dim, batch.x_a[sel])
            pb = fock.number_wavefunctions(dim, batch.x_b[sel])
            h = (pa[a] * pb[b]).T
            g = h[:, self.iu[0]] * h[:, self.iu[1]]
            phase = np.exp(1j * (a * ta + b * tb))
            self.groups.append((g, phase))

    def probs(self, rho):
        out = []
        for g, ph in self.groups:
            m = np.real(ph.conj()[:, None] * rho * ph[None, :])
            out.append(g @ (self.weight * m[self.iu]))
        return out

    def loglik(self, probs):
        return float(sum(np.log(np.clip(p, 1e-300, None)).sum() for p in probs))

    def r_operator(self, probs):
        r = np.zeros((self.size, self.size), dtype=complex)
        for (g, ph), p in zip(self.groups, probs):
            rk = np.zeros((self.size, self.size))
            rk[self.iu] = g.T @ (1.0 / p)
            rk = rk + np.triu(rk, 1).T
            r += ph[:, None] * rk * ph.conj()[None, :]
        return r / self.n


def _relative_phases(batch):
    uniq, _ = batch.pairs()
    return np.unique(np.round(np.mod(uniq[:, 0] - uniq[:, 1], TWO_PI), 9))


def mle_reconstruct(batch, dim=3, max_iter=2000, tol=1e-9, rho0=None):
    """Maximum-likelihood two-mode state from unbinned homodyne data.

    Iterates ``rho <- R rho R / Tr``; if a step would lower the likelihood it
    is replaced by the diluted step ``(1 + e R) rho (1 + e R)`` with ``e``
    halved until the likelihood does not drop, so the stored trace is
    non-decreasing. Stops when the gain per sample falls below ``tol``.
    """
    if len(_relative_phases(batch)) < 2:
        raise ValueError("need at least two distinct relative phases theta_A - theta_B")
    lik = _Likelihood(batch, dim)
    size = dim * dim
    rho = np.eye(size, dtype=complex) / size if rho0 is None else np.array(rho0, dtype=complex)
    probs = lik.probs(rho)
    ll = lik.loglik(probs)
    trace = [ll]
    converged = False
    eye = np.eye(size)
    it = 0
    for it in range(1, max_iter + 1):
        r = lik.r_operator(probs)
        cand = r @ rho @ r
        step = None
        eps = 1.0
        while True:
            cand = cand / np.real(np.trace(cand))
            cand = 0.5 * (cand + cand.conj().T)
            p_new = lik.probs(cand)
            ll_new = lik.loglik(p_new)
            if ll_new >= ll:
                step = (cand, p_new, ll_new)
                break
            if eps < 1e-8:
                break
            g = eye + eps * r
            cand = g @ rho @ g
            eps *= 0.5
        if step is None:
            converged = True
            break
        gain = (step[2] - ll) / lik.n
        rho, probs, ll = step
        trace.append(ll)
        if gain < tol:
            converged = True
            break
    return ReconstructionResult(rho, it, ll, converged, np.array(trace))


def concurrence(rho):
    """``2(|<01|rho|10>| - sqrt(<00|rho|00> <11|rho|11>))``, not clamped at 0."""
    rho = np.asarray(rho)
    d = math.isqrt(rho.shape[0])
    if d * d != rho.shape[0] or d < 2:
        raise ValueError("expected a two-mode density matrix")
    r01 = rho[0 * d + 1, 1 * d + 0]
    r00 = np.real(rho[0, 0])
    r11 = np.real(rho[d + 1, d + 1])
    return float(2.0 * (abs(r01) - math.sqrt(max(r00 * r11, 0.0))))


def verification_state(params, alpha=0.0, t=None, rng=None, noise_shots=100_000):
    """Micro state after displace(alpha) -> loss(t) -> undisplace(-sqrt(t) alpha).

    Bob's coherent part passes the loss exactly (``alpha -> sqrt(t) alpha``)
    and is cancelled by the matched undisplacement, leaving the lossy micro
    state. Phase noise ``params.sigma_phi > 0`` between the two displacements
    is Monte Carlo averaged and needs ``rng``.
    """
    params = params or ImperfectionParams()
    t = params.t if t is None else t
    state = make_state(params, 0.0)
    bob = loss(DisplacedState(np.eye(1), alpha), t)
    residual = bob.alpha - math.sqrt(t) * alpha
    assert abs(residual) < 1e-9 * max(1.0, abs(alpha))
    rho = loss_on_mode(state.micro_ab, t, "B")
    if params.sigma_phi > 0:
        if rng is None:
            raise UnsupportedModeError("phase noise between the displacements must be sampled; pass rng")
        rho = undisplaced_phase_noise(rho, math.sqrt(t) * alpha, params.sigma_phi, noise_shots, rng)
        rho = rho / np.real(np.trace(rho))
    return 0.5 * (rho + rho.conj().T)


def concurrence_vs_loss(params, alpha, t_grid, pipeline="analytic", rng=None, shots_per_pair=20_000,
                        phase_pairs=None, residual_offset=0.0, dim=3):
    """Concurrence of the verified state over a grid of transmissions.

    ``pipeline="analytic"`` evaluates the exact channel algebra;
    ``"monte-carlo"`` additionally samples homodyne data, injects and filters
    the residual offset, and reconstructs by MLE. Returns an array of C
    values (and, for Monte Carlo, the list of reconstructions).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if ((t_grid < 0) | (t_grid > 1)).any():
        raise ValueError("t grid must lie in [0, 1]")
    if pipeline not in ("analytic", "monte-carlo"):
        raise ValueError(f"unknown pipeline {pipeline!r}")
    if pipeline == "analytic":
        if params.sigma_phi > 0:
            raise UnsupportedModeError("analytic pipeline has no phase noise; use monte-carlo")
        return np.array([concurrence(verification_state(params, alpha, t)) for t in t_grid])
    if rng is None:
        raise ValueError("monte-carlo pipeline needs rng")
    pairs = default_phase_pairs() if phase_pairs is None else phase_pairs
    values, results = [], []
    for t in t_grid:
        rho = verification_state(params, alpha, t, rng)
        batch = sample_quadratures(rho, pairs, shots_per_pair, rng, common_phase_jitter=True)
        if residual_offset:
            batch = inject_residual_offset(batch, residual_offset)
        res = mle_reconstruct(residual_filter(batch), dim)
        values.append(res.concurrence())
        results.append(res)
    return np.array(values), results
