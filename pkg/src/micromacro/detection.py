"""Bob's differential energy measurement and the conditional statistics sweep.

Bob's photodiode sees ``N_B`` photons, the balancing photodiode a reference
pulse of the same mean energy with Poissonian ``N_R``; the recorded signal is
``N_B - N_R``. The reference removes the ``alpha^2`` background at the cost
of adding its shot noise ``Var(N_R) = alpha_ref^2``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from . import fock

from .conditional import alice_condition_batch, bob_conditional as bob_conditional_stack, condition_on, make_state
from .frame import sample_photon_numbers
from .streams import shard_streams

SAME_QUADRATURE = "same-quadrature"
ORTHOGONAL = "orthogonal"

DEFAULT_SHARD = 100_000
# bins entering summary metrics need a relative SE of the bin variance of at
# most 1%, i.e. sqrt(2 / n) <= 0.01
METRIC_MIN_COUNT = 20_000
MIN_BIN_COUNT = 100


def default_bins():
    """21 uniform bins over x_A in [-3.15, 3.15]."""
    return np.linspace(-3.15, 3.15, 22)


def default_windows():
    """Intervals I, II, III: centres (-1/sqrt(2), 0, 1/sqrt(2)), half-width 0.2."""
    c = 1 / math.sqrt(2)
    return [(-c - 0.2, -c + 0.2), (-0.2, 0.2), (c - 0.2, c + 0.2)]


@dataclass(frozen=True)
class PhotonRecord:
    diff: int
    x_a: float
    tag: str = SAME_QUADRATURE


def _tag(theta_a):
    return ORTHOGONAL if math.isclose(abs(math.cos(theta_a)), 0.0, abs_tol=1e-12) else SAME_QUADRATURE


def energy_diff_batch(micros, alpha, alpha_ref, rng, engine="asymptotic", size=None, min_abs_alpha=None):
    """``N_B - N_R`` for Bob micro states (stacked) in a frame displaced by ``alpha``."""
    if alpha_ref < 0:
        raise ValueError("alpha_ref must be >= 0")
    kw = {} if min_abs_alpha is None else {"min_abs_alpha": min_abs_alpha}
    n_b = sample_photon_numbers(micros, alpha, rng, engine, size, **kw)
    n_r = rng.poisson(alpha_ref**2, size=np.shape(n_b)) if alpha_ref > 0 else 0
    return n_b - n_r


def measure_energy_diff(bob, alpha_ref, rng, engine="asymptotic", min_abs_alpha=None):
    """One shot of ``N_B - N_R`` for Bob's displaced state."""
    out = energy_diff_batch(bob.micro, bob.alpha, alpha_ref, rng, engine, size=1, min_abs_alpha=min_abs_alpha)
    return int(out[0])


def discriminate(samples_plus, samples_minus, threshold=0.0):
    """Single-shot threshold discrimination of two sample sets.

    Returns ``(error_plus, error_minus, avg_error)``: the fraction of
    ``plus`` samples below ``threshold``, of ``minus`` samples above it, and
    their mean.
    """
    plus = np.asarray(samples_plus)
    minus = np.asarray(samples_minus)
    if plus.size == 0 or minus.size == 0:
        raise ValueError("both sample sets must be non-empty")
    e_plus = float(np.mean(plus < threshold))
    e_minus = float(np.mean(minus > threshold))
    return e_plus, e_minus, 0.5 * (e_plus + e_minus)


def discrimination_stderr(n_plus, n_minus, e_plus, e_minus):
    return 0.5 * math.sqrt(e_plus * (1 - e_plus) / n_plus + e_minus * (1 - e_minus) / n_minus)


def simulate_shots(state, theta_a, shots, rng, alpha_ref=None, engine="asymptotic", sigma_phi=0.0,
                   min_abs_alpha=None):
    """Alice conditioning followed by Bob's energy measurement, per shot.

    ``alpha_ref`` defaults to ``|alpha_B|`` (matched reference); 0 switches
    the reference off. Phase noise between Alice's local oscillator and
    Bob's displacement enters as a per-shot jitter of ``theta_a``.
    Returns ``(x_a, diff)``.
    """
    if alpha_ref is None:
        alpha_ref = abs(state.alpha_b)
    theta = theta_a + (rng.normal(0.0, sigma_phi, shots) if sigma_phi > 0 else 0.0)
    x_a, sigma, _ = alice_condition_batch(state, theta, shots, rng)
    diff = energy_diff_batch(sigma, state.alpha_b, alpha_ref, rng, engine, min_abs_alpha=min_abs_alpha)
    return x_a, diff


def photon_records(state, theta_a, shots, rng, **kw):
    x_a, diff = simulate_shots(state, theta_a, shots, rng, **kw)
    tag = _tag(theta_a)
    return [PhotonRecord(int(d), float(x), tag) for x, d in zip(x_a, diff)]


@dataclass
class SweepResult:
    """Per-bin statistics of ``N_B - N_R`` against Alice's outcome.

    The outermost bins are open-ended, so ``counts.sum()`` equals the number
    of shots. ``edges`` are the nominal bin edges.
    """

    edges: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    sumsq: np.ndarray
    alpha2: float
    tag: str = SAME_QUADRATURE
    min_count: int = MIN_BIN_COUNT

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def shots(self):
        return int(self.counts.sum())

    @property
    def mean(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sums / self.counts

    @property
    def variance(self):
        n = self.counts
        with np.errstate(invalid="ignore", divide="ignore"):
            return (self.sumsq - self.sums**2 / n) / (n - 1)

    @property
    def underpopulated(self):
        return self.counts < self.min_count

    def mean_stderr(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(self.variance / self.counts)

    def variance_stderr(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.variance * np.sqrt(2.0 / (self.counts - 1))

    def well_populated(self, min_count=METRIC_MIN_COUNT):
        return self.counts >= min_count

    def variance_ratio(self, min_count=METRIC_MIN_COUNT):
        """Max over min per-bin variance among well-populated bins, with its SE."""
        ok = self.well_populated(min_count)
        if ok.sum() < 2:
            raise ValueError("fewer than two bins are populated enough for a variance ratio")
        var, se = self.variance[ok], self.variance_stderr()[ok]
        i, j = np.argmax(var), np.argmin(var)
        ratio = var[i] / var[j]
        return float(ratio), float(ratio * math.hypot(se[i] / var[i], se[j] / var[j]))

    def max_abs_mean_over_alpha(self, min_count=METRIC_MIN_COUNT):
        ok = self.well_populated(min_count)
        if not ok.any():
            raise ValueError("no bin is populated enough for the mean metric")
        m, se = np.abs(self.mean[ok]), self.mean_stderr()[ok]
        i = np.argmax(m)
        alpha = math.sqrt(self.alpha2)
        return float(m[i] / alpha), float(se[i] / alpha)

    def merge(self, other):
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge sweeps with different bins")
        return SweepResult(self.edges, self.counts + other.counts, self.sums + other.sums,
                           self.sumsq + other.sumsq, self.alpha2, self.tag, self.min_count)

    def table(self):
        """Columns: centre, count, mean, variance, their SEs, normalised mean and variance."""
        alpha = math.sqrt(self.alpha2)
        return np.column_stack([
            self.centers, self.counts, self.mean, self.mean_stderr(), self.variance,
            self.variance_stderr(), self.mean / alpha, self.variance / self.alpha2,
            self.underpopulated.astype(int),
        ])

    TABLE_HEADER = "x_center count mean mean_se variance variance_se mean_over_alpha variance_over_alpha2 underpopulated"


def _accumulate(edges, x_a, diff):
    idx = np.clip(np.searchsorted(edges, x_a, side="right") - 1, 0, len(edges) - 2)
    nb = len(edges) - 1
    d = diff.astype(float)
    return (np.bincount(idx, minlength=nb), np.bincount(idx, weights=d, minlength=nb),
            np.bincount(idx, weights=d * d, minlength=nb))


@dataclass
class WindowHistograms:
    """Samples of ``N_B - N_R`` for Alice outcomes inside each window."""

    windows: list
    samples: list
    alpha: float

    def pmf(self, i):
        """Empirical pmf of window ``i`` as ``(values, probabilities)``."""
        s = self.samples[i]
        if s.size == 0:
            raise ValueError(f"window {i} is empty")
        vals, counts = np.unique(s, return_counts=True)
        return vals, counts / s.size

    def means_over_alpha(self):
        return [float(s.mean() / self.alpha) for s in self.samples]

    def discrimination(self, threshold=0.0):
        """Threshold discrimination of window III (plus) against window I (minus)."""
        minus, plus = self.samples[0], self.samples[-1]
        e_p, e_m, avg = discriminate(plus, minus, threshold)
        return e_p, e_m, avg, discrimination_stderr(plus.size, minus.size, e_p, e_m)


def run_conditional(params, alpha, theta_a, shots, rng, bins=None, windows=None, reference=True,
                    engine="asymptotic", shard_size=DEFAULT_SHARD, min_count=MIN_BIN_COUNT):
    """Fig.-2 style experiment: returns ``(SweepResult, WindowHistograms)``.

    Shots are split into shards of ``shard_size``; shard ``k`` draws from its
    own stream derived from ``rng`` (see :func:`micromacro.streams.shard_streams`),
    and per-bin count/sum/sum-of-squares are added, so the outcome does not
    depend on shard evaluation order.
    """
    if bins is None:
        bins = default_bins()
    edges = np.asarray(bins, dtype=float)
    if shots < (len(edges) - 1) * 100:
        raise ValueError(f"shots must be >= 100 per bin ({(len(edges) - 1) * 100})")
    windows = default_windows() if windows is None else windows
    ws = sorted(windows)
    if any(ws[i][1] > ws[i + 1][0] for i in range(len(ws) - 1)):
        raise ValueError("windows must be disjoint")
    state = make_state(params, alpha)
    alpha_ref = abs(alpha) if reference else 0.0
    n_shards = math.ceil(shots / shard_size)
    nb = len(edges) - 1
    counts, sums, sumsq = np.zeros(nb, dtype=np.int64), np.zeros(nb), np.zeros(nb)
    picked = [[] for _ in windows]
    for k, g in enumerate(shard_streams(rng, n_shards)):
        n = min(shard_size, shots - k * shard_size)
        x_a, diff = simulate_shots(state, theta_a, n, g, alpha_ref, engine, params.sigma_phi)
        c, s, q = _accumulate(edges, x_a, diff)
        counts += c
        sums += s
        sumsq += q
        for i, (lo, hi) in enumerate(windows):
            picked[i].append(diff[(x_a >= lo) & (x_a < hi)])
    sweep = SweepResult(edges, counts, sums, sumsq, abs(alpha) ** 2, _tag(theta_a), min_count)
    hist = WindowHistograms(list(windows), [np.concatenate(p) for p in picked], abs(alpha))
    return sweep, hist


def conditional_sweep(params, alpha, theta_a, shots, rng, bins=None, **kw):
    return run_conditional(params, alpha, theta_a, shots, rng, bins=bins, **kw)[0]


def histograms_I_II_III(params, alpha, theta_a, shots, rng, intervals=None, **kw):
    hist = run_conditional(params, alpha, theta_a, shots, rng, windows=intervals, **kw)[1]
    for i, s in enumerate(hist.samples):
        if s.size == 0:
            raise ValueError(f"window {i} received no shots")
    return hist


def point_discrimination(params, alpha, x_cond, shots, rng, reference=True, theta_a=0.0,
                         threshold=0.0, engine="asymptotic", min_abs_alpha=None):
    """Discriminate Bob's states conditioned exactly on ``x_A = +x_cond`` and ``-x_cond``.

    With ``reference=False`` the signal is the intrinsic ``N_B - |alpha|^2``,
    i.e. ``threshold`` is measured from ``|alpha|^2``. Returns
    ``(error_plus, error_minus, avg_error, stderr)``.
    """
    state = make_state(params, alpha)
    alpha_ref = abs(alpha) if reference else 0.0
    out = []
    for sign in (1.0, -1.0):
        bob = condition_on(state, sign * x_cond, theta_a).bob
        diff = energy_diff_batch(bob.micro, bob.alpha, alpha_ref, rng, engine, size=shots,
                                 min_abs_alpha=min_abs_alpha)
        out.append(diff if reference else diff - abs(alpha) ** 2)
    e_p, e_m, avg = discriminate(out[0], out[1], threshold)
    return e_p, e_m, avg, discrimination_stderr(shots, shots, e_p, e_m)


def expected_bin_moments(state, theta_a, edges, alpha_ref=None, points=4001):
    """Model per-bin mean and variance of ``N_B - N_R`` by quadrature over x_A.

    Bob's conditional photon-number moments follow from ``N = |alpha|^2 + X + n``
    (``X = alpha a^dag + alpha* a``) on the micro state; bins are mixtures of
    these weighted by Alice's density. Outer bins extend to the tabulation
    limits, matching the open-ended bins of :class:`SweepResult`.
    Returns ``(probability, mean, variance)`` per bin.
    """
    if alpha_ref is None:
        alpha_ref = abs(state.alpha_b)
    edges = np.asarray(edges, dtype=float)
    lims = edges.copy()
    lims[0], lims[-1] = -8.0, 8.0
    d = state.dim + 2
    a, ad = fock.ladder_matrices(d)
    alpha = state.alpha_b
    op = alpha * ad + np.conj(alpha) * a + ad @ a
    op2 = op @ op
    probs, means, vars_ = [], [], []
    for lo, hi in zip(lims[:-1], lims[1:]):
        x = np.linspace(lo, hi, points)
        sigma, p = bob_conditional_stack(state, x, theta_a)
        s = np.zeros((x.size, d, d), dtype=complex)
        s[:, : state.dim, : state.dim] = sigma
        m1 = np.real(np.einsum("sij,ji->s", s, op))
        m2 = np.real(np.einsum("sij,ji->s", s, op2))
        w = trapezoid(p, x)
        mean = trapezoid(p * m1, x) / w
        second = trapezoid(p * m2, x) / w
        probs.append(w)
        means.append(mean + abs(alpha) ** 2 - alpha_ref**2)
        vars_.append(second - mean**2 + alpha_ref**2)
    return np.array(probs), np.array(means), np.array(vars_)
