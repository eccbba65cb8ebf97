import math

import numpy as np
import pytest

from micromacro.channels import IDEAL, ImperfectionParams
from micromacro.conditional import make_state, ideal_pair, MicroMacroState
from micromacro.detection import (ORTHOGONAL, SAME_QUADRATURE, SweepResult, default_bins, default_windows,
                                  discriminate, energy_diff_batch, expected_bin_moments, histograms_I_II_III,
                                  measure_energy_diff, photon_records, run_conditional)
from micromacro.errors import RegimeError
from micromacro.frame import DisplacedState, photon_moments
from micromacro.streams import stream

ALPHA = 1e3
S2 = 1 / math.sqrt(2)


def dm(ket):
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


@pytest.mark.parametrize("ket,lo,hi", [([1, 0], 1.94, 2.06), ([0, 1], 3.9, 4.1)])
def test_reference_subtracted_variance(ket, lo, hi):
    diff = energy_diff_batch(dm(ket), ALPHA, ALPHA, stream(1, str(ket)), size=100_000)
    assert lo <= diff.var(ddof=1) / ALPHA**2 <= hi
    if ket == [1, 0]:
        assert abs(diff.mean()) < 4 * math.sqrt(2) * ALPHA / math.sqrt(diff.size)


def test_zero_amplitude_gives_zero():
    rng = stream(2)
    for _ in range(20):
        assert measure_energy_diff(DisplacedState(dm([1, 0]), 0.0), 0.0, rng, engine="exact") == 0


def test_exact_engine_guard():
    with pytest.raises(RegimeError, match="asymptotic"):
        measure_energy_diff(DisplacedState(dm([1, 0]), 1e3), 1e3, stream(1), engine="exact")
    with pytest.raises(ValueError):
        measure_energy_diff(DisplacedState(dm([1, 0]), 1e3), -1.0, stream(1))


@pytest.mark.parametrize("ket", [[1, 0], [0, 1], [S2, S2], [S2, 1j * S2]])
def test_reference_noise_additivity(ket):
    shots = 200_000
    state = DisplacedState(dm(ket), ALPHA)
    v_b = photon_moments(state)[1]
    diff = energy_diff_batch(state.micro, ALPHA, ALPHA, stream(3, str(ket)), size=shots)
    expected = v_b + ALPHA**2
    # sample variance SE for near-Gaussian data
    assert diff.var(ddof=1) == pytest.approx(expected, abs=5 * expected * math.sqrt(2 / shots))


def test_discriminate_examples():
    s = np.array([-3, -1, 2, 4])
    assert discriminate(s, s, 0.5)[2] == pytest.approx(0.5)
    e_p, e_m, avg = discriminate([1, 2, -1], [-2, -1, 1], 0.0)
    assert (e_p, e_m, avg) == (pytest.approx(1 / 3), pytest.approx(1 / 3), pytest.approx(1 / 3))
    assert discriminate([5, 6], [5, 6], 5.5) == (0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        discriminate([], [1], 0)


def test_sweep_shot_floor():
    with pytest.raises(ValueError, match="100 per bin"):
        run_conditional(ImperfectionParams(), ALPHA, 0.0, 2000, stream(1))


def test_sweep_structure_and_flags():
    sweep, hist = run_conditional(ImperfectionParams(), ALPHA, 0.0, 20_000, stream(4), shard_size=7000)
    assert sweep.shots == 20_000
    assert np.all(np.diff(sweep.centers) > 0)
    assert sweep.tag == SAME_QUADRATURE
    assert sweep.underpopulated[0] and not sweep.underpopulated[10]
    table = sweep.table()
    assert table.shape == (21, 9)
    assert np.array_equal(table[:, -1], sweep.underpopulated)


def test_sweep_determinism_and_merge():
    a, _ = run_conditional(ImperfectionParams(), ALPHA, math.pi / 2, 10_000, stream(5))
    b, _ = run_conditional(ImperfectionParams(), ALPHA, math.pi / 2, 10_000, stream(5))
    assert np.array_equal(a.sums, b.sums) and np.array_equal(a.sumsq, b.sumsq)
    assert a.tag == ORTHOGONAL
    c, _ = run_conditional(ImperfectionParams(), ALPHA, math.pi / 2, 10_000, stream(6))
    ab, ba = a.merge(c), c.merge(a)
    assert np.array_equal(ab.counts, ba.counts) and np.allclose(ab.sums, ba.sums, rtol=0, atol=0)


def test_photon_records_deterministic():
    s = make_state(alpha=ALPHA)
    r1 = photon_records(s, 0.0, 50, stream(8))
    r2 = photon_records(s, 0.0, 50, stream(8))
    assert r1 == r2
    assert r1[0].tag == SAME_QUADRATURE


def test_sweep_matches_analytic_bins():
    params = ImperfectionParams()
    sweep, _ = run_conditional(params, ALPHA, 0.0, 300_000, stream(7))
    p, mean, var = expected_bin_moments(make_state(params, ALPHA), 0.0, sweep.edges)
    ok = sweep.counts >= 2000
    z_mean = (sweep.mean[ok] - mean[ok]) / sweep.mean_stderr()[ok]
    z_var = (sweep.variance[ok] - var[ok]) / sweep.variance_stderr()[ok]
    assert np.abs(z_mean).max() < 5 and np.abs(z_var).max() < 5
    n = sweep.shots
    assert np.all(np.abs(sweep.counts - n * p) < 5 * np.sqrt(n * p) + 5)


def test_window_histograms():
    hist = histograms_I_II_III(ImperfectionParams(), ALPHA, 0.0, 1_000_000, stream(9))
    m1, m2, m3 = hist.means_over_alpha()
    eta = 0.54
    assert m1 == pytest.approx(-eta, rel=0.10)
    assert m3 == pytest.approx(eta, rel=0.10)
    assert abs(m2) < 5 * math.sqrt(2.8 / hist.samples[1].size)
    for i in range(3):
        vals, probs = hist.pmf(i)
        assert probs.sum() == pytest.approx(1.0)
        assert np.all(np.diff(vals) > 0)


def test_window_errors():
    with pytest.raises(ValueError, match="disjoint"):
        run_conditional(ImperfectionParams(), ALPHA, 0.0, 10_000, stream(1), windows=[(-1, 0.5), (0, 1)])
    with pytest.raises(ValueError, match="no shots"):
        histograms_I_II_III(ImperfectionParams(), ALPHA, 0.0, 10_000, stream(1), intervals=[(7.0, 7.5)])


def test_ideal_variance_ratio_limit():
    """Ideal, no reference: var(x_A = 0) / var(x_A -> large) tends to 3."""
    s = make_state(IDEAL, ALPHA)
    from micromacro.conditional import condition_on
    v0 = photon_moments(condition_on(s, 0.0).bob)[1]
    v_far = photon_moments(condition_on(s, 8.0).bob)[1]
    assert v0 / v_far == pytest.approx(3.0, abs=0.1)
    # Bob in c0|0> + c1|1> (c0^2 = 2x^2 c1^2): to leading order
    # Var(N)/alpha^2 = 2 Var(x) = 1 + 2 c1^2 - 4 c0^2 c1^2
    for x in (1.0, 3.0, 5.0):
        c1 = 1 / (1 + 2 * x * x)
        c0 = 1 - c1
        v = photon_moments(condition_on(s, x).bob)[1] / ALPHA**2
        assert v == pytest.approx(1 + 2 * c1 - 4 * c0 * c1, abs=3e-3)
    # the |x_A| ~ 3 bins sit below 1, so a finite-bin ratio exceeds 3
    v3 = photon_moments(condition_on(s, 3.0).bob)[1]
    assert v0 / v3 > 3.2


def test_ideal_sweep_central_bin():
    sweep, _ = run_conditional(IDEAL, ALPHA, 0.0, 1_000_000, stream(10), reference=False)
    _, _, var = expected_bin_moments(make_state(IDEAL, ALPHA), 0.0, sweep.edges, alpha_ref=0.0)
    mid = len(sweep.counts) // 2
    assert sweep.variance[mid] / ALPHA**2 == pytest.approx(3.0, abs=0.1)
    assert sweep.variance[mid] == pytest.approx(var[mid], abs=5 * sweep.variance_stderr()[mid])


def test_scale_invariance():
    shots = 300_000
    res = {}
    for alpha in (1e3, 1e4):
        sweep, hist = run_conditional(ImperfectionParams(), alpha, 0.0, shots, stream(11, int(alpha)))
        res[alpha] = (sweep, hist)
    (s1, h1), (s2, h2) = res[1e3], res[1e4]
    ok = (s1.counts >= 5000) & (s2.counts >= 5000)
    v1, v2 = s1.variance[ok] / 1e6, s2.variance[ok] / 1e8
    e1, e2 = s1.variance_stderr()[ok] / 1e6, s2.variance_stderr()[ok] / 1e8
    assert np.all(np.abs(v1 - v2) < 5 * np.hypot(e1, e2))
    m1, m2 = s1.mean[ok] / 1e3, s2.mean[ok] / 1e4
    se1, se2 = s1.mean_stderr()[ok] / 1e3, s2.mean_stderr()[ok] / 1e4
    assert np.all(np.abs(m1 - m2) < 5 * np.hypot(se1, se2))
    d1, d2 = h1.discrimination(), h2.discrimination()
    assert abs(d1[2] - d2[2]) < 5 * math.hypot(d1[3], d2[3])


def test_sweep_result_metrics():
    edges = np.linspace(-1, 1, 4)
    s = SweepResult(edges, np.array([30000, 30000, 30000]), np.array([0.0, 3e4, 0.0]),
                    np.array([3e4 * 2.0, 3e4 * 4.0, 3e4 * 1.0]), 1.0)
    ratio, se = s.variance_ratio()
    # bin variances 2, 3, 1 (times n / (n - 1))
    assert ratio == pytest.approx(3.0, rel=1e-12)
    assert se > 0
    with pytest.raises(ValueError):
        SweepResult(edges, np.array([10, 10, 10]), np.zeros(3), np.ones(3), 1.0).variance_ratio()
