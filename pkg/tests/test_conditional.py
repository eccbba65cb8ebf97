import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from micromacro import fock
from micromacro.channels import IDEAL, ImperfectionParams
from micromacro.conditional import (alice_condition, alice_condition_batch, alice_marginal, bob_conditional,
                                    cat_component, condition_on, ideal_pair, make_state)
from micromacro.frame import photon_moments, DisplacedState
from micromacro.streams import stream

X_EQ = 1 / math.sqrt(2)


def test_make_state_examples():
    r = make_state(IDEAL).micro_ab
    assert r[1, 3].real == pytest.approx(0.5)
    assert r[1, 1].real == pytest.approx(0.5)
    assert r[3, 3].real == pytest.approx(0.5)
    assert np.allclose(r, ideal_pair(), atol=1e-12)
    assert make_state(ImperfectionParams(eta=0.54, epsilon2=0.0)).micro_ab[0, 0].real == pytest.approx(0.46)
    assert make_state(ImperfectionParams(eta=1.0, epsilon2=0.015)).micro_ab[4, 4].real == pytest.approx(0.0075)


def test_alice_mode_not_displaced():
    s = make_state(alpha=1e3)
    assert s.alpha_b == 1e3
    assert s.bob().alpha == 1e3


def test_condition_examples():
    s = make_state(IDEAL, 1e3)
    assert np.allclose(condition_on(s, 0.0).bob.micro, np.diag([0, 1, 0]), atol=1e-12)
    cat = np.outer(cat_component(1, 3), cat_component(1, 3))
    assert np.allclose(condition_on(s, X_EQ).bob.micro, cat, atol=1e-12)
    assert condition_on(s, X_EQ).bob.alpha == 1e3


def test_large_x_projects_close_to_vacuum():
    s = make_state(IDEAL)
    for x in (3.0, 3.1, 4.0, -5.0):
        f = condition_on(s, x).bob.micro[0, 0].real
        # |psi_1|^2 / (|psi_0|^2 + |psi_1|^2) = 2x^2 / (1 + 2x^2)
        assert f == pytest.approx(2 * x * x / (1 + 2 * x * x), rel=1e-12)
        if abs(x) >= 3.1:
            assert f >= 0.95


def test_cat_component_examples():
    assert np.allclose(cat_component(1), [S := 1 / math.sqrt(2), S])
    assert abs(np.vdot(cat_component(1), cat_component(-1))) < 1e-15
    m, _ = photon_moments(DisplacedState(np.outer(cat_component(1), cat_component(1)), 50.0))
    assert m == pytest.approx(2500 + 50 + 0.5)


@pytest.mark.parametrize("sign", [1, -1])
def test_cat_consistency(sign):
    s = make_state(IDEAL)
    got = condition_on(s, sign * X_EQ).bob.micro
    target = np.outer(cat_component(sign, 3), cat_component(sign, 3))
    assert 1 - fock.fidelity(got, target) < 1e-9
    eta = 0.54
    mixed = condition_on(make_state(ImperfectionParams(eta=eta, epsilon2=0.0)), sign * X_EQ).bob.micro
    vac = np.diag([1.0, 0, 0])
    assert np.allclose(mixed, eta * target + (1 - eta) * vac, atol=1e-12)


def test_marginal_chi_square():
    s = make_state()
    x, _, _ = alice_condition_batch(s, 0.0, 1_000_000, stream(21))
    edges = np.linspace(-4, 4, 65)
    counts, _ = np.histogram(x, edges)
    fine = np.linspace(-4, 4, 64 * 50 + 1)
    dens = alice_marginal(s, fine)
    cell = np.array([np.trapezoid(dens[i * 50:(i + 1) * 50 + 1], fine[i * 50:(i + 1) * 50 + 1]) for i in range(64)])
    expected = cell / cell.sum() * counts.sum()
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert stats.chi2.sf(chi2, 63) > 1e-3


def test_marginal_analytic_form():
    s = make_state()
    x = np.linspace(-3, 3, 7)
    pa = np.real(np.diag(s.alice()))
    psi = fock.number_wavefunctions(3, x)
    assert np.allclose(alice_marginal(s, x), pa @ psi**2, atol=1e-14)


def test_decomposition_identity():
    s = make_state()
    x = np.linspace(-9, 9, 20001)
    sigma, p = bob_conditional(s, x, 0.3)
    avg = np.trapezoid(p[:, None, None] * sigma, x, axis=0)
    assert fock.trace_distance(avg, s.bob().micro) < 1e-3


@given(st.floats(-4, 4))
def test_orthogonal_quadrature_mean_zero(x):
    # Bob's in-phase quadrature <X> = sqrt(2) Re(rho_01) vanishes for theta_A = pi/2
    for params in (IDEAL, ImperfectionParams()):
        sigma, _ = bob_conditional(make_state(params), x, math.pi / 2)
        xop = fock.quadrature_operator(3, 0.0)
        assert abs(np.trace(sigma @ xop).real) < 1e-9


def test_alice_condition_outcome():
    out = alice_condition(make_state(alpha=2e3), 0.0, stream(3))
    assert np.trace(out.bob.micro).real == pytest.approx(1.0)
    assert out.weight >= 0
    assert out.bob.alpha == 2e3
    again = alice_condition(make_state(alpha=2e3), 0.0, stream(3))
    assert out.x_a == again.x_a
