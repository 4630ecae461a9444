from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamloop import toric
from hamloop.errors import InvalidParameters

F = Fraction


def trap(k, tau, mu):
    return toric.DelzantTrapezoid(k, F(tau), F(mu))


@st.composite
def trapezoids(draw):
    k = draw(st.integers(1, 5))
    mu = F(draw(st.integers(1, 40)), draw(st.integers(1, 12)))
    lam = F(draw(st.integers(1, 40)), draw(st.integers(1, 12)))
    return toric.DelzantTrapezoid(k, k * mu + lam, mu)


def test_area_and_first_moment():
    t = trap(1, 3, 1)
    assert toric.integrate_monomial(t, 0, 0) == F(5, 2)
    assert toric.integrate_monomial(t, 0, 1) == F(7, 6)


def test_manifold_polytope_factor_matches_stated_integrals():
    # int_M omega^2 = mu (2 tau - k mu) and int_M pi rho_1^2 omega^2 = (mu^2 / 3)(3 tau - 2 k mu)
    for k, tau, mu in [(1, 3, 1), (2, 5, 1), (3, F(17, 2), F(3, 2))]:
        t = trap(k, tau, mu)
        tau, mu = F(tau), F(mu)
        factor = toric.MANIFOLD_POLYTOPE_FACTOR
        assert factor * toric.area(t) == mu * (2 * tau - k * mu)
        assert factor * toric.integrate_monomial(t, 0, 1) == mu**2 / 3 * (3 * tau - 2 * k * mu)


def test_kappa_values():
    t = trap(1, 3, 1)
    assert toric.kappa(t) == F(7, 15)
    assert toric.kappa_tilde(t) == F(19, 15)
    assert toric.kappa_from_moments(t) == F(7, 15)
    assert toric.kappa_tilde_from_moments(t) == F(19, 15)


@pytest.mark.parametrize("params, i_psi, i_tilde", [
    ((1, 3, 1), F(8, 15), F(-4, 15)),
    ((2, 5, 1), F(7, 6), F(-7, 6)),
])
def test_closed_form_invariants(params, i_psi, i_tilde):
    assert toric.closed_form_invariants(trap(*params)) == (i_psi, i_tilde)


def test_boundary_terms_131():
    t = trap(1, 3, 1)
    assert toric.boundary_terms(t) == (F(14, 5), F(-1, 15), F(-32, 15), F(-1, 15))
    assert toric.boundary_terms_tilde(t) == (F(-7, 5), F(38, 15), F(16, 15), F(-37, 15))


def test_chern_number():
    assert toric.chern_number(trap(1, 3, 1)) == 7
    assert toric.chern_number(trap(2, 5, 1)) == 10


@settings(max_examples=200, deadline=None)
@given(trapezoids())
def test_ratio_is_minus_half_k(t):
    i_psi, i_tilde = toric.closed_form_invariants(t)
    assert i_tilde / i_psi == F(-t.k, 2)


@settings(max_examples=200, deadline=None)
@given(trapezoids())
def test_boundary_terms_sum_to_invariants(t):
    i_psi, i_tilde = toric.closed_form_invariants(t)
    assert sum(toric.boundary_terms(t)) == i_psi
    assert sum(toric.boundary_terms_tilde(t)) == i_tilde


@settings(max_examples=200, deadline=None)
@given(trapezoids())
def test_kappa_formula_equals_moment_ratio(t):
    assert toric.kappa(t) == toric.kappa_from_moments(t)
    assert toric.kappa_tilde(t) == toric.kappa_tilde_from_moments(t)


@settings(max_examples=100, deadline=None)
@given(trapezoids(), st.integers(0, 4), st.integers(0, 4))
def test_monomial_matches_sliced_sum(t, a, b):
    """Against the y-integral of (tau - k y)^(a+1) y^b / (a+1) done by polynomial algebra."""
    poly = np.polynomial.Polynomial
    # Fraction coefficients give an object array, so the algebra stays exact
    inner = poly(np.array([t.tau, F(-t.k)], dtype=object)) ** (a + 1)
    expected = sum(c * t.mu ** (j + b + 1) / (j + b + 1) for j, c in enumerate(inner.coef))
    assert toric.integrate_monomial(t, a, b) == expected / (a + 1)


@pytest.mark.parametrize("a, b", [(0, 0), (0, 1), (1, 0), (2, 1), (1, 3)])
def test_monomial_against_monte_carlo(a, b):
    t = trap(2, F(7, 2), F(3, 2))
    rng = np.random.default_rng(99)
    count = 1_000_000
    x = rng.uniform(0, float(t.tau), count)
    y = rng.uniform(0, float(t.mu), count)
    inside = x <= float(t.tau) - t.k * y
    box = float(t.tau * t.mu)
    vals = np.where(inside, x**a * y**b, 0.0) * box
    est, se = vals.mean(), vals.std(ddof=1) / np.sqrt(count)
    assert abs(est - float(toric.integrate_monomial(t, a, b))) < 3 * se


def test_kappa_tends_to_half_mu_on_long_strips():
    mu = F(2)
    gaps = [abs(toric.kappa(trap(1, mu + lam, mu)) - mu / 2) for lam in (10, 100, 1000, 10000)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < F(1, 10000)


@pytest.mark.parametrize("k, tau, mu", [
    (1, 1, 1),       # k mu = tau
    (2, 3, 2),       # k mu > tau
    (0, 3, 1),       # k must be positive
    (1, 3, 0),       # degenerate height
    (1, -3, 1),
    (1.0, 3, 1),
])
def test_invalid_trapezoids(k, tau, mu):
    with pytest.raises(InvalidParameters):
        toric.DelzantTrapezoid(k, tau, mu)


def test_rejects_floats_and_garbage():
    with pytest.raises(InvalidParameters):
        toric.DelzantTrapezoid(1, 3.0, 1)
    with pytest.raises(InvalidParameters):
        toric.DelzantTrapezoid(1, "three", 1)
    with pytest.raises(InvalidParameters):
        toric.integrate_monomial(trap(1, 3, 1), -1, 0)


def test_string_rationals_are_accepted():
    t = toric.DelzantTrapezoid(1, "7/2", "1/2")
    assert (t.tau, t.mu, t.lam) == (F(7, 2), F(1, 2), F(3))
    assert t.contains(F(3), F(1, 2)) and not t.contains(F(7, 2), F(1, 2))
