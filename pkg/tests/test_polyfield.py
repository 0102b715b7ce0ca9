import math
import random
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowuplab import polyfield as P
from blowuplab.errors import ArgumentError

PI3 = math.pi ** 3
x = [P.MultiPoly7.coordinate(i) for i in range(7)]
R2 = P.MultiPoly7.norm_sq()

exponents = st.lists(st.integers(0, 6), min_size=7, max_size=7).map(tuple)


def gamma_sphere(alpha):
    """Classical closed form 2 prod Gamma((a_i+1)/2) / Gamma((|a|+7)/2), divided by pi^3."""
    if any(a % 2 for a in alpha):
        return mpmath.mpf(0)
    with mpmath.workdps(40):
        num = 2 * mpmath.fprod(mpmath.gamma(mpmath.mpf(a + 1) / 2) for a in alpha)
        return num / mpmath.gamma(mpmath.mpf(sum(alpha) + 7) / 2) / mpmath.pi ** 3


@st.composite
def polys(draw, max_degree=4, n_terms=5):
    seed = draw(st.integers(0, 10 ** 6))
    return P.random_poly(random.Random(seed), max_degree, n_terms)


@st.composite
def pairs(draw, max_degree=4, n_terms=4):
    seed = draw(st.integers(0, 10 ** 6))
    return P.random_pair(random.Random(seed), max_degree, n_terms)


# -- monomial integrals -----------------------------------------------------------

def test_volume_and_area():
    assert P.monomial_integral_ball((0,) * 7).q == Fraction(16, 105)
    assert P.monomial_integral_sphere((0,) * 7).q == Fraction(16, 15)
    assert P.monomial_integral_ball((2, 0, 0, 0, 0, 0, 0)).q == Fraction(16, 945)


def test_odd_exponent_vanishes():
    assert P.monomial_integral_ball((1, 2, 0, 0, 0, 0, 0)).q == 0
    assert P.monomial_integral_sphere((0, 0, 0, 0, 0, 0, 3)).q == 0


def test_volume_monte_carlo():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(2_000_000, 7))
    vol = 2 ** 7 * np.mean(np.sum(pts ** 2, axis=1) <= 1)
    assert abs(vol / float(P.monomial_integral_ball((0,) * 7)) - 1) < 1e-2


def test_sphere_monomial_monte_carlo():
    rng = np.random.default_rng(2)
    g = rng.standard_normal((2_000_000, 7))
    w = g / np.linalg.norm(g, axis=1, keepdims=True)
    alpha = (2, 2, 0, 4, 0, 0, 0)
    est = np.mean(np.prod(w ** np.array(alpha), axis=1)) * float(P.monomial_integral_sphere((0,) * 7))
    assert abs(est / float(P.monomial_integral_sphere(alpha)) - 1) < 2e-2


@given(exponents)
def test_sphere_integral_matches_gamma_formula(alpha):
    got = P.monomial_integral_sphere(alpha).q
    with mpmath.workdps(40):
        ref = gamma_sphere(alpha)
        assert abs(mpmath.mpf(got.numerator) / got.denominator - ref) <= mpmath.mpf(10) ** -30


@given(exponents)
def test_ball_is_radial_integral_of_sphere(alpha):
    assert (P.monomial_integral_ball(alpha).q
            == P.monomial_integral_sphere(alpha).q / (sum(alpha) + 7))


def test_bad_exponent():
    with pytest.raises(ArgumentError):
        P.monomial_integral_ball((1, 2, 3))
    with pytest.raises(ArgumentError):
        P.monomial_integral_sphere((0, 0, 0, 0, 0, 0, -1))


@settings(max_examples=30)
@given(polys())
def test_divergence_theorem_laplacian(p):
    # int_B lap p = int_S d_r p = int_S xi . grad p
    assert P.integrate_ball(p.laplacian()) == P.integrate_sphere(p.euler())


@settings(max_examples=30)
@given(polys())
def test_divergence_theorem_euler(p):
    # div(xi p) = 7 p + xi . grad p and xi . n = 1 on the sphere
    assert P.integrate_ball(p.euler() + p * 7) == P.integrate_sphere(p)


def test_exactness_type():
    v = P.integrate_ball(R2 * R2 + x[0] * 3)
    assert isinstance(v.q, Fraction)
    assert v.q == Fraction(16, 105) * Fraction(7, 11)


# -- polynomial algebra ---------------------------------------------------------------

def test_no_stored_zeros():
    p = x[0] - x[0] + P.MultiPoly7.constant(0)
    assert p.is_zero() and p.terms == {}
    q = P.MultiPoly7({(1, 0, 0, 0, 0, 0, 0): 0, (0,) * 7: 2})
    assert list(q.terms) == [(0,) * 7]


def test_laplacian_and_euler():
    assert R2.laplacian() == P.MultiPoly7.constant(14)
    assert R2.euler() == R2 * 2
    assert (x[0] * x[0] * x[1]).diff(0) == x[0] * x[1] * 2


@given(polys(), polys())
def test_leibniz(p, q):
    for i in (0, 3):
        assert (p * q).diff(i) == p.diff(i) * q + p * q.diff(i)


# -- forms -----------------------------------------------------------------------------

ONE0 = P.PairField.of(1, 0)
ZERO1 = P.PairField.of(0, 1)


def test_inner_H_examples():
    assert P.inner_H(ONE0, ONE0).q == Fraction(16, 15)
    assert P.inner_H(ZERO1, ZERO1).q == Fraction(16, 15)
    assert P.inner_H(ONE0, ZERO1).q == 0


def test_inner_H_linear_field():
    # u = (xi_1, 0): only the sphere traces |grad u1|^2 and |u1|^2 survive
    u = P.PairField.of(x[0], 0)
    assert P.inner_H(u, u).q == Fraction(16, 15) + Fraction(16, 105)


@settings(max_examples=20)
@given(pairs(), pairs(), pairs())
def test_bilinearity(u, w, v):
    assert P.inner_H(u + w, v) == P.inner_H(u, v) + P.inner_H(w, v)
    assert P.inner_H(u, v) == P.inner_H(v, u)
    assert P.inner_H(u * 3, v) == P.inner_H(u, v) * 3


@settings(max_examples=20)
@given(pairs())
def test_inner_H_positive(u):
    if not u.is_zero():
        assert P.inner_H(u, u) > 0


def test_sobolev_examples():
    assert P.sobolev_norm_sq(ONE0).q == Fraction(16, 105)
    assert P.sobolev_norm_sq(P.PairField.of(x[0], 0)).q == Fraction(16, 945) + Fraction(16, 105)


@settings(max_examples=20)
@given(pairs(), st.integers(-7, 7))
def test_sobolev_scaling(u, c):
    assert P.sobolev_norm_sq(u * c) == P.sobolev_norm_sq(u) * (c * c)


def test_ltilde_examples():
    assert P.apply_Ltilde(ONE0) == P.PairField.of(-1, 0)
    assert P.apply_Ltilde(ZERO1) == P.PairField.of(1, -2)
    assert P.apply_Ltilde(P.PairField.of(R2, 0)) == P.PairField.of(R2 * -3, 14)


def test_margin_examples():
    assert P.dissipativity_margin(ONE0).q == Fraction(-8, 15)
    assert P.dissipativity_margin(P.PairField.of(0, 0)).q == 0
    # L(xi_1, 0) = (-2 xi_1, 0), so the margin is -3/2 (u|u)_H
    assert P.dissipativity_margin(P.PairField.of(x[0], 0)).q == Fraction(-3, 2) * Fraction(128, 105)


@settings(max_examples=25)
@given(pairs(max_degree=5))
def test_dissipativity_property(u):
    assert P.dissipativity_margin(u) <= 0


def test_dissipativity_sweep_200():
    rows = P.dissipativity_sweep(200, seed=0, max_degree=6)
    assert len(rows) == 202
    assert all(Fraction(r.margin_numerator, r.margin_denominator) <= 0 for r in rows)
    assert max(r.degree for r in rows) == 6
    assert P.dissipativity_sweep(5, seed=3) == P.dissipativity_sweep(5, seed=3)


def test_equivalence_examples():
    for u in (ONE0, ZERO1):
        h, s = P.equivalence_sample(u)
        assert (h.q, s.q) == (Fraction(16, 15), Fraction(16, 105))
        assert h / s == 7


def test_equivalence_zero_field():
    with pytest.raises(ArgumentError):
        P.equivalence_sample(P.PairField.of(0, 0))


def test_equivalence_bounds_sweep():
    rows = P.dissipativity_sweep(500, seed=11, max_degree=6, include_corners=False)
    lo, hi = P.equivalence_bounds(rows)
    assert 0 < lo <= hi < math.inf
    assert all(lo <= r.ratio <= hi for r in rows)


def test_exact_scalar_arithmetic():
    a = P.ExactScalar(Fraction(1, 3))
    assert float(a) == pytest.approx(PI3 / 3, rel=1e-15)
    assert (a + 0).q == Fraction(1, 3)
    with pytest.raises(TypeError):
        a * a
    with pytest.raises(TypeError):
        a + 1
