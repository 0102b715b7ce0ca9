import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from blowuplab import profiles as P
from blowuplab.errors import AdmissibilityError, ArgumentError, DomainError

from conftest import ball_points, random_boost

E1 = np.eye(7)[0]


def boost_strategy(max_norm=0.19):
    vec = st.lists(st.floats(-1, 1), min_size=7, max_size=7).filter(
        lambda v: np.linalg.norm(v) > 1e-6)
    return st.tuples(vec, st.floats(0, max_norm)).map(
        lambda t: tuple(t[1] * np.asarray(t[0]) / np.linalg.norm(t[0])))


# -- boosts -------------------------------------------------------------------

def test_identity_boost():
    c = P.boost_coeffs(np.zeros(7))
    assert c.A0 == 1.0
    assert np.all(c.A == 0.0)


def test_single_direction_boost():
    s = 0.13
    c = P.boost_coeffs([s, 0, 0, 0, 0, 0, 0])
    assert c.A0 == pytest.approx(math.cosh(s), abs=1e-15)
    assert c.A[0] == pytest.approx(math.sinh(s), abs=1e-15)
    assert np.all(c.A[1:] == 0.0)


@given(boost_strategy())
def test_boost_hyperbolic_identity(a):
    c = P.boost_coeffs(a)
    assert c.A0 >= 1.0
    assert abs(c.A0 ** 2 - np.sum(c.A ** 2) - 1.0) <= 1e-14 * c.A0 ** 2


def test_boost_identity_100_random():
    for k in range(100):
        c = P.boost_coeffs(random_boost(k, 0.05 + 0.14 * (k % 10) / 10))
        assert abs(c.A0 ** 2 - np.sum(c.A ** 2) - 1.0) <= 1e-14


def test_boost_cascade_matches_direct_product():
    a = random_boost(3)
    c = P.boost_coeffs(a)
    for k in range(7):
        assert c.A[k] == pytest.approx(math.sinh(a[k]) * np.prod(np.cosh(a[k + 1:])), rel=1e-14)


def test_inadmissible_boost_rejected():
    with pytest.raises(AdmissibilityError):
        P.BoostParams((0.3, 0, 0, 0, 0, 0, 0))
    with pytest.raises(ArgumentError):
        P.BoostParams((0.1, 0.0))


def test_gamma_examples():
    xi = np.array([0.3, -0.2, 0.1, 0.0, 0.5, 0.1, -0.4])
    assert P.gamma(xi, None) == 1.0
    a = random_boost(5)
    assert P.gamma(np.zeros(7), a) == pytest.approx(P.boost_coeffs(a).A0, abs=0)
    s = 0.17
    assert P.gamma(E1, [s, 0, 0, 0, 0, 0, 0]) == pytest.approx(math.exp(-s), rel=1e-14)


# -- profiles -----------------------------------------------------------------

def test_profile_U_examples():
    assert P.profile_U(0.0, 7) == 4.0
    assert P.profile_U(1.0, 7) == 2.0
    assert P.profile_U(0.0, 5) == pytest.approx(4 * math.sqrt(2), rel=1e-15)
    with pytest.raises(DomainError):
        P.profile_U(0.5, 4)


def test_psi_star_examples():
    xi = ball_points(50, seed=1)
    np.testing.assert_allclose(P.profile_psi_star(xi), P.profile_U(np.linalg.norm(xi, axis=1)),
                               rtol=1e-15)
    assert P.profile_psi_star(np.zeros(7)) == 4.0
    # frozen from a 20-digit sympy evaluation of 4 cosh s / (2 cosh^2 s - 1), s = 1/10
    assert P.profile_psi_star(np.zeros(7), [0.1, 0, 0, 0, 0, 0, 0]) == pytest.approx(
        3.9409348947789959009, rel=1e-15)


def test_blowup_solution_examples():
    assert P.blowup_solution(0.0, np.zeros(7)) == 4.0
    assert P.blowup_solution(0.5, np.zeros(7)) == 8.0
    assert P.ode_blowup(0.0, 1.0) == pytest.approx(math.sqrt(2), abs=0)
    with pytest.raises(DomainError):
        P.blowup_solution(0.5, 0.6 * E1)
    with pytest.raises(DomainError):
        P.blowup_solution(1.0, np.zeros(7))


def test_static_pair_examples():
    assert P.static_pair(np.zeros(7)) == pytest.approx((4.0, 4.0), abs=1e-15)
    v, w = P.static_pair(E1)
    assert v == pytest.approx(2.0, abs=1e-15)
    assert w == pytest.approx(0.0, abs=1e-15)


def test_potential_examples():
    assert P.potential_V(np.zeros(7)) == pytest.approx(48.0, abs=0)
    assert P.potential_V(E1) == pytest.approx(12.0, abs=1e-14)
    xi = ball_points(40, seed=2)
    r = np.linalg.norm(xi, axis=1)
    np.testing.assert_allclose(P.potential_V(xi), 48 / (1 + r * r) ** 2, rtol=1e-14)


# -- the similarity equation -------------------------------------------------

def test_profile_residual_zero_boost(sample_ball):
    jet = P.psi_star_jet(sample_ball)
    assert np.max(np.abs(P.similarity_residual(jet, sample_ball))) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_profile_residual_boosted(sample_ball, seed):
    a = random_boost(100 + seed)
    jet = P.psi_star_jet(sample_ball, a)
    assert np.max(np.abs(P.similarity_residual(jet, sample_ball))) <= 1e-10


def test_ode_profile_residual(sample_ball):
    jet = P.Jet.const(math.sqrt(2), len(sample_ball))
    assert np.max(np.abs(P.similarity_residual(jet, sample_ball))) <= 1e-14


def test_jet_derivatives_against_finite_differences():
    x = ball_points(5, seed=4, radius=0.9)
    a = random_boost(9)
    jet = P.psi_star_jet(x, a)
    h = 1e-5
    for i in range(7):
        e = np.zeros(7)
        e[i] = h
        fd = (P.profile_psi_star(x + e, a) - P.profile_psi_star(x - e, a)) / (2 * h)
        np.testing.assert_allclose(jet.g[:, i], fd, atol=1e-8)
        hp = P.psi_star_jet(x + e, a).g
        hm = P.psi_star_jet(x - e, a).g
        np.testing.assert_allclose(jet.h[:, i, :], (hp - hm) / (2 * h), atol=1e-7)


# -- eigenfunctions -----------------------------------------------------------

def test_eigenfunction_examples():
    assert P.eigenfunction_h(np.zeros(7)) == pytest.approx((1.0, 4.0), abs=1e-15)
    assert P.eigenfunction_g(0, np.zeros(7)) == pytest.approx((1.0, 2.0), abs=1e-15)
    q1, _ = P.eigenfunction_q(1, E1 / 2)
    assert q1 == pytest.approx(22 / 25, abs=1e-15)
    with pytest.raises(ArgumentError):
        P.eigenfunction_q(0, E1)
    with pytest.raises(ArgumentError):
        P.eigenfunction_g(8, E1)


def _sympy_pairs():
    """Closed forms at a = 0 with second components derived symbolically."""
    xs = sp.symbols("x1:8")
    r2 = sum(v * v for v in xs)
    firsts = {
        ("h", None, 3): 1 / (1 + r2) ** 2,
        ("g", 0, 1): (1 - r2) / (1 + r2) ** 2,
        ("g", 3, 1): xs[2] / (1 + r2) ** 2,
        ("q", 2, 0): xs[1] * (3 - r2) / (1 + r2) ** 2,
    }
    out = {}
    for key, u in firsts.items():
        lam = key[2]
        second = sum(v * sp.diff(u, v) for v in xs) + (lam + 1) * u
        out[key] = (sp.lambdify(xs, u), sp.lambdify(xs, sp.simplify(second)))
    return out


def test_eigen_pairs_match_symbolic_closed_forms():
    x = ball_points(200, seed=11)
    forms = _sympy_pairs()
    calls = {("h", None, 3): lambda p: P.eigenfunction_h(p),
             ("g", 0, 1): lambda p: P.eigenfunction_g(0, p),
             ("g", 3, 1): lambda p: P.eigenfunction_g(3, p),
             ("q", 2, 0): lambda p: P.eigenfunction_q(2, p)}
    for key, (f1, f2) in forms.items():
        u1, u2 = calls[key](x)
        np.testing.assert_allclose(u1, f1(*x.T), atol=1e-14)
        np.testing.assert_allclose(u2, f2(*x.T), atol=1e-12)


def test_unstable_second_component_closed_form():
    x = ball_points(100, seed=12)
    r2 = np.sum(x * x, axis=1)
    _, h2 = P.eigenfunction_h(x)
    np.testing.assert_allclose(h2, 4 / (1 + r2) ** 3, atol=1e-13)


@pytest.mark.parametrize("seed", range(3))
def test_eigen_pair_identity_boosted(seed):
    # second component against a finite-difference radial derivative of the first
    a = random_boost(200 + seed)
    x = ball_points(100, seed=seed, radius=0.95)
    h = 1e-4
    cases = [(lambda p: P.eigenfunction_h(p, a), 3.0),
             (lambda p: P.eigenfunction_g(2, p, a), 1.0),
             (lambda p: P.eigenfunction_q(4, p, a), 0.0)]
    for f, lam in cases:
        u1, u2 = f(x)
        rad = (f(x * (1 + h))[0] - f(x * (1 - h))[0]) / (2 * h)
        np.testing.assert_allclose(u2, rad + (lam + 1) * u1, atol=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_boosted_eigenfunctions_solve_spectral_equation(seed):
    a = random_boost(300 + seed)
    x = ball_points(500, seed=seed)
    for jet, lam in [(P.h_jet(x, a), 3.0), (P.q_jet(5, x, a), 0.0)] + [
            (P.g_jet(k, x, a), 1.0) for k in range(8)]:
        assert np.max(np.abs(P.eigen_residual(jet, x, lam, a))) <= 1e-10


def _fd_eigen_residual(f, x, lam, a, h=1e-3):
    """Spectral-equation residual with a finite-difference Hessian (an independent route)."""
    m = len(x)
    u = f(x)
    H = np.zeros((m, 7, 7))
    G = np.zeros((m, 7))
    for i in range(7):
        ei = np.zeros(7)
        ei[i] = h
        G[:, i] = (f(x + ei) - f(x - ei)) / (2 * h)
        for j in range(7):
            ej = np.zeros(7)
            ej[j] = h
            H[:, i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    lap = np.trace(H, axis1=1, axis2=2)
    xx = np.einsum("mi,mij,mj->m", x, H, x)
    rad = np.einsum("mi,mi->m", x, G)
    V = P.potential_V(x, a)
    return lap - xx - 2 * (lam + 2) * rad - (lam + 1) * (lam + 2) * u + V * u


def test_literal_boosted_translation_modes_are_not_eigenfunctions():
    # The literal boosted lambda = 1 forms agree with the symmetry modes at a = 0
    # (up to a factor 2 when k >= 1) but fail the spectral equation once a != 0.
    x = ball_points(30, seed=21, radius=0.8)
    np.testing.assert_allclose(P.g_literal_boosted(0, x), P.eigenfunction_g(0, x)[0], atol=1e-14)
    np.testing.assert_allclose(P.g_literal_boosted(2, x), 2 * P.eigenfunction_g(2, x)[0], atol=1e-14)
    a = random_boost(42, 0.15)
    good = _fd_eigen_residual(lambda p: P.eigenfunction_g(0, p, a)[0], x, 1.0, a)
    assert np.max(np.abs(good)) < 1e-3
    for k in (0, 2):
        bad = _fd_eigen_residual(lambda p: P.g_literal_boosted(k, p, a), x, 1.0, a)
        assert np.max(np.abs(bad)) > 1e-2


def test_boost_derivative_gives_q_at_second_order():
    x = ball_points(60, seed=31, radius=0.9)
    a0 = random_boost(50, 0.1)
    j = 3
    q1, q2 = P.eigenfunction_q(j, x, a0)
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        ap, am = a0.copy(), a0.copy()
        ap[j - 1] += h
        am[j - 1] -= h
        d1 = (P.profile_psi_star(x, ap) - P.profile_psi_star(x, am)) / (2 * h)
        sp_, sm_ = P.static_pair(x, ap), P.static_pair(x, am)
        d2 = (sp_[1] - sm_[1]) / (2 * h)
        errs.append(max(np.max(np.abs(d1 / 4 - q1)), np.max(np.abs(d2 / 4 - q2))))
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert all(abs(o - 2) < 0.1 for o in orders), orders


# -- radial eigenfunctions and data --------------------------------------------

def test_radial_eigenfunction_examples():
    assert P.radial_eigenfunction(0, 1, 1.0) == 0.0
    assert P.radial_eigenfunction(0, 3, 0.0) == 1.0
    assert P.radial_eigenfunction(1, 0, 1.0) == pytest.approx(0.5, abs=0)
    with pytest.raises(ArgumentError):
        P.radial_eigenfunction(2, 1, 0.5)


@pytest.mark.parametrize("key", [(0, 1), (0, 3), (1, 0), (1, 1)])
def test_radial_eigenfunction_derivatives_symbolic(key):
    r = sp.symbols("r")
    forms = {(0, 1): (1 - r ** 2) / (1 + r ** 2) ** 2, (0, 3): 1 / (1 + r ** 2) ** 2,
             (1, 0): (3 * r - r ** 3) / (1 + r ** 2) ** 2, (1, 1): r / (1 + r ** 2) ** 2}
    f = forms[key]
    rho = np.linspace(0, 1, 41)
    for k in range(3):
        ref = sp.lambdify(r, sp.diff(f, r, k))(rho)
        np.testing.assert_allclose(P.radial_eigenfunction(*key, rho, deriv=k), ref, atol=1e-13)


def test_unstable_data_examples():
    assert P.unstable_data_h(np.zeros(7)) == pytest.approx((1.0, 4.0), abs=0)
    assert P.unstable_data_h(E1) == pytest.approx((0.25, 0.5), abs=1e-16)
    x = ball_points(30, seed=3, radius=2.0)
    np.testing.assert_allclose(P.unstable_data_h(x)[0], P.eigenfunction_h(x)[0], rtol=1e-14)
