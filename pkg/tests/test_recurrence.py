from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowuplab import recurrence as R
from blowuplab.errors import ArgumentError, DegenerateRatioError

G, Z, S = "GenericEll", "EllZero", "SusyEllOne"


# -- independent exact oracles -------------------------------------------------

def fr_A(n, l, lam):
    num = 12 * n * n + 4 * (3 * l + 2 * lam + 12) * n + lam * lam + 2 * (2 * l + 9) * lam \
        + 3 * (l * l + 8 * l - 1)
    return Fr(num) / (4 * (2 * n + 2 * l + 9) * (n + 2))


def fr_B(n, l, lam):
    return Fr(-(l + lam + 2 * n + 7) * (l + lam + 2 * n - 3)) / (4 * (2 * n + 2 * l + 9) * (n + 2))


def fr_series(l, lam, N):
    """a_{n+1} = A_n a_n + B_n a_{n-1}, a_{-1} = 0, a_0 = 1, in exact arithmetic."""
    a = [Fr(0), Fr(1)]
    for n in range(-1, N - 1):
        a.append(fr_A(n, l, lam) * a[-1] + (fr_B(n, l, lam) * a[-2] if n >= 0 else 0))
    return a[1:]


def fr_rt(n, l, lam):
    return (Fr(lam * lam, 4 * (n + 1) * (2 * n + 2 * l + 7))
            + Fr((4 * n + 2 * l + 5) * lam, 2 * (n + 1) * (2 * n + 2 * l + 7))
            + Fr(n - 1, n + 1) + Fr(3 * l, 8 * (n + 1)))


# -- coefficients ---------------------------------------------------------------

def test_coef_examples():
    assert R.coef_A(0, 1, 0) == pytest.approx(3 / 11, abs=1e-16)
    assert R.coef_B(0, 1, 0) == pytest.approx(2 / 11, abs=1e-16)
    assert R.coef_A(10 ** 6, 3, 2 + 1j) == pytest.approx(1.5, abs=1e-5)
    assert R.coef_B(10 ** 6, 3, 2 + 1j) == pytest.approx(-0.5, abs=1e-5)


@given(st.integers(0, 30), st.complex_numbers(max_magnitude=50))
def test_coef_A_initial_condition(ell, lam):
    ref = (lam * lam + 2 * (2 * ell + 5) * lam + 3 * (ell * ell + 4 * ell - 13)) / (4 * (2 * ell + 7))
    assert R.coef_A(-1, ell, lam) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_susy_coefficient_examples():
    assert R.seed(S, None, 0.0) == (0, pytest.approx(12 / 13, abs=1e-16))
    lam = 1.7 - 0.4j
    assert R.seed(S, None, lam)[1] == pytest.approx(lam ** 2 / 52 + 11 * lam / 26 + 12 / 13)
    assert R.susy_coef_B(0, 0.0) == pytest.approx(-1 / 5, abs=1e-16)
    assert R.susy_coef_A(10 ** 6, 1j) == pytest.approx(1.5, abs=1e-5)
    assert R.susy_coef_B(10 ** 6, 1j) == pytest.approx(-0.5, abs=1e-5)


# -- series coefficients ------------------------------------------------------------

def test_polynomial_eigenfunctions_terminate():
    a3 = R.series_coeffs(Z, 0, 3.0, 40).values()
    assert a3[0] == 1.0 and np.max(np.abs(a3[1:])) <= 1e-13
    a1 = R.series_coeffs(Z, 0, 1.0, 40).values()
    assert a1[1] == pytest.approx(-1.0, abs=1e-13)
    assert np.max(np.abs(a1[2:])) <= 1e-13
    g = R.series_coeffs(G, 1, 0.0, 40).values()
    assert g[1] == pytest.approx(-2 / 3, abs=1e-13)
    assert np.max(np.abs(g[2:])) <= 1e-13
    assert R.eventually_zero(a1) and R.eventually_zero(g)


@pytest.mark.parametrize("ell,lam", [(0, Fr(2)), (2, Fr(1, 3)), (5, Fr(7, 2)), (1, Fr(0))])
def test_series_matches_exact_oracle(ell, lam):
    ref = np.array([float(x) for x in fr_series(ell, lam, 30)])
    got = R.series_coeffs(G, ell, float(lam), len(ref) - 1).values()
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)


def test_series_rescaling_keeps_ratios():
    lam = 400.0 + 300j
    c = R.series_coeffs(G, 2, lam, 3000)
    assert np.any(c.exponent != 0)
    m = c.mantissa * np.exp2(c.exponent - c.exponent[-1].astype(float))
    r = R.ratio_seq(G, 2, lam, 3000)
    np.testing.assert_allclose(m[-200:][1:] / m[-200:][:-1], r[-200:][:-1], rtol=1e-10)


def test_ell0_closed_forms():
    assert R.series_coeffs_ell0_closed(2, 2.0) == pytest.approx(-101 / 672, rel=1e-15)
    assert R.series_coeffs_ell0_closed(2, 1.0) == 0.0
    assert R.series_coeffs_ell0_closed(2, 3.0) == 0.0
    with pytest.raises(ArgumentError):
        R.series_coeffs_ell0_closed(4, 1.0)
    rng = np.random.default_rng(0)
    grid = rng.uniform(0, 10, 100) + 1j * rng.uniform(-10, 10, 100)
    for lam in grid:
        a = R.series_coeffs(Z, 0, lam, 4).values()
        for n in (2, 3):
            assert abs(a[n] - R.series_coeffs_ell0_closed(n, lam)) <= 1e-12 * max(1, abs(a[n]))


def test_ell0_closed_form_a3_exact():
    for lam in (Fr(2), Fr(5, 7), Fr(-3, 2)):
        a = fr_series(0, lam, 4)
        assert float(a[3]) == pytest.approx(R.series_coeffs_ell0_closed(3, float(lam)), rel=1e-14)


# -- ratios ----------------------------------------------------------------------

def test_ratio_examples():
    assert R.ratio_seq(Z, 0, 0.0, 2)[2] == pytest.approx(4971 / 31020, rel=1e-15)
    assert R.ratio_seq(G, 2, 0.0, 0)[0] == pytest.approx(-3 / 44, rel=1e-15)
    # raw ell = 0 recurrence at a non-eigenvalue: r_n -> 1 like 1 - 1/n.
    # The 1e-3 level is reached near n = 1000, not n = 500; values frozen
    # from a 40-digit mpmath run of the same recursion.
    r = R.ratio_seq(G, 0, 2.0, 2000)
    assert 1 - r[500] == pytest.approx(0.0020019543354241578, rel=1e-9)
    assert 1 - r[1999] == pytest.approx(0.00050037453164756407, rel=1e-9)
    assert abs(r[2000] - 1) < 1e-3


def test_ratio_degenerate_raises():
    # A_{-1}(0, 3) = 0: the first ratio vanishes.
    with pytest.raises(DegenerateRatioError):
        R.ratio_seq(G, 0, 3.0, 5)


def test_bad_ell_rejected():
    with pytest.raises(ArgumentError):
        R.ratio_seq(Z, 2, 1.0, 5)
    with pytest.raises(ArgumentError):
        R.ratio_seq(G, -1, 1.0, 5)


@given(st.sampled_from([G, Z, S]), st.integers(2, 12),
       st.floats(0.0, 20.0), st.floats(-20.0, 20.0))
def test_ratio_series_consistency(kind, ell, re, im):
    ell = {G: ell, Z: 0, S: None}[kind]
    lam = complex(re, im)
    if kind == Z and min(abs(lam - 1), abs(lam - 3)) < 0.05:
        return
    N = 80
    a = R.series_coeffs(kind, ell, lam, N).values()
    r = R.ratio_seq(kind, ell, lam, N)
    n0 = R.seed(kind, ell, lam)[0]
    ok = np.abs(a[:-1]) > 1e-250
    idx = np.arange(N)[ok]
    idx = idx[idx >= n0]
    np.testing.assert_allclose(r[idx], a[idx + 1] / a[idx], rtol=1e-10)


# -- quasi-solutions and delta -----------------------------------------------------

def test_quasi_solution_examples():
    assert R.quasi_solution(G, 2, 3, 0.0) == pytest.approx(0.6875, abs=1e-16)
    assert R.quasi_solution(S, None, 0, 0.0) == pytest.approx(9 / 13, abs=1e-16)
    for kind, ell in ((G, 4), (Z, 0), (S, None)):
        assert abs(R.quasi_solution(kind, ell, 10 ** 6, 1j) - 1) < 1e-5
    with pytest.raises(ArgumentError):
        R.quasi_solution(G, 2, -1, 0.0)


@given(st.sampled_from([(G, 2), (G, 7), (Z, 0), (S, None)]),
       st.floats(0.0, 30.0), st.floats(-30.0, 30.0))
def test_delta_recursion_identity(kind_ell, re, im):
    kind, ell = kind_ell
    lam = complex(re, im)
    if kind == Z and min(abs(lam - 1), abs(lam - 3)) < 0.05:
        return
    st_ = R.delta_eps_C(kind, ell, lam, 300)
    n0 = R.seed(kind, ell, lam)[0]
    res = st_.recursion_residual()[n0:]
    assert np.max(np.abs(res)) <= 1e-10
    with np.errstate(divide="ignore", invalid="ignore"):
        np.testing.assert_allclose(st_.delta, st_.r / st_.rtilde - 1, rtol=0, atol=0)


def test_C_limit():
    for kind, ell in ((G, 3), (Z, 0), (S, None)):
        _, C = R.eps_C(kind, ell, 10 ** 5, 2 + 3j)
        assert abs(C + 0.5) < 1e-3


def test_susy_delta1_closed_form():
    lam = np.linspace(0, 8, 9) + 1j * np.linspace(-5, 5, 9)
    d1 = R.ratio_seq(S, None, lam, 1)[..., 1] / R.quasi_solution(S, None, 1, lam) - 1
    ref = 2 * (lam ** 3 + 12 * lam ** 2 + 140 * lam + 144) / (
        lam ** 4 + 50 * lam ** 3 + 752 * lam ** 2 + 3280 * lam + 4224)
    np.testing.assert_allclose(d1, ref, rtol=1e-12)
    np.testing.assert_allclose(R.appendix_closed_forms("susy_delta1", lam=lam), ref, rtol=1e-12)
    assert R.appendix_closed_forms("susy_delta1", lam=0.0) == pytest.approx(3 / 44, rel=1e-15)


# -- closed forms ----------------------------------------------------------------

def test_delta3_exact_oracle():
    a = fr_series(2, Fr(0), 5)
    d3 = (a[4] / a[3]) / fr_rt(3, 2, Fr(0)) - 1
    assert R.appendix_closed_forms("delta3", ell=2, lam=0.0) == pytest.approx(float(d3), rel=1e-10)
    st_ = R.delta_eps_C(G, 2, 0.0, 5)
    assert st_.delta[3] == pytest.approx(float(d3), rel=1e-10)


def test_susy_C_example():
    lam, n = 2 + 1j, 4
    ref = R.susy_coef_B(n, lam) / (R.quasi_solution(S, None, n, lam)
                                   * R.quasi_solution(S, None, n + 1, lam))
    assert R.appendix_closed_forms("susy_C", n=n, lam=lam) == pytest.approx(ref, rel=1e-12)


def test_delta5_value_at_zero():
    v = R.appendix_closed_forms("delta5", lam=0.0)
    assert v == pytest.approx(-2726072037 / 13392819504, rel=1e-14)
    assert abs(v) <= 1 / 3


def test_closed_forms_on_lambda_grid():
    rng = np.random.default_rng(1)
    lam = rng.uniform(0, 30, 100) + 1j * rng.uniform(-30, 30, 100)
    for ell in (2, 5, 11):
        for n in (3, 4, 9):
            eps, C = R.eps_C(G, ell, n, lam)
            np.testing.assert_allclose(R.appendix_closed_forms("C", n=n, ell=ell, lam=lam), C, rtol=1e-9)
            np.testing.assert_allclose(R.appendix_closed_forms("eps", n=n, ell=ell, lam=lam), eps,
                                       rtol=1e-9, atol=1e-14)
        d3 = R.ratio_seq(G, ell, lam, 3)[..., 3] / R.quasi_solution(G, ell, 3, lam) - 1
        np.testing.assert_allclose(R.appendix_closed_forms("delta3", ell=ell, lam=lam), d3, rtol=1e-9)
    d5 = R.ratio_seq(Z, 0, lam, 5)[..., 5] / R.quasi_solution(G, 0, 5, lam) - 1
    np.testing.assert_allclose(R.appendix_closed_forms("delta5", lam=lam), d5, rtol=1e-9)
    for n in (1, 2, 7):
        eps, C = R.eps_C(S, None, n, lam)
        np.testing.assert_allclose(R.appendix_closed_forms("susy_C", n=n, lam=lam), C, rtol=1e-9)
        np.testing.assert_allclose(R.appendix_closed_forms("susy_eps", n=n, lam=lam), eps,
                                   rtol=1e-9, atol=1e-14)


def test_closed_form_ranges_and_startup_checks():
    with pytest.raises(ArgumentError):
        R.appendix_closed_forms("C", n=2, ell=2, lam=0.0)
    with pytest.raises(ArgumentError):
        R.appendix_closed_forms("delta3", ell=1, lam=0.0)
    with pytest.raises(ArgumentError):
        R.appendix_closed_forms("susy_eps", n=0, lam=0.0)
    with pytest.raises(ArgumentError):
        R.appendix_closed_forms("nope")
    assert len(R.closed_form_table_checksum()) == 64
    assert R.validate_closed_forms()["ok"]


# -- bound verification ------------------------------------------------------------

def test_generic_bounds_on_imaginary_segment():
    lam = 1j * np.linspace(0, 50, 401)
    rep = R.verify_bounds(G, range(2, 21), lam)
    assert rep.ok, rep.violations[:3]
    d3 = [e for e in rep.entries if e.quantity == "delta_3"]
    assert len(d3) == 19 and all(e.value <= 1 / 3 for e in d3)


def test_ell0_bounds_and_exclusions():
    lam = np.concatenate([R.default_lambda_grid(10, 10, 0.5, 40, 0.5), [1.01, 0.99, 3.0]])
    rep = R.verify_bounds(Z, [0], lam)
    assert rep.ok
    assert [1.01, 0.0] in rep.excluded and [0.99, 0.0] in rep.excluded and [3.0, 0.0] in rep.excluded
    assert rep.n_points == lam.size - len(rep.excluded)
    js = rep.to_json()
    assert set(js["entries"][0]) == {"kind", "ell", "lambda_re", "lambda_im", "quantity", "value",
                                     "bound", "slack"}


def test_susy_bounds():
    rep = R.verify_bounds(S, None, R.default_lambda_grid(10, 10, 0.5, 40, 0.5))
    assert rep.ok


def test_C_bound_slack_example():
    _, C = R.eps_C(G, 2, 3, 10j)
    assert R.C_bound(G, 2, 3) - abs(C) >= 0


def test_violation_is_reported_not_raised():
    # A_{-1} and the quasi-solution disagree badly for small ell off the proven range.
    rep = R.verify_bounds(G, [0], 1j * np.linspace(0, 5, 11))
    assert not rep.ok and rep.violations
    assert all(v.slack < 0 for v in rep.violations)


def test_negative_real_part_rejected():
    with pytest.raises(ArgumentError):
        R.verify_bounds(G, [2], np.array([-1.0 + 0j]))


# -- sign and stability certificates ---------------------------------------------

@pytest.mark.parametrize("n,ell", [(0, 0), (5, 3), (20, 10)])
def test_q_polynomial_sign_examples(n, ell):
    assert R.q_polynomial_sign_check(n, ell)


def test_q_polynomial_is_exact_integer():
    assert all(isinstance(c, int) for c in R.q_polynomial(4, 7))


def test_routh_examples():
    assert R.routh_hurwitz_check([1, 1])
    assert not R.routh_hurwitz_check([-1, 1])
    p2 = R.P2_coeffs(3, 2)
    assert R.routh_hurwitz_check(p2)
    assert np.all(np.roots(p2[::-1]).real < 0)
    with pytest.raises(ArgumentError):
        R.routh_hurwitz_check([0, 0])


def test_routh_roots_on_axis():
    # (lambda^2 + 1)(lambda + 1) and lambda (lambda + 2) have roots on the axis
    assert not R.routh_hurwitz_check([1, 1, 1, 1])
    assert not R.routh_hurwitz_check([0, 2, 1])
    assert not R.routh_hurwitz_check([1.0, 1.0, 1.0, 1.0])
    # (lambda + 1)^2 (lambda^2 + 2 lambda + 5): repeated roots, all stable
    assert R.routh_hurwitz_check([5, 12, 10, 4, 1])


def test_routh_common_factor_off_axis():
    # roots 1 and -1 mirror across the axis, so Re p(iw) and Im p(iw) share w^2 + 1
    assert not R.routh_hurwitz_check([-2, -1, 2, 1])
    assert R.routh_hurwitz_numeric([-2, -1, 2, 1]) is False


@given(st.lists(st.integers(-9, 9), min_size=2, max_size=7).filter(lambda c: c[-1] != 0))
def test_routh_matches_roots_integer(coeffs):
    roots = np.roots(coeffs[::-1])
    if np.min(np.abs(roots.real)) < 1e-7:
        return
    assert R.routh_hurwitz_check(coeffs) == bool(np.all(roots.real < 0))


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=6))
def test_routh_matches_roots_complex(roots_):
    roots = np.array([complex(a, b) for a, b in roots_])
    if np.min(np.abs(roots.real)) < 1e-3:
        return
    coeffs = np.poly(roots)[::-1]
    assert R.routh_hurwitz_check(list(coeffs)) == bool(np.all(roots.real < 0))


def test_P2_stable_over_shifted_range():
    bad = [(n, l) for n in range(21) for l in range(21)
           if not R.routh_hurwitz_check(R.P2_coeffs(n + 3, l + 2))]
    assert bad == []
    assert all(R.routh_hurwitz_numeric(R.P2_coeffs(n + 3, l + 2))
               for n in range(0, 21, 5) for l in range(0, 21, 5))
