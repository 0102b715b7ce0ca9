"""Eigenvalue classification, Heun variables, Frobenius data and the singular ODE solves.

The radial spectral operator in channel ``ell`` is

    T_ell(lam) f = (1 - rho^2) f'' + [6/rho - 2(lam+2) rho] f'
                   - [(lam+1)(lam+2) + ell(ell+5)/rho^2 - 48/(1+rho^2)^2] f .

Eigenvalues are the ``lam`` in ``Re lam >= 0`` for which it has a solution
smooth on ``[0, 1]``; in the Heun variable this is the question whether the
Frobenius series at ``x = 0`` converges up to ``x = 2`` (ratio limit 1/2) or
only up to ``x = 1`` (ratio limit 1).
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate, stats

from . import profiles, recurrence
from .errors import (ArgumentError, DegenerateRatioError, DomainError, NumericalError,
                     UnsupportedError)
from .recurrence import ProblemKind

KNOWN_EIGENVALUES = ((0, 1.0), (0, 3.0), (1, 0.0), (1, 1.0))


# ---------------------------------------------------------------------------
# Operators.

def _derivs(f, rho):
    """Return ``(f, f', f'')`` at ``rho`` from a callable or a triple."""
    if callable(f):
        try:
            return f(rho, 0), f(rho, 1), f(rho, 2)
        except TypeError:
            raise ArgumentError("radial callables must accept (rho, deriv)") from None
    if len(f) != 3:
        raise ArgumentError("pass a callable f(rho, k) or a triple (f, f', f'')")
    return tuple(g(rho) if callable(g) else np.asarray(g) for g in f)


def _check_open(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any((rho <= 0) | (rho >= 1)):
        raise DomainError("rho must lie in the open interval (0, 1)")
    return rho


def apply_T(ell, lam, f, rho):
    """Apply ``T_ell(lam)`` to a radial function with two derivatives."""
    rho = _check_open(rho)
    f0, f1, f2 = _derivs(f, rho)
    pot = (lam + 1) * (lam + 2) + ell * (ell + 5) / rho ** 2 - 48.0 / (1 + rho ** 2) ** 2
    out = (1 - rho ** 2) * f2 + (6 / rho - 2 * (lam + 2) * rho) * f1 - pot * f0
    return out if np.ndim(out) else out[()]


def apply_T_susy(lam, f, rho):
    """Twice reduced ``ell = 1`` operator (eigenvalues 1 and 0 removed)."""
    rho = _check_open(rho)
    f0, f1, f2 = _derivs(f, rho)
    out = ((1 - rho ** 2) * f2 + (4 / rho - 2 * (lam + 1) * rho) * f1
           - lam * (lam + 1) * f0 - 4 * (rho ** 2 + 7) / (rho ** 2 * (1 + rho ** 2)) * f0)
    return out if np.ndim(out) else out[()]


# ---------------------------------------------------------------------------
# Heun variables.

@dataclass(frozen=True)
class HeunTransform:
    """Maps between ``rho`` and the Heun variable ``x`` with a prefactor ``P(x)``.

    ``f(rho) = P(x) y(x)`` where ``x = 2 rho^2 / (1 + rho^2)``, equivalently
    ``rho = sqrt(x / (2 - x))``.  The prefactor is ``x^p (2 - x)^q``.
    """

    p: float
    q: complex

    @staticmethod
    def rho_of_x(x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(x / (2 - x))

    @staticmethod
    def x_of_rho(rho):
        rho = np.asarray(rho, dtype=float)
        return 2 * rho ** 2 / (1 + rho ** 2)

    def prefactor(self, x):
        """``(P, P', P'')`` in ``x``."""
        x = np.asarray(x, dtype=float)
        P = x ** self.p * (2 - x) ** self.q
        L1 = self.p / x - self.q / (2 - x)
        L2 = -self.p / x ** 2 - self.q / (2 - x) ** 2
        return P, P * L1, P * (L1 * L1 + L2)

    def to_radial(self, y: Callable) -> Callable:
        """Turn ``y(x, k)`` (``k = 0, 1, 2``) into ``f(rho, k)``."""

        def f(rho, k):
            rho = np.asarray(rho, dtype=float)
            x = self.x_of_rho(rho)
            s = 1 + rho * rho
            dx = 4 * rho / s ** 2
            ddx = (4 - 12 * rho * rho) / s ** 3
            P, P1, P2 = self.prefactor(x)
            Y0, Y1, Y2 = y(x, 0), y(x, 1), y(x, 2)
            F0 = P * Y0
            F1 = P1 * Y0 + P * Y1
            F2 = P2 * Y0 + 2 * P1 * Y1 + P * Y2
            if k == 0:
                return F0
            if k == 1:
                return F1 * dx
            return F2 * dx * dx + F1 * ddx

        return f


def heun_transform(ell, lam, susy: bool = False) -> HeunTransform:
    """Prefactor for the generic problem or, with ``susy``, the reduced ``ell = 1`` problem."""
    if susy:
        return HeunTransform(2.0, lam / 2)
    return HeunTransform(ell / 2, (lam + 1) / 2)


def series_function(coeffs) -> Callable:
    """``y(x, k)`` for a truncated power series with coefficients ``coeffs``."""
    c = np.asarray(coeffs)
    c1 = npoly.polyder(c)
    c2 = npoly.polyder(c, 2)

    def y(x, k):
        return npoly.polyval(x, (c, c1, c2)[k])

    return y


# ---------------------------------------------------------------------------
# Frobenius data from polynomial coefficients.

@dataclass
class LocalForm:
    """``t^2 a(t) y'' + t b(t) y' + c(t) y = 0`` with ``t`` the local variable.

    ``direction`` is +1 when ``t = rho - rho0`` and -1 when ``t = rho0 - rho``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    rho0: float
    direction: int

    def indicial(self):
        return np.array([self.c[0], self.b[0] - self.a[0], self.a[0]])

    def indices(self):
        roots = npoly.polyroots(self.indicial())
        return tuple(sorted(roots, key=lambda z: (-z.real, z.imag)))

    def series(self, sigma, nterms: int):
        """Frobenius coefficients ``c_k`` of ``t^sigma sum c_k t^k`` with ``c_0 = 1``."""
        a, b, c = (np.asarray(p, dtype=complex) for p in (self.a, self.b, self.c))
        out = np.zeros(nterms, dtype=complex)
        out[0] = 1.0

        def ind(s):
            return a[0] * s * (s - 1) + b[0] * s + c[0]

        for m in range(1, nterms):
            acc = 0.0
            for j in range(1, min(m, max(len(a), len(b), len(c)) - 1) + 1):
                s = m - j + sigma
                aj = a[j] if j < len(a) else 0.0
                bj = b[j] if j < len(b) else 0.0
                cj = c[j] if j < len(c) else 0.0
                acc += out[m - j] * (aj * s * (s - 1) + bj * s + cj)
            d = ind(m + sigma)
            if abs(d) < 1e-14:
                raise UnsupportedError("resonant Frobenius index; logarithmic solution needed")
            out[m] = -acc / d
        return out


def _P(*c):
    return np.array(c, dtype=complex)


def _local_T(ell, lam, endpoint, susy=False):
    rho = _P(0.0, 1.0) if endpoint == 0 else _P(1.0, -1.0)
    one_p = npoly.polyadd(_P(1.0), npoly.polymul(rho, rho))  # 1 + rho^2
    one_p2 = npoly.polymul(one_p, one_p)
    r2 = npoly.polymul(rho, rho)
    if susy:
        # rho^2 (1+rho^2) times the reduced operator.
        lead = npoly.polymul(npoly.polymul(r2, npoly.polysub(_P(1.0), r2)), one_p)
        first = npoly.polymul(npoly.polysub(_P(4.0), npoly.polymul(_P(2 * (lam + 1)), r2)),
                              npoly.polymul(rho, one_p))
        zeroth = npoly.polysub(npoly.polymul(_P(-lam * (lam + 1)), npoly.polymul(r2, one_p)),
                               npoly.polymul(_P(4.0), npoly.polyadd(r2, _P(7.0))))
    else:
        # rho^2 (1+rho^2)^2 times T.
        lead = npoly.polymul(npoly.polymul(r2, npoly.polysub(_P(1.0), r2)), one_p2)
        first = npoly.polymul(npoly.polysub(_P(6.0), npoly.polymul(_P(2 * (lam + 2)), r2)),
                              npoly.polymul(rho, one_p2))
        zeroth = npoly.polyadd(
            npoly.polymul(-npoly.polyadd(npoly.polymul(_P((lam + 1) * (lam + 2)), r2),
                                         _P(ell * (ell + 5))), one_p2),
            npoly.polymul(_P(48.0), r2))
    return _to_local(lead, first, zeroth, endpoint)


def _local_resolvent(ell, endpoint, transformed=True):
    rho = _P(0.0, 1.0) if endpoint == 0 else _P(1.0, -1.0)
    r2 = npoly.polymul(rho, rho)
    if transformed:
        lead = npoly.polymul(r2, npoly.polysub(_P(1.0), r2))
        first = npoly.polymul(npoly.polysub(_P(2.0), npoly.polymul(_P(5.0), r2)), rho)
        zeroth = -npoly.polyadd(_P((ell + 2) * (ell + 3)), npoly.polymul(_P(15 / 4), r2))
    else:
        lead = npoly.polymul(r2, npoly.polysub(_P(1.0), r2))
        first = npoly.polymul(npoly.polysub(_P(6.0), npoly.polymul(_P(9.0), r2)), rho)
        zeroth = -npoly.polyadd(_P(ell * (ell + 5)), npoly.polymul(_P(63 / 4), r2))
    return _to_local(lead, first, zeroth, endpoint)


def _to_local(lead, first, zeroth, endpoint):
    """Bring ``L y'' + M y' + K y`` (in ``rho``) to :class:`LocalForm` around the endpoint."""
    if endpoint == 0:
        # t = rho; lead = t^2 a, first = t b.
        a = _divide_power(lead, 2)
        b = _divide_power(first, 1)
        c = zeroth
        return LocalForm(a, b, c, 0.0, +1)
    # t = 1 - rho, d/drho = -d/dt; multiply through by t.
    lead_t = npoly.polymul(lead, _P(0.0, 1.0))
    a = _divide_power(lead_t, 2)
    b = _divide_power(-first, 0)
    c = npoly.polymul(zeroth, _P(0.0, 1.0))
    return LocalForm(a, b, c, 1.0, -1)


def _divide_power(p, k):
    p = np.asarray(p, dtype=complex)
    if k and np.any(np.abs(p[:k]) > 1e-12 * max(1.0, np.abs(p).max())):
        raise UnsupportedError("endpoint is not a regular singular point of this form")
    return p[k:] if len(p) > k else _P(0.0)


class FrobeniusProblem(str, enum.Enum):
    T = "T"
    SUSY = "SUSY"
    RESOLVENT = "Resolvent"          # v = rho^2 u form
    RESOLVENT_U = "ResolventU"       # original u form


def local_form(problem, endpoint: int, ell=0, lam=0.0) -> LocalForm:
    """Polynomial local form of ``problem`` at ``rho = endpoint``."""
    if endpoint not in (0, 1):
        raise UnsupportedError("only rho = 0 and rho = 1 are regular singular points here")
    problem = FrobeniusProblem(problem)
    if problem is FrobeniusProblem.T:
        return _local_T(ell, lam, endpoint)
    if problem is FrobeniusProblem.SUSY:
        return _local_T(1, lam, endpoint, susy=True)
    return _local_resolvent(ell, endpoint, transformed=problem is FrobeniusProblem.RESOLVENT)


def frobenius_indices(problem, endpoint: int, ell=0, lam=0.0):
    """Indicial roots at a regular singular endpoint, larger real part first."""
    return local_form(problem, endpoint, ell, lam).indices()


# ---------------------------------------------------------------------------
# Classification.

class Classification(str, enum.Enum):
    EIGENVALUE = "Eigenvalue"
    NOT_EIGENVALUE = "NotEigenvalue"
    UNDECIDED = "Undecided"


@dataclass
class Evidence:
    ratio_tail: complex | None = None
    polynomial_termination: bool = False
    minimal_mismatch: float | None = None
    branch: str = ""


def _tail_limit(r: np.ndarray, n_hi: int, window: int):
    """Fit ``L + c/n + d/n^2`` to ``r_n`` on the last ``window`` indices (rows are points)."""
    ns = np.arange(n_hi - window + 1, n_hi + 1, dtype=float)
    X = np.stack([np.ones_like(ns), 1 / ns, 1 / ns ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(X, r[..., n_hi - window + 1:n_hi + 1].T, rcond=None)
    return coef[0]


def _coefficient_ratios(ell, lam, n_cap):
    """``a_{n+1}/a_n`` from :func:`recurrence.series_coeffs` (padded to length ``n_cap + 1``)."""
    c = recurrence.series_coeffs(ProblemKind.GENERIC, ell, lam, n_cap + 1)
    with np.errstate(all="ignore"):
        r = (c.mantissa[1:] / c.mantissa[:-1]) * np.exp2(np.diff(c.exponent).astype(float))
    return r


def _backward_minimal(ell, lam, n_cap):
    """Minimal-solution ratios at ``n = 0`` by the backward continued fraction."""
    lam = np.asarray(lam, dtype=complex)
    r = np.full(lam.shape, 0.5 + 0j)
    tail = np.empty(lam.shape + (n_cap + 1,), dtype=complex)
    tail[..., n_cap] = r
    for n in range(n_cap - 1, -1, -1):
        # r_{n+1} = A_n + B_n / r_n  =>  r_n = B_n / (r_{n+1} - A_n)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = recurrence.coef_B(n, ell, lam) / (r - recurrence.coef_A(n, ell, lam))
        tail[..., n] = r
    return tail


def classify_many(ell, lam, n_cap: int = 2000, tol: float = 1e-3, window: int = 200,
                  mismatch_tol: float = 1e-8):
    """Vectorised :func:`classify_lambda`; returns ``(labels, evidence_list)``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if np.any(lam.real < -1e-14):
        raise DomainError("classification is defined on Re lambda >= 0")
    labels = np.empty(lam.shape, dtype=object)
    ev = [Evidence() for _ in range(lam.size)]
    # Polynomial branch.  Termination needs some B_n to vanish; without that
    # check a fast-decaying minimal solution would also look eventually zero.
    poly = np.zeros(lam.shape, dtype=bool)
    nn = np.arange(60)
    for i, z in enumerate(lam):
        if np.min(np.abs(recurrence.coef_B(nn, ell, z))) > 1e-12:
            continue
        a = recurrence.series_coeffs(ProblemKind.GENERIC, ell, z, 60).values()
        if recurrence.eventually_zero(a):
            poly[i] = True
            ev[i].polynomial_termination = True
            ev[i].branch = "polynomial"
    # Forward (dominant) tail.
    fwd = np.full(lam.shape, np.nan + 0j)
    idx = np.nonzero(~poly)[0]
    if idx.size:
        try:
            r = recurrence.ratio_seq(ProblemKind.GENERIC, ell, lam[idx], n_cap)
            with np.errstate(all="ignore"):
                fwd[idx] = _tail_limit(r, n_cap, window)
        except DegenerateRatioError:
            # an exactly vanishing ratio somewhere in the batch: redo pointwise,
            # taking ratios from the rescaled coefficients where needed
            for i in idx:
                try:
                    r = recurrence.ratio_seq(ProblemKind.GENERIC, ell, lam[i:i + 1], n_cap)
                except DegenerateRatioError:
                    r = _coefficient_ratios(ell, lam[i], n_cap)[None, :]
                with np.errstate(all="ignore"):
                    fwd[i] = _tail_limit(r, n_cap, window)[0]
    # Backward (minimal) ratios and the mismatch with the seed.
    bwd = _backward_minimal(ell, lam, n_cap)
    seed = recurrence.coef_A(-1, ell, lam)
    with np.errstate(all="ignore"):
        mism = np.abs(seed - bwd[..., 0]) / np.maximum(1.0, np.maximum(np.abs(seed),
                                                                         np.abs(bwd[..., 0])))
        # skip the start-up transient of the backward sweep (it decays like 2^-k)
        min_tail = _tail_limit(bwd, n_cap - window, window)
    for i in range(lam.size):
        ev[i].minimal_mismatch = float(mism[i])
        if poly[i]:
            labels[i] = Classification.EIGENVALUE
            ev[i].ratio_tail = complex(min_tail[i])
            continue
        if mism[i] <= mismatch_tol and abs(min_tail[i] - 0.5) <= tol:
            labels[i] = Classification.EIGENVALUE
            ev[i].ratio_tail = complex(min_tail[i])
            ev[i].branch = "minimal solution"
        elif np.isfinite(fwd[i]) and abs(fwd[i] - 1.0) <= tol:
            labels[i] = Classification.NOT_EIGENVALUE
            ev[i].ratio_tail = complex(fwd[i])
            ev[i].branch = "dominant solution"
        else:
            labels[i] = Classification.UNDECIDED
            ev[i].ratio_tail = complex(fwd[i]) if np.isfinite(fwd[i]) else None
            ev[i].branch = "undecided"
    return labels, ev


def classify_lambda(ell, lam, n_cap: int = 2000, tol: float = 1e-3, **kw):
    """Classify one ``(ell, lam)`` with ``Re lam >= 0``.

    Eigenvalue if the coefficient sequence terminates, or if the solution
    picked out by the initial condition is the minimal one (its ratios tend
    to 1/2).  Not an eigenvalue if the ratios tend to 1.  Otherwise undecided.

    Floating-point forward recursion always drifts onto the dominant
    solution, so the minimal branch is detected by comparing the seed ``r_0``
    with the minimal-solution ratio computed by backward recursion from
    ``n_cap``.
    """
    labels, ev = classify_many(ell, [lam], n_cap, tol, **kw)
    return labels[0], ev[0]


@dataclass
class ScanEntry:
    ell: int
    lambda_re: float
    lambda_im: float
    classification: str
    ratio_tail_re: float | None
    ratio_tail_im: float | None
    polynomial_termination: bool
    minimal_mismatch: float | None


@dataclass
class ScanReport:
    entries: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    n_cap: int = 2000
    susy_check: dict = field(default_factory=dict)

    def eigenvalues(self):
        return sorted({(e.ell, complex(e.lambda_re, e.lambda_im)) for e in self.entries
                       if e.classification == Classification.EIGENVALUE.value},
                      key=lambda t: (t[0], t[1].real, t[1].imag))

    def to_json(self) -> dict:
        return asdict(self)


def _grid(lo, hi, step):
    if step <= 0:
        raise ArgumentError("step must be positive")
    if hi < lo:
        return np.array([])
    k = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(k + 1)


def scan_halfplane(ell_max, re_range=(0.0, 5.0), im_range=(-5.0, 5.0), step=0.25,
                   n_cap: int = 2000, tol: float = 1e-3, ells=None, susy_check: bool = True):
    """Classify every grid point for ``ell = 0..ell_max`` (or the given ``ells``)."""
    re = _grid(*re_range, step)
    im = _grid(*im_range, step)
    lam = (re[:, None] + 1j * im[None, :]).ravel()
    rep = ScanReport(grid={"re_range": list(re_range), "im_range": list(im_range),
                           "step": step}, n_cap=n_cap)
    ells = list(range(ell_max + 1)) if ells is None else list(ells)
    if lam.size == 0:
        return rep
    for ell in ells:
        labels, ev = classify_many(ell, lam, n_cap, tol)
        for z, lab, e in zip(lam, labels, ev):
            rep.entries.append(ScanEntry(
                ell, float(z.real), float(z.imag), lab.value,
                None if e.ratio_tail is None else float(e.ratio_tail.real),
                None if e.ratio_tail is None else float(e.ratio_tail.imag),
                bool(e.polynomial_termination), e.minimal_mismatch))
    if susy_check and 1 in ells:
        rep.susy_check = susy_confirmation(lam, n_cap)
    return rep


def susy_confirmation(lam, n_cap=2000, mismatch_tol=1e-8):
    """Reduced ``ell = 1`` problem: minimal-solution mismatch at every grid point."""
    lam = np.asarray(lam, dtype=complex)
    r = np.full(lam.shape, 0.5 + 0j)
    for n in range(n_cap - 1, -1, -1):
        with np.errstate(all="ignore"):
            r = recurrence.susy_coef_B(n, lam) / (r - recurrence.susy_coef_A(n, lam))
    seed = recurrence.seed(ProblemKind.SUSY_ONE, None, lam)[1]
    mism = np.abs(seed - r) / np.maximum(1.0, np.maximum(np.abs(seed), np.abs(r)))
    fwd = recurrence.ratio_seq(ProblemKind.SUSY_ONE, None, lam, n_cap)
    lim = _tail_limit(fwd, n_cap, 200)
    return {"min_mismatch": float(np.min(mism)),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in lam[mism <= mismatch_tol]],
            "max_tail_distance_from_1": float(np.max(np.abs(lim - 1)))}


# ---------------------------------------------------------------------------
# Cumulative quadrature on panels refined toward singular endpoints.

def _refined_breaks(points, anchor, lo=1e-4, hi_gap=1e-7):
    pts = np.concatenate([np.asarray(points, dtype=float).ravel(), [anchor]])
    extra = np.concatenate([
        np.geomspace(lo, 0.5, 40),
        1 - np.geomspace(hi_gap, 0.5, 60),
        np.linspace(0.05, 0.95, 19),
    ])
    allp = np.unique(np.concatenate([pts, extra[(extra > 0) & (extra < 1)]]))
    return allp


def cumulative_integral(f, anchor, points, epsrel=1e-13):
    """``int_anchor^p f(s) ds`` for each ``p`` in ``points`` (all in ``(0, 1)``, or ``anchor`` in ``[0, 1]``).

    Integration runs panel by panel between sorted break points that are
    geometrically refined toward 0 and 1; each panel uses adaptive
    Gauss-Kronrod.  Raises :class:`NumericalError` when a panel does not converge.
    """
    points = np.asarray(points, dtype=float)
    breaks = _refined_breaks(points, anchor)
    lo, hi = min(points.min(), anchor), max(points.max(), anchor)
    breaks = breaks[(breaks >= lo) & (breaks <= hi)]
    idx = int(np.searchsorted(breaks, anchor))
    vals = np.zeros(breaks.size)
    worst = 0.0
    for sgn, rng in ((+1, range(idx, breaks.size - 1)), (-1, range(idx, 0, -1))):
        acc = 0.0
        for k in rng:
            a, b = (breaks[k], breaks[k + 1]) if sgn > 0 else (breaks[k - 1], breaks[k])
            with warnings.catch_warnings():
                # Convergence is judged from the returned error estimate below.
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=epsrel, limit=200)
            if not np.isfinite(val):
                raise NumericalError("non-finite quadrature", {"panel": (a, b)})
            worst = max(worst, err / max(abs(val), 1e-300))
            acc += sgn * val
            vals[k + 1 if sgn > 0 else k - 1] = acc
    if worst > 1e-8:
        raise NumericalError("quadrature did not converge", {"worst_relative_error": worst})
    return vals[np.searchsorted(breaks, points)]


def cumulative_gauss(f, anchor, points, order: int = 20, lo_gap=1e-7, hi_gap=1e-9):
    """Vectorised ``int_anchor^p f`` by composite Gauss-Legendre on refined panels.

    ``f`` must accept an array.  Panels shrink geometrically toward 0 and 1,
    which keeps integrable endpoint singularities (powers, logarithms) under
    control without adaptive subdivision.
    """
    points = np.asarray(points, dtype=float)
    lo, hi = min(points.min(), anchor), max(points.max(), anchor)
    brk = np.concatenate([np.geomspace(lo_gap, 0.5, 90), 1 - np.geomspace(hi_gap, 0.5, 120),
                          np.linspace(0.01, 0.99, 99), points.ravel(), [anchor]])
    brk = np.unique(np.concatenate([brk[(brk > lo) & (brk < hi)], [lo, hi]]))
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = brk[:-1], brk[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    nodes = mid[:, None] + half[:, None] * xg[None, :]
    vals = np.asarray(f(nodes.ravel())).reshape(nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite integrand", {})
    panel = (vals * (half[:, None] * wg[None, :])).sum(axis=1)
    # Accumulate outward from the anchor: summing from the far end and
    # subtracting would cancel catastrophically for integrands singular there.
    k = np.searchsorted(brk, anchor)
    cum = np.zeros(len(brk))
    cum[k + 1:] = np.cumsum(panel[k:])
    cum[:k] = -np.cumsum(panel[:k][::-1])[::-1]
    return cum[np.searchsorted(brk, points)]


# ---------------------------------------------------------------------------
# Nonhomogeneous problems with an explicit homogeneous solution.

@dataclass
class FundamentalSystem:
    """Explicit ``u1hat`` and quadrature-defined ``u2hat`` for ``a u'' + b u' + c u = 0``."""

    tag: str
    a: Callable
    b: Callable
    c: Callable
    u1: Callable          # u1(rho, k), k = 0, 1, 2
    weight: Callable      # closed-form Wronskian W(rho)
    anchor: float
    rhs: Callable
    exponents_0: tuple
    exponents_1: tuple

    def u2(self, rho):
        """``(u2, u2')`` with ``u2 = u1 int_anchor^rho W/u1^2``."""
        rho = np.asarray(rho, dtype=float)
        J = cumulative_integral(lambda s: self.weight(s) / self.u1(s, 0) ** 2, self.anchor, rho)
        u1, du1 = self.u1(rho, 0), self.u1(rho, 1)
        return u1 * J, du1 * J + self.weight(rho) / u1

    def wronskian(self, rho):
        u2, du2 = self.u2(rho)
        return self.u1(rho, 0) * du2 - self.u1(rho, 1) * u2


def _nonhom_data(problem: str) -> FundamentalSystem:
    f01 = lambda r, k: profiles.radial_eigenfunction(0, 1, r, k)
    f03 = lambda r, k: profiles.radial_eigenfunction(0, 3, r, k)
    f10 = lambda r, k: profiles.radial_eigenfunction(1, 0, r, k)
    f11 = lambda r, k: profiles.radial_eigenfunction(1, 1, r, k)
    a = lambda r: 1 - r * r
    if problem == "NonHom1":
        return FundamentalSystem(
            problem, a, lambda r: 6 / r - 6 * r, lambda r: -(6 - 48 / (1 + r * r) ** 2), f01,
            lambda r: r ** -6.0, 0.5,
            lambda r: -(r ** 4 + 12 * r * r - 5) / (1 + r * r) ** 3, (0, -5), (0, 1))
    if problem == "NonHom2":
        return FundamentalSystem(
            problem, a, lambda r: 6 / r - 10 * r, lambda r: -(20 - 48 / (1 + r * r) ** 2), f03,
            lambda r: r ** -6.0 / (1 - r * r) ** 2, 0.5,
            lambda r: (9 + r * r) / (1 + r * r) ** 3, (0, -5), (0, -1))
    if problem == "NonHom3":
        return FundamentalSystem(
            problem, a, lambda r: 6 / r - 6 * r,
            lambda r: -(6 + 6 / r ** 2 - 48 / (1 + r * r) ** 2), f11,
            lambda r: r ** -6.0, 1.0,
            lambda r: r * (7 - r * r) / (1 + r * r) ** 2, (1, -6), (0, 1))
    if problem == "NonHom4":
        return FundamentalSystem(
            problem, a, lambda r: 6 / r - 4 * r,
            lambda r: -(2 + 6 / r ** 2 - 48 / (1 + r * r) ** 2), f10,
            lambda r: (1 - r * r) * r ** -6.0, 1.0,
            lambda r: -r * (5 * r ** 4 + 6 * r * r - 15) / (1 + r * r) ** 2, (1, -6), (0, 2))
    raise ArgumentError(f"unknown problem {problem!r}")


NONHOM_PROBLEMS = ("NonHom1", "NonHom2", "NonHom3", "NonHom4")


def fundamental_system(problem: str) -> FundamentalSystem:
    return _nonhom_data(problem)


@dataclass
class NonHomSolution:
    problem: str
    rho: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    residual: np.ndarray


def nonhom_solve(problem: str, rho_grid) -> NonHomSolution:
    """Particular solution bounded at the origin, ``u = u2 I1 - u1 I2``.

    ``I1 = int_0^rho u1 G/(a W)`` and ``I2 = int_0^rho u2 G/(a W)``; ``u'`` is
    ``u2' I1 - u1' I2`` and ``u''`` comes from the same representation plus
    ``G/a``.  ``residual`` is the ODE residual recomputed from the three
    returned profiles.
    """
    fs = _nonhom_data(problem)
    rho = np.asarray(rho_grid, dtype=float)
    if np.any((rho <= 0) | (rho >= 1)):
        raise DomainError("grid must lie inside (0, 1)")

    def u2_scalar(s):
        return fs.u2(np.atleast_1d(s))[0]

    # Precompute u2 on a dense panel grid would need interpolation; quad calls u2
    # pointwise instead, so build J once on a fine Gauss grid and integrate there.
    g1 = lambda s: fs.u1(s, 0) * fs.rhs(s) / (fs.a(s) * fs.weight(s))
    I1 = cumulative_integral(g1, 0.0, rho)
    I2 = _integral_u2(fs, rho)
    U2, dU2 = fs.u2(rho)
    u1, du1, d2u1 = fs.u1(rho, 0), fs.u1(rho, 1), fs.u1(rho, 2)
    a, b, c = fs.a(rho), fs.b(rho), fs.c(rho)
    d2U2 = -(b * dU2 + c * U2) / a
    u = U2 * I1 - u1 * I2
    du = dU2 * I1 - du1 * I2
    d2u = d2U2 * I1 - d2u1 * I2 + fs.rhs(rho) / a
    res = a * d2u + b * du + c * u - fs.rhs(rho)
    return NonHomSolution(problem, rho, u, du, d2u, res)


def _integral_u2(fs: FundamentalSystem, rho):
    """``int_0^rho u2 G / (a W)`` via composite Gauss-Legendre on refined panels.

    ``u2`` itself is an integral, so it is tabulated on the quadrature nodes
    with one cumulative pass rather than nested adaptive quadrature.
    """
    rho = np.asarray(rho, dtype=float)
    breaks = np.unique(np.concatenate([
        np.geomspace(1e-6, 0.5, 80), 1 - np.geomspace(1e-8, 0.5, 120),
        np.linspace(0.02, 0.98, 49), rho.ravel()]))
    breaks = breaks[(breaks > 0) & (breaks < 1)]
    xg, wg = np.polynomial.legendre.leggauss(20)
    lo = np.concatenate([[0.0], breaks[:-1]])
    hi = breaks
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    U2, _ = fs.u2(nodes)
    vals = U2 * fs.rhs(nodes) / (fs.a(nodes) * fs.weight(nodes)) * weights
    cum = np.cumsum(vals.reshape(-1, xg.size).sum(axis=1))
    return cum[np.searchsorted(breaks, rho)]


def constant_C(epsrel: float = 1e-13) -> float:
    """``C = -2 int_0^1 s^6 / (1+s^2)^4 ds``; asserts ``C < 0`` and ``6C + 1/2 > 0``."""
    val, err = integrate.quad(lambda s: -2 * s ** 6 / (1 + s * s) ** 4, 0.0, 1.0,
                              epsabs=0.0, epsrel=epsrel, limit=200)
    if err > 1e-12:
        raise NumericalError("quadrature for C did not converge", {"abserr": err})
    if not (val < 0 and 6 * val + 0.5 > 0):
        raise NumericalError("sign facts about C failed", {"C": val})
    return val


@dataclass
class AsymptoticFit:
    model: str
    slope: float
    intercept: float
    r2: float
    rho: np.ndarray
    target: np.ndarray


def asymptotic_fit(problem: str, lo=0.99, hi=0.9999, npts=60) -> AsymptoticFit:
    """Fit the expected singular model near ``rho = 1`` on a geometric grid.

    NonHom1/NonHom3: ``u'`` against ``ln(1-rho)``; NonHom2: ``u`` against
    ``1/(1-rho)``; NonHom4: ``u''`` against ``ln(1-rho)``.
    """
    rho = 1 - np.geomspace(1 - lo, 1 - hi, npts)
    sol = nonhom_solve(problem, rho)
    if problem in ("NonHom1", "NonHom3"):
        x, y, model = np.log(1 - rho), sol.du, "du ~ ln(1-rho)"
    elif problem == "NonHom2":
        x, y, model = 1 / (1 - rho), sol.u, "u ~ 1/(1-rho)"
    else:
        x, y, model = np.log(1 - rho), sol.d2u, "d2u ~ ln(1-rho)"
    fit = stats.linregress(x, y)
    return AsymptoticFit(model, float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2),
                         rho, y)


# ---------------------------------------------------------------------------
# Resolvent equation at lam = 5/2.

RESOLVENT_LAMBDA = 2.5


def _resolvent_coeffs(ell):
    """``(a, b, c)`` of the ``v = rho^2 u`` form written as ``a v'' + b v' + c v = rho^2 g``."""
    return (lambda r: -(1 - r * r), lambda r: -2 / r + 5 * r,
            lambda r: (ell + 2) * (ell + 3) / r ** 2 + 15 / 4)


@dataclass
class ResolventSolution:
    ell: int
    rho: np.ndarray
    u: np.ndarray
    du: np.ndarray
    system: dict

    def __call__(self, r):
        return np.interp(r, self.rho, self.u)


def _series_eval(coeffs, sigma, t):
    """``t^sigma sum c_k t^k`` and its ``t``-derivative."""
    c = np.asarray(coeffs)
    p = npoly.polyval(t, c)
    dp = npoly.polyval(t, npoly.polyder(c))
    val = t ** sigma * p
    dval = sigma * t ** (sigma - 1) * p + t ** sigma * dp if sigma != 0 else dp
    return val, dval


def resolvent_fundamental(ell, rho_split=0.5, nterms=400):
    """Solutions of the homogeneous ``v``-equation regular at 0 and at 1.

    Each is a Frobenius series at its own endpoint, summed where it
    converges quickly and continued across the interval with an explicit
    high-order integrator.
    """
    loc0 = local_form(FrobeniusProblem.RESOLVENT, 0, ell)
    loc1 = local_form(FrobeniusProblem.RESOLVENT, 1, ell)
    s0 = loc0.indices()[0].real            # ell + 2
    c0 = loc0.series(s0, nterms).real
    c1 = loc1.series(0.0, nterms).real
    a, b, c = _resolvent_coeffs(ell)

    def rhs(r, y):
        return [y[1], -(b(r) * y[1] + c(r) * y[0]) / a(r)]

    r0 = 0.3
    v, dv = _series_eval(c0, s0, r0)
    sol0 = integrate.solve_ivp(rhs, (r0, 1 - 1e-6), [v, dv], method="DOP853",
                               rtol=1e-13, atol=1e-300, dense_output=True)
    r1 = 0.7
    v1, dv1 = _series_eval(c1, 0.0, 1 - r1)
    sol1 = integrate.solve_ivp(rhs, (r1, 1e-4), [v1, -dv1], method="DOP853",
                               rtol=1e-13, atol=1e-300, dense_output=True)
    if not (sol0.success and sol1.success):
        raise NumericalError("fundamental system integration failed")

    def psi0(r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape + (2,))
        m = r <= r0
        out[m, 0], out[m, 1] = _series_eval(c0, s0, r[m])
        y = sol0.sol(r[~m]) if np.any(~m) else np.zeros((2, 0))
        out[~m, 0], out[~m, 1] = y[0], y[1]
        return out

    def psi1(r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape + (2,))
        m = r >= r1
        v, dv = _series_eval(c1, 0.0, 1 - r[m])
        out[m, 0], out[m, 1] = v, -dv
        y = sol1.sol(r[~m]) if np.any(~m) else np.zeros((2, 0))
        out[~m, 0], out[~m, 1] = y[0], y[1]
        return out

    p0, p1 = psi0(np.array([0.5])), psi1(np.array([0.5]))
    W05 = p0[0, 0] * p1[0, 1] - p0[0, 1] * p1[0, 0]
    C_ell = W05 * 0.5 ** 2 * (1 - 0.25) ** 1.5
    return psi0, psi1, C_ell


def resolvent_solve(ell: int, g: Callable, rho=None) -> ResolventSolution:
    """Bounded solution of the ``lam = 5/2`` radial resolvent equation in channel ``ell``.

    Solves ``-(1-rho^2) u'' - (6/rho) u' + 9 rho u' + ell(ell+5)/rho^2 u + 63/4 u = g``
    through ``v = rho^2 u`` and variation of parameters with the numerically
    built fundamental system ``psi0`` (regular at 0), ``psi1`` (regular at 1),
    whose Wronskian is ``C_ell rho^-2 (1-rho^2)^-3/2``.
    """
    if ell < 0 or int(ell) != ell:
        raise ArgumentError("ell must be a nonnegative integer")
    rho = np.linspace(0.01, 0.99, 197) if rho is None else np.asarray(rho, dtype=float)
    if np.any((rho < 1e-3) | (rho > 0.999)):
        raise DomainError("resolvent profiles are tabulated on [1e-3, 0.999]")
    psi0, psi1, C_ell = resolvent_fundamental(ell)
    W = lambda s: C_ell / (s ** 2 * (1 - s * s) ** 1.5)

    # Write the v-equation as v'' + p v' + q v = F with F = rho^2 g / (-(1-rho^2)).
    F = lambda s: -(s ** 2) * g(s) / (1 - s * s)
    # The 1/(1-s^2) in F times (1-s^2)^{3/2} in 1/W leaves a sqrt factor at 1.
    I0 = cumulative_gauss(lambda s: psi0(s)[..., 0] * F(s) / W(s), 0.0, rho)
    I1 = -cumulative_gauss(lambda s: psi1(s)[..., 0] * F(s) / W(s), 1.0, rho)
    P0, P1 = psi0(rho), psi1(rho)
    v = P1[..., 0] * I0 + P0[..., 0] * I1
    dv = P1[..., 1] * I0 + P0[..., 1] * I1
    u = v / rho ** 2
    du = dv / rho ** 2 - 2 * v / rho ** 3
    return ResolventSolution(int(ell), rho, u, du, {"C_ell": C_ell})


def resolvent_residual(sol: ResolventSolution, g: Callable, lo=0.05, hi=0.95, n=48):
    """ODE residual of a resolvent solution, with ``u''`` from Chebyshev differentiation."""
    from .evolution import cheb_nodes_diff
    x, D = cheb_nodes_diff(n)
    r = lo + (hi - lo) * (x + 1) / 2
    D = D * (2 / (hi - lo))
    fresh = resolvent_solve(sol.ell, g, r)
    # u' comes from the variation-of-parameters formula, u'' from one spectral derivative
    u, du = fresh.u, fresh.du
    d2u = D @ du
    ell = sol.ell
    res = (-(1 - r * r) * d2u - (6 / r) * du + 9 * r * du
           + ell * (ell + 5) / r ** 2 * u + 63 / 4 * u - g(r))
    return r, res
