"""Frobenius recurrences for the radial spectral problems and their quasi-solutions.

Three problem kinds share one three-term recurrence shape
``a_{n+1} = A_{n-1} a_n + B_{n-1} a_{n-1}``:

* ``GENERIC`` -- the Heun recurrence in channel ``ell`` (any ``ell >= 0`` for
  the raw recurrence; the quasi-solution bounds need ``ell >= 2``),
* ``ELL_ZERO`` -- the same recurrence at ``ell = 0`` seeded at ``r_2`` with the
  eigenvalue factors ``(lambda - 1)(lambda - 3)`` cancelled,
* ``SUSY_ONE`` -- the twice reduced ``ell = 1`` problem.

Ratios ``r_n = a_{n+1}/a_n`` obey ``r_{n+1} = A_n + B_n / r_n``.  Writing
``r_n = rt_n (1 + delta_n)`` with an explicit quasi-solution ``rt_n`` gives
``delta_{n+1} = eps_n - C_n delta_n / (1 + delta_n)``.

All routines accept scalar or array ``lam`` and broadcast.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ArgumentError, DegenerateRatioError


class ProblemKind(str, enum.Enum):
    GENERIC = "GenericEll"
    ELL_ZERO = "EllZero"
    SUSY_ONE = "SusyEllOne"


def _kind(kind) -> ProblemKind:
    if isinstance(kind, ProblemKind):
        return kind
    for k in ProblemKind:
        if kind in (k.value, k.name):
            return k
    raise ArgumentError(f"unknown problem kind {kind!r}")


def _c(lam):
    return np.asarray(lam, dtype=complex) if np.iscomplexobj(lam) else np.asarray(lam, dtype=float)


def _out(x):
    return x if np.ndim(x) else x[()]


# ---------------------------------------------------------------------------
# Coefficients.

def coef_A(n, ell, lam):
    """``A_n(ell, lambda)`` of the Heun recurrence."""
    lam = _c(lam)
    num = (12 * n * n + 4 * (3 * ell + 2 * lam + 12) * n + lam * lam
           + 2 * (2 * ell + 9) * lam + 3 * (ell * ell + 8 * ell - 1))
    return _out(num / (4 * (2 * n + 2 * ell + 9) * (n + 2)))


def coef_B(n, ell, lam):
    """``B_n(ell, lambda)`` of the Heun recurrence."""
    lam = _c(lam)
    num = -(ell + lam + 2 * n + 7) * (ell + lam + 2 * n - 3)
    return _out(num / (4 * (2 * n + 2 * ell + 9) * (n + 2)))


def susy_coef_A(n, lam):
    """Recurrence coefficient ``A_n`` of the reduced ``ell = 1`` problem."""
    lam = _c(lam)
    num = lam * lam + 2 * (4 * n + 15) * lam + 12 * (n + 5) * (n + 2)
    return _out(num / (4 * (2 * n + 15) * (n + 2)))


def susy_coef_B(n, lam):
    """Recurrence coefficient ``B_n`` of the reduced ``ell = 1`` problem."""
    lam = _c(lam)
    num = -(lam + 2 * n + 6) * (lam + 2 * n + 4)
    return _out(num / (4 * (2 * n + 15) * (n + 2)))


def _AB(kind: ProblemKind, ell: int):
    if kind is ProblemKind.SUSY_ONE:
        return susy_coef_A, susy_coef_B
    return (lambda n, lam: coef_A(n, ell, lam)), (lambda n, lam: coef_B(n, ell, lam))


def _check_ell(kind: ProblemKind, ell):
    if kind is ProblemKind.ELL_ZERO:
        if ell not in (0, None):
            raise ArgumentError("EllZero fixes ell = 0")
        return 0
    if kind is ProblemKind.SUSY_ONE:
        return None
    if ell is None or int(ell) != ell or ell < 0:
        raise ArgumentError(f"GenericEll needs an integer ell >= 0, got {ell}")
    return int(ell)


# ---------------------------------------------------------------------------
# Series coefficients.

@dataclass
class SeriesCoeffs:
    """Coefficients ``a_n = mantissa_n * 2**exponent_n`` (overflow-safe)."""

    mantissa: np.ndarray
    exponent: np.ndarray

    def values(self) -> np.ndarray:
        return self.mantissa * np.exp2(self.exponent.astype(float))

    def __getitem__(self, n):
        return self.values()[n]

    def __len__(self):
        return len(self.mantissa)


_GUARD = 2.0 ** 500


def series_coeffs(kind, ell, lam, N: int) -> SeriesCoeffs:
    """Frobenius coefficients ``a_0 = 1, ..., a_N`` (scalar ``lam``).

    When a coefficient exceeds ``2**500`` in modulus the pair of trailing
    coefficients is rescaled and the shift recorded, so ratios are exact.
    """
    kind = _kind(kind)
    ell = _check_ell(kind, ell)
    if N < 2:
        raise ArgumentError("need N >= 2")
    A, B = _AB(kind, ell)
    lam = complex(lam) if np.iscomplexobj(lam) else float(lam)
    dtype = complex if isinstance(lam, complex) else float
    m = np.zeros(N + 1, dtype=dtype)
    e = np.zeros(N + 1, dtype=np.int64)
    m[0] = 1.0
    prev, cur, shift = 0.0, 1.0, 0
    for n in range(N):
        nxt = A(n - 1, lam) * cur + B(n - 1, lam) * prev
        prev, cur = cur, nxt
        if abs(cur) > _GUARD or (abs(cur) < 1.0 / _GUARD and abs(prev) < 1.0 / _GUARD
                                 and (cur != 0 or prev != 0)):
            k = int(np.floor(np.log2(max(abs(cur), abs(prev)))))
            prev, cur = prev * 2.0 ** (-k), cur * 2.0 ** (-k)
            shift += k
        m[n + 1] = cur
        e[n + 1] = shift
    return SeriesCoeffs(m, e)


def eventually_zero(a: np.ndarray, rel: float = 1e-13, run: int = 10) -> bool:
    """True if ``|a_n| <= rel * max_{m<=n} |a_m|`` for ``run`` consecutive ``n``."""
    mag = np.abs(np.asarray(a))
    running = np.maximum.accumulate(mag)
    small = mag <= rel * running
    count = 0
    for s in small:
        count = count + 1 if s else 0
        if count >= run:
            return True
    return False


def series_coeffs_ell0_closed(n: int, lam):
    """Closed forms of ``a_2(0, lambda)`` and ``a_3(0, lambda)``."""
    lam = _c(lam)
    if n == 2:
        return _out((lam - 1) * (lam - 3) * (lam * lam + 32 * lam + 235) / 2016)
    if n == 3:
        quart = lam ** 4 + 58 * lam ** 3 + 1052 * lam ** 2 + 6350 * lam + 4971
        return _out((lam - 1) * (lam - 3) * quart / 266112)
    raise ArgumentError("closed forms exist for n = 2 and n = 3 only")


# ---------------------------------------------------------------------------
# Ratios and quasi-solutions.

def ell0_seed(lam):
    """``r_2(0, lambda)`` with the eigenvalue factors cancelled."""
    lam = _c(lam)
    quart = lam ** 4 + 58 * lam ** 3 + 1052 * lam ** 2 + 6350 * lam + 4971
    return _out(quart / (132 * (lam * lam + 32 * lam + 235)))


def _ell0_early(lam):
    lam = _c(lam)
    r0 = (lam - 3) * (lam + 13) / 28
    r1 = (lam - 1) * (lam * lam + 32 * lam + 235) / (72 * (lam + 13))
    return r0, r1


def seed(kind, ell, lam):
    """``(n0, r_{n0})`` where the ratio recursion starts for ``kind``."""
    kind = _kind(kind)
    ell = _check_ell(kind, ell)
    lam = _c(lam)
    if kind is ProblemKind.GENERIC:
        return 0, coef_A(-1, ell, lam)
    if kind is ProblemKind.ELL_ZERO:
        return 2, ell0_seed(lam)
    return 0, _out(lam * lam / 52 + 11 * lam / 26 + 12.0 / 13)


def ratio_seq(kind, ell, lam, N: int, *, tiny: float = 1e-300) -> np.ndarray:
    """Ratios ``r_0..r_N`` with the kind-specific seed.

    For ``EllZero`` the entries ``r_0, r_1`` are the cancelled closed forms and
    the recursion starts from ``r_2``.  The result has shape ``lam.shape + (N+1,)``.
    """
    kind = _kind(kind)
    ell = _check_ell(kind, ell)
    lam = _c(lam)
    A, B = _AB(kind, ell)
    n0, r = seed(kind, ell, lam)
    r = np.asarray(r, dtype=complex if np.iscomplexobj(lam) else float)
    out = np.empty(lam.shape + (N + 1,), dtype=np.result_type(r, float))
    if kind is ProblemKind.ELL_ZERO:
        r0, r1 = _ell0_early(lam)
        out[..., 0] = r0
        if N >= 1:
            out[..., 1] = r1
    if n0 <= N:
        out[..., n0] = r
    for n in range(n0, N):
        if np.any(np.abs(r) < tiny):
            raise DegenerateRatioError(f"ratio vanished at n = {n}; use series_coeffs")
        r = A(n, lam) + B(n, lam) / r
        out[..., n + 1] = r
    return out


def quasi_solution(kind, ell, n, lam):
    """Explicit approximate ratio ``rt_n`` for the kind."""
    kind = _kind(kind)
    ell = _check_ell(kind, ell)
    lam = _c(lam)
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ArgumentError("n must be >= 0")
    if kind is ProblemKind.GENERIC:
        l = ell
        val = (lam * lam / (4 * (n + 1) * (2 * n + 2 * l + 7))
               + (4 * n + 2 * l + 5) * lam / (2 * (n + 1) * (2 * n + 2 * l + 7))
               + (n - 1) / (n + 1) + 3.0 * l / (8 * (n + 1)))
    elif kind is ProblemKind.ELL_ZERO:
        val = (lam * lam / (4 * (n + 1) * (2 * n + 7))
               + (4 * n + 3) * lam / (2 * (n + 1) * (2 * n + 7))
               + (n - 1) / (n + 1))
    else:
        val = (lam * lam / (4 * (2 * n + 13) * (n + 1))
               + (2 * n + 5) * lam / ((2 * n + 13) * (n + 1))
               + (2 * n + 9) / (2 * n + 13))
    return _out(val)


def start_index(kind) -> int:
    """Index from which the quasi-solution bounds are claimed."""
    return {ProblemKind.GENERIC: 3, ProblemKind.ELL_ZERO: 5, ProblemKind.SUSY_ONE: 1}[_kind(kind)]


def eps_C(kind, ell, n, lam):
    """``(eps_n, C_n)`` from the recurrence coefficients and the quasi-solution."""
    kind = _kind(kind)
    ell = _check_ell(kind, ell)
    A, B = _AB(kind, ell)
    rt0 = quasi_solution(kind, ell, n, lam)
    rt1 = quasi_solution(kind, ell, np.asarray(n) + 1, lam)
    An, Bn = A(n, lam), B(n, lam)
    # rt_n may vanish below the start index (EllZero at lambda = 0, n = 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = (An * rt0 + Bn) / (rt0 * rt1) - 1
        C = Bn / (rt0 * rt1)
    return eps, C


@dataclass
class RatioState:
    """Sequences of one ``(kind, ell, lambda)`` run."""

    kind: ProblemKind
    ell: int | None
    lam: complex
    a: np.ndarray
    r: np.ndarray
    rtilde: np.ndarray
    delta: np.ndarray
    eps: np.ndarray
    C: np.ndarray
    n_max: int

    def recursion_residual(self) -> np.ndarray:
        """``delta_{n+1} - (eps_n - C_n delta_n/(1+delta_n))`` where defined."""
        d, e, c = self.delta, self.eps, self.C
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return d[1:] - (e[:-1] - c[:-1] * d[:-1] / (1 + d[:-1]))


def delta_eps_C(kind, ell, lam, N: int) -> RatioState:
    """Fill the full :class:`RatioState` for a scalar ``lam``."""
    kind = _kind(kind)
    ell = _check_ell(kind, ell)
    lamc = complex(lam)
    lam_arr = np.asarray(lam)
    r = ratio_seq(kind, ell, lam_arr, N)
    ns = np.arange(N + 1)
    rt = quasi_solution(kind, ell, ns, lam_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = r / rt - 1
    eps, C = eps_C(kind, ell, ns, lam_arr)
    try:
        a = series_coeffs(kind, ell, lam, N).values()
    except ArgumentError:
        a = np.array([1.0])
    return RatioState(kind, ell, lamc, a, r, rt, delta, eps, C, N)


# ---------------------------------------------------------------------------
# Closed forms with integer coefficients.

def _P1(n, l, lam):
    return 16 * (2 * n + 2 * l + 7) * (n + 1) * (2 * n + lam + l + 7) * (2 * n + lam + l - 3)


def _P2(n, l, lam):
    f1 = 2 * lam ** 2 + 4 * (4 * n + 2 * l + 9) * lam + (2 * n + 2 * l + 9) * (8 * n + 3 * l)
    f2 = 2 * lam ** 2 + 4 * (4 * n + 2 * l + 5) * lam + (2 * n + 2 * l + 7) * (8 * n + 3 * l - 8)
    return f1 * f2


def _P3(n, l, lam):
    return ((-16 * n ** 2 - 28 * n * l - 96 * n + 10 * l - 124) * lam ** 2
            + (-96 * n ** 2 * l - 48 * n * l ** 2 - 160 * n ** 2 + 24 * n * l + 104 * l ** 2
               - 640 * n + 20 * l - 568) * lam
            - (2 * n + 2 * l + 7) * (24 * n ** 2 * l + 10 * n * l ** 2 + 64 * n ** 2 - 96 * n * l
                                     - 47 * l ** 2 + 32 * n + 250 * l - 384))


def _R1(l, lam):
    return (-(23 * l + 190) * lam ** 6
            - 6 * (30 * l ** 2 + 387 * l + 1094) * lam ** 5
            + (-447 * l ** 3 - 8670 * l ** 2 - 46097 * l - 59746) * lam ** 4
            - 4 * (62 * l ** 4 + 2935 * l ** 3 + 26998 * l ** 2 + 68573 * l + 8898) * lam ** 3
            + (483 * l ** 5 - 1770 * l ** 4 - 97410 * l ** 3 - 473652 * l ** 2 - 209537 * l
               + 890030) * lam ** 2
            + 2 * (342 * l ** 6 + 3735 * l ** 5 - 8906 * l ** 4 - 171178 * l ** 3 - 181954 * l ** 2
                   + 914227 * l + 77910) * lam
            + 3 * (l - 1) * (81 * l ** 6 + 1427 * l ** 5 + 5140 * l ** 4 - 21610 * l ** 3
                             - 81983 * l ** 2 + 226647 * l + 314586))


def _R2(l, lam):
    return (2 * lam ** 8 + 16 * (2 * l + 11) * lam ** 7
            + (216 * l ** 2 + 2279 * l + 5526) * lam ** 6
            + 2 * (400 * l ** 3 + 6066 * l ** 2 + 27801 * l + 35914) * lam ** 5
            + (1772 * l ** 4 + 34319 * l ** 3 + 223270 * l ** 2 + 532737 * l + 294126) * lam ** 4
            + 4 * (600 * l ** 5 + 13922 * l ** 4 + 114695 * l ** 3 + 382702 * l ** 2 + 370389 * l
                   - 173626) * lam ** 3
            + (1944 * l ** 6 + 51981 * l ** 5 + 510802 * l ** 4 + 2148322 * l ** 3
               + 2913884 * l ** 2 - 2334671 * l - 3619670) * lam ** 2
            + 2 * (432 * l ** 7 + 12978 * l ** 6 + 146745 * l ** 5 + 738530 * l ** 4
                   + 1304890 * l ** 3 - 1197446 * l ** 2 - 3998275 * l + 420306) * lam
            + 3 * (l - 1) * (3 * l + 16) * (13 + 2 * l)
            * (9 * l ** 5 + 201 * l ** 4 + 1410 * l ** 3 + 2594 * l ** 2 - 4235 * l - 4971))


_R3_COEFFS = (-191, -18994, -728158, -14060890, -149594764, -900471766,
              -3005668466, -4932933534, -2726072037)
_R4_COEFFS = (1, 184, 13910, 562738, 13346440, 191728906, 1667459514,
              8524836246, 23936737079, 31789410678, 13392819504)


def _horner(coeffs, x):
    acc = 0
    for c in coeffs:
        acc = acc * x + c
    return acc


def _R3(lam):
    return _horner(_R3_COEFFS, lam)


def _R4(lam):
    return _horner(_R4_COEFFS, lam)


def _susy_den(n, lam):
    return ((lam ** 2 + 4 * (2 * n + 7) * lam + 4 * (2 * n + 11) * (n + 2))
            * (lam ** 2 + 4 * (2 * n + 5) * lam + 4 * (2 * n + 9) * (n + 1)))


def _susy_C(n, lam):
    return (-4 * (n + 1) * (2 * n + 13) * (lam ** 2 + 2 * (2 * n + 5) * lam + 4 * (n + 3) * (n + 2))
            / _susy_den(n, lam))


def _susy_eps(n, lam):
    return (2 * (lam ** 3 - 2 * (n * n + 5 * n - 5) * lam ** 2 - 8 * (2 * n * n - n - 12) * lam
                 - 8 * (2 * n + 3) * (n + 2) * (n + 1)) / _susy_den(n, lam))


def _susy_delta1(lam):
    return (2 * (lam ** 3 + 12 * lam ** 2 + 140 * lam + 144)
            / (lam ** 4 + 50 * lam ** 3 + 752 * lam ** 2 + 3280 * lam + 4224))


CLOSED_FORMS = ("C", "eps", "delta3", "delta5", "susy_C", "susy_eps", "susy_delta1")


def appendix_closed_forms(which: str, *, n=None, ell=None, lam=0.0):
    """Evaluate the integer-coefficient closed forms.

    ``which`` is one of ``C``, ``eps`` (generic, ``ell >= 2, n >= 3``),
    ``delta3`` (``ell >= 2``), ``delta5`` (``ell = 0``), ``susy_C``,
    ``susy_eps`` (``n >= 1``) and ``susy_delta1``.

    ``C`` returns ``-P1/P2``; the sign is the one produced by
    ``B_n / (rt_n rt_{n+1})``.  ``delta5`` encodes ``r_5 / rt_5 - 1`` for the
    generic quasi-solution evaluated at ``ell = 0``.
    """
    lam = _c(lam)
    if which in ("C", "eps"):
        if ell is None or n is None or ell < 2 or n < 3:
            raise ArgumentError("generic closed forms need ell >= 2 and n >= 3")
        if which == "C":
            return _out(-_P1(n, ell, lam) / _P2(n, ell, lam))
        return _out(_P3(n, ell, lam) / _P2(n, ell, lam))
    if which == "delta3":
        if ell is None or ell < 2:
            raise ArgumentError("delta3 needs ell >= 2")
        return _out(_R1(ell, lam) / _R2(ell, lam))
    if which == "delta5":
        if ell not in (None, 0):
            raise ArgumentError("delta5 is the ell = 0 form")
        return _out(_R3(lam) / _R4(lam))
    if which in ("susy_C", "susy_eps"):
        if n is None or n < 1:
            raise ArgumentError("reduced ell = 1 closed forms need n >= 1")
        return _out((_susy_C if which == "susy_C" else _susy_eps)(n, lam))
    if which == "susy_delta1":
        return _out(_susy_delta1(lam))
    raise ArgumentError(f"unknown closed form {which!r}; choose from {CLOSED_FORMS}")


def closed_form_table_checksum() -> str:
    """SHA-256 of the transcribed integer coefficient tables."""
    payload = json.dumps({"R3": _R3_COEFFS, "R4": _R4_COEFFS}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def validate_closed_forms(tol: float = 1e-10) -> dict:
    """Three recurrence cross-checks for the transcribed closed forms.

    Returns the relative errors; raises nothing.
    """
    lam = np.array([0.3 + 0.7j, 2.0 - 1.5j, 5.0 + 4.0j])
    out = {}
    r = ratio_seq(ProblemKind.GENERIC, 4, lam, 4)
    d3 = r[..., 3] / quasi_solution(ProblemKind.GENERIC, 4, 3, lam) - 1
    out["delta3"] = float(np.max(np.abs(d3 - appendix_closed_forms("delta3", ell=4, lam=lam))
                                 / np.abs(d3)))
    r0 = ratio_seq(ProblemKind.ELL_ZERO, 0, lam, 5)
    d5 = r0[..., 5] / quasi_solution(ProblemKind.GENERIC, 0, 5, lam) - 1
    out["delta5"] = float(np.max(np.abs(d5 - appendix_closed_forms("delta5", lam=lam)) / np.abs(d5)))
    rs = ratio_seq(ProblemKind.SUSY_ONE, None, lam, 1)
    d1 = rs[..., 1] / quasi_solution(ProblemKind.SUSY_ONE, None, 1, lam) - 1
    out["susy_delta1"] = float(np.max(np.abs(d1 - appendix_closed_forms("susy_delta1", lam=lam))
                                      / np.abs(d1)))
    out["ok"] = all(v <= tol for k, v in out.items() if k != "ok")
    return out


# ---------------------------------------------------------------------------
# Bound verification on a sampled half-plane grid.

def eps_bound(kind, ell, n):
    kind = _kind(kind)
    if kind is ProblemKind.GENERIC:
        return 1.0 / 12 + ell / (6.0 * (ell + n + 5))
    return 1.0 / 12


def C_bound(kind, ell, n):
    kind = _kind(kind)
    if kind is ProblemKind.GENERIC:
        return 0.5 - ell / (3.0 * (ell + n + 5))
    return 0.5


def default_lambda_grid(re_max=40.0, im_max=40.0, step=0.5, axis_max=200.0, axis_step=0.25):
    """Imaginary-axis samples plus a rectangular interior grid in ``Re >= 0``."""
    axis = 1j * np.arange(-axis_max, axis_max + axis_step / 2, axis_step)
    re = np.arange(step, re_max + step / 2, step)
    im = np.arange(-im_max, im_max + step / 2, step)
    interior = (re[:, None] + 1j * im[None, :]).ravel()
    return np.concatenate([axis, interior])


EXCLUDED_ELL0 = (1.0, 3.0)


@dataclass
class BoundEntry:
    kind: str
    ell: int | None
    lambda_re: float
    lambda_im: float
    quantity: str
    value: float
    bound: float
    slack: float


@dataclass
class BoundReport:
    """Worst-case values over a sampled grid; violations are listed, not raised."""

    kind: str
    ells: list
    n_cap: int
    n_points: int
    excluded: list = field(default_factory=list)
    entries: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    note: str = "sampling evidence on a finite grid, not a proof"

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def verify_bounds(kind, ell_range, lambda_grid, n_cap: int = 200,
                  exclude_radius: float = 0.05) -> BoundReport:
    """Check the starting bound, the eps and C bounds and the induction ``|delta_n| <= 1/3``.

    For each ``ell`` the maxima over the grid are recorded as entries; any
    sample exceeding its bound is added to ``violations`` with its location.
    """
    kind = _kind(kind)
    lam = np.asarray(lambda_grid, dtype=complex).ravel()
    if np.any(lam.real < -1e-14):
        raise ArgumentError("lambda grid must lie in the closed right half-plane")
    excluded = []
    if kind is ProblemKind.ELL_ZERO:
        mask = np.ones(lam.shape, dtype=bool)
        for z in EXCLUDED_ELL0:
            near = np.abs(lam - z) < exclude_radius
            excluded.extend(complex(v) for v in lam[near])
            mask &= ~near
        lam = lam[mask]
    ells = [0] if kind is ProblemKind.ELL_ZERO else ([None] if kind is ProblemKind.SUSY_ONE
                                                      else list(ell_range))
    rep = BoundReport(kind.value, ells, n_cap, int(lam.size),
                      excluded=[[v.real, v.imag] for v in excluded])
    n0 = start_index(kind)
    if lam.size == 0:
        return rep
    for ell in ells:
        e_ell = ell if kind is ProblemKind.GENERIC else (0 if kind is ProblemKind.ELL_ZERO else None)
        r = ratio_seq(kind, e_ell, lam, n_cap)
        ns = np.arange(n0, n_cap)
        rt = quasi_solution(kind, e_ell, np.arange(n_cap + 1)[None, :], lam[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = r / rt - 1
        eps, C = eps_C(kind, e_ell, ns[None, :], lam[:, None])
        bl = 0 if ell is None else ell
        eb = np.array([eps_bound(kind, bl, n) for n in ns])
        cb = np.array([C_bound(kind, bl, n) for n in ns])
        checks = [
            (f"delta_{n0}", np.abs(delta[:, n0]), np.full(lam.size, 1.0 / 3), None),
            ("eps", np.abs(eps), eb[None, :], ns),
            ("C", np.abs(C), cb[None, :], ns),
            ("delta_tail", np.abs(delta[:, n0:]), np.full(n_cap + 1 - n0, 1.0 / 3)[None, :], None),
        ]
        for name, val, bnd, _ in checks:
            slack = bnd - val
            flat = np.argmin(slack)
            idx = np.unravel_index(flat, slack.shape)
            z = lam[idx[0]]
            rep.entries.append(BoundEntry(kind.value, ell, float(z.real), float(z.imag), name,
                                          float(val[idx]), float(np.broadcast_to(bnd, val.shape)[idx]),
                                          float(slack[idx])))
            bad = np.argwhere(slack < 0)
            for b in bad[:50]:
                zb = lam[b[0]]
                rep.violations.append(BoundEntry(kind.value, ell, float(zb.real), float(zb.imag),
                                                 name, float(val[tuple(b)]),
                                                 float(np.broadcast_to(bnd, val.shape)[tuple(b)]),
                                                 float(slack[tuple(b)])))
    return rep


# ---------------------------------------------------------------------------
# Exact sign check of the C-bound polynomial and a Routh-Hurwitz test.

def _poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _poly_add(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]


def _poly_scale(p, c):
    return [c * a for a in p]


def P1_coeffs(n: int, ell: int) -> list:
    """Integer coefficients of ``P1(n, ell, lambda)`` in ascending powers of ``lambda``."""
    k = 16 * (2 * n + 2 * ell + 7) * (n + 1)
    return _poly_scale(_poly_mul([2 * n + ell + 7, 1], [2 * n + ell - 3, 1]), k)


def P2_coeffs(n: int, ell: int) -> list:
    """Integer coefficients of ``P2(n, ell, lambda)`` in ascending powers."""
    f1 = [(2 * n + 2 * ell + 9) * (8 * n + 3 * ell), 4 * (4 * n + 2 * ell + 9), 2]
    f2 = [(2 * n + 2 * ell + 7) * (8 * n + 3 * ell - 8), 4 * (4 * n + 2 * ell + 5), 2]
    return _poly_mul(f1, f2)


def _abs2_on_axis(coeffs: list) -> list:
    """Coefficients in ``t`` of ``|p(i t)|^2`` for a real polynomial ``p``."""
    re = [0] * len(coeffs)
    im = [0] * len(coeffs)
    for k, c in enumerate(coeffs):
        s = (1, 1, -1, -1)[k % 4]
        if k % 2 == 0:
            re[k] = s * c
        else:
            im[k] = s * c
    return _poly_add(_poly_mul(re, re), _poly_mul(im, im))


def q_polynomial(n: int, ell: int) -> list:
    """``[6(l+n+10)]^2 Q1(n+3,l+2,t) - [l+3n+26]^2 Q2(n+3,l+2,t)`` in powers of ``s = t^2``."""
    q1 = _abs2_on_axis(P1_coeffs(n + 3, ell + 2))
    q2 = _abs2_on_axis(P2_coeffs(n + 3, ell + 2))
    poly = _poly_add(_poly_scale(q1, (6 * (ell + n + 10)) ** 2),
                     _poly_scale(q2, -(ell + 3 * n + 26) ** 2))
    if any(poly[k] for k in range(1, len(poly), 2)):
        raise ArithmeticError("odd powers of t must cancel")
    return poly[0::2]


def q_polynomial_sign_check(n: int, ell: int) -> bool:
    """True iff every coefficient of :func:`q_polynomial` is negative."""
    if n < 0 or ell < 0:
        raise ArgumentError("n and ell must be >= 0")
    return all(c < 0 for c in q_polynomial(n, ell))


def _trim(p, exact: bool, rtol: float):
    p = list(p)
    while p and (p[-1] == 0 if exact else abs(p[-1]) <= rtol * max(1e-300, max(map(abs, p)))):
        p.pop()
    return p


def _sturm_chain(f0, f1, exact: bool, rtol=1e-12) -> list:
    """Euclidean chain ``f0, f1, -rem(f0, f1), ...`` (ascending coefficient lists)."""
    def rem(a, b):
        a = list(a)
        db = len(b) - 1
        lead = b[-1]
        while len(a) - 1 >= db and a:
            c = a[-1] / lead
            shift = len(a) - 1 - db
            for i, bc in enumerate(b):
                a[shift + i] -= c * bc
            a.pop()
            a = _trim(a, exact, rtol)
        return a

    chain = [_trim(f0, exact, rtol), _trim(f1, exact, rtol)]
    if not chain[1]:
        return chain[:1]
    while True:
        r = _trim([-c for c in rem(chain[-2], chain[-1])], exact, rtol)
        if not r:
            return chain
        chain.append(r)


def _variation_drop(chain) -> int:
    """``V(-inf) - V(+inf)`` for a chain of ascending coefficient lists."""
    def changes(at_plus: bool):
        signs = []
        for p in chain:
            s = np.sign(float(p[-1]))
            if not at_plus and (len(p) - 1) % 2 == 1:
                s = -s
            signs.append(s)
        return sum(1 for a, b in zip(signs, signs[1:]) if a * b < 0)

    return changes(False) - changes(True)


def _real_root_count(g, exact: bool) -> int:
    """Number of distinct real roots of ``g`` (Sturm's theorem)."""
    if len(g) < 2:
        return 0
    dg = [k * c for k, c in enumerate(g)][1:]
    return _variation_drop(_sturm_chain(g, dg, exact))


def _cauchy_index_sturm(f0, f1, exact: bool, rtol=1e-12):
    """Cauchy index of ``f1/f0`` over the real line via a Sturm chain.

    Returns ``(index, gcd)`` where ``gcd`` is the last chain entry; a
    non-constant ``gcd`` signals a common factor of ``f0`` and ``f1``.
    """
    chain = _sturm_chain(f0, f1, exact, rtol)
    if len(chain) < 2:
        return 0, [1]
    return _variation_drop(chain), chain[-1]


def routh_hurwitz_check(poly) -> bool:
    """True iff every root of ``poly`` lies in the open left half-plane.

    ``poly`` is a coefficient list in ascending powers of ``lambda`` (complex
    allowed).  Writing ``p(i w) = R(w) + i I(w)``, the total change of
    ``arg p(i w)`` along the real line equals ``[atan(I/R)] - pi Ind(I/R)``
    and all roots are in the left half-plane iff it equals ``deg(p) pi``.
    The Cauchy index is evaluated with the Euclidean (Routh) chain, exactly
    for integer or rational input.  A chain that stops early means ``R`` and
    ``I`` share a factor (a singular Routh row).  If that factor has a real
    root, ``p`` has a root on the imaginary axis and the answer is False;
    otherwise the test falls back to numeric root finding.
    """
    from fractions import Fraction

    coeffs = list(poly)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    if not coeffs:
        raise ArgumentError("zero polynomial")
    deg = len(coeffs) - 1
    if deg == 0:
        return True
    exact = all(isinstance(c, (int, Fraction)) and not isinstance(c, bool) for c in coeffs)
    if exact:
        cre = [Fraction(c) for c in coeffs]
        cim = [Fraction(0)] * len(coeffs)
    else:
        cc = [complex(c) for c in coeffs]
        cre = [c.real for c in cc]
        cim = [c.imag for c in cc]
    R = [0] * len(coeffs)
    I = [0] * len(coeffs)
    for k in range(len(coeffs)):
        # (x + i y) i^k
        x, y = cre[k], cim[k]
        m = k % 4
        if m == 0:
            R[k], I[k] = x, y
        elif m == 1:
            R[k], I[k] = -y, x
        elif m == 2:
            R[k], I[k] = -x, -y
        else:
            R[k], I[k] = y, -x
    ind, g = _cauchy_index_sturm(R, I, exact)
    if len(g) > 1:
        # R and I share a factor.  A shared real root w is a root i w of p on the axis.
        if _real_root_count(g, exact) > 0:
            return False
        roots = np.roots([complex(c) for c in reversed(coeffs)])
        return bool(np.all(roots.real < 0))
    # Limits of atan(I/R) at +-infinity, in units of pi/2.
    dR = max((k for k, c in enumerate(R) if c != 0), default=-1)
    dI = max((k for k, c in enumerate(I) if c != 0), default=-1)
    if dI < dR:
        ends = 0.0
    elif dI == dR:
        ends = 0.0
    else:
        s_plus = np.sign(float(I[dI])) * (np.sign(float(R[dR])) if dR >= 0 else 1.0)
        s_minus = s_plus * (-1) ** (dI - dR)
        ends = float(s_plus - s_minus)
    turns = ends / 2.0 - ind
    return abs(turns - deg) < 0.25


def routh_hurwitz_numeric(poly) -> bool:
    """Root-finding oracle for :func:`routh_hurwitz_check`."""
    c = list(poly)
    while c and c[-1] == 0:
        c.pop()
    roots = np.roots([complex(v) for v in reversed(c)])
    return bool(np.all(roots.real < 0))
