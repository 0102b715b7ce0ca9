"""Exact polynomial fields on the unit ball of R^7.

Integrals of polynomials over ``B^7`` and ``S^6`` are rational multiples of
``pi^3``; :class:`ExactScalar` stores the rational factor so the equivalent
inner product, the free generator and the dissipativity margin can be
evaluated without rounding.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterable, Mapping

from .errors import ArgumentError

DIM = 7
Exponent = tuple


@dataclass(frozen=True)
class ExactScalar:
    """The number ``q * pi^3`` with ``q`` rational."""

    q: Fraction

    def __add__(self, other):
        return ExactScalar(self.q + _q(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ExactScalar(self.q - _q(other))

    def __rsub__(self, other):
        return ExactScalar(_q(other) - self.q)

    def __neg__(self):
        return ExactScalar(-self.q)

    def __mul__(self, c):
        if isinstance(c, ExactScalar):
            raise TypeError("product of two pi^3 multiples leaves the module")
        return ExactScalar(self.q * Fraction(c))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ExactScalar):
            return self.q / other.q
        return ExactScalar(self.q / Fraction(other))

    def __lt__(self, other):
        return self.q < _q(other)

    def __le__(self, other):
        return self.q <= _q(other)

    def __gt__(self, other):
        return self.q > _q(other)

    def __ge__(self, other):
        return self.q >= _q(other)

    def __float__(self):
        return float(self.q) * math.pi ** 3

    def __str__(self):
        return f"({self.q})*pi^3"


def _q(x):
    if isinstance(x, ExactScalar):
        return x.q
    if x == 0:
        return Fraction(0)
    raise TypeError("only ExactScalar or 0 can be combined with ExactScalar")


ZERO = ExactScalar(Fraction(0))


# ---------------------------------------------------------------------------
# Monomial integrals.

def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def _gamma_half_over_sqrtpi(k: int) -> Fraction:
    """``Gamma((k+1)/2) / sqrt(pi)`` for even ``k``."""
    return Fraction(_double_factorial(k - 1), 2 ** (k // 2))


@lru_cache(maxsize=None)
def _sphere_q(alpha: Exponent) -> Fraction:
    if any(a % 2 for a in alpha):
        return Fraction(0)
    num = Fraction(2)
    for a in alpha:
        num *= _gamma_half_over_sqrtpi(a)
    # Sum of the half-integers (a_i + 1)/2 is (|alpha| + 7)/2 = m + 1/2.
    m = (sum(alpha) + DIM - 1) // 2
    den = Fraction(_double_factorial(2 * m - 1), 2 ** m)
    # pi^{7/2} / pi^{1/2} = pi^3.
    return num / den


def _check_alpha(alpha) -> Exponent:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != DIM or any(a < 0 for a in alpha):
        raise ArgumentError("exponent must be a 7-tuple of nonnegative integers")
    return alpha


def monomial_integral_sphere(alpha) -> ExactScalar:
    """``int_{S^6} omega^alpha dsigma`` as an exact multiple of ``pi^3``."""
    return ExactScalar(_sphere_q(_check_alpha(alpha)))


def monomial_integral_ball(alpha) -> ExactScalar:
    """``int_{B^7} xi^alpha dxi``; the radial factor is ``1/(|alpha| + 7)``."""
    alpha = _check_alpha(alpha)
    return ExactScalar(_sphere_q(alpha) / (sum(alpha) + DIM))


# ---------------------------------------------------------------------------
# Polynomials.

class MultiPoly7:
    """Sparse polynomial in seven variables with rational coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping | None = None):
        t = {}
        for k, v in (terms or {}).items():
            v = Fraction(v)
            if v:
                t[_check_alpha(k)] = t.get(_check_alpha(k), Fraction(0)) + v
        self.terms = {k: v for k, v in t.items() if v}

    @classmethod
    def constant(cls, c) -> "MultiPoly7":
        return cls({(0,) * DIM: c})

    @classmethod
    def coordinate(cls, i: int) -> "MultiPoly7":
        """``xi_{i+1}`` (0-based ``i``)."""
        e = [0] * DIM
        e[i] = 1
        return cls({tuple(e): 1})

    @classmethod
    def norm_sq(cls) -> "MultiPoly7":
        return cls({tuple(2 if j == i else 0 for j in range(DIM)): 1 for i in range(DIM)})

    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        return isinstance(other, MultiPoly7) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other):
        other = _poly(other)
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, Fraction(0)) + v
        return MultiPoly7(t)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly7({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-_poly(other))

    def __rsub__(self, other):
        return _poly(other) - self

    def __mul__(self, other):
        if not isinstance(other, MultiPoly7):
            c = Fraction(other)
            return MultiPoly7({k: v * c for k, v in self.terms.items()})
        t: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                t[k] = t.get(k, Fraction(0)) + v1 * v2
        return MultiPoly7(t)

    __rmul__ = __mul__

    def diff(self, i: int) -> "MultiPoly7":
        """Partial derivative in ``xi_{i+1}`` (0-based ``i``)."""
        t = {}
        for k, v in self.terms.items():
            if k[i]:
                e = list(k)
                e[i] -= 1
                t[tuple(e)] = v * k[i]
        return MultiPoly7(t)

    def diff_multi(self, alpha) -> "MultiPoly7":
        p = self
        for i, a in enumerate(alpha):
            for _ in range(a):
                p = p.diff(i)
        return p

    def laplacian(self) -> "MultiPoly7":
        out = MultiPoly7()
        for i in range(DIM):
            out = out + self.diff(i).diff(i)
        return out

    def euler(self) -> "MultiPoly7":
        """``xi . grad p``; each monomial is scaled by its degree."""
        return MultiPoly7({k: v * sum(k) for k, v in self.terms.items()})

    def __call__(self, xi):
        return sum(float(v) * math.prod(x ** a for x, a in zip(xi, k))
                   for k, v in self.terms.items())

    def __repr__(self):
        if not self.terms:
            return "MultiPoly7(0)"
        return "MultiPoly7({" + ", ".join(f"{k}: {v}" for k, v in sorted(self.terms.items())) + "})"


def _poly(x) -> MultiPoly7:
    return x if isinstance(x, MultiPoly7) else MultiPoly7.constant(x)


def integrate_ball(p: MultiPoly7) -> ExactScalar:
    return ExactScalar(sum((v * _sphere_q(k) / (sum(k) + DIM) for k, v in p.terms.items()),
                           Fraction(0)))


def integrate_sphere(p: MultiPoly7) -> ExactScalar:
    return ExactScalar(sum((v * _sphere_q(k) for k, v in p.terms.items()), Fraction(0)))


def _pair_integral(p: MultiPoly7, q: MultiPoly7, sphere: bool) -> Fraction:
    """Rational factor of ``int p q`` without building the product polynomial."""
    acc = Fraction(0)
    for k1, v1 in p.terms.items():
        for k2, v2 in q.terms.items():
            k = tuple(a + b for a, b in zip(k1, k2))
            s = _sphere_q(k)
            if s:
                acc += v1 * v2 * (s if sphere else s / (sum(k) + DIM))
    return acc


@lru_cache(maxsize=None)
def _multi_indices(order: int):
    """``(alpha, multiplicity)`` with ``multiplicity = order!/alpha!``."""
    out = []
    for combo in combinations_with_replacement(range(DIM), order):
        alpha = [0] * DIM
        for i in combo:
            alpha[i] += 1
        mult = math.factorial(order) // math.prod(math.factorial(a) for a in alpha)
        out.append((tuple(alpha), mult))
    return tuple(out)


def _contract(u: MultiPoly7, v: MultiPoly7, order: int, sphere: bool) -> Fraction:
    """``int d^order u . d^order v`` summed over all ordered index tuples."""
    acc = Fraction(0)
    for alpha, mult in _multi_indices(order):
        du = u.diff_multi(alpha)
        if du.is_zero():
            continue
        dv = v.diff_multi(alpha)
        if dv.is_zero():
            continue
        acc += mult * _pair_integral(du, dv, sphere)
    return acc


@dataclass(frozen=True)
class PairField:
    """A pair ``(u1, u2)`` of polynomials."""

    u1: MultiPoly7
    u2: MultiPoly7

    @classmethod
    def of(cls, u1=0, u2=0) -> "PairField":
        return cls(_poly(u1), _poly(u2))

    def __add__(self, other):
        return PairField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other):
        return PairField(self.u1 - other.u1, self.u2 - other.u2)

    def __mul__(self, c):
        return PairField(self.u1 * c, self.u2 * c)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.u1.is_zero() and self.u2.is_zero()

    def degree(self) -> int:
        return max(self.u1.degree(), self.u2.degree())


def inner_1(u: PairField, v: PairField) -> ExactScalar:
    return ExactScalar(_contract(u.u1, v.u1, 3, False) + _contract(u.u2, v.u2, 2, False)
                       + _contract(u.u1, v.u1, 2, True))


def inner_2(u: PairField, v: PairField) -> ExactScalar:
    lu, lv = u.u1.laplacian(), v.u1.laplacian()
    return ExactScalar(_contract(lu, lv, 1, False) + _contract(u.u2, v.u2, 2, False)
                       + _contract(u.u2, v.u2, 1, True))


def inner_H(u: PairField, v: PairField) -> ExactScalar:
    """The equivalent inner product on ``H^3 x H^2(B^7)`` for real polynomial pairs."""
    boundary = (_contract(u.u1, v.u1, 1, True) + _pair_integral(u.u1, v.u1, True)
                + _pair_integral(u.u2, v.u2, True))
    return 4 * inner_1(u, v) + inner_2(u, v) + ExactScalar(boundary)


def sobolev_norm_sq(u: PairField) -> ExactScalar:
    """``sum_{|alpha|<=3} ||d^alpha u1||^2 + sum_{|alpha|<=2} ||d^alpha u2||^2`` on ``B^7``.

    Each distinct multi-index is counted once.
    """
    acc = Fraction(0)
    for poly, top in ((u.u1, 3), (u.u2, 2)):
        for order in range(top + 1):
            for alpha, _ in _multi_indices(order):
                d = poly.diff_multi(alpha)
                if not d.is_zero():
                    acc += _pair_integral(d, d, False)
    return ExactScalar(acc)


def apply_Ltilde(u: PairField) -> PairField:
    """``(-xi.grad u1 - u1 + u2, lap u1 - xi.grad u2 - 2 u2)``."""
    return PairField(-u.u1.euler() - u.u1 + u.u2,
                     u.u1.laplacian() - u.u2.euler() - 2 * u.u2)


def dissipativity_margin(u: PairField) -> ExactScalar:
    """``(Lu|u)_H + (u|u)_H / 2``; non-positive for every test field."""
    return inner_H(apply_Ltilde(u), u) + inner_H(u, u) * Fraction(1, 2)


def equivalence_sample(u: PairField):
    """``((u|u)_H, ||u||^2_{H^3 x H^2})`` for a nonzero field."""
    if u.is_zero():
        raise ArgumentError("the zero field has no norm ratio")
    return inner_H(u, u), sobolev_norm_sq(u)


# ---------------------------------------------------------------------------
# Random fields and sweeps.

def _all_exponents(max_degree: int):
    out = []
    for deg in range(max_degree + 1):
        for alpha, _ in _multi_indices(deg):
            out.append(alpha)
    return out


def random_poly(rng: random.Random, max_degree: int = 6, n_terms: int = 6,
                coeff_range: int = 5) -> MultiPoly7:
    """Sparse random polynomial with integer coefficients and degree at most ``max_degree``."""
    exps = _all_exponents(max_degree)
    terms = {}
    for _ in range(n_terms):
        c = rng.randint(-coeff_range, coeff_range)
        if c:
            terms[exps[rng.randrange(len(exps))]] = c
    return MultiPoly7(terms)


def random_pair(rng: random.Random, max_degree: int = 6, n_terms: int = 6) -> PairField:
    return PairField(random_poly(rng, max_degree, n_terms), random_poly(rng, max_degree, n_terms))


@dataclass
class SweepRow:
    sample_id: int
    degree: int
    margin_numerator: int
    margin_denominator: int
    ratio: float | None


def dissipativity_sweep(n_samples: int = 200, seed: int = 0, max_degree: int = 6,
                        n_terms: int = 6, include_corners: bool = True) -> list:
    """Exact margins for random fields, optionally preceded by ``(1,0)`` and ``(0,1)``."""
    rng = random.Random(seed)
    fields: list = []
    if include_corners:
        fields += [PairField.of(1, 0), PairField.of(0, 1)]
    while len(fields) < n_samples + (2 if include_corners else 0):
        u = random_pair(rng, max_degree, n_terms)
        if not u.is_zero():
            fields.append(u)
    rows = []
    for i, u in enumerate(fields):
        m = dissipativity_margin(u)
        h, s = equivalence_sample(u)
        rows.append(SweepRow(i, u.degree(), m.q.numerator, m.q.denominator, float(h / s)))
    return rows


def equivalence_bounds(rows: Iterable[SweepRow]):
    ratios = [r.ratio for r in rows if r.ratio is not None]
    return min(ratios), max(ratios)
