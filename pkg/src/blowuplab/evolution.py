"""Method-of-lines evolution in similarity coordinates.

Fields in harmonic channel ``ell`` are written ``u_i = rho^ell g_i(rho) Y_ell``.
The reduced functions ``g_i`` are even in ``rho`` and satisfy

    dg1/dtau = -rho g1' - (ell + 1) g1 + g2
    dg2/dtau = g1'' + (2 ell + 6)/rho g1' - rho g2' - (ell + 2) g2 + V g1 (+ nonlinearity)

so every channel is an even radial problem.  Even functions are collocated on
the nonnegative half of a Chebyshev-Gauss-Lobatto grid with an odd number of
intervals, which has no node at the origin and builds the symmetry into the
differentiation matrices.  No condition is imposed at ``rho = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from . import profiles
from .errors import ArgumentError, BracketError, DomainError, NumericalError

# Exact static backgrounds: first component and potential 3 psi^2.
BACKGROUNDS = ("psi_star", "ode")


def cheb_nodes_diff(n: int):
    """Chebyshev-Gauss-Lobatto nodes ``cos(pi j/n)`` on ``[-1, 1]`` and the differentiation matrix."""
    if n < 1:
        raise ArgumentError("need at least one interval")
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.where((j == 0) | (j == n), 2.0, 1.0) * (-1.0) ** j
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on the nodes of :func:`cheb_nodes_diff`."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2 * v / n
    return w


_PI_EXT = np.longdouble("3.14159265358979323846264338327950288")


def _extended_arrays(N: int) -> dict:
    """Folded nodes and differentiation matrices in extended precision."""
    LD = np.longdouble
    M = 2 * N + 1
    j = np.arange(M + 1).astype(LD)
    x = np.cos(_PI_EXT * j / M)
    c = np.where((j == 0) | (j == M), LD(2), LD(1)) * np.where(j % 2 == 0, LD(1), LD(-1))
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1 / c) / (dx + np.eye(M + 1, dtype=LD))
    D -= np.diag(D.sum(axis=1))
    D2 = D @ D
    pos = np.arange(N, -1, -1)           # increasing positive nodes
    mir = M - pos                        # their mirror images
    fold = lambda A, sgn: A[np.ix_(pos, pos)] + sgn * A[np.ix_(pos, mir)]
    return {"rho": x[pos], "D1": fold(D, 1), "D2": fold(D2, 1),
            "D1_odd": fold(D, -1), "D2_odd": fold(D2, -1)}


@dataclass
class RadialGrid:
    """Nonnegative half of a CGL grid with ``M = 2N + 1`` intervals.

    ``nodes`` holds the ``N + 1`` positive points in increasing order, the last
    one being ``rho = 1``.  ``D1``/``D2`` differentiate even functions,
    ``D1_odd``/``D2_odd`` odd ones.  ``weights`` integrate even integrands over
    ``[0, 1]``.
    """

    N: int
    nodes: np.ndarray = field(repr=False)
    D1: np.ndarray = field(repr=False)
    D2: np.ndarray = field(repr=False)
    D1_odd: np.ndarray = field(repr=False)
    D2_odd: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    origin_row: np.ndarray = field(repr=False)
    cheb_even: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, N: int) -> "RadialGrid":
        if N < 2:
            raise ArgumentError("N must be at least 2")
        ext = _extended_arrays(N)
        M = 2 * N + 1
        x, _ = cheb_nodes_diff(M)
        pos = np.arange(N, -1, -1)
        mir = M - pos
        w = clenshaw_curtis_weights(M)[pos]
        # Value at 0 of the even interpolant: barycentric formula on the full grid.
        j = np.arange(M + 1)
        bw = np.where((j == 0) | (j == M), 0.5, 1.0) * (-1.0) ** j
        full = bw / (0 - x)
        full /= full.sum()
        origin = full[pos] + full[mir]
        # Chebyshev coefficients of the even extension (DCT-I).
        k = np.arange(M + 1)
        C = np.cos(np.pi * np.outer(k, j) / M) * (2.0 / M)
        C[:, [0, M]] *= 0.5
        C[[0, M], :] *= 0.5
        cheb = C[:, pos] + C[:, mir]
        f = lambda a: np.asarray(a, dtype=float)
        return cls(N, f(ext["rho"]), f(ext["D1"]), f(ext["D2"]), f(ext["D1_odd"]),
                   f(ext["D2_odd"]), w, origin, cheb)

    @property
    def size(self) -> int:
        return self.N + 1

    def min_spacing(self) -> float:
        full = np.concatenate([-self.nodes[::-1], self.nodes])
        return float(np.min(np.diff(full)))

    def value_at_origin(self, even_values) -> float:
        return self.origin_row @ even_values


_GRID_CACHE: dict = {}


def radial_grid(N: int) -> RadialGrid:
    if N not in _GRID_CACHE:
        _GRID_CACHE[N] = RadialGrid.build(N)
    return _GRID_CACHE[N]


def _background_pair(name, rho):
    """Static pair ``(psi, rho psi' + psi)`` of an exact solution."""
    rho = np.asarray(rho, dtype=float)
    if name == "psi_star":
        s = 1 + rho * rho
        return 4 / s, 4 * (1 - rho * rho) / s ** 2
    if name == "ode":
        r2 = math.sqrt(2.0)
        return r2 * np.ones_like(rho), r2 * np.ones_like(rho)
    raise ArgumentError(f"unknown background {name!r}")


def background_fields(name: str, rho):
    """``(psi1, psi2, V)`` with ``V = 3 psi1^2`` for a static background."""
    p1, p2 = _background_pair(name, rho)
    return p1, p2, 3 * p1 * p1


def _operator_from(ell, rho, D1, D2, V):
    n = rho.size
    I = np.eye(n, dtype=rho.dtype)
    R = np.diag(rho)
    A = np.zeros((2 * n, 2 * n), dtype=rho.dtype)
    A[:n, :n] = -R @ D1 - (ell + 1) * I
    A[:n, n:] = I
    A[n:, :n] = D2 + np.diag((2 * ell + 6) / rho) @ D1 + np.diag(V)
    A[n:, n:] = -R @ D1 - (ell + 2) * I
    return A


def _reduced_operator(ell: int, grid: RadialGrid, background: str = "psi_star") -> np.ndarray:
    """Linear operator on the stacked reduced vector ``(g1, g2)``."""
    V = background_fields(background, grid.nodes)[2]
    return _operator_from(ell, grid.nodes, grid.D1, grid.D2, V)


def _reduced_operator_ext(ell: int, N: int) -> np.ndarray:
    """Extended-precision version of :func:`_reduced_operator` around the profile."""
    ext = _extended_arrays(N)
    rho = ext["rho"]
    return _operator_from(ell, rho, ext["D1"], ext["D2"], 48 / (1 + rho * rho) ** 2)


def assemble_linear_operator(ell: int, grid: RadialGrid, background: str = "psi_star"):
    """Matrix of the linearised flow acting on sampled channel values ``(f1, f2)``.

    It is the reduced operator conjugated by ``diag(rho^ell)``.
    """
    if grid.N < 16:
        raise ArgumentError("N must be at least 16")
    if ell < 0 or int(ell) != ell:
        raise ArgumentError("ell must be a nonnegative integer")
    A = _reduced_operator(ell, grid, background)
    s = np.tile(grid.nodes ** ell, 2)
    return s[:, None] * A / s[None, :]


# ---------------------------------------------------------------------------
# Eigenfunctions on the grid.

EIGEN_DATA = {"h0": (0, 3.0), "g0": (0, 1.0), "q": (1, 0.0), "g1": (1, 1.0)}


def eigenpair_samples(name: str, rho):
    """Sampled channel pair ``(f1, f2)`` of an explicit eigenfunction.

    ``h0`` (``ell=0``, ``lam=3``), ``g0`` (``ell=0``, ``lam=1``), ``q``
    (``ell=1``, ``lam=0``), ``g1`` (``ell=1``, ``lam=1``); the second
    component is ``rho f1' + (lam+1) f1``.
    """
    if name not in EIGEN_DATA:
        raise ArgumentError(f"unknown eigenfunction {name!r}")
    ell, lam = EIGEN_DATA[name]
    rho = np.asarray(rho, dtype=float)
    f = profiles.radial_eigenfunction(ell, lam, rho, 0)
    df = profiles.radial_eigenfunction(ell, lam, rho, 1)
    return np.asarray(f, dtype=float), np.asarray(rho * df + (lam + 1) * f, dtype=float)


# ---------------------------------------------------------------------------
# Spectrum.

@dataclass
class SpectrumResult:
    ell: int
    N: int
    eigenvalues: list
    rejected: list


def _tail_fraction(grid: RadialGrid, vec: np.ndarray) -> float:
    n = grid.size
    tot, tail = 0.0, 0.0
    cut = int(0.75 * (2 * grid.N + 1))
    for comp in (vec[:n], vec[n:]):
        a = grid.cheb_even @ comp
        tot += float(np.sum(np.abs(a) ** 2))
        tail += float(np.sum(np.abs(a[cut:]) ** 2))
    return tail / tot if tot > 0 else 0.0


def refine_eigenpair(A_ext: np.ndarray, lam, v, iters: int = 6):
    """Newton's method for ``(A - lam) v = 0`` normalised at the largest entry of ``v``.

    Residuals are formed in the extended precision of ``A_ext``; corrections
    are solved in double.  The low eigenvalues of the collocation matrix are
    very ill conditioned (the operator is far from normal), so the dense QR
    estimate is only a starting point.
    """
    LD = A_ext.dtype.type
    A = A_ext.astype(float)
    n = A.shape[0]
    k = int(np.argmax(np.abs(v)))
    v = np.asarray(v, dtype=complex) / v[k]
    lam = complex(lam)
    for _ in range(iters):
        vr, vi = v.real.astype(LD), v.imag.astype(LD)
        lr, li = LD(lam.real), LD(lam.imag)
        r = ((A_ext @ vr - (lr * vr - li * vi)).astype(float)
             + 1j * (A_ext @ vi - (lr * vi + li * vr)).astype(float))
        J = np.zeros((n + 1, n + 1), dtype=complex)
        J[:n, :n] = A - lam * np.eye(n)
        J[:n, n] = -v
        J[n, k] = 1.0
        d = np.linalg.solve(J, -np.concatenate([r, [0.0]]))
        v = v + d[:n]
        lam = lam + d[n]
        if abs(d[n]) < 1e-16 * max(1.0, abs(lam)):
            break
    return lam, v


def discrete_spectrum(ell: int, N: int, tail_threshold: float = 0.1, re_floor: float = -0.1,
                      refine: bool = True):
    """Collocation eigenvalues with ``Re lam > re_floor`` that pass the resolution test.

    An eigenvector whose energy in the top quarter of Chebyshev modes exceeds
    ``tail_threshold`` is treated as a discretisation artefact.  Surviving
    eigenvalues are polished by :func:`refine_eigenpair` and returned in
    decreasing order of real part.
    """
    if N < 32:
        raise ArgumentError("N must be at least 32")
    grid = radial_grid(N)
    A_ext = _reduced_operator_ext(ell, N)
    try:
        w, v = np.linalg.eig(A_ext.astype(float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigen-solver failed", {"ell": ell, "N": N}) from exc
    kept, rejected = [], []
    for k in np.argsort(-w.real):
        if w[k].real <= re_floor:
            continue
        if _tail_fraction(grid, v[:, k]) > tail_threshold:
            rejected.append(complex(w[k]))
            continue
        lam = complex(w[k])
        if refine:
            lam2, vec = refine_eigenpair(A_ext, lam, v[:, k])
            if np.isfinite(lam2) and abs(lam2 - lam) < 1e-3:
                lam = complex(lam2)
        kept.append(lam)
    kept.sort(key=lambda z: (-z.real, z.imag))
    return SpectrumResult(int(ell), int(N), kept, rejected)


# ---------------------------------------------------------------------------
# Time stepping.

@dataclass
class EvolveConfig:
    dt: float | None = None
    tau_end: float = 5.0
    filter_strength: float = 0.0
    blowup_cutoff: float = 1e12
    decay_cutoff: float = 0.0
    sample_every: float = 0.05
    cfl: float = 0.5

    def resolved_dt(self, grid: RadialGrid) -> float:
        limit = self.cfl * grid.min_spacing()
        if self.dt is None:
            steps = math.ceil(self.sample_every / limit)
            return self.sample_every / steps
        if self.dt <= 0:
            raise ArgumentError("dt must be positive")
        if self.dt > limit * (1 + 1e-12):
            raise ArgumentError(f"dt = {self.dt} exceeds cfl * min spacing = {limit}")
        return float(self.dt)

    def validate(self):
        if not 0 <= self.filter_strength <= 1:
            raise ArgumentError("filter_strength must lie in [0, 1]")
        if self.tau_end < 0 or self.sample_every <= 0:
            raise ArgumentError("tau_end must be >= 0 and sample_every > 0")


@dataclass
class RadialState:
    """Channel values ``(psi1, psi2)`` at the grid nodes at similarity time ``tau``."""

    ell: int
    psi1: np.ndarray
    psi2: np.ndarray
    tau: float = 0.0

    def check_parity(self, grid: RadialGrid, tol: float = 1e-6) -> bool:
        """True when ``psi / rho^ell`` is a resolved even function.

        This is the discrete form of the regularity condition at the origin:
        even channels have vanishing odd derivatives there and odd channels
        vanish there.
        """
        y = _to_reduced(self.ell, grid, self.psi1, self.psi2)
        return _tail_fraction(grid, y) <= tol


@dataclass
class Sample:
    tau: float
    norm: float
    alpha_h: float
    alpha_g0: float
    alpha_q: float
    sup_origin: float


@dataclass
class Trajectory:
    ell: int
    samples: list
    status: str
    final: RadialState
    background: str | None = None
    norm_note: str = "rho^6-weighted H^1 x L^2 surrogate of the H^3 x H^2 norm"

    @property
    def taus(self):
        return np.array([s.tau for s in self.samples])

    @property
    def norms(self):
        return np.array([s.norm for s in self.samples])

    def to_rows(self):
        return [(s.tau, s.norm, s.alpha_h, s.alpha_g0, s.sup_origin) for s in self.samples]


def _to_reduced(ell, grid, f1, f2):
    s = grid.nodes ** ell
    return np.concatenate([np.asarray(f1) / s, np.asarray(f2) / s])


def _from_reduced(ell, grid, y):
    n = grid.size
    s = grid.nodes ** ell
    return y[:n] * s, y[n:] * s


def state_norm(ell: int, grid: RadialGrid, f1, f2) -> float:
    """``(int_0^1 (|f1|^2 + |f1'|^2 + |f2|^2) rho^6 drho)^(1/2)`` by Clenshaw-Curtis."""
    f1 = np.asarray(f1)
    f2 = np.asarray(f2)
    g = f1 / grid.nodes ** ell
    df = grid.nodes ** ell * (grid.D1 @ g) + ell * grid.nodes ** (ell - 1) * g if ell else grid.D1 @ g
    w = grid.weights * grid.nodes ** 6
    return float(np.sqrt(np.sum(w * (np.abs(f1) ** 2 + np.abs(df) ** 2 + np.abs(f2) ** 2))))


def _gram_basis(ell):
    return ("h0", "g0") if ell == 0 else ("q", "g1")


def mode_amplitudes(state: RadialState, grid: RadialGrid) -> dict:
    """Least-squares coefficients against the explicit eigenpairs of the channel.

    Channel 0 uses ``h0`` and ``g0``, channel 1 uses ``q`` and ``g1``; the fit is
    in the discrete ``rho^6``-weighted ``H^1 x L^2`` inner product.
    """
    ell = state.ell
    names = _gram_basis(ell) if ell in (0, 1) else ()
    rho = grid.nodes
    w = np.sqrt(grid.weights * rho ** 6)

    def embed(f1, f2):
        g = f1 / rho ** ell
        df = grid.D1 @ g if ell == 0 else rho * (grid.D1 @ g) + g
        return np.concatenate([w * f1, w * df, w * f2])

    target = embed(state.psi1, state.psi2)
    out = {"alpha_h": 0.0, "alpha_g0": 0.0, "alpha_q": 0.0, "alpha_g1": 0.0}
    if names:
        B = np.stack([embed(*eigenpair_samples(nm, rho)) for nm in names], axis=1)
        coef, *_ = np.linalg.lstsq(B, target, rcond=None)
        resid = target - B @ coef
        key = {"h0": "alpha_h", "g0": "alpha_g0", "q": "alpha_q", "g1": "alpha_g1"}
        for nm, c in zip(names, coef):
            out[key[nm]] = float(np.real(c))
    else:
        resid = target
    out["remainder_norm"] = float(np.linalg.norm(resid))
    return out


def _filter_matrix(grid: RadialGrid, strength: float):
    """Exponential filter on the Chebyshev coefficients of an even function."""
    if strength <= 0:
        return None
    M = 2 * grid.N + 1
    k = np.arange(M + 1)
    sigma = np.exp(-36.0 * strength * (k / M) ** 16)
    # Rebuild values at the positive nodes from the filtered coefficients.
    pos = np.arange(grid.N, -1, -1)
    T = np.cos(np.pi * np.outer(pos, k) / M)
    return T @ (sigma[:, None] * grid.cheb_even)


def _rk4(rhs, y, dt, nsteps, callback=None):
    for _ in range(nsteps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _run(ell, grid, y0, rhs, cfg: EvolveConfig, observe, stop):
    cfg.validate()
    dt = cfg.resolved_dt(grid)
    steps_per_sample = max(1, int(round(cfg.sample_every / dt)))
    F = _filter_matrix(grid, cfg.filter_strength)
    n = grid.size
    y = y0.copy()
    tau = 0.0
    samples = [observe(tau, y)]
    status = "completed"
    nsamples = int(math.floor(cfg.tau_end / (steps_per_sample * dt) + 1e-9))
    for _ in range(nsamples):
        with np.errstate(over="ignore", invalid="ignore"):
            y = _rk4(rhs, y, dt, steps_per_sample)
        if F is not None:
            y = np.concatenate([F @ y[:n], F @ y[n:]])
        tau += steps_per_sample * dt
        if not np.all(np.isfinite(y)):
            status = "blowup-detected"
            break
        samples.append(observe(tau, y))
        st = stop(samples[-1], y)
        if st:
            status = st
            break
    return samples, status, y, tau


def evolve_linear(state: RadialState, cfg: EvolveConfig, grid: RadialGrid | None = None) -> Trajectory:
    """RK4 for the linearised flow around the static profile in the state's channel."""
    grid = grid or radial_grid(len(state.psi1) - 1)
    if len(state.psi1) != grid.size:
        raise ArgumentError("state does not match the grid")
    ell = state.ell
    A = _reduced_operator(ell, grid)
    y0 = _to_reduced(ell, grid, state.psi1, state.psi2).astype(complex if np.iscomplexobj(state.psi1) else float)

    def observe(tau, y):
        f1, f2 = _from_reduced(ell, grid, y)
        st = RadialState(ell, f1, f2, tau)
        m = mode_amplitudes(st, grid) if ell in (0, 1) else {}
        return Sample(tau, state_norm(ell, grid, f1, f2), m.get("alpha_h", 0.0),
                      m.get("alpha_g0", 0.0), m.get("alpha_q", 0.0),
                      float(abs(grid.value_at_origin(y[:grid.size]))) if ell == 0 else 0.0)

    def stop(sample, y):
        return "blowup-detected" if sample.norm > 1e12 else None

    samples, status, y, tau = _run(ell, grid, y0, lambda v: A @ v, cfg, observe, stop)
    f1, f2 = _from_reduced(ell, grid, y)
    return Trajectory(ell, samples, status, RadialState(ell, f1, f2, tau))


def evolve_nonlinear(initial: RadialState, cfg: EvolveConfig, grid: RadialGrid | None = None,
                     background: str = "psi_star") -> Trajectory:
    """RK4 for the full radial system with the cubic nonlinearity.

    The state is the full field ``Psi``; internally the unknown is the
    deviation ``Phi = Psi - B`` from an exact static solution ``B`` (the
    profile or the ODE-blowup constant), and the right-hand side is written so
    that ``Phi = 0`` is an exact fixed point:
    ``dPhi/dtau = L Phi + (0, (B1 + phi1)^3 - B1^3)`` with ``L`` the free part.
    Sample norms are distances to ``B``.  ``sup_origin`` is ``|Psi_1(0)|``.
    """
    if initial.ell != 0:
        raise ArgumentError("the nonlinear flow is implemented in the radial channel only")
    if np.iscomplexobj(initial.psi1) or np.iscomplexobj(initial.psi2):
        raise ArgumentError("nonlinear evolution takes real data")
    grid = grid or radial_grid(len(initial.psi1) - 1)
    if len(initial.psi1) != grid.size:
        raise ArgumentError("state does not match the grid")
    n = grid.size
    rho = grid.nodes
    B1, B2 = _background_pair(background, rho)
    L0 = _reduced_operator(0, grid, background)
    L0[n:, :n] -= np.diag(background_fields(background, rho)[2])  # free part only
    y0 = np.concatenate([initial.psi1 - B1, initial.psi2 - B2])
    B1_0 = float(grid.value_at_origin(B1))

    def rhs(y):
        out = L0 @ y
        p = y[:n]
        out[n:] += p * (3 * B1 * B1 + p * (3 * B1 + p))
        return out

    def observe(tau, y):
        st = RadialState(0, y[:n], y[n:], tau)
        m = mode_amplitudes(st, grid)
        return Sample(tau, state_norm(0, grid, y[:n], y[n:]), m["alpha_h"], m["alpha_g0"],
                      m["alpha_q"], float(abs(B1_0 + grid.value_at_origin(y[:n]))))

    def stop(sample, y):
        if sample.sup_origin > cfg.blowup_cutoff or sample.norm > 1e12:
            return "blowup-detected"
        if cfg.decay_cutoff > 0 and np.max(np.abs(B1 + y[:n])) < cfg.decay_cutoff:
            return "decay-detected"
        return None

    samples, status, y, tau = _run(0, grid, y0, rhs, cfg, observe, stop)
    return Trajectory(0, samples, status, RadialState(0, B1 + y[:n], B2 + y[n:], tau), background)


# ---------------------------------------------------------------------------
# Initial data.

def _U_pair(r):
    """Physical data of the profile solution at ``t = 0`` with ``T = 1``: ``(U, U + r U')``."""
    s = 1 + r * r
    return 4 / s, 4 * (1 - r * r) / s ** 2


def initial_data_transform(f: Callable, g: Callable, T: float, grid: RadialGrid, x0: float = 0.0):
    """Similarity-frame perturbation ``Phi(0)`` for radial physical data ``(f, g)`` on ``B^7_2``.

    ``Phi(0) = R((f,g),T) + R(Psi*,T) - Psi*`` with ``R((f,g),T) = (T f(T.), T^2 g(T.))``.
    """
    if x0 != 0:
        raise ArgumentError("only the radial case x0 = 0 is supported")
    if not 0.5 <= T <= 1.5:
        raise ArgumentError("T must lie in [1/2, 3/2]")
    rho = grid.nodes
    r = T * rho
    if np.any(r > 2):
        raise DomainError("data would be evaluated outside the ball of radius 2")
    U1, U2 = _U_pair(r)
    P1, P2 = _U_pair(rho)
    phi1 = T * np.asarray(f(r), dtype=float) + T * U1 - P1
    phi2 = T * T * np.asarray(g(r), dtype=float) + T * T * U2 - P2
    return RadialState(0, phi1, phi2, 0.0)


def unstable_direction(r):
    """Radial profiles of the unstable direction ``h``."""
    s = 1 + np.asarray(r, dtype=float) ** 2
    return 1 / s ** 2, 4 / s ** 3


# ---------------------------------------------------------------------------
# Rates and the threshold.

@dataclass
class RateFit:
    omega: float | None
    status: str
    slope: float
    r2: float
    window: tuple


def fit_log_slope(traj: Trajectory, window):
    t, nrm = traj.taus, traj.norms
    m = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12) & (nrm > 0)
    if m.sum() < 3:
        raise ArgumentError("fit window holds fewer than three samples")
    x, y = t[m], np.log(nrm[m])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum((y - pred) ** 2) / ss if ss > 0 else 1.0
    return float(coef[0]), float(r2)


def convergence_rate(traj: Trajectory, window=(1.0, 5.0)) -> RateFit:
    """Decay exponent of the sampled norm on ``window``; ``no-decay`` if it does not decay."""
    if len(traj.samples) < 10:
        raise ArgumentError("need at least 10 samples")
    slope, r2 = fit_log_slope(traj, window)
    if slope >= 0:
        return RateFit(None, "no-decay", slope, r2, tuple(window))
    return RateFit(-slope, "decaying", slope, r2, tuple(window))


def remove_unstable_modes(state: RadialState, grid: RadialGrid, re_min: float = -0.5):
    """Subtract the spectral projections onto the discrete eigenvalues with ``Re > re_min``.

    The projections use left and right eigenvectors of the collocation
    matrix, so the removed part is invariant under the discrete flow.
    """
    ell = state.ell
    A = _reduced_operator(ell, grid)
    w, VR = np.linalg.eig(A)
    w2, VL = np.linalg.eig(A.T)
    y = _to_reduced(ell, grid, state.psi1, state.psi2).astype(complex)
    removed = []
    for k in np.where(w.real > re_min)[0]:
        j = int(np.argmin(np.abs(w2 - w[k])))
        l, r = VL[:, j], VR[:, k]
        y = y - r * (l @ y) / (l @ r)
        removed.append(complex(w[k]))
    f1, f2 = _from_reduced(ell, grid, y)
    if not np.iscomplexobj(state.psi1):
        f1, f2 = f1.real, f2.real
    return RadialState(ell, f1, f2, state.tau), removed


@dataclass
class BisectionStep:
    alpha_lo: float
    alpha_hi: float
    label_lo: str
    label_hi: str
    plateau_lo: float
    plateau_hi: float


@dataclass
class ThresholdResult:
    alpha_star: float
    bracket: tuple
    bracket_width: float
    status: str
    history: list
    near_threshold_trajectory: Trajectory | None = None


BLOWUP, DISPERSAL, UNDECIDED = "Blowup", "Dispersal", "Undecided"


def plateau_length(traj: Trajectory, tol: float) -> float:
    """Similarity time spent within ``tol`` (sampled norm) of the background, from the start."""
    t, nrm = traj.taus, traj.norms
    out = np.nonzero(nrm > tol)[0]
    return float(t[out[0]] if out.size else t[-1])


def classify_run(traj: Trajectory) -> str:
    if traj.status == "blowup-detected":
        return BLOWUP
    if traj.status == "decay-detected":
        return DISPERSAL
    return UNDECIDED


def threshold_data(v: tuple | None, alpha: float, grid: RadialGrid) -> RadialState:
    """Initial perturbation for physical data ``u*[0] + v + alpha h`` at ``T = 1``."""
    v1 = (lambda r: 0 * r) if v is None else v[0]
    v2 = (lambda r: 0 * r) if v is None else v[1]
    f = lambda r: v1(r) + alpha * unstable_direction(r)[0]
    g = lambda r: v2(r) + alpha * unstable_direction(r)[1]
    return initial_data_transform(f, g, 1.0, grid)


def threshold_bisect(v, alpha_lo: float, alpha_hi: float, cfg: EvolveConfig, N: int = 128,
                     max_iter: int = 20, target_width: float = 1e-2, plateau_tol: float = 0.1):
    """Bisect the amplitude of ``h`` between dispersal and blowup.

    ``v`` is a pair of radial callables on ``B^7_2`` or ``None``.  Runs are
    labelled Blowup when ``|Psi_1(0)|`` exceeds ``cfg.blowup_cutoff`` and
    Dispersal when ``max |Psi_1|`` drops below ``cfg.decay_cutoff``.
    """
    if not alpha_lo < alpha_hi:
        raise ArgumentError("need alpha_lo < alpha_hi")
    if cfg.blowup_cutoff >= 1e12 or cfg.decay_cutoff <= 0:
        raise ArgumentError("threshold runs need finite blowup_cutoff and positive decay_cutoff")
    grid = radial_grid(N)
    star_norm = state_norm(0, grid, *_U_pair(grid.nodes))

    def run(alpha):
        phi = threshold_data(v, alpha, grid)
        B1, B2 = _U_pair(grid.nodes)
        tr = evolve_nonlinear(RadialState(0, B1 + phi.psi1, B2 + phi.psi2), cfg, grid)
        return classify_run(tr), tr

    lab_lo, tr_lo = run(alpha_lo)
    lab_hi, tr_hi = run(alpha_hi)
    if lab_lo == lab_hi or UNDECIDED in (lab_lo, lab_hi):
        raise BracketError(f"endpoint labels {lab_lo!r} and {lab_hi!r} do not bracket a threshold")
    tol = plateau_tol * star_norm
    history = [BisectionStep(alpha_lo, alpha_hi, lab_lo, lab_hi,
                             plateau_length(tr_lo, tol), plateau_length(tr_hi, tol))]
    status = "converged"
    mid_traj = None
    for _ in range(max_iter):
        if alpha_hi - alpha_lo <= target_width:
            break
        mid = 0.5 * (alpha_lo + alpha_hi)
        lab, tr = run(mid)
        mid_traj = tr
        if lab == UNDECIDED:
            status = "undecided"
            alpha_lo = alpha_hi = mid
            break
        if lab == lab_lo:
            alpha_lo, tr_lo = mid, tr
        else:
            alpha_hi, tr_hi = mid, tr
        history.append(BisectionStep(alpha_lo, alpha_hi, lab_lo, lab_hi,
                                     plateau_length(tr_lo, tol), plateau_length(tr_hi, tol)))
    else:
        if alpha_hi - alpha_lo > target_width:
            status = "undecided"
    return ThresholdResult(0.5 * (alpha_lo + alpha_hi), (alpha_lo, alpha_hi), alpha_hi - alpha_lo,
                           status, history, mid_traj)
