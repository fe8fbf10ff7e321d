"""States of the 2-D isotropic oscillator in the angular and Cartesian bases.

Coordinates are dimensionless: ``(qx, qy)`` or polar ``(eta, phi)``, time ``T``.
The angular basis states are

    chi_{nd,ng} = exp(i (nd - ng) phi) f_{nd,ng}(eta) chi_00(eta)

with ``chi_00 = exp(-eta**2 / 2) / sqrt(pi)``.  ``nd`` counts anticlockwise
quanta.  A state is stored densely over the triangular index set
``nd + ng <= m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb, factorial, sqrt
from typing import NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import NormalizationError, SchemaError

NORM_TOL = 1e-10
_INV_SQRT_PI = 1.0 / sqrt(np.pi)


class PolarPoint(NamedTuple):
    eta: float
    phi: float

    def to_cartesian(self) -> "CartesianPoint":
        return CartesianPoint(self.eta * np.cos(self.phi), self.eta * np.sin(self.phi))


class CartesianPoint(NamedTuple):
    qx: float
    qy: float

    def to_polar(self) -> PolarPoint:
        return PolarPoint(float(np.hypot(self.qx, self.qy)),
                          float(np.mod(np.arctan2(self.qy, self.qx), 2 * np.pi)))


@lru_cache(maxsize=None)
def shell_indices(m: int) -> tuple[tuple[int, int], ...]:
    """Index pairs with first + second <= m, ordered by shell then first index."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return tuple((a, s - a) for s in range(m + 1) for a in range(s + 1))


def basis_size(m: int) -> int:
    return (m + 1) * (m + 2) // 2


def m_from_size(size: int) -> int:
    m = 0
    while basis_size(m) < size:
        m += 1
    if basis_size(m) != size:
        raise SchemaError(f"{size} is not a triangular number of basis states")
    return m


def _check_coefficients(m: int, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex).reshape(-1)
    if c.size != basis_size(m):
        raise SchemaError(f"expected {basis_size(m)} coefficients for m={m}, got {c.size}")
    if not np.all(np.isfinite(c)):
        raise SchemaError("coefficients must be finite")
    c = c.copy()
    c.setflags(write=False)
    return c


@dataclass(frozen=True, eq=False)
class _State:
    m: int
    coefficients: np.ndarray

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise SchemaError("m must be a non-negative integer")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "coefficients", _check_coefficients(self.m, self.coefficients))
        norm = self.norm_squared
        if abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError(f"sum |C|^2 = {norm!r} deviates from 1")

    @property
    def M(self) -> int:
        return basis_size(self.m)

    @property
    def indices(self) -> tuple[tuple[int, int], ...]:
        return shell_indices(self.m)

    @property
    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def coefficient(self, i: int, j: int) -> complex:
        if i < 0 or j < 0 or i + j > self.m:
            return 0j
        s = i + j
        return complex(self.coefficients[s * (s + 1) // 2 + i])

    def as_dict(self) -> dict[tuple[int, int], complex]:
        return {ij: complex(c) for ij, c in zip(self.indices, self.coefficients)}

    @classmethod
    def from_dict(cls, m: int, mapping, renormalize: bool = False):
        c = np.zeros(basis_size(m), dtype=complex)
        for (i, j), value in mapping.items():
            if i < 0 or j < 0 or i + j > m:
                raise SchemaError(f"index {(i, j)} outside the m={m} shell bound")
            s = i + j
            c[s * (s + 1) // 2 + i] = value
        if renormalize:
            c = _renormalized(c)
        return cls(m, c)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return (type(self) is type(other) and self.m == other.m
                and np.allclose(self.coefficients, other.coefficients, rtol=0, atol=atol))

    def __repr__(self):
        return f"{type(self).__name__}(m={self.m}, coefficients={np.array2string(self.coefficients, precision=4)})"


def _renormalized(c: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(np.abs(c) ** 2))
    if n == 0:
        raise NormalizationError("cannot normalise the zero vector")
    return c / n


class AngularState(_State):
    """Coefficients ``C[nd, ng]`` of the expansion in angular-momentum eigenstates."""

    @property
    def top_shell(self) -> np.ndarray:
        """Coefficients ``C[k, m-k]`` for ``k = 0..m``."""
        m = self.m
        return np.asarray(self.coefficients[m * (m + 1) // 2:])

    @cached_property
    def _tables(self) -> "_ReducedTables":
        return _ReducedTables.build(self)

    def conjugate_reflected(self) -> "AngularState":
        """Complex-conjugate every coefficient and swap ``nd`` and ``ng``."""
        return AngularState.from_dict(self.m, {(j, i): np.conj(c) for (i, j), c in self.as_dict().items()})

    def with_effective_m(self) -> "AngularState":
        """Drop empty top shells."""
        m = self.m
        while m > 0 and not np.any(self.coefficients[m * (m + 1) // 2: basis_size(m)]):
            m -= 1
        return self if m == self.m else AngularState(m, self.coefficients[:basis_size(m)])


class CartesianState(_State):
    """Coefficients ``D[nx, ny]`` of the expansion in Hermite product states."""


# ---------------------------------------------------------------------------
# radial polynomials

@lru_cache(maxsize=None)
def radial_polynomial(nd: int, ng: int) -> Polynomial:
    """``f_{nd,ng}(eta)`` as an exact power series in ``eta``.

    Built from the associated Laguerre polynomial,
    ``(-1)^k sqrt(k!/(k+l)!) eta^l L_k^(l)(eta^2)`` with ``k = min(nd, ng)``
    and ``l = |nd - ng|``.
    """
    if nd < 0 or ng < 0:
        raise ValueError("indices must be non-negative")
    k, l = min(nd, ng), abs(nd - ng)
    coef = np.zeros(l + 2 * k + 1)
    pref = (-1) ** k * sqrt(factorial(k) / factorial(k + l))
    for j in range(k + 1):
        coef[l + 2 * j] = pref * (-1) ** j * comb(k + l, k - j) / factorial(j)
    return Polynomial(coef)


def eval_f(nd: int, ng: int, eta):
    return radial_polynomial(nd, ng)(eta)


def ground_state(eta):
    """Unit-normalised ``chi_00`` on the plane."""
    return _INV_SQRT_PI * np.exp(-0.5 * np.square(eta))


# ---------------------------------------------------------------------------
# evaluation in the angular basis

def _phase_factors(state: _State, phi, T):
    idx = np.array(state.indices)
    energy = idx.sum(axis=1)
    lz = idx[:, 0] - idx[:, 1]
    phi = np.asarray(phi, dtype=float)[..., None]
    T = np.asarray(T, dtype=float)[..., None]
    return state.coefficients * np.exp(-1j * energy * T + 1j * lz * phi), lz


def eval_psi_angular(state: AngularState, p, T=0.0):
    """``psi(eta, phi, T)``; ``p`` is a ``PolarPoint`` or an ``(eta, phi)`` pair of arrays."""
    eta, phi = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    terms, _ = _phase_factors(state, phi, T)
    f = np.stack([radial_polynomial(i, j)(eta) for i, j in state.indices], axis=-1)
    return np.sum(terms * f, axis=-1) * ground_state(eta)


def grad_psi(state: AngularState, p, T=0.0):
    """Return ``(d psi / d eta, d psi / d phi)`` by term-wise differentiation."""
    eta, phi = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    terms, lz = _phase_factors(state, phi, T)
    f = np.stack([radial_polynomial(i, j)(eta) for i, j in state.indices], axis=-1)
    df = np.stack([radial_polynomial(i, j).deriv()(eta) for i, j in state.indices], axis=-1)
    eta_b = eta[..., None]
    g = ground_state(eta)
    d_eta = np.sum(terms * (df - eta_b * f), axis=-1) * g
    d_phi = np.sum(terms * (1j * lz) * f, axis=-1) * g
    return d_eta, d_phi


# ---------------------------------------------------------------------------
# fast path: psi / chi_00 as a polynomial in u = qx + i qy and its conjugate

@dataclass(frozen=True)
class _ReducedTables:
    m: int
    # stacked [value, d/du, d/dv] coefficient tensors, shape (3, m+1, m+1, m+1) over (shell, a, b)
    K: np.ndarray
    # |C| weighted shell scale coefficients, shape (m+1, m+1): sum_k |C_k| |H_k| bound per monomial
    scale: np.ndarray

    @staticmethod
    def build(state: AngularState) -> "_ReducedTables":
        m = state.m
        K = np.zeros((m + 1, m + 1, m + 1), dtype=complex)
        scale = np.zeros((m + 1, m + 1))
        for (nd, ng), c in zip(state.indices, state.coefficients):
            norm = 1.0 / sqrt(factorial(nd) * factorial(ng))
            for k in range(min(nd, ng) + 1):
                w = (-1) ** k * factorial(k) * comb(nd, k) * comb(ng, k) * norm
                K[nd + ng, nd - k, ng - k] += c * w
                scale[nd - k, ng - k] += abs(c) * abs(w)
        Ku = np.zeros_like(K)
        Kv = np.zeros_like(K)
        a = np.arange(1, m + 1)
        Ku[:, :-1, :] = K[:, 1:, :] * a[None, :, None]
        Kv[:, :, :-1] = K[:, :, 1:] * a[None, None, :]
        return _ReducedTables(m, np.stack([K, Ku, Kv]), scale)


def _monomials(u, m):
    pu = np.ones(u.shape + (m + 1,), dtype=complex)
    for a in range(1, m + 1):
        pu[..., a] = pu[..., a - 1] * u
    pv = np.conj(pu)
    return pu, pv


def reduced_amplitude(state: AngularState, qx, qy, T=0.0, derivatives: bool = False):
    """Evaluate ``P = psi / chi_00`` (a polynomial) at Cartesian points.

    With ``derivatives`` also returns ``dP/dqx`` and ``dP/dqy``.  The Gaussian
    factor is dropped so the value stays representable far from the origin;
    the phase of ``P`` equals the phase of ``psi``.
    """
    tab = state._tables
    m = tab.m
    qx = np.asarray(qx, dtype=float)
    qy = np.asarray(qy, dtype=float)
    shape = np.broadcast_shapes(qx.shape, qy.shape, np.shape(T))
    u = (np.broadcast_to(qx, shape) + 1j * np.broadcast_to(qy, shape)).reshape(-1)
    Tf = np.broadcast_to(np.asarray(T, dtype=float), shape).reshape(-1)
    w = np.exp(-1j * np.outer(Tf, np.arange(m + 1)))
    pu, pv = _monomials(u, m)
    mono = pu[:, :, None] * pv[:, None, :]
    n_out = 3 if derivatives else 1
    Kt = tab.K[:n_out].reshape(n_out, m + 1, -1)
    coeff = np.einsum("ps,csk->cpk", w, Kt)
    out = np.einsum("cpk,pk->cp", coeff, mono.reshape(mono.shape[0], -1))
    P = out[0].reshape(shape)
    if not derivatives:
        return P
    Pu, Pv = out[1].reshape(shape), out[2].reshape(shape)
    return P, Pu + Pv, 1j * (Pu - Pv)


class FramePolynomial:
    """``P = psi / chi_00`` frozen at one time, as ``sum_ab c_ab u^a conj(u)^b``."""

    def __init__(self, state: AngularState, T: float):
        tab = state._tables
        w = np.exp(-1j * T * np.arange(tab.m + 1))
        self.m = tab.m
        self.c = np.tensordot(w, tab.K[0], axes=(0, 0))
        self.cu = np.tensordot(w, tab.K[1], axes=(0, 0))
        self.cv = np.tensordot(w, tab.K[2], axes=(0, 0))
        deg = np.add.outer(np.arange(tab.m + 1), np.arange(tab.m + 1))
        self._scale = np.array([tab.scale[deg == j].sum() for j in range(2 * tab.m + 1)])

    def __call__(self, qx, qy, derivatives: bool = False):
        u = np.asarray(qx, dtype=float) + 1j * np.asarray(qy, dtype=float)
        pu, pv = _monomials(u, self.m)
        P = np.sum((pu @ self.c) * pv, axis=-1)
        if not derivatives:
            return P
        Pu = np.sum((pu @ self.cu) * pv, axis=-1)
        Pv = np.sum((pu @ self.cv) * pv, axis=-1)
        return P, Pu + Pv, 1j * (Pu - Pv)

    def scale(self, r):
        """``amplitude_scale`` as a function of radius."""
        return np.polynomial.polynomial.polyval(r, self._scale)


def amplitude_scale(state: AngularState, qx, qy):
    """Upper bound ``sum |C| |chi / chi_00|`` used to judge node proximity."""
    tab = state._tables
    r = np.hypot(qx, qy)
    powers = r[..., None, None] ** (np.arange(tab.m + 1)[:, None] + np.arange(tab.m + 1)[None, :])
    return np.sum(tab.scale * powers, axis=(-1, -2))


# ---------------------------------------------------------------------------
# Cartesian basis

def hermite_table(n: int, x) -> np.ndarray:
    """Physicists' Hermite polynomials ``H_0..H_n`` at ``x`` (last axis)."""
    x = np.asarray(x, dtype=float)
    H = np.empty(x.shape + (n + 1,))
    H[..., 0] = 1.0
    if n >= 1:
        H[..., 1] = 2 * x
    for k in range(1, n):
        H[..., k + 1] = 2 * x * H[..., k] - 2 * k * H[..., k - 1]
    return H


def eval_psi_cartesian(state: CartesianState, p, T=0.0):
    qx, qy = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    m = state.m
    hx, hy = hermite_table(m, qx), hermite_table(m, qy)
    T = np.asarray(T, dtype=float)
    total = 0j
    for (nx, ny), d in zip(state.indices, state.coefficients):
        if d == 0:
            continue
        norm = 1.0 / sqrt(2.0 ** (nx + ny) * factorial(nx) * factorial(ny))
        total = total + d * np.exp(-1j * (nx + ny) * T) * hx[..., nx] * hy[..., ny] * norm
    return total * _INV_SQRT_PI * np.exp(-0.5 * (qx ** 2 + qy ** 2))


# ---------------------------------------------------------------------------
# basis change

@lru_cache(maxsize=None)
def _shell_transform(s: int) -> np.ndarray:
    """Unitary ``U`` with ``D[a, s-a] = sum_k U[a, k] C[k, s-k]``."""
    U = np.zeros((s + 1, s + 1), dtype=complex)
    for k in range(s + 1):
        plus = np.array([comb(k, j) * 1j ** (k - j) for j in range(k + 1)])
        minus = np.array([comb(s - k, j) * (-1j) ** (s - k - j) for j in range(s - k + 1)])
        xpow = np.convolve(plus, minus)
        for a in range(s + 1):
            U[a, k] = xpow[a] * sqrt(factorial(a) * factorial(s - a)
                                     / (factorial(k) * factorial(s - k))) / 2 ** (s / 2)
    U.setflags(write=False)
    return U


def angular_to_cartesian(state: AngularState) -> CartesianState:
    out = np.empty_like(state.coefficients)
    for s in range(state.m + 1):
        sl = slice(s * (s + 1) // 2, (s + 1) * (s + 2) // 2)
        out[sl] = _shell_transform(s) @ state.coefficients[sl]
    return CartesianState(state.m, out)


def cartesian_to_angular(state: CartesianState) -> AngularState:
    out = np.empty_like(state.coefficients)
    for s in range(state.m + 1):
        sl = slice(s * (s + 1) // 2, (s + 1) * (s + 2) // 2)
        out[sl] = _shell_transform(s).conj().T @ state.coefficients[sl]
    return AngularState(state.m, out)


# ---------------------------------------------------------------------------
# random states

def random_coefficients(m: int, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Magnitudes uniform on [0, 1], normalised, then uniform random phases."""
    size = basis_size(m) if n is None else (n, basis_size(m))
    mags = rng.uniform(0.0, 1.0, size)
    phases = rng.uniform(0.0, 2 * np.pi, size)
    mags = mags / np.sqrt(np.sum(mags ** 2, axis=-1, keepdims=True))
    return mags * np.exp(1j * phases)


def random_state(m: int, seed: int) -> AngularState:
    return AngularState(m, random_coefficients(m, np.random.default_rng(seed)))


def eigenstate(nd: int, ng: int, m: int | None = None) -> AngularState:
    """Pure ``chi_{nd,ng}`` (embedded in shell bound ``m`` if given)."""
    m = nd + ng if m is None else m
    return AngularState.from_dict(m, {(nd, ng): 1.0})
