"""Total vorticity: zero counting of the top-shell polynomial versus direct phase winding."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, sqrt

import numpy as np

from .basis import AngularState, basis_size, random_coefficients, reduced_amplitude
from .errors import AmbiguousWinding, AttemptsExhausted, EmptyShell, ZeroNearCircle
from .winding import TWO_PI, contour_winding, unit_circle_winding, unit_circle_winding_batch


@dataclass(frozen=True)
class ShellPolynomial:
    """``g(z) = sum_k C[k, m-k] / sqrt(k! (m-k)!) z^k``, lowest power first."""
    m: int
    coeffs: np.ndarray

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)


@dataclass(frozen=True)
class VorticityReport:
    n: int
    method: str
    zero_count: int | None = None
    margin: float | None = None

    @property
    def total(self) -> float:
        """Circulation ``2 pi n``."""
        return TWO_PI * self.n


def _shell_weights(m: int) -> np.ndarray:
    return np.array([1.0 / sqrt(factorial(k) * factorial(m - k)) for k in range(m + 1)])


def shell_polynomial(state: AngularState) -> ShellPolynomial:
    top = state.top_shell
    if not np.any(top):
        raise EmptyShell(f"no amplitude in the n_d + n_g = {state.m} shell")
    return ShellPolynomial(state.m, top * _shell_weights(state.m))


def zeros_in_unit_disk(poly: ShellPolynomial, margin: float = 1e-9) -> int:
    """Number of zeros of ``g`` inside the unit disc (with multiplicity).

    Uses the argument principle: the winding of ``g`` along the certified
    unit circle.  ``ZeroNearCircle`` signals a (nearly) finely-tuned state.
    """
    return unit_circle_winding(poly.coeffs, margin=margin)[0]


def total_vorticity_theorem(state: AngularState, margin: float = 1e-9) -> VorticityReport:
    poly = shell_polynomial(state)
    z, min_abs = unit_circle_winding(poly.coeffs, margin=margin)
    lip = float(np.sum(np.arange(poly.m + 1) * np.abs(poly.coeffs)))
    # |g| >= min_abs on the circle and |g'| <= lip nearby: zeros are at least ~ min_abs/lip away
    est = min_abs / lip if lip > 0 else np.inf
    return VorticityReport(2 * z - state.m, "theorem", zero_count=z, margin=est)


def total_vorticity_laurent(state: AngularState) -> VorticityReport:
    """Cross-check through the Laurent form ``f(z) = z^{-m} g(z^2)``.

    The winding of ``f`` on the unit circle counts zeros minus the order-m
    pole at the origin.
    """
    poly = shell_polynomial(state)
    m = state.m

    def f(t):
        z = np.exp(TWO_PI * 1j * t)
        return z ** (-m) * poly(z * z)

    n = contour_winding(f, n_initial=256)
    return VorticityReport(n, "laurent")


def node_free_radius(state: AngularState) -> float:
    """Radius beyond which ``psi`` has no nodes at any time.

    Outside it the top shell, of size ``r^m min|g|`` on the circle, dominates
    the sum of all lower-degree monomials.  Returns ``inf`` when ``min|g|``
    cannot be bounded away from zero.
    """
    m = state.m
    if m == 0:
        return 0.0
    try:
        _, mu = unit_circle_winding(shell_polynomial(state).coeffs)
    except ZeroNearCircle:
        return np.inf
    scale = state._tables.scale
    deg = np.add.outer(np.arange(m + 1), np.arange(m + 1))
    lower = np.array([scale[deg == j].sum() for j in range(m)])
    # smallest r >= 1 with mu > sum_j lower_j r^(j-m); the right side decreases in r
    r = 1.0
    while mu <= np.sum(lower * r ** (np.arange(m) - m)):
        r *= 1.25
        if r > 1e12:
            return np.inf
    return r


def total_vorticity_bruteforce(state: AngularState, eta_probe: float | None = None,
                               T: float = 0.0, base_samples: int = 256) -> VorticityReport:
    """Phase winding of ``psi`` around the circle ``eta = eta_probe``.

    The default probe radius is ``m + 10``, pushed out to the node-free
    radius when that is larger.
    """
    if eta_probe is None:
        bound = node_free_radius(state)
        if not np.isfinite(bound):
            raise AmbiguousWinding("top shell nearly vanishes somewhere on the circle")
        eta_probe = max(state.m + 10.0, 1.01 * bound)
    r = float(eta_probe)

    def psi(t):
        ang = TWO_PI * t
        return reduced_amplitude(state, r * np.cos(ang), r * np.sin(ang), T)

    return VorticityReport(contour_winding(psi, n_initial=base_samples, snap_tol=1e-6), "brute_force")


def allowed_vorticities(m: int) -> list[int]:
    if m < 0:
        raise ValueError("m must be non-negative")
    return list(range(-m, m + 1, 2))


def _theorem_batch(m: int, coeffs: np.ndarray) -> np.ndarray:
    """Vorticity ``n`` per row of full coefficient vectors; -999 where uncertified."""
    top = coeffs[:, basis_size(m) - (m + 1):] * _shell_weights(m)
    z = unit_circle_winding_batch(top)
    return np.where(z >= 0, 2 * z - m, -999)


@dataclass
class VorticityHistogram:
    m: int
    samples: int
    seed: int
    counts: dict[int, int]
    resampled: int = 0
    extras: dict = field(default_factory=dict)

    def probability(self, n: int) -> float:
        return self.counts.get(n, 0) / self.samples

    def stderr(self, n: int) -> float:
        p = self.probability(n)
        return sqrt(p * (1 - p) / self.samples)

    def to_json(self) -> dict:
        return {"m": self.m, "samples": self.samples, "seed": self.seed,
                "counts": {str(k): v for k, v in sorted(self.counts.items())},
                "stderr": {str(k): self.stderr(k) for k in sorted(self.counts)},
                "resampled": self.resampled}


def sample_vorticity_distribution(m: int, n_samples: int, seed: int,
                                  chunk: int = 20000) -> VorticityHistogram:
    """Histogram of the theorem vorticity over uniformly randomised states.

    Chunks draw from independent child streams of ``seed`` so the result does
    not depend on how the work is scheduled.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    counts = {n: 0 for n in allowed_vorticities(m)}
    n_chunks = -(-n_samples // chunk)
    resampled = 0
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        rng = np.random.default_rng(child)
        size = min(chunk, n_samples - i * chunk)
        n = _theorem_batch(m, random_coefficients(m, rng, size))
        bad = n == -999
        while np.any(bad):
            resampled += int(bad.sum())
            n[bad] = _theorem_batch(m, random_coefficients(m, rng, int(bad.sum())))
            bad = n == -999
        vals, cnt = np.unique(n, return_counts=True)
        for v, c in zip(vals, cnt):
            counts[int(v)] += int(c)
    return VorticityHistogram(m, n_samples, seed, counts, resampled)


def generate_state_with_vorticity(m: int, target_n: int, seed: int,
                                  max_attempts: int = 1_000_000,
                                  batch: int = 4096) -> AngularState:
    """Rejection-sample a random state whose total vorticity is ``target_n``."""
    if target_n not in allowed_vorticities(m):
        raise ValueError(f"vorticity {target_n} not allowed for m={m}")
    rng = np.random.default_rng(seed)
    attempts = 0
    while attempts < max_attempts:
        size = min(batch, max_attempts - attempts)
        coeffs = random_coefficients(m, rng, size)
        hit = np.flatnonzero(_theorem_batch(m, coeffs) == target_n)
        if hit.size:
            return AngularState(m, coeffs[hit[0]])
        attempts += size
    raise AttemptsExhausted(f"no state with n={target_n} in {max_attempts} attempts")


def is_maximal(m: int, n: int) -> bool:
    return m > 0 and abs(n) == m
