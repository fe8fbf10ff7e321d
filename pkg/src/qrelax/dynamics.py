"""de Broglie guidance velocities and adaptive Cash-Karp integration of trajectories."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .basis import AngularState, FramePolynomial, PolarPoint, radial_polynomial, reduced_amplitude
from .errors import NodeProximity, StepUnderflow

TWO_PI = 2 * np.pi

# Cash-Karp 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_B4 = np.array([2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4])
_E = _B5 - _B4

RUNNING, COMPLETED, ABORTED_NEAR_NODE, STEP_UNDERFLOW = 0, 1, 2, 3
STATUS_NAMES = {COMPLETED: "completed", ABORTED_NEAR_NODE: "aborted_near_node",
                STEP_UNDERFLOW: "step_underflow", RUNNING: "running"}


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.01 * TWO_PI
    min_step: float = 1e-12
    max_rejects: int = 50
    # trajectories captured by a node orbit it at enormous speed; give up after this many steps
    max_steps_per_period: int = 20000
    # |psi|^2 below node_floor^2 times the squared local amplitude scale counts as a node hit
    node_floor: float = 1e-10

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.min_step < self.max_step:
            raise ValueError("need 0 < min_step < max_step")


class Velocity(NamedTuple):
    eta_dot: float
    phi_dot: float


@dataclass
class Trajectory:
    samples: list[tuple[float, PolarPoint]] = field(default_factory=list)
    status: str = "completed"

    @property
    def endpoint(self) -> PolarPoint:
        return self.samples[-1][1]

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "eta", "phi", "Qx", "Qy"])
            for T, p in self.samples:
                c = p.to_cartesian()
                w.writerow([repr(T), repr(p.eta), repr(p.phi), repr(float(c.qx)), repr(float(c.qy))])


def period(state: AngularState) -> float:
    """Common period of all relative phases; energies are integers so always 2 pi."""
    return TWO_PI


def velocity(state: AngularState, p, T: float = 0.0, cfg: IntegratorConfig | None = None) -> Velocity:
    """Polar guidance velocity ``(Im(d_eta psi / psi), Im(d_phi psi / psi) / eta^2)``.

    Evaluated term by term in the angular basis with the Gaussian cancelled.
    """
    cfg = cfg or IntegratorConfig()
    eta, phi = float(p[0]), float(p[1])
    idx = np.array(state.indices)
    lz = idx[:, 0] - idx[:, 1]
    terms = state.coefficients * np.exp(-1j * idx.sum(axis=1) * T + 1j * lz * phi)
    f = np.array([radial_polynomial(i, j)(eta) for i, j in state.indices])
    df = np.array([radial_polynomial(i, j).deriv()(eta) for i, j in state.indices])
    psi = np.sum(terms * f)
    if abs(psi) <= cfg.node_floor * np.sum(np.abs(terms * f)) or psi == 0:
        raise NodeProximity(f"|psi| vanishes to working precision at eta={eta}, phi={phi}")
    eta_dot = np.imag(np.sum(terms * df) / psi)
    phi_dot = np.imag(np.sum(1j * lz * terms * f) / psi) / eta ** 2
    return Velocity(float(eta_dot), float(phi_dot))


def _cartesian_velocity(state, x, y, t, floor):
    P, Px, Py = reduced_amplitude(state, x, y, t, derivatives=True)
    near = np.abs(P) <= floor * _scale(state, x, y)
    P = np.where(near, 1.0, P)
    return np.imag(Px / P), np.imag(Py / P), near


def _scale(state, x, y):
    tab = state._tables
    r = np.hypot(x, y)
    deg = np.add.outer(np.arange(tab.m + 1), np.arange(tab.m + 1))
    coef = np.array([tab.scale[deg == j].sum() for j in range(2 * tab.m + 1)])
    return np.polynomial.polynomial.polyval(r, coef)


def cartesian_velocity(state: AngularState, qx, qy, T=0.0):
    """``(Im(d_x psi / psi), Im(d_y psi / psi))`` at Cartesian points (vectorised)."""
    vx, vy, near = _cartesian_velocity(state, qx, qy, T, 0.0)
    return np.where(near, np.nan, vx), np.where(near, np.nan, vy)


@dataclass
class FlowResult:
    """End points of a batch of trajectories."""
    qx: np.ndarray
    qy: np.ndarray
    T: np.ndarray
    status: np.ndarray
    dphi: np.ndarray  # unwrapped change of the polar angle
    n_steps: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return np.hypot(self.qx, self.qy)

    @property
    def phi(self) -> np.ndarray:
        return np.mod(np.arctan2(self.qy, self.qx), TWO_PI)


def _rk_stages(state, x, y, t, h, floor):
    kx = np.empty((6,) + x.shape)
    ky = np.empty((6,) + x.shape)
    near = np.zeros(x.shape, dtype=bool)
    for s in range(6):
        xs, ys = x.copy(), y.copy()
        for j, a in enumerate(_A[s]):
            xs += h * a * kx[j]
            ys += h * a * ky[j]
        kx[s], ky[s], nr = _cartesian_velocity(state, xs, ys, t + _C[s] * h, floor)
        near |= nr
    x5 = x + h * np.tensordot(_B5, kx, axes=1)
    y5 = y + h * np.tensordot(_B5, ky, axes=1)
    ex = h * np.tensordot(_E, kx, axes=1)
    ey = h * np.tensordot(_E, ky, axes=1)
    return x5, y5, ex, ey, near


def _error_norm(x, y, x5, y5, ex, ey, cfg):
    size = np.maximum(np.hypot(x, y), np.hypot(x5, y5))
    return np.hypot(ex, ey) / (cfg.abs_tol + cfg.rel_tol * size)


def flow(state: AngularState, qx0, qy0, T0: float, T1: float,
         cfg: IntegratorConfig | None = None, record: bool = False):
    """Integrate a batch of trajectories from ``T0`` to ``T1`` (either direction).

    Every trajectory keeps its own adaptive step and error history, so the
    result for one start point does not depend on the rest of the batch.
    With ``record`` the accepted steps are returned as a list of
    ``(T, qx, qy)`` arrays per trajectory alongside the ``FlowResult``.
    """
    cfg = cfg or IntegratorConfig()
    x = np.array(qx0, dtype=float).ravel()
    y = np.array(qy0, dtype=float).ravel()
    n = x.size
    sign = 1.0 if T1 >= T0 else -1.0
    t = np.full(n, float(T0))
    h = np.full(n, cfg.max_step)
    err_prev = np.ones(n)
    rejects = np.zeros(n, dtype=int)
    status = np.zeros(n, dtype=int)
    dphi = np.zeros(n)
    steps = np.zeros(n, dtype=int)
    paths = [[(float(T0), x[i], y[i])] for i in range(n)] if record else None
    budget = cfg.max_steps_per_period * max(1, int(np.ceil(abs(T1 - T0) / TWO_PI - 1e-9)))
    if T1 == T0:
        status[:] = COMPLETED
    while True:
        idx = np.flatnonzero(status == RUNNING)
        if idx.size == 0:
            break
        remaining = np.abs(T1 - t[idx])
        last = h[idx] >= remaining
        hs = np.where(last, remaining, h[idx])
        xi, yi = x[idx], y[idx]
        x5, y5, ex, ey, near = _rk_stages(state, xi, yi, t[idx], sign * hs, cfg.node_floor)
        err = _error_norm(xi, yi, x5, y5, ex, ey, cfg)
        err = np.where(np.isfinite(err), err, np.inf)
        acc = (err <= 1.0) & ~near
        # near-node aborts: only when the step cannot be shrunk out of the node's reach
        node_hit = near & (hs <= 1e3 * cfg.min_step)
        status[idx[node_hit]] = ABORTED_NEAR_NODE
        a = idx[acc]
        if a.size:
            dphi[a] += np.angle((x5[acc] + 1j * y5[acc]) * (xi[acc] - 1j * yi[acc]))
            x[a], y[a] = x5[acc], y5[acc]
            t[a] = np.where(last[acc], T1, t[a] + sign * hs[acc])
            steps[a] += 1
            rejects[a] = 0
            e = np.maximum(err[acc], 1e-10)
            fac = np.clip(0.9 * e ** (-0.7 / 5) * err_prev[a] ** (0.4 / 5), 0.2, 5.0)
            h[a] = np.minimum(np.where(last[acc], h[a], hs[acc] * fac), cfg.max_step)
            err_prev[a] = e
            done = a[last[acc]]
            status[done] = COMPLETED
            status[a[(steps[a] >= budget) & ~last[acc]]] = STEP_UNDERFLOW
            if record:
                for k in a:
                    paths[k].append((float(t[k]), x[k], y[k]))
        r = ~acc & ~node_hit
        rj = idx[r]
        if rj.size:
            e = np.where(near[r], 1e6, err[r])
            h[rj] = hs[r] * np.clip(0.9 * e ** (-1 / 5), 0.1, 0.9)
            rejects[rj] += 1
            bad = (h[rj] < cfg.min_step) | (rejects[rj] > cfg.max_rejects)
            status[rj[bad]] = np.where(near[r][bad], ABORTED_NEAR_NODE, STEP_UNDERFLOW)
    res = FlowResult(x, y, t, status, dphi, steps)
    return (res, paths) if record else res


def step(state: AngularState, p, T: float, h: float, cfg: IntegratorConfig | None = None):
    """One embedded Cash-Karp step from polar point ``p``.

    Returns ``(p_new, h_next, error_estimate)`` where the error estimate is
    normalised so that values <= 1 pass the tolerance.
    """
    cfg = cfg or IntegratorConfig()
    if abs(h) < cfg.min_step:
        raise StepUnderflow(f"step {h} below min_step")
    c = PolarPoint(*p).to_cartesian()
    x, y = np.array([c.qx]), np.array([c.qy])
    x5, y5, ex, ey, near = _rk_stages(state, x, y, np.array([T]), np.array([h]), cfg.node_floor)
    if near[0]:
        raise NodeProximity("step samples the velocity on a node")
    err = float(_error_norm(x, y, x5, y5, ex, ey, cfg)[0])
    fac = min(5.0, max(0.2, 0.9 * max(err, 1e-10) ** (-1 / 5)))
    p_new = PolarPoint(float(np.hypot(x5[0], y5[0])), float(np.mod(np.arctan2(y5[0], x5[0]), TWO_PI)))
    return p_new, min(abs(h) * fac, cfg.max_step), err


def evolve(state: AngularState, p0, T0: float, T1: float,
           cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate one trajectory, recording every accepted step."""
    c = PolarPoint(*p0).to_cartesian()
    res, paths = flow(state, [c.qx], [c.qy], T0, T1, cfg, record=True)
    samples = [(T, PolarPoint(float(np.hypot(qx, qy)), float(np.mod(np.arctan2(qy, qx), TWO_PI))))
               for T, qx, qy in paths[0]]
    return Trajectory(samples, STATUS_NAMES[int(res.status[0])])


def frame_velocity(state: AngularState, T: float):
    """Vectorised Cartesian velocity field frozen at time ``T``."""
    frame = FramePolynomial(state, T)

    def v(qx, qy):
        P, Px, Py = frame(qx, qy, derivatives=True)
        return np.imag(Px / P), np.imag(Py / P)
    return v
