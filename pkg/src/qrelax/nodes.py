"""Nodes of psi: location, vorticity, tracking through time, and the M=3 closed forms."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import (AngularState, FramePolynomial, amplitude_scale, angular_to_cartesian,
                    reduced_amplitude)
from .errors import (AmbiguousWinding, Degenerate, FineTuned, NumericalError,
                     TrackingAmbiguity)
from .vorticity import _shell_weights, node_free_radius, total_vorticity_theorem
from .winding import TWO_PI, contour_winding

log = logging.getLogger(__name__)

MERGE_RADIUS = 1e-6
PAIR_RADIUS = 0.5


@dataclass(frozen=True)
class Node:
    qx: float
    qy: float
    T: float
    winding: int
    residual: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.qx, self.qy)

    @property
    def fine_tuned(self) -> bool:
        return abs(self.winding) != 1


@dataclass(frozen=True)
class EllipseM3:
    semi_minor: float
    semi_major: float
    orientation: float  # direction of the major axis, radians in [0, pi)
    area: float


# ---------------------------------------------------------------------------
# Newton iteration on (Re P, Im P)

def _shell_scale(state: AngularState, x, y):
    r = np.maximum(np.hypot(x, y), 1.0)
    return amplitude_scale(state, r, 0.0 * r)


def newton_zeros(state: AngularState, T: float, x0, y0, max_iter: int = 60,
                 rtol: float = 1e-13, max_step: float = 1.0):
    """Vectorised damped Newton from seeds ``(x0, y0)``.

    Returns ``(x, y, converged)``; ``converged`` means the reduced residual
    ``|P|`` fell below ``rtol`` times the local shell scale.
    """
    frame = FramePolynomial(state, T)
    x = np.array(x0, dtype=float).ravel()
    y = np.array(y0, dtype=float).ravel()
    active = np.ones(x.size, dtype=bool)
    done = np.zeros(x.size, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        P, Px, Py = frame(x[idx], y[idx], derivatives=True)
        small = np.abs(P) <= rtol * frame.scale(np.maximum(np.hypot(x[idx], y[idx]), 1.0))
        done[idx[small]] = True
        det = Px.real * Py.imag - Py.real * Px.imag
        sing = (np.abs(det) < 1e-300) & ~small
        active[idx[small | sing]] = False
        keep = ~(small | sing)
        idx, P, Px, Py, det = idx[keep], P[keep], Px[keep], Py[keep], det[keep]
        dx = (Py.imag * P.real - Py.real * P.imag) / det
        dy = (Px.real * P.imag - Px.imag * P.real) / det
        step = np.hypot(dx, dy)
        lim = max_step * np.maximum(1.0, 0.25 * np.hypot(x[idx], y[idx]))
        fac = np.where(step > lim, lim / np.maximum(step, 1e-300), 1.0)
        x[idx] -= fac * dx
        y[idx] -= fac * dy
    # last check for points that stopped moving on the final iteration
    idx = np.flatnonzero(active & ~done)
    if idx.size:
        P = frame(x[idx], y[idx])
        done[idx] = np.abs(P) <= rtol * frame.scale(np.maximum(np.hypot(x[idx], y[idx]), 1.0))
    return x, y, done


def _dedup(x, y, radius=MERGE_RADIUS):
    pts = []
    for xi, yi in zip(x, y):
        if all(np.hypot(xi - a, yi - b) > radius for a, b in pts):
            pts.append((float(xi), float(yi)))
    return pts


def _far_seeds(state: AngularState, r_inner: float, r_outer: float, n_rad: int = 24):
    """Seeds along rays where the top shell is small, out to the node-free radius."""
    if not np.isfinite(r_outer) or r_outer <= r_inner or state.m == 0:
        return np.empty(0), np.empty(0)
    m = state.m
    phi = np.linspace(0, TWO_PI, 720, endpoint=False)
    top = state.top_shell
    k = np.arange(m + 1)
    G = np.abs(np.exp(1j * np.outer(phi, 2 * k - m)) @ (top * _shell_weights(m)))
    minima = phi[(G <= np.roll(G, 1)) & (G <= np.roll(G, -1))]
    radii = np.geomspace(r_inner, r_outer, n_rad)
    offsets = np.array([-0.04, 0.0, 0.04])
    ang = (minima[:, None] + offsets[None, :]).ravel()
    R, A = np.meshgrid(radii, ang)
    return (R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()


def _seed_grid(radius: float, n: int):
    g = np.linspace(-radius, radius, n)
    X, Y = np.meshgrid(g, g)
    inside = X ** 2 + Y ** 2 <= radius ** 2 * 1.0001
    return X[inside], Y[inside]


def _locate(state, T, seeds_x, seeds_y, merge_radius=MERGE_RADIUS):
    x, y, ok = newton_zeros(state, T, seeds_x, seeds_y)
    if np.any(~ok):
        log.debug("%d seeds did not converge", int(np.sum(~ok)))
    ok &= np.isfinite(x) & np.isfinite(y)
    return _dedup(x[ok], y[ok], merge_radius)


def find_nodes(state: AngularState, T: float = 0.0, radius: float | None = None,
               seed_density: int = 60, merge_radius: float = MERGE_RADIUS,
               check_total: bool = True) -> list[Node]:
    """All nodes of ``psi`` at time ``T``.

    Newton is seeded on a ``seed_density`` square grid over the disc
    ``eta <= radius`` (default ``m + 6``) and along the rays where far
    nodes can live.  With ``check_total`` the winding sum is compared with the
    theorem vorticity and the seeding is densified on mismatch.
    """
    if state.m == 0:
        return []
    radius = state.m + 6.0 if radius is None else radius
    sx, sy = _seed_grid(radius, seed_density)
    fx, fy = _far_seeds(state, radius, 1.05 * node_free_radius(state))
    pts = _locate(state, T, np.concatenate([sx, fx]), np.concatenate([sy, fy]), merge_radius)
    nodes = _make_nodes(state, T, pts)
    if check_total and nodes is not None:
        target = total_vorticity_theorem(state).n
        for density in (2 * seed_density, 4 * seed_density):
            if sum(n.winding for n in nodes) == target:
                break
            log.info("winding sum mismatch at T=%g, reseeding with density %d", T, density)
            sx, sy = _seed_grid(radius, density)
            fx, fy = _far_seeds(state, radius, 1.05 * node_free_radius(state), n_rad=96)
            more = _locate(state, T, np.concatenate([sx, fx]), np.concatenate([sy, fy]), merge_radius)
            nodes = _make_nodes(state, T, _dedup(*zip(*(pts + more)), merge_radius) if pts or more else [])
    if len(nodes) > state.m ** 2:
        raise NumericalError(f"found {len(nodes)} nodes, more than m^2 = {state.m ** 2}")
    return nodes


def _make_nodes(state, T, pts) -> list[Node]:
    nodes = []
    for i, (x, y) in enumerate(pts):
        others = [np.hypot(x - a, y - b) for j, (a, b) in enumerate(pts) if j != i]
        radius = min([1e-3] + [0.5 * d for d in others])
        w = _winding_at(state, x, y, T, radius)
        res = abs(reduced_amplitude(state, x, y, T)) * np.exp(-0.5 * (x * x + y * y)) / np.sqrt(np.pi)
        nodes.append(Node(x, y, T, w, float(res)))
    return nodes


def _winding_at(state, x, y, T, radius):
    def f(t):
        a = TWO_PI * t
        return reduced_amplitude(state, x + radius * np.cos(a), y + radius * np.sin(a), T)
    for _ in range(6):
        try:
            return contour_winding(f, n_initial=32)
        except AmbiguousWinding:
            radius *= 0.5
    raise AmbiguousWinding(f"cannot resolve the winding around ({x}, {y})")


def node_winding(state: AngularState, node: Node, T: float | None = None,
                 radius: float = 1e-3) -> int:
    """Phase winding of ``psi`` around a small circle centred on the node."""
    return _winding_at(state, node.qx, node.qy, node.T if T is None else T, radius)


def node_winding_sign_linearized(state: AngularState, node: Node, T: float | None = None,
                                 threshold: float = 1e-10) -> int:
    """Vorticity sign from the first derivatives ``a_x, a_y`` at the node.

    ``psi ~ a_x dx + a_y dy`` winds anticlockwise exactly when
    ``Im(conj(a_x) a_y) > 0``.
    """
    T = node.T if T is None else T
    _, ax, ay = reduced_amplitude(state, node.qx, node.qy, T, derivatives=True)
    scale = float(_shell_scale(state, node.qx, node.qy))
    if abs(ax) < threshold * scale or abs(ay) < threshold * scale:
        raise FineTuned("a first derivative vanishes at the node")
    s = float(np.imag(np.conj(ax) * ay))
    if abs(s) < threshold * scale ** 2:
        raise FineTuned("node derivatives are parallel")
    return 1 if s > 0 else -1


# ---------------------------------------------------------------------------
# tracking

@dataclass
class NodeTrack:
    id: int
    winding: int
    times: list[float] = field(default_factory=list)
    points: list[tuple[float, float]] = field(default_factory=list)
    birth: tuple[float, int] | None = None
    death: tuple[float, int] | None = None

    @property
    def last(self) -> tuple[float, float]:
        return self.points[-1]

    def append(self, T, p):
        self.times.append(float(T))
        self.points.append((float(p[0]), float(p[1])))

    def prepend(self, T, p):
        self.times.insert(0, float(T))
        self.points.insert(0, (float(p[0]), float(p[1])))


def _pair(items_a, items_b, radius):
    """Greedy nearest pairing of points in ``items_a`` with points in ``items_b``."""
    cand = []
    for i, pa in enumerate(items_a):
        for j, pb in enumerate(items_b):
            d = np.hypot(pa[0] - pb[0], pa[1] - pb[1])
            if d <= radius:
                cand.append((d, i, j))
    cand.sort()
    used_a, used_b, pairs = set(), set(), []
    for _, i, j in cand:
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            pairs.append((i, j))
    return (pairs, [i for i in range(len(items_a)) if i not in used_a],
            [j for j in range(len(items_b)) if j not in used_b])


def _ring_seeds(x, y, radii, n_ang=12):
    ang = np.linspace(0, TWO_PI, n_ang, endpoint=False)
    R, A = np.meshgrid(np.asarray(radii, dtype=float), ang)
    return (x + R * np.cos(A)).ravel(), (y + R * np.sin(A)).ravel()


def _near(p, pts, tol):
    return any(np.hypot(p[0] - a, p[1] - b) <= tol for a, b in pts)


def _continue(state, active, Tn, pair_radius):
    """Move every active track to ``Tn``; returns ``(moved, dead)`` or None if ambiguous."""
    if not active:
        return [], []
    last = np.array([t.last for t in active])
    x, y, ok = newton_zeros(state, Tn, last[:, 0], last[:, 1], max_iter=30)
    n = len(active)
    gap = pair_radius * np.maximum(1.0, np.hypot(last[:, 0], last[:, 1]))
    for i in range(n):
        for j in range(n):
            if i != j:
                gap[i] = min(gap[i], np.hypot(*(last[i] - last[j])))
    jump = np.hypot(x - last[:, 0], y - last[:, 1])
    good = ok & (jump < 0.3 * gap)
    for i in range(n):
        for j in range(i + 1, n):
            if good[i] and good[j] and np.hypot(x[i] - x[j], y[i] - y[j]) <= MERGE_RADIUS:
                good[i] = good[j] = False
    moved = [(active[i], (x[i], y[i])) for i in range(n) if good[i]]
    lost = [active[i] for i in range(n) if not good[i]]
    if not lost:
        return moved, []
    plus = [t for t in lost if t.winding == 1]
    minus = [t for t in lost if t.winding == -1]
    if len(plus) + len(minus) != len(lost):
        return None
    # far from the origin nodes move fast and a pair can still be well apart one
    # step before it meets, so no distance cap here; the search below decides
    pairs, lp, lm = _pair([t.last for t in plus], [t.last for t in minus], np.inf)
    if lp or lm:
        return None
    kept = [p for _, p in moved]
    for i, j in pairs:
        a, b = plus[i].last, minus[j].last
        d = np.hypot(a[0] - b[0], a[1] - b[1])
        sx, sy = _ring_seeds(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), [0.25 * d, 0.5 * d, d])
        for q in _locate(state, Tn, sx, sy):
            if not _near(q, kept, 1e-6) and min(np.hypot(q[0] - a[0], q[1] - a[1]),
                                                np.hypot(q[0] - b[0], q[1] - b[1])) < 2 * d + 1e-3:
                return None  # the pair still exists, the step was too coarse
    return moved, [(plus[i], minus[j]) for i, j in pairs]


def _search_births(state, T, active, gx, gy, pair_radius):
    """Nodes at ``T`` not belonging to any active track, grouped into opposite pairs."""
    known = [t.last for t in active]
    fresh = [p for p in _locate(state, T, gx, gy) if not _near(p, known, 1e-6)]
    if not fresh:
        return []
    extra = []
    for p in fresh:
        sx, sy = _ring_seeds(p[0], p[1], [0.01, 0.05, 0.15, 0.4])
        for q in _locate(state, T, sx, sy):
            if not _near(q, known + fresh + extra, 1e-6):
                extra.append(q)
    fresh += extra
    everything = known + fresh
    wind = []
    for p in fresh:
        d = [np.hypot(p[0] - a, p[1] - b) for a, b in everything if (a, b) != p]
        wind.append(_winding_at(state, p[0], p[1], T, min([1e-3] + [0.5 * v for v in d])))
    plus = [p for p, w in zip(fresh, wind) if w == 1]
    minus = [p for p, w in zip(fresh, wind) if w == -1]
    if len(plus) + len(minus) != len(fresh):
        raise TrackingAmbiguity(f"new node with winding other than +-1 at T={T}")
    pairs, lp, lm = _pair(plus, minus, pair_radius)
    if lp or lm:
        more, lp2, lm2 = _pair([plus[i] for i in lp], [minus[j] for j in lm], np.inf)
        if lp2 or lm2:
            raise TrackingAmbiguity(f"unpaired node appeared at T={T}")
        log.info("pairing nodes further apart than %g at T=%g", pair_radius, T)
        pairs += [(lp[i], lm[j]) for i, j in more]
    return [(plus[i], minus[j]) for i, j in pairs]


def _backfill(state, ta, tb, times, tracks):
    """Extend a freshly found pair backwards in time until it annihilates."""
    for T in reversed(times):
        if T >= ta.times[0]:
            continue
        others = [tr.points[tr.times.index(T)] for tr in tracks
                  if tr is not ta and tr is not tb and T in tr.times]
        (xa, xb), (ya, yb) = zip(ta.points[0], tb.points[0])
        x, y, ok = newton_zeros(state, T, [xa, xb], [ya, yb], max_iter=30)
        sep = np.hypot(xa - xb, ya - yb)
        jumps = np.hypot(x - [xa, xb], y - [ya, yb])
        alive = (ok.all() and np.hypot(x[0] - x[1], y[0] - y[1]) > MERGE_RADIUS
                 and np.all(jumps < 0.5 * sep)
                 and not _near((x[0], y[0]), others, 1e-6) and not _near((x[1], y[1]), others, 1e-6))
        if not alive:
            return
        ta.prepend(T, (x[0], y[0]))
        tb.prepend(T, (x[1], y[1]))


def track_nodes(state: AngularState, T0: float, T1: float, dt: float = TWO_PI / 2000,
                radius: float | None = None, seed_density: int = 24, search_every: int = 8,
                max_halvings: int = 8, pair_radius: float = PAIR_RADIUS) -> list[NodeTrack]:
    """Follow every node over ``[T0, T1]``.

    Tracks advance by Newton continuation at every step; a step is halved when
    a node jumps too far relative to its neighbours, two tracks collapse onto
    one zero, or a disappearance cannot be explained as a pair annihilation.
    A global seed search every ``search_every`` steps picks up created pairs,
    which are then followed backwards to their creation time.
    """
    if T1 <= T0:
        raise ValueError("T1 must exceed T0")
    radius = state.m + 6.0 if radius is None else radius
    tracks: list[NodeTrack] = []
    for node in find_nodes(state, T0, radius):
        tr = NodeTrack(len(tracks), node.winding)
        tr.append(T0, node.position)
        tracks.append(tr)
    active = list(tracks)
    sx, sy = _seed_grid(radius, seed_density)
    fx, fy = _far_seeds(state, radius, 1.05 * node_free_radius(state), n_rad=12)
    gx, gy = np.concatenate([sx, fx]), np.concatenate([sy, fy])
    times = [float(T0)]
    T, step = float(T0), 0

    def add_pairs(pairs):
        nonlocal active
        for pa, pb in pairs:
            ta, tb = NodeTrack(len(tracks), 1), NodeTrack(len(tracks) + 1, -1)
            ta.append(T, pa)
            tb.append(T, pb)
            tracks.extend([ta, tb])
            _backfill(state, ta, tb, times, tracks)
            ta.birth, tb.birth = (ta.times[0], tb.id), (tb.times[0], ta.id)
            active += [ta, tb]

    def advance():
        h = min(dt, T1 - T)
        for _ in range(max_halvings + 1):
            result = _continue(state, active, T + h, pair_radius)
            if result is not None:
                return h, result
            h *= 0.5
        return h, None

    while T < T1 - 1e-12:
        h, result = advance()
        if result is None:
            # usually a pair was created since the last search and one of its
            # members is about to annihilate an existing node: look closely
            # around the current nodes and retry
            rings = [_ring_seeds(*t.last, [0.02, 0.1, 0.3, 1.0, 2.0], n_ang=16) for t in active]
            rx = np.concatenate([gx] + [r[0] for r in rings])
            ry = np.concatenate([gy] + [r[1] for r in rings])
            add_pairs(_search_births(state, T, active, rx, ry, pair_radius))
            h, result = advance()
            if result is None:
                raise TrackingAmbiguity(f"node association failed near T={T}")
        T = T + h if T1 - (T + h) > 1e-12 else float(T1)
        times.append(T)
        step += 1
        moved, dead = result
        for tr, p in moved:
            tr.append(T, p)
        for ta, tb in dead:
            ta.death, tb.death = (T, tb.id), (T, ta.id)
            active.remove(ta)
            active.remove(tb)
        if step % search_every == 0 or T >= T1:
            add_pairs(_search_births(state, T, active, gx, gy, pair_radius))
    return tracks


def frame_windings(tracks: list[NodeTrack]) -> dict[float, int]:
    """Sum of windings of the nodes alive at every recorded time."""
    out: dict[float, int] = {}
    for tr in tracks:
        for T in tr.times:
            out[T] = out.get(T, 0) + tr.winding
    return out


# ---------------------------------------------------------------------------
# M = 3 closed forms

def _m3_cartesian(state: AngularState):
    if state.m != 1:
        raise ValueError("closed forms need an m = 1 (M = 3) state")
    cart = angular_to_cartesian(state)
    D00, D10, D01 = cart.coefficient(0, 0), cart.coefficient(1, 0), cart.coefficient(0, 1)
    return D00, D10, D01


def node_path_m3(state: AngularState, T):
    """Position ``(qx, qy)`` of the single node of an M=3 state at time(s) ``T``."""
    D00, D10, D01 = _m3_cartesian(state)
    d00, d10, d01 = abs(D00), abs(D10), abs(D01)
    t00, t10, t01 = np.angle(D00), np.angle(D10), np.angle(D01)
    den = np.sin(t10 - t01)
    if abs(den) < 1e-9 or d10 == 0 or d01 == 0:
        raise FineTuned("Cartesian phases differ by a multiple of pi: the node path is a line")
    T = np.asarray(T, dtype=float)
    qx = d00 / (np.sqrt(2) * d10) * np.sin(t01 - t00 - T) / den
    qy = d00 / (np.sqrt(2) * d01) * np.sin(t10 - t00 - T) / (-den)
    return qx, qy


def node_ellipse_m3(state: AngularState) -> EllipseM3:
    """Geometry of the closed elliptical path traced by the M=3 node."""
    if state.m != 1:
        raise ValueError("closed forms need an m = 1 (M = 3) state")
    c00, c10, c01 = (abs(state.coefficient(0, 0)), abs(state.coefficient(1, 0)),
                     abs(state.coefficient(0, 1)))
    if abs(c10 - c01) < 1e-12:
        raise Degenerate("|C10| = |C01|: the ellipse degenerates")
    p10, p01 = np.angle(state.coefficient(1, 0)), np.angle(state.coefficient(0, 1))
    orientation = float(np.mod(0.5 * (p01 - p10 + np.pi), np.pi))
    return EllipseM3(semi_minor=c00 / (c10 + c01), semi_major=c00 / abs(c10 - c01),
                     orientation=orientation, area=np.pi * c00 ** 2 / abs(c10 ** 2 - c01 ** 2))
