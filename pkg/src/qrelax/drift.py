"""One-period drift fields on a polar grid, their classification, and long-run radial drift."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import AngularState
from .dynamics import COMPLETED, TWO_PI, IntegratorConfig, flow
from .errors import FineTuned, InconsistentAcrossRadii
from .vorticity import node_free_radius

log = logging.getLogger(__name__)

OK, ABORTED = "ok", "aborted_near_node"


@dataclass(frozen=True)
class GridSpec:
    eta_min: float = 5.0
    eta_max: float = 20.0
    n_eta: int = 100
    n_phi: int = 100

    def __post_init__(self):
        if not 0 < self.eta_min < self.eta_max:
            raise ValueError("need 0 < eta_min < eta_max")
        if self.n_eta < 8 or self.n_phi < 8:
            raise ValueError("grid needs at least 8 points per axis")

    @property
    def eta(self) -> np.ndarray:
        return np.linspace(self.eta_min, self.eta_max, self.n_eta)

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_phi) * (TWO_PI / self.n_phi)


@dataclass
class DriftField:
    """Displacements after one period; rows are radii, columns angles."""
    grid: GridSpec
    d_eta: np.ndarray
    d_phi: np.ndarray
    status: np.ndarray  # bool, True where the cell was integrated successfully

    @property
    def aborted_fraction(self) -> float:
        return float(1.0 - self.status.mean())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eta", "phi", "d_eta", "d_phi", "status"])
            for i, eta in enumerate(self.grid.eta):
                for j, phi in enumerate(self.grid.phi):
                    ok = bool(self.status[i, j])
                    w.writerow([repr(float(eta)), repr(float(phi)),
                                repr(float(self.d_eta[i, j])) if ok else "nan",
                                repr(float(self.d_phi[i, j])) if ok else "nan",
                                OK if ok else ABORTED])

    @classmethod
    def read_csv(cls, path) -> "DriftField":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"eta", "phi", "d_eta", "d_phi", "status"}:
            raise ValueError(f"{path}: not a drift-field CSV")
        etas = sorted({float(r["eta"]) for r in rows})
        phis = sorted({float(r["phi"]) for r in rows})
        grid = GridSpec(etas[0], etas[-1], len(etas), len(phis))
        ie = {e: i for i, e in enumerate(etas)}
        ip = {p: j for j, p in enumerate(phis)}
        shape = (len(etas), len(phis))
        d_eta, d_phi = np.full(shape, np.nan), np.full(shape, np.nan)
        status = np.zeros(shape, dtype=bool)
        for r in rows:
            i, j = ie[float(r["eta"])], ip[float(r["phi"])]
            status[i, j] = r["status"] == OK
            d_eta[i, j], d_phi[i, j] = float(r["d_eta"]), float(r["d_phi"])
        return cls(grid, d_eta, d_phi, status)


def compute_drift_field(state: AngularState, grid: GridSpec | None = None,
                        cfg: IntegratorConfig | None = None, T0: float = 0.0,
                        rows=None) -> DriftField:
    """Integrate every grid point over one period and record ``(d_eta, d_phi)``.

    ``d_phi`` is the unwrapped angular displacement.  Cells whose trajectory
    aborts (node proximity or step underflow) are flagged and left as NaN.
    ``rows`` restricts the work to the given radial indices; the other rows
    are left flagged.
    """
    grid = grid or GridSpec()
    rows = np.arange(grid.n_eta) if rows is None else np.asarray(rows, dtype=int)
    E, P = np.meshgrid(grid.eta[rows], grid.phi, indexing="ij")
    res = flow(state, (E * np.cos(P)).ravel(), (E * np.sin(P)).ravel(), T0, T0 + TWO_PI, cfg)
    shape = (grid.n_eta, grid.n_phi)
    ok = np.zeros(shape, dtype=bool)
    d_eta, d_phi = np.full(shape, np.nan), np.full(shape, np.nan)
    done = (res.status == COMPLETED).reshape(E.shape)
    ok[rows] = done
    d_eta[rows] = np.where(done, res.eta.reshape(E.shape) - E, np.nan)
    d_phi[rows] = np.where(done, res.dphi.reshape(E.shape), np.nan)
    return DriftField(grid, d_eta, d_phi, ok)


@dataclass(frozen=True)
class Components:
    """Radial and angular parts of a drift field with summary magnitudes."""
    radial: np.ndarray
    angular: np.ndarray
    max_radial: float
    max_angular: float
    inward_fraction: float


def decompose(f: DriftField) -> Components:
    r = np.where(f.status, f.d_eta, np.nan)
    a = np.where(f.status, f.d_phi, np.nan)
    if not f.status.any():
        return Components(r, a, 0.0, 0.0, float("nan"))
    # the angular part is compared as arc length so both are in units of Q
    arc = a * f.grid.eta[:, None]
    nz = r[f.status] != 0
    inward = float(np.mean(r[f.status][nz] < 0)) if nz.any() else float("nan")
    return Components(r, a, float(np.nanmax(np.abs(r))), float(np.nanmax(np.abs(arc))), inward)


@dataclass
class DriftClass:
    kind: str
    sign_changes: int
    attractive_axes: list = field(default_factory=list)
    repulsive_axes: list = field(default_factory=list)
    mechanism_aligned: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind, "sign_changes": self.sign_changes,
                "attractive_axes": [float(a) for a in self.attractive_axes],
                "repulsive_axes": [float(a) for a in self.repulsive_axes],
                "mechanism_aligned": bool(self.mechanism_aligned)}


KINDS = {0: "Type0", 4: "Type1", 8: "Type2"}


def ring_crossings(phi: np.ndarray, values: np.ndarray, dead_zone: float = 1e-3):
    """Sign changes of a periodic sampled function.

    Samples with ``|v| < dead_zone * max|v|`` (and NaNs) are ignored.  Returns
    ``(descending, ascending)`` crossing angles found by linear interpolation
    between the retained neighbours, in increasing ``phi`` direction.
    """
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v)
    if not keep.any():
        return [], []
    top = np.max(np.abs(v[keep]))
    keep &= np.abs(v) >= dead_zone * top
    p, v = phi[keep], v[keep]
    if v.size < 2:
        return [], []
    p2 = np.append(p, p[0] + TWO_PI)
    v2 = np.append(v, v[0])
    down, up = [], []
    for k in range(v.size):
        a, b = v2[k], v2[k + 1]
        if np.sign(a) == np.sign(b):
            continue
        x = float(np.mod(p2[k] + (p2[k + 1] - p2[k]) * a / (a - b), TWO_PI))
        (down if a > 0 else up).append(x)
    return sorted(down), sorted(up)


def _periodic_interp(phi_grid, values, x):
    p = np.append(phi_grid, TWO_PI)
    v = np.append(values, values[0])
    good = np.isfinite(v)
    return float(np.interp(np.mod(x, TWO_PI), p[good], v[good]))


def classify(f: DriftField, probe_radii=(8.0, 10.0, 12.0), dead_zone: float = 1e-3,
             max_aborted: float = 0.05, strict: bool = False) -> DriftClass:
    """Type0/1/2 from the number of sign changes of ``d_phi`` around probe rings.

    A descending crossing (``d_phi`` from positive to negative) is an
    attractive axis, an ascending one repulsive.  The field is mechanism
    aligned when ``d_eta`` is negative at every attractive crossing and
    positive at every repulsive one, on every ring used.  Rings disagreeing
    on the count give ``Unclassified`` (or raise with ``strict``).
    """
    g = f.grid
    etas = g.eta
    counts, rings = {}, []
    for r in probe_radii:
        if not g.eta_min <= r <= g.eta_max:
            raise ValueError(f"probe radius {r} outside grid annulus")
        i = int(np.argmin(np.abs(etas - r)))
        if 1.0 - f.status[i].mean() > max_aborted:
            log.info("ring eta=%.3g skipped: too many aborted cells", etas[i])
            continue
        down, up = ring_crossings(g.phi, np.where(f.status[i], f.d_phi[i], np.nan), dead_zone)
        counts[float(etas[i])] = len(down) + len(up)
        rings.append((i, down, up))
    if not rings:
        return DriftClass("Unclassified", -1, diagnostics={"reason": "all probe rings aborted"})
    distinct = set(counts.values())
    if len(distinct) > 1:
        if strict:
            raise InconsistentAcrossRadii(f"sign-change counts differ across rings: {counts}")
        return DriftClass("Unclassified", -1, diagnostics={"counts": counts})
    n = distinct.pop()
    aligned = True
    for i, down, up in rings:
        de = np.where(f.status[i], f.d_eta[i], np.nan)
        aligned &= all(_periodic_interp(g.phi, de, x) < 0 for x in down)
        aligned &= all(_periodic_interp(g.phi, de, x) > 0 for x in up)
    mid = rings[len(rings) // 2]
    diag = {"counts": counts}
    if n == 0:
        diag["rotation"] = int(np.sign(np.nanmedian(f.d_phi[mid[0]])))
    return DriftClass(KINDS.get(n, "Unclassified"), n, mid[1], mid[2], bool(aligned), diag)


DEFAULT_PROBES = (8.0, 10.0, 12.0)


def probe_radii_for(state: AngularState, base=DEFAULT_PROBES, clearance: float = 1.2) -> tuple:
    """Default probe radii, scaled out when nodes may reach beyond them.

    Close to fine tuning a zero of the top-shell polynomial sits near the
    unit circle and nodes wander far out; rings inside that region do not
    see the asymptotic angular pattern.  The rings are pushed beyond
    ``clearance`` times the node-free radius.
    """
    r = node_free_radius(state)
    if not np.isfinite(r):
        raise FineTuned("top-shell polynomial vanishes on the unit circle")
    s = max(1.0, clearance * r / base[0])
    return tuple(float(b * s) for b in base)


def classify_state(state: AngularState, n_phi: int = 256, cfg: IntegratorConfig | None = None,
                   dead_zone: float = 1e-3) -> tuple[DriftClass, DriftField]:
    """Compute only the probe rings of a state's drift field and classify it."""
    radii = probe_radii_for(state)
    grid = GridSpec(radii[0], radii[-1], 9, n_phi)
    rows = [int(np.argmin(np.abs(grid.eta - r))) for r in radii]
    f = compute_drift_field(state, grid, cfg, rows=rows)
    return classify(f, radii, dead_zone), f


@dataclass
class RadialDriftResult:
    eta_initial: np.ndarray
    eta_final: np.ndarray
    ok: np.ndarray

    @property
    def d_eta(self) -> np.ndarray:
        return (self.eta_final - self.eta_initial)[self.ok]

    @property
    def summary(self) -> dict:
        d = self.d_eta
        q1, med, q3 = np.percentile(d, [25, 50, 75]) if d.size else (np.nan,) * 3
        return {"n": int(self.ok.size), "aborted": int((~self.ok).sum()),
                "median": float(med), "q1": float(q1), "q3": float(q3)}


def radial_drift_experiment(state: AngularState, n_traj: int = 100, eta_range=(10.0, 20.0),
                            n_periods: int = 100, seed: int = 0,
                            cfg: IntegratorConfig | None = None,
                            area_uniform: bool = True) -> RadialDriftResult:
    """Evolve random exterior starts for ``n_periods`` periods and record radial drift."""
    lo, hi = eta_range
    if not 0 < lo < hi:
        raise ValueError("need 0 < eta_min < eta_max")
    rng = np.random.default_rng(seed)
    u = rng.random(n_traj)
    eta = np.sqrt(lo ** 2 + u * (hi ** 2 - lo ** 2)) if area_uniform else lo + u * (hi - lo)
    phi = rng.random(n_traj) * TWO_PI
    res = flow(state, eta * np.cos(phi), eta * np.sin(phi), 0.0, n_periods * TWO_PI, cfg)
    ok = res.status == COMPLETED
    return RadialDriftResult(eta, np.where(ok, res.eta, np.nan), ok)
