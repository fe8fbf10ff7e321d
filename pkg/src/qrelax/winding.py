"""Phase winding of complex functions along closed curves."""
from __future__ import annotations

import numpy as np

from .errors import AmbiguousWinding, ZeroNearCircle

TWO_PI = 2 * np.pi


def _increments(v: np.ndarray) -> np.ndarray:
    return np.angle(v[1:] * np.conj(v[:-1]))


def contour_winding(func, n_initial: int = 64, max_increment: float = np.pi / 2,
                    max_rounds: int = 40, snap_tol: float = 1e-3) -> int:
    """Winding number of ``func(t)`` about 0 for ``t`` in [0, 1] (closed curve).

    Arcs whose phase increment reaches ``max_increment`` are bisected until
    every increment is below it.  ``func`` must accept an array of ``t``.
    """
    t = np.linspace(0.0, 1.0, n_initial + 1)
    v = np.asarray(func(t), dtype=complex)
    v[-1] = v[0]
    for _ in range(max_rounds):
        if np.any(v == 0) or not np.all(np.isfinite(v)):
            raise AmbiguousWinding("function vanishes or is not finite on the contour")
        d = _increments(v)
        bad = np.flatnonzero(np.abs(d) >= max_increment)
        if bad.size == 0:
            w = d.sum() / TWO_PI
            n = int(round(w))
            if abs(w - n) > snap_tol:
                raise AmbiguousWinding(f"winding {w} is not close to an integer")
            return n
        mid = 0.5 * (t[bad] + t[bad + 1])
        if np.min(t[bad + 1] - t[bad]) < 1e-14:
            break
        t = np.insert(t, bad + 1, mid)
        v = np.insert(v, bad + 1, np.asarray(func(mid), dtype=complex))
    raise AmbiguousWinding("phase unwrapping did not resolve after maximum refinement")


def polynomial_lipschitz(coeffs: np.ndarray) -> np.ndarray:
    """Bound on ``|d g(e^{2 pi i t}) / dt|`` for ``g = sum_k a_k z^k`` on the unit circle.

    ``coeffs`` has the degree along the last axis, lowest power first.
    """
    k = np.arange(coeffs.shape[-1])
    return TWO_PI * np.sum(k * np.abs(coeffs), axis=-1)


def _horner(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(coeffs.shape[:-1] + (1,), z.shape), dtype=complex)
    for k in range(coeffs.shape[-1] - 1, -1, -1):
        out = out * z + coeffs[..., k, None]
    return out


def unit_circle_winding(coeffs, margin: float = 1e-9, n_initial: int = 128,
                        safety: float = 0.7) -> tuple[int, float]:
    """Certified winding number of a polynomial along the unit circle.

    Every arc ``[t_i, t_i + dt]`` is accepted only when ``L dt < safety |g(t_i)|``
    with ``L`` a Lipschitz bound, which confines the arc's image to a disc
    excluding zero, so each principal-value increment is the true one.
    Returns ``(winding, lower bound of |g| on the circle)``.  Raises ``ZeroNearCircle`` once arcs
    shorter than ``margin`` would be needed.
    """
    a = np.asarray(coeffs, dtype=complex)
    L = float(polynomial_lipschitz(a))
    t = np.linspace(0.0, 1.0, n_initial + 1)
    v = _horner(a, np.exp(TWO_PI * 1j * t))
    v[-1] = v[0]
    while True:
        dt = np.diff(t)
        bad = np.flatnonzero(L * dt >= safety * np.abs(v[:-1]))
        if bad.size == 0:
            break
        if np.min(dt[bad]) < margin:
            raise ZeroNearCircle("cannot certify the unit circle is zero free")
        mid = t[bad] + 0.5 * dt[bad]
        t = np.insert(t, bad + 1, mid)
        v = np.insert(v, bad + 1, _horner(a, np.exp(TWO_PI * 1j * mid)))
    n = int(round(_increments(v).sum() / TWO_PI))
    return n, float(np.min(np.abs(v[:-1]) - L * np.diff(t)))


def unit_circle_winding_batch(coeffs: np.ndarray, n_points: int = 512,
                              margin: float = 1e-9) -> np.ndarray:
    """Vectorised ``unit_circle_winding`` over rows of ``coeffs``.

    Rows that the uniform grid cannot certify fall back to the adaptive
    routine; rows failing certification there are returned as -1.
    """
    a = np.asarray(coeffs, dtype=complex)
    t = np.linspace(0.0, 1.0, n_points + 1)
    z = np.exp(TWO_PI * 1j * t)
    z[-1] = z[0]
    v = _horner(a, z)
    L = polynomial_lipschitz(a)
    ok = np.all(L[:, None] * (1.0 / n_points) < 0.7 * np.abs(v[:, :-1]), axis=1)
    out = np.full(a.shape[0], -1, dtype=int)
    d = np.angle(v[ok, 1:] * np.conj(v[ok, :-1]))
    out[ok] = np.rint(d.sum(axis=1) / TWO_PI).astype(int)
    for i in np.flatnonzero(~ok):
        try:
            out[i] = unit_circle_winding(a[i], margin=margin)[0]
        except ZeroNearCircle:
            out[i] = -1
    return out
