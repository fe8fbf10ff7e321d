"""State files (JSON) and node-track exports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .basis import AngularState, CartesianState, cartesian_to_angular
from .errors import NormalizationError, SchemaError

LOAD_TOL = 1e-9
_KEYS = {"angular": ("nd", "ng"), "cartesian": ("nx", "ny")}


def state_to_json(state) -> dict:
    basis = "cartesian" if isinstance(state, CartesianState) else "angular"
    ka, kb = _KEYS[basis]
    return {"basis": basis, "m": state.m,
            "coefficients": [{ka: i, kb: j, "re": float(c.real), "im": float(c.imag)}
                             for (i, j), c in zip(state.indices, state.coefficients)]}


def save_state(state, path) -> None:
    Path(path).write_text(json.dumps(state_to_json(state), indent=1) + "\n")


def state_from_json(doc, renormalize: bool = False, to_angular: bool = True):
    """Parse a state document; Cartesian documents are converted to the angular basis.

    Norm deviations above ``LOAD_TOL`` raise ``NormalizationError`` unless
    ``renormalize`` is set; smaller ones are rescaled silently.
    """
    if not isinstance(doc, dict):
        raise SchemaError("state document must be a JSON object")
    basis = doc.get("basis", "angular")
    if basis not in _KEYS:
        raise SchemaError(f"unknown basis {basis!r}")
    m = doc.get("m")
    if not isinstance(m, int) or isinstance(m, bool) or m < 0:
        raise SchemaError("'m' must be a non-negative integer")
    entries = doc.get("coefficients")
    if not isinstance(entries, list):
        raise SchemaError("'coefficients' must be a list")
    ka, kb = _KEYS[basis]
    mapping = {}
    for e in entries:
        try:
            key = (int(e[ka]), int(e[kb]))
            value = complex(float(e.get("re", 0.0)), float(e.get("im", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad coefficient entry {e!r}") from exc
        if key in mapping:
            raise SchemaError(f"duplicate coefficient {key}")
        mapping[key] = value
    norm = sum(abs(v) ** 2 for v in mapping.values())
    if norm == 0:
        raise NormalizationError("all coefficients are zero")
    if abs(norm - 1.0) > LOAD_TOL and not renormalize:
        raise NormalizationError(f"sum |C|^2 = {norm!r}; use renormalize")
    cls = CartesianState if basis == "cartesian" else AngularState
    state = cls.from_dict(m, mapping, renormalize=True)
    if basis == "cartesian" and to_angular:
        return cartesian_to_angular(state)
    return state


def load_state(path, renormalize: bool = False, to_angular: bool = True):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return state_from_json(doc, renormalize, to_angular)


def write_tracks_csv(tracks, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["track_id", "T", "Qx", "Qy", "winding"])
        for tr in tracks:
            for T, (x, y) in zip(tr.times, tr.points):
                w.writerow([tr.id, repr(float(T)), repr(float(x)), repr(float(y)), tr.winding])


def track_events(tracks) -> list[dict]:
    """Births and deaths with partner ids, in time order."""
    out = []
    for tr in tracks:
        for kind in ("birth", "death"):
            ev = getattr(tr, kind)
            if ev:
                T, partner = ev
                out.append({"event": kind, "T": float(T), "track_id": tr.id,
                            "partner_id": partner, "winding": tr.winding})
    return sorted(out, key=lambda e: (e["T"], e["track_id"]))


def write_events_json(tracks, path) -> None:
    Path(path).write_text(json.dumps({"events": track_events(tracks)}, indent=1) + "\n")


def dumps(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))
    return json.dumps(obj, indent=1, default=default)
