"""``qrelax`` command line.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 counterexample found in conjecture mode.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import io
from .basis import basis_size, random_state
from .drift import DEFAULT_PROBES, DriftField, GridSpec, classify, compute_drift_field, decompose, \
    radial_drift_experiment
from .dynamics import IntegratorConfig
from .errors import AttemptsExhausted, NumericalError, QRelaxError
from .experiments import SurveyConfig, run_conjecture_campaign, run_survey
from .nodes import find_nodes, track_nodes
from .vorticity import (generate_state_with_vorticity, sample_vorticity_distribution,
                        total_vorticity_bruteforce, total_vorticity_laurent, total_vorticity_theorem)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _range(s: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in s.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {s!r}")
    return lo, hi


def _integrator(a) -> IntegratorConfig:
    return IntegratorConfig(rel_tol=a.rel_tol, abs_tol=a.abs_tol, max_step=a.max_step)


def _add_integrator_flags(p):
    d = IntegratorConfig()
    p.add_argument("--rel-tol", type=float, default=d.rel_tol)
    p.add_argument("--abs-tol", type=float, default=d.abs_tol)
    p.add_argument("--max-step", type=float, default=d.max_step)


def _load(a):
    return io.load_state(a.state, renormalize=a.renormalize)


def cmd_state(a):
    if a.action == "random":
        st = random_state(a.m, a.seed)
    elif a.action == "with-vorticity":
        st = generate_state_with_vorticity(a.m, a.n, a.seed)
    else:
        if not a.state:
            raise ValueError("state info needs a state file")
        st = _load(a)
        info = {"m": st.m, "M": basis_size(st.m), "norm": st.norm_squared,
                "vorticity": total_vorticity_theorem(st).n if np.any(st.top_shell) else None}
        _emit(json.dumps(info, indent=1), a.output)
        return EXIT_OK
    if a.output:
        io.save_state(st, a.output)
    else:
        print(json.dumps(io.state_to_json(st), indent=1))
    return EXIT_OK


def cmd_vorticity(a):
    st = _load(a)
    methods = {"theorem": total_vorticity_theorem, "laurent": total_vorticity_laurent,
               "brute-force": total_vorticity_bruteforce}
    names = list(methods) if a.method == "all" else [a.method]
    reports = [methods[k](st) for k in names]
    for r in reports:
        print(f"n = {r.n}  method = {r.method}")
    if len({r.n for r in reports}) > 1:
        print("methods disagree", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_abundance(a):
    h = sample_vorticity_distribution(a.m, a.samples, a.seed)
    _emit(json.dumps(h.to_json(), indent=1), a.output)
    return EXIT_OK


def cmd_drift(a):
    st = _load(a)
    n = a.grid or (100 if a.paper_scale else 64)
    grid = GridSpec(a.eta_min, a.eta_max, n, n)
    f = compute_drift_field(st, grid, _integrator(a))
    if a.output:
        f.write_csv(a.output)
    c = decompose(f)
    print(json.dumps({"cells": int(f.status.size), "aborted": int((~f.status).sum()),
                      "max_abs_d_eta": c.max_radial, "max_abs_arc_drift": c.max_angular,
                      "inward_fraction": c.inward_fraction}, indent=1))
    return EXIT_OK


def cmd_classify(a):
    f = DriftField.read_csv(a.field)
    k = classify(f, a.probe_radii, a.dead_zone)
    doc = k.to_json()
    if k.kind == "Unclassified":
        doc["diagnostics"] = {str(r): c for r, c in k.diagnostics.get("counts", {}).items()}
    _emit(json.dumps(doc, indent=1), a.output)
    return EXIT_OK


def cmd_nodes(a):
    st = _load(a)
    if a.track:
        t1 = a.T1 if a.T1 is not None else a.T + 2 * np.pi
        tracks = track_nodes(st, a.T, t1)
        if a.output:
            io.write_tracks_csv(tracks, a.output)
        if a.events:
            io.write_events_json(tracks, a.events)
        ev = io.track_events(tracks)
        print(json.dumps({"tracks": len(tracks), "births": sum(e["event"] == "birth" for e in ev),
                          "deaths": sum(e["event"] == "death" for e in ev)}, indent=1))
        return EXIT_OK
    nodes = find_nodes(st, a.T)
    rows = [{"Qx": n.qx, "Qy": n.qy, "winding": n.winding, "residual": n.residual} for n in nodes]
    if a.output:
        with open(a.output, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["Qx", "Qy", "winding", "residual"])
            w.writeheader()
            w.writerows(rows)
    else:
        print(io.dumps({"T": a.T, "nodes": rows, "winding_sum": sum(n.winding for n in nodes)}))
    return EXIT_OK


def cmd_radial_drift(a):
    st = _load(a)
    n_traj = a.trajectories or (1000 if a.paper_scale else 100)
    n_per = a.periods or (1000 if a.paper_scale else 100)
    res = radial_drift_experiment(st, n_traj, a.eta, n_per, a.seed, _integrator(a),
                                  area_uniform=not a.radius_uniform)
    if a.output:
        with open(a.output, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eta_initial", "eta_final", "status"])
            for e0, e1, ok in zip(res.eta_initial, res.eta_final, res.ok):
                w.writerow([repr(float(e0)), repr(float(e1)), "ok" if ok else "aborted"])
    print(json.dumps(res.summary, indent=1))
    return EXIT_OK


def cmd_survey(a):
    cfg = SurveyConfig(M_list=tuple(a.M), states_per_M=a.states or (100 if a.paper_scale else 20),
                       seed=a.seed, output_dir=a.output, workers=a.workers,
                       integrator=_integrator(a))
    rep = run_survey(cfg)
    print(json.dumps(rep.to_json()["crosstab"], indent=1))
    return EXIT_OK


def cmd_conjectures(a):
    n = a.states or (1000 if a.paper_scale else 20)
    rep = run_conjecture_campaign(a.m, n, a.seed, integrator=_integrator(a), workers=a.workers)
    doc = rep.to_json()
    if a.output:
        _emit(json.dumps(doc, indent=1), a.output)
    for row in doc["table"]:
        print(json.dumps(row))
    print("PASS" if rep.passed else f"COUNTEREXAMPLES: {len(rep.counterexamples)}")
    return EXIT_OK if rep.passed else EXIT_COUNTEREXAMPLE


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qrelax", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def state_arg(q):
        q.add_argument("state", help="state JSON file")
        q.add_argument("--renormalize", action="store_true")

    s = sub.add_parser("state", help="generate or inspect states")
    s.add_argument("action", choices=["random", "with-vorticity", "info"])
    s.add_argument("state", nargs="?")
    s.add_argument("--m", type=int)
    s.add_argument("--n", type=int, help="target vorticity for with-vorticity")
    s.add_argument("--seed", type=int)
    s.add_argument("--renormalize", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_state)

    s = sub.add_parser("vorticity", help="total vorticity of a state")
    state_arg(s)
    s.add_argument("--method", choices=["theorem", "laurent", "brute-force", "all"], default="theorem")
    s.set_defaults(func=cmd_vorticity)

    s = sub.add_parser("abundance", help="vorticity histogram of random states")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--samples", type=int, default=100000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_abundance)

    s = sub.add_parser("drift", help="one-period drift field")
    state_arg(s)
    s.add_argument("--grid", type=int, help="points per axis (default 64, 100 with --paper-scale)")
    s.add_argument("--eta-min", type=float, default=5.0)
    s.add_argument("--eta-max", type=float, default=20.0)
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("-o", "--output")
    _add_integrator_flags(s)
    s.set_defaults(func=cmd_drift)

    s = sub.add_parser("classify", help="classify a drift-field CSV")
    s.add_argument("field")
    s.add_argument("--probe-radii", type=_float_list, default=list(DEFAULT_PROBES))
    s.add_argument("--dead-zone", type=float, default=1e-3)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("nodes", help="nodes at one time, or tracked over an interval")
    state_arg(s)
    s.add_argument("--T", type=float, default=0.0)
    s.add_argument("--T1", type=float)
    s.add_argument("--track", action="store_true")
    s.add_argument("--events")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_nodes)

    s = sub.add_parser("radial-drift", help="long-run radial drift of exterior trajectories")
    state_arg(s)
    s.add_argument("--trajectories", type=int)
    s.add_argument("--periods", type=int)
    s.add_argument("--eta", type=_range, default=(10.0, 20.0))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--radius-uniform", action="store_true",
                   help="draw eta uniformly instead of uniformly in area")
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("-o", "--output")
    _add_integrator_flags(s)
    s.set_defaults(func=cmd_radial_drift)

    s = sub.add_parser("survey", help="classify drift fields of random states")
    s.add_argument("--M", type=_int_list, default=[3, 6, 10, 15])
    s.add_argument("--states", type=int)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("-o", "--output", help="output directory")
    _add_integrator_flags(s)
    s.set_defaults(func=cmd_survey)

    s = sub.add_parser("conjectures", help="test both vorticity conjectures")
    s.add_argument("--m", type=_int_list, default=[1, 2, 3, 4])
    s.add_argument("--states", type=int, help="states per class")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("-o", "--output")
    _add_integrator_flags(s)
    s.set_defaults(func=cmd_conjectures)
    return p


def main(argv=None) -> int:
    p = build_parser()
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.command == "state" and a.action in ("random", "with-vorticity"):
        missing = [f for f in ("m", "seed") + (("n",) if a.action == "with-vorticity" else ())
                   if getattr(a, f) is None]
        if missing:
            p.error(f"state {a.action} requires " + ", ".join("--" + f for f in missing))
    try:
        return a.func(a)
    except (NumericalError, AttemptsExhausted) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QRelaxError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
