"""Drift-field surveys over random states and the two vorticity conjecture campaigns."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import m_from_size, random_state
from .drift import classify_state
from .dynamics import IntegratorConfig
from .errors import QRelaxError
from .io import state_to_json
from .vorticity import allowed_vorticities, generate_state_with_vorticity, total_vorticity_theorem

log = logging.getLogger(__name__)

VALID_M = (3, 6, 10, 15)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("QRELAX_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def derived_seed(*keys: int) -> int:
    """Independent 63-bit seed for a work item, stable across runs and schedules."""
    return int(np.random.SeedSequence(list(keys)).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class SurveyConfig:
    M_list: tuple = (3, 6, 10, 15)
    states_per_M: int = 20
    seed: int = 0
    n_phi: int = 256
    output_dir: str | None = None
    workers: int | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.states_per_M < 1:
            raise ValueError("states_per_M must be >= 1")
        bad = [M for M in self.M_list if M not in VALID_M]
        if bad:
            raise ValueError(f"M must be one of {VALID_M}, got {bad}")


def _classify_row(state, cfg_n_phi, integrator):
    row = {"n": None, "kind": None, "sign_changes": None, "mechanism_aligned": None,
           "rotation": None, "error": None}
    try:
        row["n"] = total_vorticity_theorem(state).n
        k, _ = classify_state(state, cfg_n_phi, integrator)
        row.update(kind=k.kind, sign_changes=k.sign_changes,
                   mechanism_aligned=k.mechanism_aligned,
                   rotation=k.diagnostics.get("rotation"))
    except QRelaxError as exc:
        log.warning("state skipped: %s", exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _survey_item(args):
    M, i, seed, n_phi, integrator = args
    s = derived_seed(seed, M, i)
    st = random_state(m_from_size(M), s)
    return {"M": M, "index": i, "seed": s, **_classify_row(st, n_phi, integrator)}


@dataclass
class SurveyReport:
    rows: list

    def crosstab(self, M: int | None = None) -> dict:
        """``{n: {kind: count}}`` over the rows (optionally for one M)."""
        out: dict = {}
        for r in self.rows:
            if r["error"] or (M is not None and r["M"] != M):
                continue
            cell = out.setdefault(r["n"], {})
            cell[r["kind"]] = cell.get(r["kind"], 0) + 1
        return {k: out[k] for k in sorted(out)}

    def to_json(self) -> dict:
        Ms = sorted({r["M"] for r in self.rows})
        return {"rows": self.rows,
                "crosstab": {str(M): {str(n): c for n, c in self.crosstab(M).items()} for M in Ms}}

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "survey.json").write_text(json.dumps(self.to_json(), indent=1) + "\n")
        with open(d / "survey.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)


def run_survey(cfg: SurveyConfig) -> SurveyReport:
    """Generate, count vorticity of, and classify ``states_per_M`` states per M."""
    items = [(M, i, cfg.seed, cfg.n_phi, cfg.integrator)
             for M in cfg.M_list for i in range(cfg.states_per_M)]
    report = SurveyReport(_map(_survey_item, items, worker_count(cfg.workers)))
    if cfg.output_dir:
        report.write(cfg.output_dir)
    return report


def _campaign_item(args):
    m, target, i, seed, n_phi, integrator = args
    s = derived_seed(seed, m, target + m, i)
    st = generate_state_with_vorticity(m, target, s)
    row = {"m": m, "class": "zero" if target == 0 else "maximal", "target_n": target,
           "index": i, "seed": s, **_classify_row(st, n_phi, integrator)}
    row["state"] = state_to_json(st)
    return row


@dataclass
class CampaignReport:
    rows: list

    @staticmethod
    def violates(row) -> bool:
        if row["error"]:
            return False
        if row["class"] == "zero":
            return row["kind"] == "Type0"
        return row["kind"] != "Type0"

    @property
    def counterexamples(self) -> list:
        return [r for r in self.rows if self.violates(r)]

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def table(self) -> list[dict]:
        out = {}
        for r in self.rows:
            key = (r["m"], r["class"])
            t = out.setdefault(key, {"m": r["m"], "class": r["class"], "states": 0,
                                     "kinds": {}, "counterexamples": 0, "errors": 0})
            t["states"] += 1
            if r["error"]:
                t["errors"] += 1
                continue
            t["kinds"][r["kind"]] = t["kinds"].get(r["kind"], 0) + 1
            t["counterexamples"] += self.violates(r)
        return [out[k] for k in sorted(out)]

    def to_json(self) -> dict:
        return {"passed": self.passed, "table": self.table(),
                "counterexamples": self.counterexamples}


def run_conjecture_campaign(m_list, states_per_class: int, seed: int, n_phi: int = 256,
                            integrator: IntegratorConfig | None = None,
                            workers: int | None = None) -> CampaignReport:
    """Classify maximal-vorticity and (for even m) zero-vorticity states.

    Maximal states alternate between ``n = +m`` and ``n = -m``.  A zero
    vorticity state classified Type0, or a maximal one classified anything
    else, is reported as a counterexample.
    """
    integrator = integrator or IntegratorConfig()
    items = []
    for m in m_list:
        if m < 1:
            raise ValueError("the ground state (m = 0) has no drift dynamics")
        for i in range(states_per_class):
            items.append((m, m if i % 2 == 0 else -m, i, seed, n_phi, integrator))
        if 0 in allowed_vorticities(m):
            items += [(m, 0, i, seed, n_phi, integrator) for i in range(states_per_class)]
    return CampaignReport(_map(_campaign_item, items, worker_count(workers)))
