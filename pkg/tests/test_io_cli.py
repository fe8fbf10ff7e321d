import json

import numpy as np
import pytest

from qrelax import cli, experiments, io
from qrelax.basis import CartesianState, angular_to_cartesian, random_state
from qrelax.drift import DriftClass
from qrelax.errors import NormalizationError, SchemaError
from qrelax.experiments import SurveyConfig, derived_seed, run_conjecture_campaign, run_survey
from qrelax.vorticity import total_vorticity_theorem


def _doc(entries, m=1, basis="angular"):
    k = ("nd", "ng") if basis == "angular" else ("nx", "ny")
    return {"basis": basis, "m": m,
            "coefficients": [{k[0]: a, k[1]: b, "re": re, "im": im} for (a, b), (re, im) in entries.items()]}


def test_state_round_trip(tmp_path):
    s = random_state(3, 7)
    io.save_state(s, tmp_path / "s.json")
    back = io.load_state(tmp_path / "s.json")
    assert np.max(np.abs(back.coefficients - s.coefficients)) < 1e-15


def test_missing_entries_are_zero():
    s = io.state_from_json(_doc({(1, 0): (0.6, 0.0), (0, 1): (0.0, 0.8)}))
    assert s.coefficient(0, 0) == 0 and s.coefficient(0, 1) == 0.8j


def test_normalization_check():
    with pytest.raises(NormalizationError):
        io.state_from_json(_doc({(0, 0): (0.9, 0.0)}, m=0))
    s = io.state_from_json(_doc({(0, 0): (0.9, 0.0)}, m=0), renormalize=True)
    assert s.coefficient(0, 0) == pytest.approx(1.0)
    with pytest.raises(NormalizationError):
        io.state_from_json(_doc({(0, 0): (0.0, 0.0)}, m=0), renormalize=True)
    # deviations below the load tolerance are rescaled silently
    s = io.state_from_json(_doc({(0, 0): (1 + 1e-11, 0.0)}, m=0))
    assert s.norm_squared == pytest.approx(1, abs=1e-14)


@pytest.mark.parametrize("doc", [
    [1, 2], {"basis": "polar", "m": 1, "coefficients": []}, {"m": -1, "coefficients": []},
    {"m": 1, "coefficients": [{"nd": 0, "re": 1.0}]},
    {"m": 1, "coefficients": [{"nd": 0, "ng": 0, "re": 0.6}, {"nd": 0, "ng": 0, "re": 0.8}]},
    {"m": 1, "coefficients": [{"nd": 2, "ng": 0, "re": 1.0}]}])
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        io.state_from_json(doc)


def test_cartesian_file_is_converted(tmp_path):
    s = random_state(2, 4)
    d = angular_to_cartesian(s)
    io.save_state(d, tmp_path / "d.json")
    assert json.loads((tmp_path / "d.json").read_text())["basis"] == "cartesian"
    back = io.load_state(tmp_path / "d.json")
    assert np.max(np.abs(back.coefficients - s.coefficients)) < 1e-12
    assert isinstance(io.load_state(tmp_path / "d.json", to_angular=False), CartesianState)


def test_invalid_json_file(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(SchemaError):
        io.load_state(tmp_path / "bad.json")


def test_derived_seed_is_stable():
    assert derived_seed(1, 3, 0) == derived_seed(1, 3, 0)
    assert derived_seed(1, 3, 0) != derived_seed(1, 3, 1)


def test_survey_is_reproducible(tmp_path):
    cfg = SurveyConfig(M_list=(3,), states_per_M=3, seed=5, n_phi=64, workers=1)
    a, b = run_survey(cfg), run_survey(cfg)
    assert a.rows == b.rows
    assert sum(sum(v.values()) for v in a.crosstab(3).values()) == 3
    a.write(tmp_path)
    doc = json.loads((tmp_path / "survey.json").read_text())
    assert len(doc["rows"]) == 3
    assert (tmp_path / "survey.csv").read_text().count("\n") == 4


def test_campaign_rejects_bad_m():
    with pytest.raises(ValueError):
        run_conjecture_campaign([0], 2, seed=0, workers=1)


def test_campaign_rows_have_requested_vorticity():
    rep = run_conjecture_campaign([2], 2, seed=3, n_phi=64, workers=1)
    for row in rep.rows:
        st = io.state_from_json(row["state"])
        assert total_vorticity_theorem(st).n == row["n"]
    assert {r["class"] for r in rep.rows} == {"maximal", "zero"}
    assert rep.passed


# ---------------------------------------------------------------------------
# command line

def run(argv, capsys):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_state_and_vorticity(tmp_path, capsys):
    path = tmp_path / "s.json"
    code, _, _ = run(["state", "with-vorticity", "--m", 2, "--n", -2, "--seed", 1, "-o", path], capsys)
    assert code == 0
    code, out, _ = run(["vorticity", path, "--method", "all"], capsys)
    assert code == 0
    assert out.count("n = -2") == 3
    code, out, _ = run(["state", "info", path], capsys)
    assert json.loads(out)["vorticity"] == -2


def test_cli_usage_errors(tmp_path, capsys):
    assert run(["state", "random", "--m", 2], capsys)[0] == 1  # missing seed
    assert run(["vorticity", tmp_path / "missing.json"], capsys)[0] == 1
    (tmp_path / "u.json").write_text(json.dumps(_doc({(0, 0): (0.9, 0.0)}, m=0)))
    code, _, err = run(["nodes", tmp_path / "u.json"], capsys)
    assert code == 1 and "NormalizationError" in err
    assert run(["nodes", tmp_path / "u.json", "--renormalize"], capsys)[0] == 0
    assert run(["abundance", "--m", 2], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 1


def test_cli_exhausted_attempts_is_numerical(capsys, monkeypatch):
    from qrelax.errors import AttemptsExhausted

    def boom(*a, **k):
        raise AttemptsExhausted("no luck")
    monkeypatch.setattr(cli, "generate_state_with_vorticity", boom)
    assert run(["state", "with-vorticity", "--m", 2, "--n", 2, "--seed", 0], capsys)[0] == 2


def test_cli_drift_classify_nodes(tmp_path, capsys):
    st = tmp_path / "s.json"
    io.save_state(random_state(1, 2), st)
    code, out, _ = run(["drift", st, "--grid", 16, "-o", tmp_path / "f.csv"], capsys)
    assert code == 0 and json.loads(out)["cells"] == 256
    code, out, _ = run(["classify", tmp_path / "f.csv"], capsys)
    assert code == 0 and json.loads(out)["kind"] == "Type0"
    code, out, _ = run(["nodes", st, "--T", 0.5], capsys)
    assert code == 0 and json.loads(out)["winding_sum"] in (-1, 1)
    code, out, _ = run(["nodes", st, "--track", "--T1", 0.2, "-o", tmp_path / "t.csv",
                        "--events", tmp_path / "e.json"], capsys)
    assert code == 0 and json.loads(out)["tracks"] == 1
    assert (tmp_path / "t.csv").exists() and (tmp_path / "e.json").exists()
    code, out, _ = run(["radial-drift", st, "--trajectories", 5, "--periods", 1, "--seed", 0], capsys)
    assert code == 0 and json.loads(out)["n"] == 5


def test_cli_abundance(tmp_path, capsys):
    code, out, _ = run(["abundance", "--m", 2, "--samples", 1000, "--seed", 3], capsys)
    assert code == 0
    assert set(json.loads(out)["counts"]) == {"-2", "0", "2"}


def test_cli_conjectures_exit_codes(capsys, monkeypatch):
    code, out, _ = run(["conjectures", "--m", 1, "--states", 2, "--seed", 0, "--workers", 1], capsys)
    assert code == 0 and "PASS" in out
    # a classifier that calls everything Type0 must produce counterexamples for zero-vorticity states
    monkeypatch.setattr(experiments, "classify_state",
                        lambda *a, **k: (DriftClass("Type0", 0, diagnostics={"rotation": 1}), None))
    code, out, _ = run(["conjectures", "--m", 2, "--states", 2, "--seed", 0, "--workers", 1], capsys)
    assert code == 3 and "COUNTEREXAMPLES" in out
