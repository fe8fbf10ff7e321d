import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrelax.basis import eigenstate, random_state
from qrelax.drift import (DriftField, GridSpec, classify, classify_state, compute_drift_field, decompose,
                          probe_radii_for, radial_drift_experiment, ring_crossings)
from qrelax.errors import InconsistentAcrossRadii
from qrelax.vorticity import shell_polynomial, total_vorticity_theorem

GRID = GridSpec(5.0, 20.0, 16, 64)


def synthetic(d_phi, d_eta):
    E, P = np.meshgrid(GRID.eta, GRID.phi, indexing="ij")
    return DriftField(GRID, d_eta(E, P), d_phi(E, P), np.ones(E.shape, dtype=bool))


def poisson_sum(state, phi):
    # large-radius limit of d_phi * eta^2 / 2 pi, from the zeros of the top-shell polynomial
    roots = np.roots(shell_polynomial(state).coeffs[::-1])
    z = np.exp(2j * phi)
    return sum((1 - abs(a) ** 2) / abs(z - a) ** 2 for a in roots)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(5, 4)
    with pytest.raises(ValueError):
        GridSpec(n_phi=4)
    g = GridSpec(5, 20, 100, 100)
    assert g.eta[0] == 5 and g.eta[-1] == 20
    assert g.phi[-1] < 2 * np.pi


def test_ring_crossings():
    phi = np.arange(64) * 2 * np.pi / 64
    down, up = ring_crossings(phi, np.sin(2 * phi))
    assert np.allclose(sorted(down), [np.pi / 2, 3 * np.pi / 2], atol=1e-2)
    assert len(up) == 2
    assert min(abs(np.angle(np.exp(1j * (u - np.pi)))) for u in up) < 1e-2
    assert ring_crossings(phi, 1 + 0.5 * np.sin(phi)) == ([], [])
    # the dead zone is relative: tiny wiggles about zero on a large signal are ignored
    v = np.where(np.abs(np.sin(phi)) < 0.1, 1e-5 * np.cos(9 * phi), np.sin(phi))
    assert len(sum(ring_crossings(phi, v, dead_zone=1e-3), [])) == 2


def test_synthetic_type0():
    c = classify(synthetic(lambda e, p: 0.1 + 0 * p, lambda e, p: 0 * p))
    assert c.kind == "Type0" and c.sign_changes == 0
    assert c.diagnostics["rotation"] == 1
    c = classify(synthetic(lambda e, p: -0.1 + 0.05 * np.cos(2 * p), lambda e, p: 0 * p))
    assert c.kind == "Type0" and c.diagnostics["rotation"] == -1


def test_synthetic_type1_aligned():
    # d_phi ~ sin 2 phi: descending crossings at pi/2 and 3 pi/2 attract; inflow there
    c = classify(synthetic(lambda e, p: 0.1 * np.sin(2 * p), lambda e, p: 0.01 * np.cos(2 * p)))
    assert c.kind == "Type1" and c.sign_changes == 4
    assert len(c.attractive_axes) == 2 and len(c.repulsive_axes) == 2
    assert c.mechanism_aligned


def test_synthetic_type1_misaligned():
    c = classify(synthetic(lambda e, p: 0.1 * np.sin(2 * p), lambda e, p: -0.01 * np.cos(2 * p)))
    assert c.kind == "Type1" and not c.mechanism_aligned


def test_synthetic_type2():
    c = classify(synthetic(lambda e, p: 0.1 * np.sin(4 * p), lambda e, p: 0.01 * np.cos(4 * p)))
    assert c.kind == "Type2" and c.sign_changes == 8 and c.mechanism_aligned
    doc = c.to_json()
    assert doc["kind"] == "Type2" and len(doc["attractive_axes"]) == 4


def test_inconsistent_rings():
    f = synthetic(lambda e, p: np.where(e < 10, 0.1 + 0 * p, np.sin(2 * p)), lambda e, p: 0 * p)
    assert classify(f).kind == "Unclassified"
    with pytest.raises(InconsistentAcrossRadii):
        classify(f, strict=True)


def test_aborted_ring_is_skipped():
    f = synthetic(lambda e, p: 0.1 * np.sin(2 * p), lambda e, p: 0.01 * np.cos(2 * p))
    i = int(np.argmin(np.abs(GRID.eta - 8)))
    f.status[i, :10] = False
    c = classify(f)
    assert c.kind == "Type1" and len(c.diagnostics["counts"]) == 2


def test_ground_state_field_is_zero():
    g = GridSpec(5, 20, 8, 8)
    f = compute_drift_field(eigenstate(0, 0), g)
    assert f.status.all()
    assert np.allclose(f.d_eta, 0, atol=1e-12) and np.allclose(f.d_phi, 0, atol=1e-12)


def test_chi10_field_is_pure_rotation():
    g = GridSpec(5, 20, 8, 8)
    f = compute_drift_field(eigenstate(1, 0), g)
    assert np.max(np.abs(f.d_eta)) < 1e-9
    expected = 2 * np.pi / g.eta ** 2
    assert np.allclose(f.d_phi, expected[:, None], rtol=1e-8)
    assert classify(f).kind == "Type0"


def test_angular_drift_dominates_far_out():
    f = compute_drift_field(random_state(1, 3), GridSpec(5, 20, 12, 24))
    c = decompose(f)
    assert c.max_radial < c.max_angular


def test_asymptotic_angular_drift():
    for seed in (5, 6, 7):
        s = random_state(2, seed)
        errs = []
        for R in (80.0, 160.0):
            g = GridSpec(R, R + 1, 8, 32)
            f = compute_drift_field(s, g, rows=[0])
            w = poisson_sum(s, g.phi)
            errs.append(np.max(np.abs(f.d_phi[0] * R ** 2 / (2 * np.pi) - w)) / np.max(np.abs(w)))
        assert errs[1] < 0.05
        assert errs[0] / errs[1] > 3  # second-order approach


def test_determinism_and_csv_round_trip(tmp_path):
    s = random_state(2, 11)
    g = GridSpec(5, 20, 8, 16)
    a, b = compute_drift_field(s, g), compute_drift_field(s, g)
    assert np.array_equal(a.d_phi, b.d_phi, equal_nan=True)
    a.write_csv(tmp_path / "f.csv")
    back = DriftField.read_csv(tmp_path / "f.csv")
    assert np.array_equal(back.status, a.status)
    assert np.array_equal(back.d_eta, a.d_eta, equal_nan=True)
    assert np.array_equal(back.d_phi, a.d_phi, equal_nan=True)
    assert back.grid == g


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_zero_vorticity_never_type0(seed):
    s = random_state(2, seed)
    c, _ = classify_state(s, n_phi=128)
    n = total_vorticity_theorem(s).n
    if c.kind == "Type0":
        assert n != 0 and c.diagnostics["rotation"] == np.sign(n)
    if n == 0:
        assert c.kind == "Type1" and c.mechanism_aligned


def test_probe_radii_scale_with_node_free_radius():
    assert probe_radii_for(eigenstate(1, 0)) == (8.0, 10.0, 12.0)


def test_radial_drift_ground_state_and_sampling():
    r = radial_drift_experiment(eigenstate(0, 0), n_traj=50, n_periods=2, seed=1)
    assert np.allclose(r.d_eta, 0, atol=1e-12)
    assert r.summary["n"] == 50 and r.summary["aborted"] == 0
    assert np.all((r.eta_initial >= 10) & (r.eta_initial <= 20))
    again = radial_drift_experiment(eigenstate(0, 0), n_traj=50, n_periods=2, seed=1)
    assert np.array_equal(r.eta_initial, again.eta_initial)
    with pytest.raises(ValueError):
        radial_drift_experiment(eigenstate(0, 0), eta_range=(5, 1))
