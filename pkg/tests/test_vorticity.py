import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrelax.basis import AngularState, eigenstate, random_state
from qrelax.errors import AttemptsExhausted, EmptyShell, ZeroNearCircle
from qrelax.vorticity import (ShellPolynomial, allowed_vorticities, generate_state_with_vorticity,
                              node_free_radius, sample_vorticity_distribution, shell_polynomial,
                              total_vorticity_bruteforce, total_vorticity_laurent,
                              total_vorticity_theorem, zeros_in_unit_disk)
from qrelax.winding import contour_winding, unit_circle_winding


def _state(m, entries):
    return AngularState.from_dict(m, entries, renormalize=True)


def test_shell_polynomial_examples():
    s = _state(1, {(1, 0): 0.8, (0, 1): 0.6})
    assert np.allclose(shell_polynomial(s).coeffs, [0.6, 0.8])
    g = shell_polynomial(eigenstate(2, 0))
    assert np.allclose(g.coeffs, [0, 0, 1 / np.sqrt(2)])
    with pytest.raises(EmptyShell):
        shell_polynomial(AngularState.from_dict(2, {(0, 0): 1.0}))


def test_shell_polynomial_is_large_radius_limit():
    # psi / (chi00 r^m) on a circle of radius r tends to g(e^{2 i phi}) e^{-i m phi}; lower shells are O(1/r)
    from qrelax.basis import reduced_amplitude
    s = random_state(2, 31)
    g = shell_polynomial(s)
    phi = np.linspace(0, 2 * np.pi, 17)
    prev = None
    for r in (1e4, 1e6):
        P = reduced_amplitude(s, r * np.cos(phi), r * np.sin(phi), 0.0) / r ** 2
        err = np.max(np.abs(P - g(np.exp(2j * phi)) * np.exp(-2j * phi)))
        assert err < 10 / r
        if prev is not None:
            assert err < prev / 50
        prev = err


def test_zeros_in_unit_disk_examples():
    assert zeros_in_unit_disk(ShellPolynomial(1, np.array([0.6, 0.8]))) == 1
    assert zeros_in_unit_disk(ShellPolynomial(2, np.array([0, 0, 1 / np.sqrt(2)]))) == 2
    with pytest.raises(ZeroNearCircle):
        zeros_in_unit_disk(ShellPolynomial(1, np.array([1.0, 1.0])))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(1, 6))
def test_zero_count_matches_companion_eigenvalues(seed, m):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=m + 1) + 1j * rng.normal(size=m + 1)
    roots = np.roots(a[::-1])
    if np.min(np.abs(np.abs(roots) - 1)) < 1e-6:
        return
    assert zeros_in_unit_disk(ShellPolynomial(m, a)) == int(np.sum(np.abs(roots) < 1))


def test_unit_circle_lower_bound_is_a_bound():
    rng = np.random.default_rng(2)
    z = np.exp(2j * np.pi * np.linspace(0, 1, 20001))
    for _ in range(50):
        a = rng.normal(size=5) + 1j * rng.normal(size=5)
        _, mu = unit_circle_winding(a)
        assert np.min(np.abs(np.polyval(a[::-1], z))) >= mu


def test_contour_winding_simple():
    assert contour_winding(lambda t: np.exp(2j * np.pi * 3 * t)) == 3
    assert contour_winding(lambda t: np.exp(-2j * np.pi * t) + 0.1) == -1


def test_theorem_examples():
    assert total_vorticity_theorem(_state(1, {(0, 0): 0.3, (1, 0): 0.8, (0, 1): 0.5})).n == 1
    assert total_vorticity_theorem(_state(1, {(0, 0): 0.3, (1, 0): 0.5, (0, 1): 0.8})).n == -1
    assert total_vorticity_theorem(eigenstate(2, 0)).n == 2
    assert total_vorticity_theorem(eigenstate(0, 3)).n == -3


def test_bruteforce_examples():
    assert total_vorticity_bruteforce(eigenstate(0, 0), eta_probe=10.0).n == 0
    assert total_vorticity_bruteforce(eigenstate(1, 0)).n == 1


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_three_routes_agree(m):
    for seed in range(100):
        s = random_state(m, 1000 * m + seed)
        n = total_vorticity_theorem(s).n
        assert total_vorticity_laurent(s).n == n
        assert total_vorticity_bruteforce(s).n == n
        assert total_vorticity_bruteforce(s, T=1.3).n == n
        assert n in allowed_vorticities(m)


def test_conjugate_reflection_negates():
    for seed in range(50):
        s = random_state(1 + seed % 4, seed)
        assert total_vorticity_theorem(s.conjugate_reflected()).n == -total_vorticity_theorem(s).n


def test_allowed_vorticities():
    assert allowed_vorticities(1) == [-1, 1]
    assert allowed_vorticities(2) == [-2, 0, 2]
    assert allowed_vorticities(0) == [0]
    with pytest.raises(ValueError):
        allowed_vorticities(-1)


def test_node_free_radius_contains_all_nodes():
    from qrelax.nodes import find_nodes
    for seed in range(10):
        s = random_state(3, 300 + seed)
        R = node_free_radius(s)
        for T in (0.0, 2.0):
            assert all(np.hypot(n.qx, n.qy) < R for n in find_nodes(s, T))


def test_histogram_is_deterministic_and_chunk_independent():
    a = sample_vorticity_distribution(3, 5000, seed=4)
    b = sample_vorticity_distribution(3, 5000, seed=4)
    assert a.counts == b.counts
    assert sum(a.counts.values()) == 5000
    assert set(a.counts) == {-3, -1, 1, 3}
    doc = a.to_json()
    assert doc["m"] == 3 and doc["samples"] == 5000 and set(doc["counts"]) == {"-3", "-1", "1", "3"}


def test_generate_state_with_vorticity():
    s = generate_state_with_vorticity(1, 1, seed=3)
    assert abs(s.coefficient(1, 0)) > abs(s.coefficient(0, 1))
    s = generate_state_with_vorticity(4, 4, seed=3)
    assert total_vorticity_theorem(s).n == 4
    s = generate_state_with_vorticity(2, 0, seed=8)
    assert total_vorticity_bruteforce(s).n == 0
    with pytest.raises(ValueError):
        generate_state_with_vorticity(2, 1, seed=0)
    with pytest.raises(AttemptsExhausted):
        generate_state_with_vorticity(4, 4, seed=0, max_attempts=3)
