import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from eml.resonance import (
    PhaseTriple, ResonanceTable, find_resonant_spheres, opposite, p_plus, phase, psi,
    psi_dagger, stationarity, sublevel_measure_estimate,
)

# frozen from a 40-digit mpmath solve of the stationarity and Psi = 0 equations
GAMMA2 = {
    0.1: 1.9095566659494599612, 0.2: 2.1029110472866136952, 0.3: 2.3228709600494138639,
    0.4: 2.5833025599761986677, 0.5: 2.9057762476820633689, 0.6: 3.3286451403151403081,
    0.7: 3.931041336372661101, 0.8: 4.9166310013347494849, 0.9: 7.0914481951511157424,
}


def test_phase_at_origin():
    assert phase(PhaseTriple.of("b", "e", "e", 0.5), np.zeros(3), np.zeros(3)) == -1.0


def test_transported_leg_contributes_nothing():
    rng = np.random.default_rng(0)
    xi, eta = rng.normal(size=(2, 3, 20))
    d = 0.3
    got = phase(PhaseTriple.of("e", "e", "0", d), xi, eta)
    expect = np.sqrt(1 + d * np.sum(xi ** 2, 0)) - np.sqrt(1 + d * np.sum((xi - eta) ** 2, 0))
    assert np.allclose(got, expect, atol=1e-14)


def test_phase_rotation_invariant():
    rng = np.random.default_rng(1)
    xi, eta = rng.normal(size=(2, 3, 50))
    t = PhaseTriple.of("b", "e", "-b", 0.5)
    base = phase(t, xi, eta)
    for R in Rotation.random(10, random_state=2).as_matrix():
        assert np.abs(phase(t, R @ xi, R @ eta) - base).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0.0, 200.0), d=st.floats(0.05, 0.95))
def test_equal_kinds_split_evenly(s, d):
    assert abs(p_plus("e", "e", s, d) - s / 2) <= 1e-12 * max(1.0, s)
    assert abs(p_plus("b", "b", s, d) - s / 2) <= 1e-12 * max(1.0, s)


def test_p_plus_is_odd_and_zero_at_origin():
    s = np.linspace(-20, 20, 41)
    for mu, nu in (("e", "b"), ("b", "-e"), ("-e", "b")):
        p = p_plus(mu, nu, s, 0.5)
        assert p_plus(mu, nu, 0.0, 0.5) == 0.0
        assert np.allclose(p, -p[::-1], atol=1e-13)


def test_p_plus_solves_stationarity():
    s = np.geomspace(1e-3, 1e3, 200)
    for mu, nu in (("e", "b"), ("b", "e"), ("e", "-b"), ("-b", "e"), ("b", "-e")):
        p = p_plus(mu, nu, s, 0.5)
        assert np.abs(stationarity(mu, nu, 0.5, s, p)).max() < 1e-10


def test_p_plus_rejects_opposite_kinds():
    assert opposite("e", "-e") and not opposite("e", "b")
    with pytest.raises(ValueError):
        p_plus("e", "-e", 1.0, 0.5)


def test_psi_bee_closed_form():
    r = np.linspace(0, 20, 101)
    d = 0.5
    got = psi(PhaseTriple.of("b", "e", "e", d), r)
    assert np.abs(got - (np.sqrt(1 + r * r) - 2 * np.sqrt(1 + d * r * r / 4))).max() < 1e-12


@pytest.mark.parametrize("d", sorted(GAMMA2))
def test_resonant_spheres(d):
    g1, g2 = find_resonant_spheres(d)
    assert abs(g1 - np.sqrt(3 / (1 - d))) < 1e-10
    assert abs(g2 - GAMMA2[d]) < 1e-10
    assert g1 < g2


def test_gamma1_increases_with_d():
    g = [find_resonant_spheres(d)[0] for d in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(a < b for a, b in zip(g, g[1:]))


def test_dagger_vanishes_on_resonant_sphere():
    d = 0.5
    g1, g2 = find_resonant_spheres(d)
    assert psi_dagger("b", g1, d)[0] < 1e-10
    assert psi_dagger("b", g2, d)[0] < 1e-10


def test_dagger_e_floor_is_positive():
    r = np.linspace(0, 50, 2001)
    floor = psi_dagger("e", r, 0.5).min()
    # 2^10 * min |Psi| is attained at r = 0 where every pair sum is 2 or 0
    assert np.isclose(floor, 1024.0)


def test_table_agrees_with_direct_evaluation():
    t = ResonanceTable.build(0.5)
    assert t.stationarity_residual() < 1e-10
    assert abs(t.gamma1 - np.sqrt(6)) < 1e-12
    r = np.array([0.5, 2.0, 7.0])
    assert np.array_equal(t.psi_dagger("b", r), psi_dagger("b", r, 0.5))


def test_p_plus_derivative_margins():
    s = np.linspace(0, 50, 5001)
    h = 1e-5
    for mu, nu in (("e", "b"), ("b", "e"), ("e", "-b"), ("b", "-e")):
        dp = (p_plus(mu, nu, s + h, 0.5) - p_plus(mu, nu, s - h, 0.5)) / (2 * h)
        w = (1 + s) ** 3
        assert np.min(np.abs(dp) * w) > 0 and np.min(np.abs(1 - dp) * w) > 0


def test_sublevel_measure_scales_with_eps():
    t = PhaseTriple.of("b", "e", "e", 0.5)
    a = sublevel_measure_estimate(t, 2, 1.0, 2e-2, 200_000, seed=1)
    b = sublevel_measure_estimate(t, 2, 1.0, 1e-2, 200_000, seed=1)
    assert 1.6 < a.measure / b.measure < 2.4
    assert a.ratio > 0


def test_sublevel_rejects_bad_input():
    with pytest.raises(ValueError):
        sublevel_measure_estimate(PhaseTriple.of("b", "e", "-e", 0.5), 0, 1.0, 1e-2, 100_000)
    with pytest.raises(ValueError):
        sublevel_measure_estimate(PhaseTriple.of("b", "e", "e", 0.5), 0, 0.5, 1e-2, 100_000)
    with pytest.raises(ValueError):
        sublevel_measure_estimate(PhaseTriple.of("b", "e", "e", 0.5), 0, 1.0, 1e-2, 100)


def test_sublevel_is_seeded():
    t = PhaseTriple.of("b", "e", "e", 0.5)
    a = sublevel_measure_estimate(t, 1, 1.0, 1e-2, 64_000, seed=3)
    b = sublevel_measure_estimate(t, 1, 1.0, 1e-2, 64_000, seed=3)
    assert a == b
