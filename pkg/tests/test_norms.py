from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from eml.dynamics import SimConfig, run
from eml.errors import LocalizationError, RangeError
from eml.fields import InitialDataSpec, to_dispersive
from eml.norms import (
    MissingResonanceTable, NormConfig, b_j_norm, bootstrap_monitor, h_norm, linear_decay_probe,
    radial_evolution, vm_enumerate, w_norm, weighted_norm, z1_norm, z1_tableau, z_norm,
)
from eml.resonance import ResonanceTable
from eml.spectral import Grid, RealField, j_window, phi_k, q_jk

from conftest import smooth_field

TABLE = ResonanceTable.build(0.5)


@pytest.mark.parametrize("m", [0, 1, 2, 3, 4])
def test_operator_counts(m):
    ops = vm_enumerate(m)
    assert len(ops) == comb(m + 6, 6) == len(set(ops))
    assert len(vm_enumerate(m, rotations=False)) == comb(m + 3, 3)
    assert all(o.order <= m for o in ops)


def test_h_norm_of_cosine(unit_grid):
    f = RealField(unit_grid, np.cos(unit_grid.x[0]))
    unit = np.sqrt(4 * np.pi ** 3)  # ||cos x1|| over (2 pi)^3
    assert np.isclose(h_norm(f, 0, rotations=False), unit)
    # identity, d1, d2, d3
    assert np.isclose(h_norm(f, 1, rotations=False), 2 * unit)
    assert np.isclose(w_norm(f, 0, np.inf, rotations=False), 1.0)
    assert np.isclose(w_norm(f, 0, 2, rotations=False), unit)


def test_rotation_norms_need_localization(unit_grid):
    f = RealField(unit_grid, np.cos(unit_grid.x[0]))
    with pytest.raises(LocalizationError):
        h_norm(f, 1)


def test_weight_zero_is_plain_norm(grid32):
    f = RealField(grid32, smooth_field(grid32, np.random.default_rng(0)))
    assert np.isclose(weighted_norm(f, 0.0, 2), h_norm(f, 2))
    assert weighted_norm(f, 0.25, 2) > h_norm(f, 2)


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(1e-3, 1e3))
def test_norms_are_homogeneous(scale):
    from eml.spectral import Grid

    g = Grid(16, 8 * np.pi)
    base = smooth_field(g, np.random.default_rng(1))
    a = h_norm(RealField(g, base), 2)
    b = h_norm(RealField(g, scale * base), 2)
    assert np.isclose(b, scale * a, rtol=1e-12)


def test_zero_field_has_zero_z_norm(grid32):
    z = np.zeros(grid32.shape)
    val, _ = z_norm(z, np.zeros((3,) + grid32.shape), grid32, NormConfig(), TABLE, rotations=False)
    assert val == 0.0


def test_e_collapse_matches_direct_sup(grid32):
    cfg = NormConfig()
    f = smooth_field(grid32, np.random.default_rng(2))
    beta = cfg.beta_eff
    kmin, kmax = grid32.k_range()
    direct = 0.0
    for k in range(kmin, kmax + 1):
        j0, top = j_window(grid32, k)
        for j in range(j0, top + 1):
            q = q_jk(RealField(grid32, f), j, k).values
            direct = max(direct, 2.0 ** ((1 + beta) * j) * grid32.l2(q))
    collapsed = z1_norm(RealField(grid32, f), "e", cfg).value
    full = z1_norm(RealField(grid32, f), "e", cfg, TABLE).value
    assert abs(collapsed - direct) <= 1e-12 * direct
    assert abs(full - collapsed) <= 1e-12 * collapsed


def test_e_collapse_uses_only_n_zero(grid32):
    f_hat = grid32.fft(smooth_field(grid32, np.random.default_rng(3)))
    rows = z1_tableau(grid32, f_hat, "e", NormConfig(), TABLE)
    assert all(val == 0.0 for k, j, n, val in rows if n > 0)


def test_b_requires_table(grid32):
    with pytest.raises(MissingResonanceTable):
        z1_norm(RealField(grid32, np.zeros(grid32.shape)), "b")


def _resonant_shell():
    """Grid whose |m| = 4 shell sits exactly on the first resonant sphere, and
    a field supported on that shell (the six points (+-4, 0, 0) and permutations)."""
    g = Grid(32, 8 * np.pi / TABLE.gamma1)
    f_hat = (g.kmag_sq_index == 16).astype(complex)
    return g, g.ifft_real(f_hat)


def test_b_witness_at_resonant_sphere():
    g, f = _resonant_shell()
    j = 2
    vals = {}
    for beta in (0.01, 0.05):
        cfg = NormConfig(beta_eff=beta)
        vals[beta], n = b_j_norm(f, j, "b", cfg, TABLE, grid=g)
        assert n == j + 1
    assert vals[0.05] < vals[0.01]


def test_resonant_mode_only_feeds_top_index():
    from eml.spectral import a_nj_weight

    g, _ = _resonant_shell()
    psi = TABLE.psi_dagger_grid("b", g)[g.kmag_sq_index == 16]
    assert psi.max() < 1e-10
    j = 3
    for n in range(j + 1):
        assert np.all(a_nj_weight(psi, n, j) == 0.0)
    assert np.all(a_nj_weight(psi, j + 1, j) == 1.0)


def test_k_range_outside_window(grid32):
    with pytest.raises(RangeError):
        z1_norm(RealField(grid32, np.zeros(grid32.shape)), "e", NormConfig(k_range=(-20, 0)))


def test_config_validation():
    with pytest.raises(ValueError):
        NormConfig(N0_eff=1, N1_eff=2)
    with pytest.raises(ValueError):
        NormConfig(beta_eff=0.5)
    with pytest.raises(ValueError):
        NormConfig(k_range=(2, 1))


def test_decay_probe_at_time_zero():
    fhat = lambda rho: phi_k(rho, 0)
    vals, _ = radial_evolution(fhat, "b", 0.0, np.array([0.0]))
    oracle = quad(lambda rho: rho * rho * phi_k(np.array([rho]), 0)[0], 5 / 8, 8 / 5,
                  epsabs=1e-14, epsrel=1e-13, limit=200)[0] / (2 * np.pi ** 2)
    assert abs(vals[0].real - oracle) < 1e-9 * oracle
    res = linear_decay_probe(fhat, "b", [0.0])
    assert abs(res.sup_values[0] - oracle) < 1e-9 * oracle


def test_decay_is_monotone_at_late_times():
    res = linear_decay_probe(lambda rho: phi_k(rho, 0), "e", [20.0, 40.0, 80.0])
    assert np.all(np.diff(res.sup_values) < 0)
    assert -2.0 < res.slope < -1.0


def test_bootstrap_monitor_on_short_run():
    cfg = SimConfig(points_per_axis=16, t_end=0.2, dt=0.1, initial=InitialDataSpec(eps_bar=1e-3))
    traj = run(cfg)
    rep = bootstrap_monitor(traj, NormConfig(), TABLE, rotations=False)
    assert len(rep.times) == 3 and all(z is not None for z in rep.z)
    assert rep.flags["z"] is None and rep.flags["htilde"] is None
    assert rep.tableau and rep.tableau[0][0] == "e"
    assert all(0 < e < 100 for e in rep.equivalence)
