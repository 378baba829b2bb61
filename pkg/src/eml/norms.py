"""Sobolev norms with rotations, weighted norms, the dyadic Z-norm, the
radial decay probe and bootstrap monitoring.

Desk-scale stand-ins: ``N0_eff``, ``N1_eff``, ``alpha_max`` and ``beta_eff``
replace the analytic bookkeeping constants, which are far beyond what a
32^3 grid can resolve.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EMLError, LocalizationError, RangeError
from .spectral import (
    Grid,
    a_nj_weight,
    check_localized,
    j_window,
    lp_symbol,
    rotation_hat,
    spatial_cutoff,
)


@dataclass(frozen=True)
class NormConfig:
    N0_eff: int = 4
    N1_eff: int = 2
    alpha_max: int = 1
    beta_eff: float = 0.01
    k_range: Optional[Tuple[int, int]] = None
    j_range: Optional[Tuple[int, int]] = None
    n_range: Optional[Tuple[int, int]] = None
    vorticity_weight: float = 0.25
    localization_tol: float = 1e-6
    bootstrap_factor: float = 2.0

    def __post_init__(self):
        if not 0 <= self.N1_eff <= self.N0_eff:
            raise ValueError("need 0 <= N1_eff <= N0_eff")
        if self.alpha_max < 0:
            raise ValueError("alpha_max must be nonnegative")
        if not 0 < self.beta_eff <= 0.1:
            raise ValueError("beta_eff must lie in (0, 0.1]")
        for name in ("k_range", "j_range", "n_range"):
            r = getattr(self, name)
            if r is not None and (len(r) != 2 or r[0] > r[1]):
                raise ValueError(f"{name} must be an ordered pair")


# -- operator enumeration -------------------------------------------------

@dataclass(frozen=True)
class VectorFieldOp:
    """``d^alpha Omega^beta`` with ``Omega^beta = Omega_1^b1 Omega_2^b2 Omega_3^b3``."""

    alpha: Tuple[int, int, int]
    beta: Tuple[int, int, int]

    @property
    def order(self) -> int:
        return sum(self.alpha) + sum(self.beta)

    @property
    def uses_rotations(self) -> bool:
        return sum(self.beta) > 0

    def __str__(self):
        return f"d{''.join(map(str, self.alpha))}R{''.join(map(str, self.beta))}"


def _multi_indices(m: int) -> List[Tuple[int, int, int]]:
    return [a for a in itertools.product(range(m + 1), repeat=3) if sum(a) <= m]


def vm_enumerate(m: int, rotations: bool = True) -> List[VectorFieldOp]:
    """All ``d^alpha Omega^beta`` with ``|alpha| + |beta| <= m``; ``C(m+6, 6)`` of them."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    ops = []
    for beta in _multi_indices(m if rotations else 0):
        for alpha in _multi_indices(m - sum(beta)):
            ops.append(VectorFieldOp(alpha, beta))
    ops.sort(key=lambda o: (o.order, o.beta, o.alpha))
    return ops


class _RotationCache:
    """``Omega^beta f`` in coefficient space, built by one extra rotation per entry."""

    def __init__(self, grid: Grid, f_hat: np.ndarray):
        self.grid = grid
        self.store = {(0, 0, 0): f_hat}

    def get(self, beta) -> np.ndarray:
        beta = tuple(beta)
        if beta not in self.store:
            b1, b2, b3 = beta
            if b1:
                axis, prev = 1, (b1 - 1, b2, b3)
            elif b2:
                axis, prev = 2, (0, b2 - 1, b3)
            else:
                axis, prev = 3, (0, 0, b3 - 1)
            g = self.grid
            self.store[beta] = g.fft(rotation_hat(g, self.get(prev), axis))
        return self.store[beta]


def _deriv_symbol(grid: Grid, alpha) -> np.ndarray:
    s = np.ones(grid.shape, dtype=complex)
    for ax, a in enumerate(alpha):
        if a:
            s = s * (1j * grid.xi_odd[ax]) ** a
    return s


def _as_array(f) -> Tuple[Grid, np.ndarray]:
    if hasattr(f, "grid") and hasattr(f, "values"):
        return f.grid, f.values
    raise TypeError("expected a RealField-like object with grid and values")


def apply_ops(grid: Grid, values: np.ndarray, ops: Sequence[VectorFieldOp],
              tol: Optional[float] = 1e-6):
    """Yield ``(op, coefficients of op f)``; localization checked once when rotations are used."""
    if tol is not None and any(o.uses_rotations for o in ops):
        check_localized(grid, values, tol)
    cache = _RotationCache(grid, grid.fft(values))
    for op in ops:
        yield op, _deriv_symbol(grid, op.alpha) * cache.get(op.beta)


def h_norm(f, m: int, rotations: bool = True, tol: Optional[float] = 1e-6) -> float:
    """``sum over V_m of ||L f||_2`` (componentwise for vector fields)."""
    grid, values = _as_array(f)
    return _h_norm_array(grid, values, m, rotations, tol)


def _h_norm_array(grid, values, m, rotations=True, tol=1e-6) -> float:
    ops = vm_enumerate(m, rotations)
    return float(sum(grid.l2_hat(c) for _, c in apply_ops(grid, values, ops, tol)))


def w_norm(f, m: int, p: float, rotations: bool = True, tol: Optional[float] = 1e-6) -> float:
    """``sum over V_m of ||L f||_p``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    grid, values = _as_array(f)
    total = 0.0
    for _, c in apply_ops(grid, values, vm_enumerate(m, rotations), tol):
        a = np.abs(grid.ifft(c))
        if a.ndim > 3:
            a = np.sqrt(np.sum(a ** 2, axis=0))
        if np.isinf(p):
            total += float(a.max())
        else:
            total += float((grid.cell_volume * np.sum(a ** p)) ** (1.0 / p))
    return total


def htilde_norm(state, m: int, rotations: bool = True, tol: Optional[float] = 1e-6) -> float:
    """Sum of the component norms of ``(n, v, E, B)``."""
    g = state.grid
    return float(sum(_h_norm_array(g, a, m, rotations, tol)
                     for a in (state.n, state.v, state.E, state.B)))


def weighted_norm(f, spatial_exponent: float, m: int, rotations: bool = True,
                  tol: Optional[float] = 1e-6) -> float:
    """``sum over V_m of ||(1 + |x|^2)^gamma L f||_2``; weight applied after ``L``."""
    grid, values = _as_array(f)
    return _weighted_array(grid, values, spatial_exponent, m, rotations, tol)


def _weighted_array(grid, values, gamma, m, rotations=True, tol=1e-6) -> float:
    if gamma == 0:
        return _h_norm_array(grid, values, m, rotations, tol)
    w = (1.0 + grid.radius ** 2) ** gamma
    total = 0.0
    for _, c in apply_ops(grid, values, vm_enumerate(m, rotations), tol):
        total += grid.l2(w * grid.ifft(c))
    return float(total)


def vorticity_norm(state, cfg: NormConfig, rotations: bool = True) -> float:
    """Weighted norm of ``Y = B - curl v`` of order ``N1_eff``."""
    from .fields import vorticity

    tol = cfg.localization_tol if rotations else None
    return _weighted_array(state.grid, vorticity(state), cfg.vorticity_weight, cfg.N1_eff,
                           rotations, tol)


def data_norm(state, cfg: NormConfig, rotations: bool = True) -> float:
    """``||(1 + |x|^2)^{(1+beta)/2} (n, v, E, B)||`` at order ``N0_eff``; the scale of eps_bar."""
    tol = cfg.localization_tol if rotations else None
    g = state.grid
    return float(sum(_weighted_array(g, a, 0.5 * (1.0 + cfg.beta_eff), cfg.N0_eff, rotations, tol)
                     for a in (state.n, state.v, state.E, state.B)))


# -- Z-norm ------------------------------------------------------------------

class MissingResonanceTable(EMLError, ValueError):
    pass


@dataclass(frozen=True)
class ZWitness:
    value: float
    k: int
    j: int
    n: int
    op: str = ""


def _psi_for(grid: Grid, sigma: str, table) -> Optional[np.ndarray]:
    """``Psi^dagger_sigma`` on the lattice; ``None`` selects the sigma=e collapse."""
    if sigma not in ("e", "b"):
        raise ValueError(f"sigma must be 'e' or 'b', got {sigma!r}")
    if table is None:
        if sigma == "e":
            return None
        raise MissingResonanceTable("sigma='b' needs a ResonanceTable for A_n^b")
    return table.psi_dagger_grid(sigma, grid)


def _n_limits(j: int, cfg: NormConfig) -> Tuple[int, int]:
    lo, hi = 0, j + 1
    if cfg.n_range is not None:
        lo, hi = max(lo, cfg.n_range[0]), min(hi, cfg.n_range[1])
    return lo, hi


def b_j_norm(g, j: int, sigma: str, cfg: NormConfig = NormConfig(), table=None,
             grid: Optional[Grid] = None) -> Tuple[float, int]:
    """``sup_n 2^{(1+beta) j - 4 beta n} ||A_{n,(j)} g||_2``; returns ``(value, arg-max n)``."""
    if grid is None:
        grid, g = _as_array(g)
    g_hat = grid.fft(g)
    return _b_j_hat(grid, g_hat, j, _psi_for(grid, sigma, table), cfg)


def _b_rows(grid, g_hat, j, psi, cfg):
    """``(n, 2^{(1+beta) j - 4 beta n} ||A_{n,(j)} g||)`` for each admissible ``n``."""
    beta = cfg.beta_eff
    if psi is None:
        # A_{0,(j)}^e is the identity since Psi^dagger_e >= 4/5
        return [(0, 2.0 ** ((1 + beta) * j) * grid.l2_hat(g_hat))]
    lo, hi = _n_limits(j, cfg)
    return [(n, 2.0 ** ((1 + beta) * j - 4 * beta * n) * grid.l2_hat(a_nj_weight(psi, n, j) * g_hat))
            for n in range(lo, hi + 1)]


def _b_j_hat(grid, g_hat, j, psi, cfg) -> Tuple[float, int]:
    n, val = max(_b_rows(grid, g_hat, j, psi, cfg), key=lambda r: r[1])
    return val, n


def _windows(grid: Grid, cfg: NormConfig):
    kmin, kmax = grid.k_range()
    if cfg.k_range is not None:
        if cfg.k_range[0] < kmin or cfg.k_range[1] > kmax:
            raise RangeError(f"k_range {cfg.k_range} outside the resolvable window [{kmin}, {kmax}]")
        kmin, kmax = cfg.k_range
    for k in range(kmin, kmax + 1):
        j0, top = j_window(grid, k)
        jlo, jhi = j0, top
        if cfg.j_range is not None:
            jlo, jhi = max(j0, cfg.j_range[0]), min(top, cfg.j_range[1])
        yield k, range(jlo, jhi + 1)


def z1_tableau(grid: Grid, f_hat: np.ndarray, sigma: str, cfg: NormConfig, table=None):
    """Rows ``(k, j, n, weighted ||A_{n,(j)} Q_jk f||)`` over the truncated ranges."""
    psi = _psi_for(grid, sigma, table)
    rows = []
    for k, js in _windows(grid, cfg):
        pk = grid.ifft(f_hat * lp_symbol(grid, k))
        for j in js:
            q_hat = grid.fft(spatial_cutoff(grid, j, k) * pk)
            rows += [(k, j, n, val) for n, val in _b_rows(grid, q_hat, j, psi, cfg)]
    return rows


def _z1_hat(grid, f_hat, sigma, cfg, table) -> ZWitness:
    best = ZWitness(0.0, 0, 0, 0)
    for k, j, n, val in z1_tableau(grid, f_hat, sigma, cfg, table):
        if val > best.value:
            best = ZWitness(val, k, j, n)
    return best


def z1_norm(f, sigma: str, cfg: NormConfig = NormConfig(), table=None,
            grid: Optional[Grid] = None) -> ZWitness:
    """``sup_{(k,j)} ||Q_jk f||_{B_j^sigma}`` with its arg-max."""
    if grid is None:
        grid, f = _as_array(f)
    return _z1_hat(grid, grid.fft(f), sigma, cfg, table)


def _z_ops(cfg: NormConfig, rotations: bool = True) -> List[VectorFieldOp]:
    """Distinct ``d^alpha L`` with ``L in V_{N1}`` and ``|alpha| <= alpha_max``."""
    ops = set()
    for L in vm_enumerate(cfg.N1_eff, rotations):
        for a in _multi_indices(cfg.alpha_max):
            ops.add(VectorFieldOp(tuple(x + y for x, y in zip(L.alpha, a)), L.beta))
    return sorted(ops, key=lambda o: (o.order, o.beta, o.alpha))


def z_norm(f_e: np.ndarray, f_b: np.ndarray, grid: Grid, cfg: NormConfig = NormConfig(),
           table=None, tol: Optional[float] = -1.0, rotations: bool = True) -> Tuple[float, dict]:
    """``sup_{L, alpha} z1(d^alpha L f_e) + z1(d^alpha L f_b)``.

    Vector profiles are handled componentwise (sup over components).
    Returns the value and a witness dictionary.
    """
    if tol is not None and tol < 0:
        tol = cfg.localization_tol
    ops = _z_ops(cfg, rotations)
    parts = {}
    for sigma, f in (("e", f_e), ("b", f_b)):
        comps = f if f.ndim == 4 else f[None]
        per_op = {}
        for comp in comps:
            for op, c in apply_ops(grid, comp, ops, tol):
                w = _z1_hat(grid, c, sigma, cfg, table)
                if op not in per_op or w.value > per_op[op].value:
                    per_op[op] = w
        parts[sigma] = per_op
    best_val, best_op = 0.0, ops[0]
    for op in ops:
        val = parts["e"][op].value + parts["b"][op].value
        if val > best_val:
            best_val, best_op = val, op
    we, wb = parts["e"][best_op], parts["b"][best_op]
    witness = {"op": str(best_op),
               "e": {"value": we.value, "k": we.k, "j": we.j, "n": we.n},
               "b": {"value": wb.value, "k": wb.k, "j": wb.j, "n": wb.n}}
    return float(best_val), witness


# -- radial decay probe --------------------------------------------------

class QuadratureError(EMLError, RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class DecayResult:
    times: np.ndarray
    sup_values: np.ndarray
    slope: float
    intercept: float
    error_estimate: float


def _radial_values(fhat, lam, support, t, r, nodes):
    a, b = support
    x, w = np.polynomial.legendre.leggauss(nodes)
    rho = 0.5 * (b - a) * x + 0.5 * (b + a)
    w = 0.5 * (b - a) * w
    amp = rho * fhat(rho) * np.exp(-1j * t * lam(rho)) * w
    # sin(rho r) / r with the r -> 0 limit rho
    kern = rho[None, :] * np.sinc(np.outer(r, rho) / np.pi)
    return (kern @ amp) / (2.0 * np.pi ** 2)


def radial_evolution(fhat_radial: Callable, sigma: str, t: float, r: np.ndarray, d: float = 0.5,
                     support=(5.0 / 8.0, 8.0 / 5.0), nodes: int = 256, tol: float = 1e-9):
    """``(e^{-it Lambda_sigma} f)(|x| = r)`` for radial ``fhat``; doubles nodes until converged."""
    c2 = {"e": d, "b": 1.0}[sigma]

    def lam(rho):
        return np.sqrt(1.0 + c2 * rho * rho)

    r = np.asarray(r, dtype=float)
    prev = _radial_values(fhat_radial, lam, support, t, r, nodes)
    for _ in range(6):
        nodes *= 2
        cur = _radial_values(fhat_radial, lam, support, t, r, nodes)
        scale = max(np.abs(cur).max(), 1e-300)
        err = float(np.abs(cur - prev).max() / scale)
        if err <= tol:
            return cur, err
        prev = cur
    raise QuadratureError(f"radial quadrature did not converge at t={t}: estimate {err:.3g}", err)


def linear_decay_probe(fhat_radial: Callable, sigma: str, times: Sequence[float], d: float = 0.5,
                       support=(5.0 / 8.0, 8.0 / 5.0), dr: float = 0.05,
                       tol: float = 1e-9) -> DecayResult:
    """Sup over sampled ``|x|`` of the free evolution and the log-log slope over ``times``."""
    times = np.asarray(times, dtype=float)
    sups, errs = [], []
    for t in times:
        r = np.arange(0.0, t + 40.0, dr)
        vals, err = radial_evolution(fhat_radial, sigma, t, r, d, support, tol=tol)
        sups.append(float(np.abs(vals).max()))
        errs.append(err)
    sups = np.array(sups)
    slope, intercept = np.nan, np.nan
    pos = times > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(np.log(times[pos]), np.log(sups[pos]), 1)
    return DecayResult(times, sups, float(slope), float(intercept), float(max(errs)))


# -- bootstrap monitoring ------------------------------------------------

@dataclass
class NormReport:
    times: List[float] = field(default_factory=list)
    htilde: List[Optional[float]] = field(default_factory=list)
    vorticity: List[Optional[float]] = field(default_factory=list)
    z: List[Optional[float]] = field(default_factory=list)
    z_witness: List[Optional[dict]] = field(default_factory=list)
    equivalence: List[Optional[float]] = field(default_factory=list)
    tableau: List[tuple] = field(default_factory=list)
    flags: Dict[str, Optional[float]] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def series(self) -> Dict[str, list]:
        return {"htilde": self.htilde, "vorticity": self.vorticity, "z": self.z}


def _first_exceed(times, values, factor, floor=1e-12) -> Optional[float]:
    if not values or values[0] is None:
        return None
    ref = values[0]
    for t, v in zip(times, values):
        if v is None:
            continue
        if not np.isfinite(v) or v > factor * ref + floor:
            return t
    return None


def _try(fn, notes, label):
    try:
        return fn()
    except LocalizationError as exc:
        notes.append(f"{label}: {exc}")
        return None


def profile_z_norm(u, cfg: NormConfig, table, rotations: bool = True):
    """Z-norm of the profiles ``(V_e, V_b)`` of a dispersive state."""
    from .fields import profile

    tol = cfg.localization_tol if rotations else None
    return z_norm(profile(u, "e"), profile(u, "b"), u.grid, cfg, table, tol, rotations)


def bootstrap_monitor(traj, cfg: NormConfig = NormConfig(), table=None,
                      rotations: bool = False, with_z: bool = True) -> NormReport:
    """Time series of the bootstrap quantities for every stored state of ``traj``.

    ``rotations=False`` uses derivative-only norms, which stay meaningful once
    the solution has spread toward the box boundary.  With rotations, states
    that fail the localization check are recorded as ``None`` with a note.
    """
    from .fields import DispersiveState, profile, to_dispersive, to_physical

    rep = NormReport()
    tol = cfg.localization_tol if rotations else None
    u0 = None
    for state in traj.states:
        if isinstance(state, DispersiveState):
            u, s = state, to_physical(state, check=False)
        else:
            s, u = state, to_dispersive(state, strict=False)
        if u0 is None:
            u0 = u
        rep.times.append(float(state.time))
        rep.htilde.append(_try(lambda: htilde_norm(s, cfg.N0_eff, rotations, tol), rep.notes, "htilde"))
        rep.vorticity.append(_try(lambda: vorticity_norm(s, cfg, rotations), rep.notes, "vorticity"))
        res = _try(lambda: profile_z_norm(u, cfg, table, rotations), rep.notes, "z") if with_z else None
        rep.z.append(None if res is None else res[0])
        rep.z_witness.append(None if res is None else res[1])
        hs = _h_norm_array(s.grid, s.stacked(), cfg.N0_eff, False, None)
        hu = _h_norm_array(s.grid, np.concatenate([u.U_e[None], u.U_b, u.Y]), cfg.N0_eff, False, None)
        rep.equivalence.append(hu / hs if hs > 0 else None)
    for name, vals in rep.series().items():
        rep.flags[name] = _first_exceed(rep.times, vals, cfg.bootstrap_factor)
    if u0 is not None and with_z:
        g = u0.grid
        rep.tableau = [("e",) + row for row in z1_tableau(g, g.fft(profile(u0, "e")), "e", cfg)]
        if table is not None:
            vb = profile(u0, "b")
            for c in range(3):
                rep.tableau += [(f"b{c}",) + row for row in z1_tableau(g, g.fft(vb[c]), "b", cfg, table)]
    return rep
