"""Time stepping for the physical and the dispersive formulations.

Both right-hand sides are evaluated pseudo-spectrally on coefficient arrays.
With dealiasing every product is truncated to the 2/3 ball, which makes the
two Galerkin systems identical on the retained modes (constant modes aside:
the dispersive variables do not see them).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import BreakdownError, ConfigError, VacuumError
from .fields import (
    DispersiveState,
    InitialDataSpec,
    PlasmaState,
    conserved_energy,
    dispersive_to_nv_hat,
    make_initial_data,
    to_dispersive,
    to_physical,
    vorticity,
)
from .norms import NormConfig, _h_norm_array, _weighted_array, profile_z_norm
from .spectral import Grid, cross, curl_hat, div_hat

FORMULATIONS = ("physical", "dispersive", "both")
MONITORS = ("state", "vorticity")
CSV_COLUMNS = ("t", "energy", "res_divB", "res_gauss", "h_norm", "vort_norm", "z_norm", "xform_gap")


# -- right-hand sides on coefficient arrays ----------------------------------

class PhysicalSystem:
    """``(n, v, E, B)`` coefficients stacked as a ``(10, N, N, N)`` array.

    ``project_mean`` freezes the constant modes, restricting the dynamics to
    the modes the dispersive variables can represent.
    """

    def __init__(self, grid: Grid, d: float, dealias: bool = True, project_mean: bool = False):
        self.grid, self.d, self.dealias = grid, d, dealias
        self.mask = grid.dealias_mask if dealias else None
        self.project_mean = project_mean

    def pack(self, s: PlasmaState) -> np.ndarray:
        g = self.grid
        return g.fft(np.concatenate([s.n[None], s.v, s.E, s.B]))

    def unpack(self, u: np.ndarray, time: float) -> PlasmaState:
        a = self.grid.ifft_real(u)
        return PlasmaState(self.grid, a[0], a[1:4], a[4:7], a[7:10], self.d, time)

    def _trunc(self, a_hat):
        return a_hat * self.mask if self.mask is not None else a_hat

    def rhs(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        n_hat, v_hat, e_hat, b_hat = u[0], u[1:4], u[4:7], u[7:10]
        n = g.ifft_real(n_hat)
        v = g.ifft_real(v_hat)
        b = g.ifft_real(b_hat)
        w = g.ifft_real(curl_hat(g, v_hat))
        nv_hat = self._trunc(g.fft(n * v))
        kin_hat = self._trunc(g.fft(0.5 * np.sum(v * v, axis=0)))
        # v.grad v + v x B = grad |v|^2/2 - v x (curl v - B)
        lor_hat = self._trunc(g.fft(cross(v, w - b)))
        grad = 1j * g.xi_odd
        out = np.empty_like(u)
        out[0] = -div_hat(g, v_hat) - div_hat(g, nv_hat)
        out[1:4] = -grad * (kin_hat + self.d * n_hat)[None] + lor_hat - e_hat
        out[4:7] = curl_hat(g, b_hat) + v_hat + nv_hat
        out[7:10] = -curl_hat(g, e_hat)
        if self.project_mean:
            out[:, 0, 0, 0] = 0.0
        return out


class DispersiveSystem:
    """``(U_e, U_b, Y)`` coefficients stacked as a ``(7, N, N, N)`` array."""

    def __init__(self, grid: Grid, d: float, dealias: bool = True):
        self.grid, self.d, self.dealias = grid, d, dealias
        self.mask = grid.dealias_mask if dealias else None
        k = grid.kmag
        self.lam_e = np.sqrt(1.0 + d * k * k)
        self.lam_b = np.sqrt(1.0 + k * k)
        self.linear = np.concatenate([
            -1j * self.lam_e[None], -1j * np.broadcast_to(self.lam_b, (3,) + grid.shape),
            np.zeros((3,) + grid.shape)])

    def pack(self, u: DispersiveState) -> np.ndarray:
        return self.grid.fft(np.concatenate([u.U_e[None], u.U_b, u.Y.astype(complex)]))

    def unpack(self, a: np.ndarray, time: float) -> DispersiveState:
        g = self.grid
        x = g.ifft(a)
        return DispersiveState(g, x[0], x[1:4], x[4:7].real.copy(), self.d, time)

    def _trunc(self, a_hat):
        return a_hat * self.mask if self.mask is not None else a_hat

    def nonlinear(self, a: np.ndarray) -> np.ndarray:
        g = self.grid
        ue_hat, ub_hat, y_hat = a[0], a[1:4], a[4:7]
        n_hat, v_hat = dispersive_to_nv_hat(g, self.d, ue_hat, ub_hat, y_hat)
        n, v, y = g.ifft_real(n_hat), g.ifft_real(v_hat), g.ifft_real(y_hat)
        nv_hat = self._trunc(g.fft(n * v))
        kin_hat = self._trunc(g.fft(0.5 * np.sum(v * v, axis=0)))
        vy_hat = self._trunc(g.fft(cross(v, y)))
        R = g.riesz
        out = np.empty_like(a)
        out[0] = (self.lam_e * np.sum(R * nv_hat, axis=0) + 1j * g.kmag * kin_hat
                  - 1j * np.sum(R * vy_hat, axis=0))
        out[1:4] = cross(R, nv_hat) - 1j / self.lam_b * cross(R, vy_hat)
        out[4:7] = curl_hat(g, vy_hat)
        return out

    def rhs(self, a: np.ndarray) -> np.ndarray:
        return self.linear * a + self.nonlinear(a)


def rhs_physical(state: PlasmaState, dealias: bool = True) -> PlasmaState:
    """Time derivative of ``(n, v, E, B)`` packaged as a state."""
    sys_ = PhysicalSystem(state.grid, state.d, dealias)
    return sys_.unpack(sys_.rhs(sys_.pack(state)), state.time)


def rhs_dispersive(u: DispersiveState, dealias: bool = True) -> DispersiveState:
    """Time derivative of ``(U_e, U_b, Y)`` packaged as a dispersive state."""
    sys_ = DispersiveSystem(u.grid, u.d, dealias)
    return sys_.unpack(sys_.rhs(sys_.pack(u)), u.time)


# -- integrators -------------------------------------------------------------

def _check_finite(u: np.ndarray):
    if not np.all(np.isfinite(u)):
        raise BreakdownError("non-finite values in the state")


def rk4_step(f, u: np.ndarray, h: float) -> np.ndarray:
    k1 = f(u)
    k2 = f(u + 0.5 * h * k1)
    k3 = f(u + 0.5 * h * k2)
    k4 = f(u + h * k3)
    out = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out)
    return out


class LawsonRK4:
    """Integrating-factor RK4 for ``u' = L u + N(u)`` with diagonal ``L``."""

    def __init__(self, linear: np.ndarray, nonlinear, h: float):
        self.N = nonlinear
        self.h = h
        self.full = np.exp(h * linear)
        self.half = np.exp(0.5 * h * linear)

    def step(self, u: np.ndarray) -> np.ndarray:
        h, E, E2, N = self.h, self.full, self.half, self.N
        k1 = N(u)
        k2 = N(E2 * (u + 0.5 * h * k1))
        k3 = N(E2 * u + 0.5 * h * k2)
        k4 = N(E * u + h * E2 * k3)
        out = E * u + (h / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
        _check_finite(out)
        return out


def step(state, dt: float, dealias: bool = True):
    """One step: classical RK4 for ``PlasmaState``, Lawson RK4 for ``DispersiveState``."""
    if isinstance(state, PlasmaState):
        sys_ = PhysicalSystem(state.grid, state.d, dealias)
        return sys_.unpack(rk4_step(sys_.rhs, sys_.pack(state), dt), state.time + dt)
    if isinstance(state, DispersiveState):
        sys_ = DispersiveSystem(state.grid, state.d, dealias)
        stepper = LawsonRK4(sys_.linear, sys_.nonlinear, dt)
        return sys_.unpack(stepper.step(sys_.pack(state)), state.time + dt)
    raise TypeError(f"cannot step a {type(state).__name__}")


# -- configured runs -------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    d: float = 0.5
    points_per_axis: int = 32
    box_period: float = 8 * math.pi
    t_end: float = 1.0
    dt: Optional[float] = None
    formulation: str = "physical"
    dealias: bool = True
    blowup_factor: float = 10.0
    output_stride: int = 1
    monitor: str = "state"
    track_z: bool = False
    keep_states: bool = True
    project_mean: bool = False
    cfl_limit: float = 2.0
    initial: InitialDataSpec = InitialDataSpec(eps_bar=1e-2)
    norms: NormConfig = NormConfig()

    def __post_init__(self):
        if not 0 < self.d < 1:
            raise ConfigError("d must lie in (0, 1)")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"formulation must be one of {FORMULATIONS}")
        if self.monitor not in MONITORS:
            raise ConfigError(f"monitor must be one of {MONITORS}")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.output_stride < 1:
            raise ConfigError("output_stride must be >= 1")
        if not self.blowup_factor > 1:
            raise ConfigError("blowup_factor must exceed 1")
        if not self.cfl_limit > 0:
            raise ConfigError("cfl_limit must be positive")
        dt, _ = self.time_step()
        cfl = dt * float(self.grid.kmag.max()) * max(1.0, math.sqrt(self.d))
        if cfl > self.cfl_limit:
            raise ConfigError(f"dt * max|xi| = {cfl:.3g} exceeds cfl_limit = {self.cfl_limit}")

    @property
    def grid(self) -> Grid:
        return Grid(self.points_per_axis, self.box_period)

    def time_step(self) -> tuple:
        """``(dt, steps)`` with ``steps * dt = t_end`` exactly."""
        dt = self.dt if self.dt is not None else 0.5 / float(self.grid.kmag.max())
        steps = max(1, int(math.ceil(self.t_end / dt - 1e-9)))
        return self.t_end / steps, steps


@dataclass
class Trajectory:
    config: SimConfig
    rows: List[dict] = field(default_factory=list)
    states: list = field(default_factory=list)
    partner_states: list = field(default_factory=list)
    breakdown: Optional[dict] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow(["" if r[c] is None else repr(float(r[c])) for c in CSV_COLUMNS])


def _mean_free_gap(a: PlasmaState, b: PlasmaState) -> float:
    x, y = a.stacked(), b.stacked()
    x = x - x.mean(axis=(-3, -2, -1), keepdims=True)
    y = y - y.mean(axis=(-3, -2, -1), keepdims=True)
    den = np.sqrt(np.sum(x * x))
    num = np.sqrt(np.sum((x - y) ** 2))
    return float(num / den) if den > 0 else float(num)


def monitored_norm(s: PlasmaState, cfg: SimConfig) -> float:
    """Derivative-only norm used for breakdown detection."""
    g = s.grid
    if cfg.monitor == "vorticity":
        return _weighted_array(g, vorticity(s), cfg.norms.vorticity_weight, cfg.norms.N1_eff, False, None)
    return _h_norm_array(g, s.stacked(), cfg.norms.N0_eff, False, None)


def diagnostics_row(s: PlasmaState, cfg: SimConfig, u: Optional[DispersiveState] = None,
                    partner: Optional[PlasmaState] = None, table=None) -> dict:
    res_b, res_e = s.constraint_residuals()
    g = s.grid
    vort = _weighted_array(g, vorticity(s), cfg.norms.vorticity_weight, cfg.norms.N1_eff, False, None)
    row = {
        "t": float(s.time),
        "energy": conserved_energy(s),
        "res_divB": res_b,
        "res_gauss": res_e,
        "h_norm": vort if cfg.monitor == "vorticity" else monitored_norm(s, cfg),
        "vort_norm": vort,
        "z_norm": None,
        "xform_gap": None if partner is None else _mean_free_gap(s, partner),
    }
    if cfg.track_z:
        if u is None:
            u = to_dispersive(s, strict=False)
        row["z_norm"] = profile_z_norm(u, cfg.norms, table, rotations=False)[0]
    return row


def run(config: SimConfig, initial: Optional[PlasmaState] = None, table=None) -> Trajectory:
    """Evolve to ``t_end`` or breakdown; breakdown is recorded, never raised."""
    cfg = config
    grid = cfg.grid
    if initial is None:
        initial = make_initial_data(cfg.initial, grid, cfg.d, cfg.norms)
    if cfg.track_z and table is None:
        from .resonance import ResonanceTable

        table = ResonanceTable.build(cfg.d)
    dt, steps = cfg.time_step()
    traj = Trajectory(cfg)

    phys = disp = None
    if cfg.formulation in ("physical", "both"):
        phys = PhysicalSystem(grid, cfg.d, cfg.dealias, cfg.project_mean)
        p = phys.pack(initial)
    if cfg.formulation in ("dispersive", "both"):
        disp = DispersiveSystem(grid, cfg.d, cfg.dealias)
        q = disp.pack(to_dispersive(initial))
        lawson = LawsonRK4(disp.linear, disp.nonlinear, dt)

    def record(t):
        u_state = disp.unpack(q, t) if disp is not None else None
        if phys is not None:
            s = phys.unpack(p, t)
            partner = to_physical(u_state, check=False) if u_state is not None else None
        else:
            s, partner = to_physical(u_state, check=False), None
        row = diagnostics_row(s, cfg, u_state, partner, table)
        traj.rows.append(row)
        if cfg.keep_states:
            traj.states.append(s if phys is not None else u_state)
            if partner is not None:
                traj.partner_states.append(u_state)
        return row

    t = 0.0
    try:
        h0 = record(0.0)["h_norm"]
        for i in range(1, steps + 1):
            t = i * dt
            if phys is not None:
                p = rk4_step(phys.rhs, p, dt)
            if disp is not None:
                q = lawson.step(q)
            if i % cfg.output_stride == 0 or i == steps:
                h = record(t)["h_norm"]
                if _exceeds(h, h0, cfg.blowup_factor):
                    traj.breakdown = {"time": t, "cause": "norm growth"}
                    break
    except BreakdownError as exc:
        traj.breakdown = {"time": t, "cause": str(exc)}
    except VacuumError as exc:
        traj.breakdown = {"time": t, "cause": f"vacuum: {exc}"}
    return traj


def _exceeds(value, ref, factor) -> bool:
    return not np.isfinite(value) or (ref > 0 and value >= factor * ref)


def breakdown_time(traj: Trajectory, blowup_factor: Optional[float] = None,
                   key: str = "h_norm") -> Optional[float]:
    """First time ``key`` reaches ``blowup_factor`` times its initial value or turns non-finite."""
    factor = traj.config.blowup_factor if blowup_factor is None else blowup_factor
    if traj.rows:
        ref = traj.rows[0][key]
        for r in traj.rows:
            v = r[key]
            if v is None:
                continue
            if _exceeds(v, ref, factor):
                return float(r["t"])
    if traj.breakdown is not None and "norm growth" not in traj.breakdown["cause"]:
        return float(traj.breakdown["time"])
    return None
