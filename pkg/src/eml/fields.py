"""Physical state, Hodge decomposition, diagonalization and initial data.

The normalized one-fluid system evolves ``(n, v, E, B)`` subject to
``div B = 0`` and ``div E + n = 0``.  ``HodgeVars`` holds the scalar/vector
potentials ``(F, G, Z, W, Y)`` and ``DispersiveState`` the diagonal variables
``(U_e, U_b, Y)`` whose linear flow is ``exp(-i t Lambda_sigma)``.

All arrays are stored in physical space with shape ``(N, N, N)`` for scalars
and ``(3, N, N, N)`` for vectors.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConstraintError, GridMismatchError, VacuumError
from .spectral import (
    Grid,
    cross,
    curl_hat,
    div_hat,
    imag_part_hat,
    real_part_hat,
)

MEAN_TOL = 1e-10
DIV_TOL = 1e-8


def _check_shape(grid: Grid, a: np.ndarray, vector: bool, name: str):
    want = ((3,) if vector else ()) + grid.shape
    if a.shape != want:
        raise GridMismatchError(f"{name} has shape {a.shape}, expected {want}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")


def _relative_mean(a: np.ndarray) -> float:
    scale = np.abs(a).max()
    if scale == 0:
        return 0.0
    return float(np.abs(a.mean(axis=(-3, -2, -1))).max() / scale)


@dataclass(frozen=True)
class PlasmaState:
    grid: Grid
    n: np.ndarray
    v: np.ndarray
    E: np.ndarray
    B: np.ndarray
    d: float
    time: float = 0.0

    def __post_init__(self):
        _check_shape(self.grid, self.n, False, "n")
        for name in ("v", "E", "B"):
            _check_shape(self.grid, getattr(self, name), True, name)
        if not 0 < self.d < 1:
            raise ValueError(f"d must lie in (0, 1), got {self.d}")

    @classmethod
    def zeros(cls, grid: Grid, d: float, time: float = 0.0) -> "PlasmaState":
        z = np.zeros(grid.shape)
        zv = np.zeros((3,) + grid.shape)
        return cls(grid, z, zv, zv.copy(), zv.copy(), d, time)

    def constraint_residuals(self) -> tuple:
        """``(||div B||_2, ||div E + n||_2)``."""
        g = self.grid
        div_b = g.ifft_real(div_hat(g, g.fft(self.B)))
        gauss = g.ifft_real(div_hat(g, g.fft(self.E))) + self.n
        return g.l2(div_b), g.l2(gauss)

    def check_vacuum(self):
        if np.any(1.0 + self.n <= 0):
            raise VacuumError("density 1 + n is not positive everywhere")

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.n[None], self.v, self.E, self.B])

    def l2(self) -> float:
        return self.grid.l2(self.stacked())


@dataclass(frozen=True)
class HodgeVars:
    grid: Grid
    F: np.ndarray
    G: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    d: float

    def check_divergence_free(self, tol: float = DIV_TOL):
        """Residuals are measured against the largest of the three fields, so a
        roundoff-sized field does not trip the check."""
        g = self.grid
        hats = {name: g.fft(getattr(self, name)) for name in ("G", "W", "Y")}
        scale = max(g.l2_hat(g.kmag * h) for h in hats.values())
        if scale == 0:
            return
        for name, h in hats.items():
            r = g.l2_hat(div_hat(g, h)) / scale
            if r > tol:
                raise ConstraintError(f"div {name} is not zero (relative residual {r:.2e})")


@dataclass(frozen=True)
class DispersiveState:
    grid: Grid
    U_e: np.ndarray
    U_b: np.ndarray
    Y: np.ndarray
    d: float
    time: float = 0.0

    def __post_init__(self):
        _check_shape(self.grid, self.U_e, False, "U_e")
        _check_shape(self.grid, self.U_b, True, "U_b")
        _check_shape(self.grid, self.Y, True, "Y")

    def l2(self) -> float:
        g = self.grid
        return float(np.sqrt(g.l2(self.U_e) ** 2 + g.l2(self.U_b) ** 2 + g.l2(self.Y) ** 2))


@dataclass(frozen=True)
class InitialDataSpec:
    """Recipe for small localized data.

    ``eps_bar`` is the sup-norm amplitude of each random ingredient;
    ``delta0`` is the target for the weighted vorticity norm
    ``||(1+|x|^2)^{1/4} Y_0||`` at order ``sobolev_order``.  The smallness
    relation ``delta0 <= eps_bar`` is checked by ``make_initial_data`` in
    norm units, against the weighted data norm of the irrotational part.  Every
    ingredient passes through the high-pass ``(1 - exp(-s^2|xi|^2/2))^m``,
    whose kernel is local; it makes the spectrum vanish to order ``2m`` at
    the origin so Riesz transforms of the data keep fast spatial decay.
    """

    eps_bar: float
    delta0: float = 0.0
    envelope_width: float = 2.0
    band: float = 0.5
    seed: int = 0
    mode_count: int = 24
    sobolev_order: int = 2
    highpass_order: int = 2
    highpass_scale: float = 1.0

    def __post_init__(self):
        if not self.eps_bar > 0:
            raise ValueError("eps_bar must be positive")
        if self.delta0 < 0:
            raise ValueError("delta0 must be nonnegative")
        if self.highpass_order < 0 or self.highpass_scale <= 0:
            raise ValueError("highpass_order must be >= 0 and highpass_scale > 0")


# -- Hodge decomposition -----------------------------------------------------

def _riesz_dot(grid, a_hat):
    return np.sum(grid.riesz * a_hat, axis=0)


def _riesz_cross(grid, a_hat):
    return cross(grid.riesz, a_hat)


def hodge_decompose(s: PlasmaState, strict: bool = True) -> HodgeVars:
    """Potentials of ``v`` and ``E``; ``strict=False`` silently drops constant modes."""
    g = s.grid
    for name in ("v", "E"):
        if strict and _relative_mean(getattr(s, name)) > MEAN_TOL:
            raise ConstraintError(f"{name} has a nonzero mean; Hodge potentials need mean-free input")
    v_hat, e_hat = g.fft(s.v), g.fft(s.E)
    F = g.ifft_real(_riesz_dot(g, v_hat))
    G = g.ifft_real(_riesz_cross(g, v_hat))
    Z = g.ifft_real(_riesz_dot(g, e_hat))
    W = g.ifft_real(_riesz_cross(g, e_hat))
    Y = vorticity(s)
    return HodgeVars(g, F, G, Z, W, Y, s.d)


def hodge_reconstruct(h: HodgeVars, time: float = 0.0, check: bool = True) -> PlasmaState:
    g = h.grid
    if check:
        h.check_divergence_free()
    f_hat, gg_hat = g.fft(h.F), g.fft(h.G)
    z_hat, w_hat = g.fft(h.Z), g.fft(h.W)
    R = g.riesz
    v = g.ifft_real(-R * f_hat[None] + cross(R, gg_hat))
    E = g.ifft_real(-R * z_hat[None] + cross(R, w_hat))
    n = g.ifft_real(-g.kmag * z_hat)
    B = h.Y + g.ifft_real(g.kmag * gg_hat)
    return PlasmaState(g, n, v, E, B, h.d, time)


def vorticity(s: PlasmaState) -> np.ndarray:
    """``Y = B - curl v``."""
    g = s.grid
    return s.B - g.ifft_real(curl_hat(g, g.fft(s.v)))


# -- diagonalization -------------------------------------------------------

def _lams(grid: Grid, d: float):
    k = grid.kmag
    return np.sqrt(1.0 + d * k * k), np.sqrt(1.0 + k * k)


def diagonalize(h: HodgeVars, time: float = 0.0) -> DispersiveState:
    g = h.grid
    lam_e, lam_b = _lams(g, h.d)
    U_e = g.ifft(lam_e * g.fft(h.Z)) + 1j * h.F
    U_b = h.W + 1j * g.ifft(lam_b * g.fft(h.G)) + 1j * g.ifft(g.kmag / lam_b * g.fft(h.Y))
    return DispersiveState(g, U_e, U_b, h.Y.copy(), h.d, time)


def undiagonalize(u: DispersiveState) -> HodgeVars:
    g = u.grid
    lam_e, lam_b = _lams(g, u.d)
    F = u.U_e.imag.copy()
    Z = g.ifft_real(g.fft(u.U_e.real) / lam_e)
    W = u.U_b.real.copy()
    G = g.ifft_real(g.fft(u.U_b.imag) / lam_b - g.kmag / lam_b ** 2 * g.fft(u.Y))
    return HodgeVars(g, F, G, Z, W, u.Y.copy(), u.d)


def to_dispersive(s: PlasmaState, strict: bool = True) -> DispersiveState:
    return diagonalize(hodge_decompose(s, strict), s.time)


def to_physical(u: DispersiveState, check: bool = True) -> PlasmaState:
    return hodge_reconstruct(undiagonalize(u), u.time, check=check)


# -- spectral-space helpers shared with the dynamics module ----------------

def dispersive_to_nv_hat(grid: Grid, d: float, ue_hat, ub_hat, y_hat):
    """Coefficients of ``n`` and ``v`` from dispersive coefficients."""
    lam_e, lam_b = _lams(grid, d)
    k = grid.kmag
    R = grid.riesz
    n_hat = -k / lam_e * real_part_hat(ue_hat)
    f_hat = imag_part_hat(ue_hat)
    g_hat = imag_part_hat(ub_hat) / lam_b - (k / lam_b ** 2) * y_hat
    v_hat = -R * f_hat[None] + cross(R, g_hat)
    return n_hat, v_hat


# -- conserved energy --------------------------------------------------------

def conserved_energy(s: PlasmaState) -> float:
    """``int d n^2 + (1+n)|v|^2 + |E|^2 + |B|^2 dx`` by lattice quadrature."""
    s.check_vacuum()
    dens = (s.d * s.n ** 2 + (1.0 + s.n) * np.sum(s.v ** 2, axis=0)
            + np.sum(s.E ** 2, axis=0) + np.sum(s.B ** 2, axis=0))
    return float(s.grid.cell_volume * dens.sum())


# -- profiles --------------------------------------------------------------

def profile(u: DispersiveState, sigma: str) -> np.ndarray:
    """``V_sigma = exp(i t Lambda_sigma) U_sigma``."""
    return free_flow(u.grid, u.d, sigma, _pick(u, sigma), -u.time)


def free_flow(grid: Grid, d: float, sigma: str, a: np.ndarray, t: float) -> np.ndarray:
    """Apply ``exp(-i t Lambda_sigma)`` to a physical-space array."""
    lam_e, lam_b = _lams(grid, d)
    lam = {"e": lam_e, "b": lam_b}[sigma]
    return grid.ifft(np.exp(-1j * t * lam) * grid.fft(a))


def _pick(u: DispersiveState, sigma: str) -> np.ndarray:
    if sigma == "e":
        return u.U_e
    if sigma == "b":
        return u.U_b
    raise ValueError(f"sigma must be 'e' or 'b', got {sigma!r}")


# -- initial data ------------------------------------------------------------

def _random_packet(grid: Grid, rng: np.random.Generator, spec: InitialDataSpec,
                   components: int) -> np.ndarray:
    """Sum of random plane waves under a Gaussian envelope, band-limited."""
    x = grid.x
    env = np.exp(-np.sum(x ** 2, axis=0) / (2 * spec.envelope_width ** 2))
    out = np.zeros((components,) + grid.shape)
    for c in range(components):
        acc = np.zeros(grid.shape)
        for _ in range(spec.mode_count):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            kvec = direction * spec.band * rng.uniform(0.0, 1.0)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.normal()
            acc += amp * np.cos(np.tensordot(kvec, x, axes=1) + phase)
        out[c] = acc * env
    return out


def _band_limit(grid: Grid, a_hat: np.ndarray, spec: InitialDataSpec) -> np.ndarray:
    hp = (1.0 - np.exp(-0.5 * (spec.highpass_scale * grid.kmag) ** 2)) ** spec.highpass_order
    out = a_hat * hp * (grid.dealias_mask & grid.nyquist_free)
    out[..., 0, 0, 0] = 0.0
    return out


def _normalize(a: np.ndarray, amp: float) -> np.ndarray:
    m = np.abs(a).max()
    return a * (amp / m) if m > 0 else a


def make_initial_data(spec: InitialDataSpec, grid: Grid, d: float, norm_cfg=None) -> PlasmaState:
    """Seeded, mean-free, constraint-satisfying data.

    ``E_0`` is random, ``n_0 = -div E_0``.  The velocity is a gradient part
    plus a divergence-free part; the magnetic field is chosen so that the
    vorticity equals ``s * Yhat`` for a fixed divergence-free shape, with
    ``s`` fixed by the weighted vorticity norm target ``delta0``.
    """
    from .norms import NormConfig, vorticity_norm

    if norm_cfg is None:
        norm_cfg = NormConfig(N1_eff=spec.sobolev_order)
    rng = np.random.default_rng(spec.seed)
    g = grid
    eps = spec.eps_bar

    def bl_real(a):
        return g.ifft_real(_band_limit(g, g.fft(a), spec))

    e0 = _normalize(bl_real(_random_packet(g, rng, spec, 3)), eps)
    e0_hat = g.fft(e0)
    n0 = g.ifft_real(-div_hat(g, e0_hat))

    pot = bl_real(_random_packet(g, rng, spec, 1)[0])
    v_irr = g.ifft_real(1j * g.xi_odd * g.fft(pot)[None])
    v_irr = _normalize(v_irr, eps)

    # divergence-free dispersive part of v and the vorticity shape Yhat
    gd_hat = _band_limit(g, curl_hat(g, g.fft(_random_packet(g, rng, spec, 3))), spec)
    v_rot = g.ifft_real(cross(g.riesz, gd_hat))
    scale = eps / max(np.abs(v_rot).max(), 1e-300)
    gd_hat, v_rot = gd_hat * scale, v_rot * scale
    ys_hat = _band_limit(g, curl_hat(g, g.fft(_random_packet(g, rng, spec, 3))), spec)
    ys_hat *= eps / max(np.abs(g.ifft_real(ys_hat)).max(), 1e-300)

    lam_b2 = 1.0 + g.kmag ** 2
    v_vort = g.ifft_real(-cross(g.riesz, g.kmag / lam_b2 * ys_hat))
    b_disp = g.ifft_real(g.kmag * gd_hat)
    b_vort = g.ifft_real(ys_hat / lam_b2)

    def build(s_amp: float) -> PlasmaState:
        v = v_irr + v_rot + s_amp * v_vort
        B = b_disp + s_amp * b_vort
        return PlasmaState(g, n0, v, e0, B, d, 0.0)

    if spec.delta0 == 0:
        return build(0.0)
    from .norms import data_norm

    eps_w = data_norm(build(0.0), norm_cfg)
    if spec.delta0 > eps_w:
        raise ConstraintError(f"delta0={spec.delta0:.6g} exceeds the data norm eps_bar={eps_w:.6g}")

    # Y(s) = s * Yhat exactly, so the weighted norm is linear in s
    from .norms import _weighted_array

    shape = g.ifft_real(ys_hat)
    unit = _weighted_array(g, shape, norm_cfg.vorticity_weight, norm_cfg.N1_eff,
                           True, norm_cfg.localization_tol)
    if not np.isfinite(unit) or unit <= 0:
        raise ConstraintError("vorticity target unreachable at this resolution")
    state = build(spec.delta0 / unit)
    got = vorticity_norm(state, norm_cfg)
    if abs(got - spec.delta0) > 1e-3 * spec.delta0:
        raise ConstraintError(f"vorticity norm {got:.6g} misses target {spec.delta0:.6g}")
    return state


# -- snapshots ------------------------------------------------------------
#
# Layout (version 1):
#   line 1: b"EMLSNAP 1\n"
#   line 2: UTF-8 JSON header terminated by "\n"; keys kind, points_per_axis,
#           box_period, d, time, fields = [[name, components], ...]
#   body:   each listed field as little-endian float64 in C order; complex
#           fields appear as two entries "<name>.re" and "<name>.im".

SNAPSHOT_MAGIC = b"EMLSNAP"
SNAPSHOT_VERSION = 1


def _snapshot_fields(state):
    if isinstance(state, PlasmaState):
        return "plasma", [("n", state.n), ("v", state.v), ("E", state.E), ("B", state.B)]
    if isinstance(state, DispersiveState):
        return "dispersive", [("U_e.re", state.U_e.real), ("U_e.im", state.U_e.imag),
                              ("U_b.re", state.U_b.real), ("U_b.im", state.U_b.imag),
                              ("Y", state.Y)]
    raise TypeError(f"cannot snapshot {type(state).__name__}")


def save_snapshot(state, path) -> None:
    kind, fields = _snapshot_fields(state)
    header = {
        "kind": kind,
        "points_per_axis": state.grid.points_per_axis,
        "box_period": state.grid.box_period,
        "d": state.d,
        "time": state.time,
        "fields": [[name, 1 if a.ndim == 3 else a.shape[0]] for name, a in fields],
    }
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC + b" %d\n" % SNAPSHOT_VERSION)
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    for _, a in fields:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_snapshot(path):
    raw = Path(path).read_bytes()
    if raw.count(b"\n") < 2:
        raise ValueError(f"{path}: not a snapshot file")
    first, rest = raw.split(b"\n", 1)
    magic, _, ver = first.partition(b" ")
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    if int(ver) != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: snapshot version {int(ver)} is not supported")
    head, body = rest.split(b"\n", 1)
    header = json.loads(head)
    grid = Grid(header["points_per_axis"], header["box_period"])
    arrays = {}
    offset = 0
    for name, comps in header["fields"]:
        shape = grid.shape if comps == 1 else (comps,) + grid.shape
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += 8 * count
    if header["kind"] == "plasma":
        return PlasmaState(grid, arrays["n"], arrays["v"], arrays["E"], arrays["B"],
                           header["d"], header["time"])
    return DispersiveState(grid, arrays["U_e.re"] + 1j * arrays["U_e.im"],
                           arrays["U_b.re"] + 1j * arrays["U_b.im"], arrays["Y"],
                           header["d"], header["time"])
