"""Periodic pseudo-spectral substrate.

Grids, physical/spectral fields, Fourier multipliers, Littlewood-Paley and
physical-space dyadic localizers, and the rotation vector fields.

Conventions: transforms are unitary (``norm="ortho"``), coefficients are stored
in FFT order, and coordinates are centered, ``x in [-L/2, L/2)^3``.  Odd symbols
(derivatives, Riesz transforms) vanish on the Nyquist planes so that real fields
stay real; radial symbols keep the Nyquist modes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, LocalizationError, RangeError

# number of FFT worker threads; set through ``set_fft_workers``
_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global _WORKERS
    if n < 1:
        raise ValueError("need at least one FFT worker")
    _WORKERS = int(n)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic sampling of the cube ``[-L/2, L/2)^3``."""

    points_per_axis: int
    box_period: float

    def __post_init__(self):
        n = self.points_per_axis
        if int(n) != n or n < 8 or n % 2:
            raise ValueError(f"points_per_axis must be an even integer >= 8, got {n}")
        if not (self.box_period > 0 and np.isfinite(self.box_period)):
            raise ValueError(f"box_period must be positive, got {self.box_period}")

    @property
    def shape(self) -> tuple:
        n = self.points_per_axis
        return (n, n, n)

    @property
    def spacing(self) -> float:
        return self.box_period / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def nyquist(self) -> float:
        return np.pi * self.points_per_axis / self.box_period

    @property
    def min_frequency(self) -> float:
        return 2 * np.pi / self.box_period

    @cached_property
    def axis_coordinates(self) -> np.ndarray:
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    @cached_property
    def axis_frequencies(self) -> np.ndarray:
        n = self.points_per_axis
        return self.min_frequency * np.fft.fftfreq(n, 1.0 / n)

    @cached_property
    def x(self) -> np.ndarray:
        """Centered coordinates, shape (3, N, N, N).

        The physical array index ``i`` maps to ``x = (i - N/2) h``; spectral
        operations are translation invariant so this shift only fixes where the
        origin sits for multiplication by ``x``.
        """
        c = self.axis_coordinates
        return np.array(np.meshgrid(c, c, c, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.x ** 2, axis=0))

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequency lattice in FFT order, shape (3, N, N, N)."""
        k = self.axis_frequencies
        return np.array(np.meshgrid(k, k, k, indexing="ij"))

    @cached_property
    def xi_odd(self) -> np.ndarray:
        """Frequencies with the Nyquist component zeroed (for odd symbols)."""
        k = self.axis_frequencies.copy()
        k[self.points_per_axis // 2] = 0.0
        return np.array(np.meshgrid(k, k, k, indexing="ij"))

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xi ** 2, axis=0))

    @cached_property
    def kmag_sq_index(self) -> np.ndarray:
        """Integer ``|m|^2`` with ``xi = (2 pi / L) m``; radii repeat a lot."""
        n = self.points_per_axis
        m = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        mx, my, mz = np.meshgrid(m, m, m, indexing="ij")
        return mx * mx + my * my + mz * mz

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """Boolean mask of modes with no Nyquist component."""
        n = self.points_per_axis
        ok = np.ones(n, dtype=bool)
        ok[n // 2] = False
        return ok[:, None, None] & ok[None, :, None] & ok[None, None, :]

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Spherical 2/3-rule truncation."""
        return self.kmag <= (2.0 / 3.0) * self.nyquist

    @cached_property
    def riesz(self) -> np.ndarray:
        """Symbols ``i xi_j / |xi|`` (zero at xi = 0 and on Nyquist planes)."""
        k = self.kmag
        safe = np.where(k > 0, k, 1.0)
        return np.where(k > 0, 1j * self.xi_odd / safe, 0.0)

    @cached_property
    def max_resolved_frequency(self) -> float:
        return float(self.kmag.max())

    def k_range(self) -> tuple:
        """Resolvable Littlewood-Paley window ``(k_min, k_max)``."""
        kmin = int(np.floor(np.log2(self.min_frequency)))
        kmax = int(np.ceil(np.log2(np.sqrt(3.0) * self.nyquist)))
        return kmin, kmax

    def j_max(self) -> int:
        """Largest physical dyadic index, from ``2^j <= L/4``."""
        return int(np.floor(np.log2(self.box_period / 4.0)))

    # -- array-level transforms -------------------------------------------
    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.fftn(a, axes=(-3, -2, -1), norm="ortho", workers=_WORKERS)

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return sfft.ifftn(a, axes=(-3, -2, -1), norm="ortho", workers=_WORKERS)

    def ifft_real(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(a).real

    def l2(self, a: np.ndarray) -> float:
        """``L^2`` norm over the box (component axes summed)."""
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(a) ** 2)))

    def l2_hat(self, a_hat: np.ndarray) -> float:
        """``L^2`` norm of a field given by its coefficients (Parseval)."""
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(a_hat) ** 2)))


def conj_reflect(a_hat: np.ndarray) -> np.ndarray:
    """Coefficients of the complex conjugate field: ``conj(a(-xi))``."""
    flipped = np.flip(a_hat, axis=(-3, -2, -1))
    return np.conj(np.roll(flipped, 1, axis=(-3, -2, -1)))


def real_part_hat(a_hat: np.ndarray) -> np.ndarray:
    return 0.5 * (a_hat + conj_reflect(a_hat))


def imag_part_hat(a_hat: np.ndarray) -> np.ndarray:
    return -0.5j * (a_hat - conj_reflect(a_hat))


# -- fields ----------------------------------------------------------------

@dataclass(frozen=True)
class RealField:
    """Samples over the coordinate lattice.

    ``values`` has shape ``(..., N, N, N)``; leading axes index vector
    components.  Physical unknowns are real; profiles and dispersive variables
    reuse this container with complex values.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[-3:] != self.grid.shape:
            raise GridMismatchError(f"values shape {self.values.shape} does not match {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def mean(self):
        return self.values.mean(axis=(-3, -2, -1))

    def l2(self) -> float:
        return self.grid.l2(self.values)


@dataclass(frozen=True)
class SpectralField:
    grid: Grid
    coefficients: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        if self.coefficients.shape[-3:] != self.grid.shape:
            raise GridMismatchError(
                f"coefficient shape {self.coefficients.shape} does not match {self.grid.shape}")

    def hermitian_defect(self) -> float:
        c = self.coefficients
        scale = max(np.abs(c).max(), 1e-300)
        return float(np.abs(c - conj_reflect(c)).max() / scale)


def forward_transform(f: RealField) -> SpectralField:
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite input to forward_transform")
    return SpectralField(f.grid, f.grid.fft(f.values), hermitian=bool(np.isrealobj(f.values)))


def inverse_transform(F: SpectralField, grid: Optional[Grid] = None) -> RealField:
    if grid is not None and grid != F.grid:
        raise GridMismatchError("spectral field lives on a different grid")
    vals = F.grid.ifft(F.coefficients)
    if F.hermitian:
        vals = vals.real
    return RealField(F.grid, vals)


# -- Fourier multipliers -----------------------------------------------------

@dataclass(frozen=True)
class Symbol:
    """Fourier multiplier ``xi -> func(xi, |xi|)`` with a declared zero-mode value.

    ``func`` receives the frequency array (3, ...) and the modulus array and
    is only asked for nonzero frequencies.  ``odd`` symbols see the
    Nyquist-zeroed frequency array.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    zero_value: complex = 0.0
    odd: bool = False
    name: str = "symbol"
    preserves_real: bool = True

    def on_grid(self, grid: Grid) -> np.ndarray:
        k = grid.kmag
        nz = k > 0
        xi = grid.xi_odd if self.odd else grid.xi
        out = np.empty(grid.shape, dtype=complex)
        out[nz] = self.func(xi[:, nz], k[nz])
        out[~nz] = self.zero_value
        if not np.all(np.isfinite(out)):
            raise ValueError(f"symbol {self.name} is not finite on the lattice")
        return out


def abs_grad() -> Symbol:
    return Symbol(lambda xi, k: k, 0.0, name="|grad|")


def inv_abs_grad() -> Symbol:
    return Symbol(lambda xi, k: 1.0 / k, 0.0, name="|grad|^-1")


def lambda_e(d: float) -> Symbol:
    return Symbol(lambda xi, k: np.sqrt(1.0 + d * k * k), 1.0, name="Lambda_e")


def lambda_b() -> Symbol:
    return Symbol(lambda xi, k: np.sqrt(1.0 + k * k), 1.0, name="Lambda_b")


def inv_lambda_b() -> Symbol:
    return Symbol(lambda xi, k: 1.0 / np.sqrt(1.0 + k * k), 1.0, name="Lambda_b^-1")


def riesz(j: int) -> Symbol:
    if j not in (0, 1, 2):
        raise ValueError("Riesz index must be 0, 1 or 2")
    return Symbol(lambda xi, k: 1j * xi[j] / k, 0.0, odd=True, name=f"R_{j + 1}")


def partial(j: int) -> Symbol:
    return Symbol(lambda xi, k: 1j * xi[j], 0.0, odd=True, name=f"d_{j + 1}")


def apply_symbol(F: SpectralField, symbol: Union[Symbol, Callable]) -> SpectralField:
    """Multiply coefficients by a symbol.

    A bare callable is evaluated on the full frequency lattice (including
    ``xi = 0``) as ``symbol(xi)``.
    """
    if isinstance(symbol, Symbol):
        m = symbol.on_grid(F.grid)
        hermitian = F.hermitian and symbol.preserves_real
    else:
        m = np.asarray(symbol(F.grid.xi), dtype=complex)
        if not np.all(np.isfinite(m)):
            raise ValueError("symbol is not finite on the lattice")
        hermitian = False
    return SpectralField(F.grid, F.coefficients * m, hermitian=hermitian)


# -- spectral derivatives on arrays -----------------------------------------

def grad_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    return 1j * grid.xi_odd * f_hat[None]


def div_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    return np.sum(1j * grid.xi_odd * v_hat, axis=0)


def curl_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    ik = 1j * grid.xi_odd
    return np.array([
        ik[1] * v_hat[2] - ik[2] * v_hat[1],
        ik[2] * v_hat[0] - ik[0] * v_hat[2],
        ik[0] * v_hat[1] - ik[1] * v_hat[0],
    ])


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def derivative(f: RealField, axis: int) -> RealField:
    g = f.grid
    out = g.ifft(1j * g.xi_odd[axis] * g.fft(f.values))
    return RealField(g, out.real if np.isrealobj(f.values) else out)


# -- dyadic cutoffs ----------------------------------------------------------

_LOG_LO = np.log2(5.0 / 4.0)
_LOG_HI = np.log2(8.0 / 5.0)


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def bump(x) -> np.ndarray:
    """Even C^2 bump: 1 on [-5/4, 5/4], 0 outside [-8/5, 8/5].

    Between the plateau and the support edge it is a quintic smoothstep in
    ``log2|x|``.
    """
    a = np.abs(np.asarray(x, dtype=float))
    out = np.ones_like(a)
    mid = (a > 1.25) & (a < 1.6)
    s = (_LOG_HI - np.log2(a[mid])) / (_LOG_HI - _LOG_LO)
    out[mid] = _smoothstep(s)
    out[a >= 1.6] = 0.0
    return out


def phi_k(x, k: int) -> np.ndarray:
    """``phi(|x|/2^k) - phi(|x|/2^(k-1))``."""
    a = np.abs(np.asarray(x, dtype=float))
    return bump(a / 2.0 ** k) - bump(a / 2.0 ** (k - 1))


def phi_le(x, k: int) -> np.ndarray:
    """``sum_{m <= k} phi_m = phi(|x|/2^k)``."""
    return bump(np.abs(np.asarray(x, dtype=float)) / 2.0 ** k)


def phi_ge(x, k: int) -> np.ndarray:
    """``sum_{m >= k} phi_m = 1 - phi(|x|/2^(k-1))`` (away from 0)."""
    return 1.0 - bump(np.abs(np.asarray(x, dtype=float)) / 2.0 ** (k - 1))


def phi_folded(x, j: int, a: int, b: int) -> np.ndarray:
    """``phi_j^{[a,b]}``: tails beyond [a, b] are folded into the end indices."""
    if not a <= j <= b:
        raise RangeError(f"index {j} outside [{a}, {b}]")
    if a == b:
        return np.ones_like(np.asarray(x, dtype=float))
    if j == a:
        return phi_le(x, a)
    if j == b:
        return phi_ge(x, b)
    return phi_k(x, j)


def lp_symbol(grid: Grid, k: int) -> np.ndarray:
    kmin, kmax = grid.k_range()
    if not kmin <= k <= kmax:
        raise RangeError(f"k={k} outside resolvable window [{kmin}, {kmax}]")
    return phi_folded(grid.kmag, k, kmin, kmax)


def lp_project(F: SpectralField, k: int) -> SpectralField:
    """Littlewood-Paley piece ``P_k`` (end indices absorb the tails)."""
    return SpectralField(F.grid, F.coefficients * lp_symbol(F.grid, k), F.hermitian)


def j_window(grid: Grid, k: int) -> tuple:
    j0 = max(-k, 0)
    top = max(j0, grid.j_max())
    if 2.0 ** top > grid.box_period / 2.0:
        raise RangeError(f"cutoff radius 2^{top} exceeds half the box")
    return j0, top


def spatial_cutoff(grid: Grid, j: int, k: int) -> np.ndarray:
    """``phi_j^{(k)}(x)`` with the outermost index folded."""
    j0, top = j_window(grid, k)
    if not j0 <= j <= top:
        raise RangeError(f"(k={k}, j={j}) outside the admissible window [{j0}, {top}]")
    return phi_folded(grid.radius, j, j0, top)


def q_jk_array(grid: Grid, f_hat: np.ndarray, j: int, k: int) -> np.ndarray:
    pk = grid.ifft(f_hat * lp_symbol(grid, k))
    return spatial_cutoff(grid, j, k) * pk


def q_jk(f: RealField, j: int, k: int) -> RealField:
    """``Q_jk f = phi_j^{(k)}(x) (P_k f)(x)``."""
    g = f.grid
    out = q_jk_array(g, g.fft(f.values), j, k)
    return RealField(g, out.real if np.isrealobj(f.values) else out)


# -- resonance-distance localizers A_n ---------------------------------------

def a_n_weight(psi_dagger_values, n: int) -> np.ndarray:
    """``phi_{-n}(Psi^dagger)``."""
    return phi_k(psi_dagger_values, -n)


def a_nj_weight(psi_dagger_values, n: int, j: int) -> np.ndarray:
    """Aggregated weights ``A_{n,(j)}``, ``0 <= n <= j+1``; they sum to one."""
    if j < 0 or not 0 <= n <= j + 1:
        raise RangeError(f"n={n} outside [0, {j + 1}]")
    y = np.abs(np.asarray(psi_dagger_values, dtype=float))
    if n == 0:
        return 1.0 - bump(2.0 * y)
    if n == j + 1:
        return bump(2.0 ** (j + 1) * y)
    return a_n_weight(y, n)


def _psi_on_grid(grid: Grid, psi_dagger) -> np.ndarray:
    if callable(psi_dagger):
        return np.asarray(psi_dagger(grid.kmag), dtype=float)
    arr = np.asarray(psi_dagger, dtype=float)
    if arr.shape != grid.shape:
        raise GridMismatchError("psi_dagger array does not match the grid")
    return arr


def a_n_operator(F: SpectralField, n: int, psi_dagger) -> SpectralField:
    w = a_n_weight(_psi_on_grid(F.grid, psi_dagger), n)
    return SpectralField(F.grid, F.coefficients * w, F.hermitian)


def a_n_j(F: SpectralField, n: int, j: int, psi_dagger) -> SpectralField:
    w = a_nj_weight(_psi_on_grid(F.grid, psi_dagger), n, j)
    return SpectralField(F.grid, F.coefficients * w, F.hermitian)


# -- rotation vector fields ------------------------------------------------

_ROT_AXES = {1: (1, 2), 2: (2, 0), 3: (0, 1)}


def boundary_mass_fraction(grid: Grid, values: np.ndarray, shell: float = 0.05) -> float:
    """Fraction of ``sum |f|^2`` with some ``|x_i| >= (1/2 - shell) L``.

    The default marks the outer 10% of each side (5% at either face).
    """
    edge = np.max(np.abs(grid.x), axis=0) >= (0.5 - shell) * grid.box_period
    w = np.abs(values) ** 2
    if w.ndim > 3:
        w = w.reshape(-1, *grid.shape).sum(axis=0)
    total = w.sum()
    if total == 0:
        return 0.0
    return float(w[edge].sum() / total)


def check_localized(grid: Grid, values: np.ndarray, tol: float = 1e-6) -> float:
    frac = boundary_mass_fraction(grid, values)
    if frac > tol:
        raise LocalizationError(
            f"{frac:.3g} of the mass sits in the outer shell (limit {tol:g}); "
            "rotation fields are not meaningful on the torus here")
    return frac


def rotation_hat(grid: Grid, f_hat: np.ndarray, axis: int) -> np.ndarray:
    """Physical-space ``Omega_axis f`` from coefficients (no localization check)."""
    a, b = _ROT_AXES[axis]
    x = grid.x
    da = grid.ifft(1j * grid.xi_odd[a] * f_hat)
    db = grid.ifft(1j * grid.xi_odd[b] * f_hat)
    return x[a] * db - x[b] * da


def rotation_apply(f: RealField, axis: int, tol: float = 1e-6) -> RealField:
    """``Omega_1 = x2 d3 - x3 d2`` and cyclic permutations."""
    if axis not in _ROT_AXES:
        raise ValueError("axis must be 1, 2 or 3")
    g = f.grid
    check_localized(g, f.values, tol)
    out = rotation_hat(g, g.fft(f.values), axis)
    return RealField(g, out.real if np.isrealobj(f.values) else out)
