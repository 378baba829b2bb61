"""Phase functions, space-resonance points and the resonant spheres.

Wave kinds are the labels ``e, b, -e, -b`` with ``lambda_e(r) = sqrt(1 + d r^2)``,
``lambda_b(r) = sqrt(1 + r^2)``, ``lambda_{-s} = -lambda_s``, plus the transported
kind ``0`` with ``lambda_0 = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import GeometryError

DISPERSIVE = ("e", "b", "-e", "-b")
ALL_KINDS = DISPERSIVE + ("0",)
# (mu, nu) with mu + nu != 0
ADMISSIBLE_PAIRS = tuple((m, n) for m in DISPERSIVE for n in DISPERSIVE
                         if not (m.lstrip("-") == n.lstrip("-") and m != n))


@dataclass(frozen=True)
class WaveKind:
    label: str

    def __post_init__(self):
        if self.label not in ALL_KINDS:
            raise ValueError(f"unknown wave kind {self.label!r}")

    @property
    def sign(self) -> int:
        if self.label == "0":
            return 0
        return -1 if self.label.startswith("-") else 1

    @property
    def base(self) -> str:
        return self.label.lstrip("-")

    def neg(self) -> "WaveKind":
        if self.label == "0":
            return self
        return WaveKind(self.base if self.sign < 0 else "-" + self.label)

    def speed2(self, d: float) -> float:
        return d if self.base == "e" else 1.0

    def lam(self, r, d: float):
        r = np.asarray(r, dtype=float)
        if self.sign == 0:
            return np.zeros_like(r)
        return self.sign * np.sqrt(1.0 + self.speed2(d) * r * r)

    def dlam(self, r, d: float):
        r = np.asarray(r, dtype=float)
        if self.sign == 0:
            return np.zeros_like(r)
        c = self.speed2(d)
        return self.sign * c * r / np.sqrt(1.0 + c * r * r)


def kind(label) -> WaveKind:
    return label if isinstance(label, WaveKind) else WaveKind(label)


def opposite(mu, nu) -> bool:
    mu, nu = kind(mu), kind(nu)
    return mu.sign != 0 and mu.neg() == nu


@dataclass(frozen=True)
class PhaseTriple:
    sigma: WaveKind
    mu: WaveKind
    nu: WaveKind
    d: float

    @classmethod
    def of(cls, sigma, mu, nu, d: float) -> "PhaseTriple":
        if not 0 < d < 1:
            raise ValueError("d must lie in (0, 1)")
        return cls(kind(sigma), kind(mu), kind(nu), d)

    def conjugate(self) -> "PhaseTriple":
        return PhaseTriple(self.sigma.neg(), self.mu.neg(), self.nu.neg(), self.d)


def phase(triple: PhaseTriple, xi, eta):
    """``Lambda_sigma(xi) - Lambda_mu(xi - eta) - Lambda_nu(eta)``; vectors on axis 0."""
    xi, eta = np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
    a = np.sqrt(np.sum(xi ** 2, axis=0))
    b = np.sqrt(np.sum(eta ** 2, axis=0))
    c = np.sqrt(np.sum((xi - eta) ** 2, axis=0))
    d = triple.d
    return triple.sigma.lam(a, d) - triple.mu.lam(c, d) - triple.nu.lam(b, d)


def phase_radial(triple: PhaseTriple, alpha, beta):
    d = triple.d
    alpha, beta = np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float)
    return triple.sigma.lam(alpha, d) - triple.mu.lam(alpha - beta, d) - triple.nu.lam(beta, d)


def stationarity(mu, nu, d: float, s, y):
    """``d/dbeta Phi^+(s, y) = lambda_mu'(s - y) - lambda_nu'(y)``."""
    return kind(mu).dlam(np.asarray(s) - y, d) - kind(nu).dlam(y, d)


# -- space-resonance point ---------------------------------------------------

_SCAN = 201


def p_plus(mu, nu, s, d: float):
    """Unique root ``y`` of ``lambda_mu'(s - y) = lambda_nu'(y)``.

    Vectorized over ``s``.  The root is bracketed from the sign changes of
    the stationarity function on a symmetric log grid, then bisected to
    machine precision and polished with one secant step.
    """
    mu, nu = kind(mu), kind(nu)
    if mu.sign == 0 or nu.sign == 0:
        raise ValueError("p_plus needs dispersive kinds")
    if opposite(mu, nu):
        raise ValueError(f"no space-resonance point for mu + nu = 0 ({mu.label}, {nu.label})")
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    sa = np.abs(s)
    out = np.zeros_like(sa)
    live = sa > 0
    if np.any(live):
        out[live] = _p_plus_positive(mu, nu, sa[live], d)
    out = np.sign(s) * out
    return float(out[0]) if scalar else out


def _p_plus_positive(mu, nu, s, d):
    span = 2.0 * (s + 1.0) / (1.0 - d) + 10.0
    # symmetric log grid in units of span, shape (M, K)
    t = np.geomspace(1e-12, 1.0, (_SCAN - 1) // 2)
    unit = np.concatenate([-t[::-1], [0.0], t])
    y = span[:, None] * unit[None, :]
    g = stationarity(mu, nu, d, s[:, None], y)
    sg = np.sign(g)
    exact = sg == 0
    change = (sg[:, :-1] * sg[:, 1:]) < 0
    n_roots = change.sum(axis=1) + exact.sum(axis=1)
    if np.any(n_roots != 1):
        bad = s[n_roots != 1][0]
        raise GeometryError(
            f"stationarity for ({mu.label},{nu.label}) has {int(n_roots[n_roots != 1][0])} "
            f"sign changes at s={bad:.6g}; cannot bracket a unique root")
    rows = np.arange(len(s))
    idx = np.argmax(change | exact[:, :-1], axis=1)
    lo, hi = y[rows, idx].copy(), y[rows, idx + 1].copy()
    exact_rows = exact.any(axis=1)
    glo = stationarity(mu, nu, d, s, lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = stationarity(mu, nu, d, s, mid)
        same = np.sign(gm) == np.sign(glo)
        lo = np.where(same, mid, lo)
        glo = np.where(same, gm, glo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(lo))):
            break
    ghi = stationarity(mu, nu, d, s, hi)
    denom = ghi - glo
    with np.errstate(invalid="ignore", divide="ignore"):
        sec = lo - glo * (hi - lo) / denom
    root = np.where((denom != 0) & (sec >= lo) & (sec <= hi), sec, 0.5 * (lo + hi))
    if np.any(exact_rows):
        root[exact_rows] = y[rows, np.argmax(exact, axis=1)][exact_rows]
    return root


def psi(triple: PhaseTriple, r):
    """``Psi(r) = Phi^+(r, p_+(r))``."""
    p = p_plus(triple.mu, triple.nu, r, triple.d)
    return phase_radial(triple, r, p)


def _pair_sums(d: float, r: np.ndarray) -> Dict[Tuple[str, str], np.ndarray]:
    out = {}
    for mu, nu in ADMISSIBLE_PAIRS:
        p = p_plus(mu, nu, r, d)
        out[(mu, nu)] = kind(mu).lam(r - p, d) + kind(nu).lam(p, d)
    return out


def psi_dagger(sigma, r, d: float, D0_exponent: int = 10):
    """``2^D0 (1 + r) min_{mu + nu != 0} |Psi_{sigma mu nu}(r)|`` (radial)."""
    r = np.abs(np.atleast_1d(np.asarray(r, dtype=float)))
    sums = _pair_sums(d, r)
    return _dagger_from_sums(kind(sigma), r, d, D0_exponent, sums)


def _dagger_from_sums(sigma: WaveKind, r, d, D0, sums):
    ls = sigma.lam(r, d)
    m = np.min([np.abs(ls - h) for h in sums.values()], axis=0)
    return 2.0 ** D0 * (1.0 + r) * m


def _bisect_scalar(f, lo, hi, flo, tol=1e-14, maxit=200):
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(lo)):
            break
    return 0.5 * (lo + hi)


def _single_root(f_vec, name, window=(1e-6, 1e3), count=4000):
    r = np.geomspace(window[0], window[1], count)
    vals = f_vec(r)
    change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(change) != 1:
        raise GeometryError(f"{name}: expected one zero in (0, {window[1]:g}], found {len(change)}")
    i = change[0]

    def f(x):
        return float(f_vec(np.array([x]))[0])

    return _bisect_scalar(f, r[i], r[i + 1], vals[i])


def find_resonant_spheres(d: float) -> Tuple[float, float]:
    """Radii where ``Psi_bee`` and ``Psi_beb`` vanish."""
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    bee = PhaseTriple.of("b", "e", "e", d)
    beb = PhaseTriple.of("b", "e", "b", d)
    g1 = _single_root(lambda r: psi(bee, r), "Psi_bee")
    g2 = _single_root(lambda r: psi(beb, r), "Psi_beb")
    if not g1 < g2:
        raise GeometryError(f"expected gamma1 < gamma2, got {g1} and {g2}")
    return g1, g2


# -- precomputed table ---------------------------------------------------------

@dataclass
class ResonanceTable:
    """Tabulated resonance data for one ``d``; read-only after ``build``."""

    d: float
    D0_exponent: int
    s_grid: np.ndarray
    p_table: Dict[Tuple[str, str], np.ndarray]
    gamma1: float
    gamma2: float
    psi_e_floor: float
    _grid_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, d: float, D0_exponent: int = 10, s_max: float = 1e3, count: int = 2000):
        s = np.concatenate([[0.0], np.geomspace(1e-4, s_max, count - 1)])
        p_table = {pair: p_plus(pair[0], pair[1], s, d) for pair in ADMISSIBLE_PAIRS}
        g1, g2 = find_resonant_spheres(d)
        floor = float(psi_dagger("e", s, d, D0_exponent).min())
        if not floor > 0:
            raise GeometryError("Psi_e^dagger is not bounded away from zero")
        return cls(d, D0_exponent, s, p_table, g1, g2, floor)

    def psi_dagger(self, sigma, r):
        return psi_dagger(sigma, r, self.d, self.D0_exponent)

    def psi_dagger_grid(self, sigma: str, grid) -> np.ndarray:
        """Exact ``Psi^dagger_sigma(|xi|)`` on a lattice; one evaluation per radius."""
        key = (kind(sigma).label, grid.points_per_axis, grid.box_period)
        if key not in self._grid_cache:
            idx = grid.kmag_sq_index
            uniq, inverse = np.unique(idx, return_inverse=True)
            radii = grid.min_frequency * np.sqrt(uniq.astype(float))
            vals = self.psi_dagger(sigma, radii)
            self._grid_cache[key] = vals[inverse].reshape(grid.shape)
        return self._grid_cache[key]

    def stationarity_residual(self) -> float:
        worst = 0.0
        for (mu, nu), p in self.p_table.items():
            worst = max(worst, float(np.abs(stationarity(mu, nu, self.d, self.s_grid, p)).max()))
        return worst


# -- sublevel sets -----------------------------------------------------------

@dataclass(frozen=True)
class SublevelEstimate:
    measure: float
    stderr: float
    bound: float
    ratio: float
    ratio_stderr: float
    xi_radius: float
    samples: int


def sublevel_measure_estimate(triple: PhaseTriple, k: int, R: float, eps: float,
                              sample_count: int = 1_000_000, seed: int = 0,
                              xi_samples: int = 32, min_per_xi: int = 1000) -> SublevelEstimate:
    """Monte-Carlo ``sup_xi |{eta : (xi, eta) in E}|`` against ``2^{5k} R^3 eps log(1/eps)``.

    ``E`` requires ``max(|xi|, |eta|) <= 2^k``, ``|xi - eta| <= R`` and
    ``|Phi(xi, eta)| <= 2^-k eps``.  By rotation invariance ``xi`` runs over
    radii along the first axis; the same ``eta`` cloud is reused for every
    radius.
    """
    if R < 1 or k < 0 or not 0 < eps <= 0.5:
        raise ValueError("need R >= 1, k >= 0 and 0 < eps <= 1/2")
    if triple.mu.sign == 0 or triple.nu.sign == 0:
        raise ValueError("sublevel estimate needs dispersive mu and nu")
    if opposite(triple.mu, triple.nu):
        raise ValueError("degenerate triple with mu + nu = 0")
    per_xi = sample_count // xi_samples
    if per_xi < min_per_xi:
        raise ValueError(f"sample_count={sample_count} gives {per_xi} samples per xi; need {min_per_xi}")
    rng = np.random.default_rng(seed)
    rad = 2.0 ** k
    direction = rng.normal(size=(3, per_xi))
    direction /= np.linalg.norm(direction, axis=0)
    eta = direction * rad * rng.uniform(size=per_xi) ** (1.0 / 3.0)
    ball = 4.0 / 3.0 * np.pi * rad ** 3
    radii = (np.arange(xi_samples) + 0.5) / xi_samples * rad
    thresh = 2.0 ** (-k) * eps
    best, best_se, best_r = -1.0, 0.0, 0.0
    for r in radii:
        xi = np.array([r, 0.0, 0.0])[:, None]
        inside = np.sum((xi - eta) ** 2, axis=0) <= R * R
        hit = inside & (np.abs(phase(triple, xi, eta)) <= thresh)
        frac = hit.mean()
        est = ball * frac
        if est > best:
            best = est
            best_se = ball * np.sqrt(frac * (1 - frac) / per_xi)
            best_r = float(r)
    bound = 2.0 ** (5 * k) * R ** 3 * eps * np.log(1.0 / eps)
    return SublevelEstimate(best, best_se, bound, best / bound, best_se / bound, best_r, per_xi * xi_samples)
