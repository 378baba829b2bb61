"""Experiment orchestration and result persistence.

Every runner takes an ``ExperimentSpec`` and returns a ``Result``: a JSON-able
payload plus CSV tables for plotting.  ``emit_results`` writes them to disk in
a deterministic layout (no timestamps, sorted keys).
"""
from __future__ import annotations

import csv
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from .config import ExperimentSpec, config_dict, dump_config
from .dynamics import SimConfig, breakdown_time, rhs_dispersive, rhs_physical, run
from .errors import ConfigError, RangeError
from .fields import (
    PlasmaState, make_initial_data, load_snapshot, save_snapshot, to_dispersive,
)
from .norms import (
    NormConfig, _first_exceed, data_norm, htilde_norm, linear_decay_probe,
    profile_z_norm, vorticity_norm, z1_tableau,
)
from .resonance import (
    PhaseTriple, ResonanceTable, find_resonant_spheres, psi, psi_dagger,
    sublevel_measure_estimate,
)
from .spectral import Grid, phi_k, set_fft_workers

RESULT_SCHEMA = 1


@dataclass
class Result:
    kind: str
    payload: dict
    tables: Dict[str, Tuple[Sequence[str], List[Sequence]]] = field(default_factory=dict)
    plot: Optional[str] = None
    breakdown: bool = False
    inconclusive: bool = False


def environment_stamp(threads: int = 1) -> dict:
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "threads": int(threads),
    }


# -- physical units ------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalState:
    """Fields in physical units on a periodic box of side ``box_period``."""

    points_per_axis: int
    box_period: float
    time: float
    n_e: np.ndarray
    v_e: np.ndarray
    E: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class ScalingMap:
    """``n_e = n0 (1 + n(lam x, beta t))``, ``v_e = c v``, ``E' = alpha E``, ``B' = alpha B``."""

    lam: float
    beta: float
    alpha: float
    n0: float
    c: float
    d: float

    def to_normalized(self, p: PhysicalState) -> PlasmaState:
        grid = Grid(p.points_per_axis, self.lam * p.box_period)
        return PlasmaState(grid, p.n_e / self.n0 - 1.0, p.v_e / self.c, p.E / self.alpha,
                           p.B / self.alpha, self.d, self.beta * p.time)

    def to_physical(self, s: PlasmaState) -> PhysicalState:
        g = s.grid
        return PhysicalState(g.points_per_axis, g.box_period / self.lam, s.time / self.beta,
                             self.n0 * (1.0 + s.n), self.c * s.v, self.alpha * s.E, self.alpha * s.B)


def normalize_physical(e: float, m_e: float, c: float, P_e: float, n0: float) -> Tuple[float, ScalingMap]:
    """Normalization constants (Gaussian units) and the pressure parameter ``d``."""
    if min(e, m_e, c, P_e, n0) <= 0:
        raise ValueError("physical constants must be positive")
    beta = math.sqrt(4.0 * math.pi * e * e * n0 / m_e)
    lam = beta / c
    alpha = lam * m_e * c * c / e
    d = P_e * n0 / (m_e * c * c)
    if not 0 < d < 1:
        raise RangeError(f"d = {d} lies outside (0, 1)")
    return d, ScalingMap(lam, beta, alpha, n0, c, d)


# -- lifespan sweep ----------------------------------------------------------

@dataclass
class RunSummary:
    delta0: float
    fraction: float
    breakdown_time: Optional[float]
    censored: bool
    growth_time: Optional[float]
    vort_growth: float
    norm_growth: float
    cause: Optional[str]
    t_end: float
    series: List[Tuple[float, float, float]] = field(default_factory=list, repr=False)


@dataclass
class SweepResult:
    eps_bar: float
    eps_data_norm: float
    runs: List[RunSummary]
    control: Optional[RunSummary]
    slope: Optional[float]
    intercept: Optional[float]
    slope_ci: Optional[Tuple[float, float]]
    lower_bound_c: Optional[float]
    lower_bound_spread: Optional[float]
    doubling_ratios: List[float]
    growth_ordering_monotone: Optional[bool]
    growth_slope: Optional[float]
    growth_doubling_ratios: List[float]
    small_data_regime: bool
    status: str
    environment: dict

    @property
    def delta0_values(self) -> List[float]:
        return [r.delta0 for r in self.runs]

    @property
    def inconclusive(self) -> bool:
        return self.slope is None


def fit_lifespan(delta0, times, bootstrap_samples: int = 200, seed: int = 0):
    """OLS of ``log T`` on ``log delta0`` with a percentile bootstrap interval."""
    x = np.log(np.asarray(delta0, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    if len(np.unique(x)) < 2:
        return None, None, None
    slope, intercept = np.polyfit(x, y, 1)
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(bootstrap_samples):
        idx = rng.integers(0, len(x), len(x))
        if len(np.unique(x[idx])) < 2:
            continue
        draws.append(np.polyfit(x[idx], y[idx], 1)[0])
    ci = (float(np.percentile(draws, 2.5)), float(np.percentile(draws, 97.5))) if draws else None
    return float(slope), float(intercept), ci


def growth_ordering_monotone(delta0, growth_times) -> Optional[bool]:
    """Larger ``delta0`` never reaches the growth threshold later; ``None`` means never reached."""
    pairs = sorted(zip(delta0, growth_times))
    if all(t is None for _, t in pairs):
        return None
    keys = [math.inf if t is None else t for _, t in pairs]
    return all(a >= b for a, b in zip(keys, keys[1:]))


def _sweep_run(args) -> RunSummary:
    sim, delta0, fraction, growth = args
    set_fft_workers(1)
    cfg = replace(sim, keep_states=False, initial=replace(sim.initial, delta0=delta0))
    traj = run(cfg)
    tb = breakdown_time(traj, key="h_norm")
    vort = traj.column("vort_norm")
    hn = traj.column("h_norm")
    times = traj.times
    tg = _first_exceed(list(times), list(vort), growth, floor=0.0) if vort[0] > 0 else None
    return RunSummary(
        delta0=float(delta0), fraction=float(fraction),
        breakdown_time=tb, censored=tb is None,
        growth_time=None if tg is None else float(tg),
        vort_growth=float(np.nanmax(vort) / vort[0]) if vort[0] > 0 else 0.0,
        norm_growth=float(np.nanmax(hn) / hn[0]) if hn[0] > 0 else 0.0,
        cause=None if traj.breakdown is None else traj.breakdown["cause"],
        t_end=float(times[-1]),
        series=[(float(t), float(a), float(b)) for t, a, b in zip(times, hn, vort)],
    )


def _map_runs(jobs, threads: int) -> list:
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
            return list(ex.map(_sweep_run, jobs))
    return [_sweep_run(j) for j in jobs]


def _doubling_ratios(times: Dict[float, float]) -> List[float]:
    """``T(delta0) / T(2 delta0)`` for every pair present."""
    out = []
    for a in sorted(times):
        b = next((x for x in times if abs(x / (2 * a) - 1) < 1e-9), None)
        if b is not None:
            out.append(times[a] / times[b])
    return out


def run_lifespan_sweep(spec: ExperimentSpec) -> SweepResult:
    """Breakdown time against vorticity size at fixed irrotational data.

    ``delta0 = fraction * eps_w`` where ``eps_w`` is the weighted data norm of
    the irrotational part, so both sides of ``delta0 <= eps_bar`` are measured
    in the same norm.
    """
    sim, sw = spec.sim, spec.sweep
    fr = sorted(sw.delta0_fractions)
    if fr[-1] / fr[0] < 8:
        raise ConfigError("delta0 values must span at least a factor of 8")
    base = make_initial_data(replace(sim.initial, delta0=0.0), sim.grid, sim.d, sim.norms)
    eps_w = data_norm(base, sim.norms)
    jobs = [(sim, f * eps_w, f, sw.growth_factor) for f in fr]
    if sw.control:
        jobs.append((sim, 0.0, 0.0, sw.growth_factor))
    out = _map_runs(jobs, spec.threads)
    runs = [r for r in out if r.fraction > 0]
    control = next((r for r in out if r.fraction == 0), None)

    done = [r for r in runs if not r.censored]
    slope = intercept = ci = c_low = spread = None
    if len(done) >= 2:
        slope, intercept, ci = fit_lifespan([r.delta0 for r in done], [r.breakdown_time for r in done],
                                            sw.bootstrap_samples, spec.seed)
    if done:
        prods = [r.breakdown_time * r.delta0 for r in done]
        c_low, spread = float(min(prods)), float(max(prods) / min(prods))
    ratios = _doubling_ratios({r.delta0: r.breakdown_time for r in done})
    grown = {r.delta0: r.growth_time for r in runs if r.growth_time is not None}
    growth_slope = None
    if len(grown) >= 2:
        growth_slope = fit_lifespan(list(grown), list(grown.values()), 0)[0]
    ordering = growth_ordering_monotone([r.delta0 for r in runs], [r.growth_time for r in runs])

    small = control is None or control.censored
    if small and len(done) >= 2:
        tb = [r.breakdown_time for r in done]
        small = max(tb) / min(tb) > 1.3
    if slope is not None:
        status = "fit"
    elif done:
        status = "partial"
    else:
        status = "censored"
    return SweepResult(float(sim.initial.eps_bar), float(eps_w), runs, control, slope, intercept, ci,
                       c_low, spread, ratios, ordering, growth_slope, _doubling_ratios(grown),
                       bool(small), status,
                       environment_stamp(spec.threads))


def sweep_result(res: SweepResult) -> Result:
    def summary(r):
        d = asdict(r)
        d.pop("series")
        return d

    payload = {
        "eps_bar": res.eps_bar,
        "eps_data_norm": res.eps_data_norm,
        "runs": [summary(r) for r in res.runs],
        "control": None if res.control is None else summary(res.control),
        "slope": res.slope,
        "intercept": res.intercept,
        "slope_ci": res.slope_ci,
        "lower_bound_c": res.lower_bound_c,
        "lower_bound_spread": res.lower_bound_spread,
        "doubling_ratios": res.doubling_ratios,
        "growth_ordering_monotone": res.growth_ordering_monotone,
        "growth_slope": res.growth_slope,
        "growth_doubling_ratios": res.growth_doubling_ratios,
        "small_data_regime": res.small_data_regime,
        "status": res.status,
    }
    rows = [(r.delta0, r.fraction, r.breakdown_time, int(r.censored), r.growth_time, r.vort_growth)
            for r in res.runs + ([res.control] if res.control else [])]
    series = [(r.delta0, t, h, v) for r in res.runs + ([res.control] if res.control else [])
              for t, h, v in r.series]
    plot = _gnuplot(
        "set logscale xy\nset xlabel 'delta0'\nset ylabel 'breakdown time'\n"
        "plot 'sweep.csv' using 1:($4==0 ? $3 : 1/0) with points title 'breakdown',"
        " 'sweep.csv' using 1:5 with points title 'time to growth factor'\n")
    return Result("lifespan-sweep", payload,
                  {"sweep": (("delta0", "fraction", "breakdown_time", "censored", "growth_time",
                              "vort_growth"), rows),
                   "sweep_series": (("delta0", "t", "h_norm", "vort_norm"), series)},
                  plot, inconclusive=res.inconclusive)


# -- cross-check -------------------------------------------------------------

def rhs_gap(state: PlasmaState, dealias: bool = True) -> Dict[str, float]:
    """Gap per dispersive component between the two right-hand sides.

    Each gap is divided by the norm of the whole dispersive right-hand side,
    so a component that vanishes (``Y`` for irrotational data) is not
    compared against roundoff.
    """
    via_phys = to_dispersive(rhs_physical(state, dealias), strict=False)
    direct = rhs_dispersive(to_dispersive(state, strict=False), dealias)
    scale = direct.l2()
    g = state.grid
    gaps = {"U_e": g.l2(via_phys.U_e - direct.U_e), "U_b": g.l2(via_phys.U_b - direct.U_b),
            "Y": g.l2(via_phys.Y - direct.Y)}
    return {k: (v / scale if scale > 0 else v) for k, v in gaps.items()}


def run_crosscheck(spec: ExperimentSpec, halvings: int = 0) -> Result:
    sim = replace(spec.sim, formulation="both", keep_states=False)
    initial = make_initial_data(sim.initial, sim.grid, sim.d, sim.norms)
    dt0, _ = sim.time_step()
    levels, rows = [], []
    for h in range(halvings + 1):
        cfg = replace(sim, dt=dt0 / 2 ** h, output_stride=2 ** h * sim.output_stride)
        traj = run(cfg, initial=initial)
        gaps = traj.column("xform_gap")
        levels.append({"dt": cfg.time_step()[0], "max_gap": float(np.nanmax(gaps)),
                       "breakdown": traj.breakdown})
        if h == 0:
            rows = [(r["t"], r["xform_gap"], r["energy"], r["res_divB"], r["res_gauss"]) for r in traj.rows]
    ratios = [a["max_gap"] / b["max_gap"] for a, b in zip(levels, levels[1:]) if b["max_gap"] > 0]
    payload = {"rhs_gap": rhs_gap(initial, sim.dealias), "levels": levels, "halving_ratios": ratios,
               "max_gap": levels[0]["max_gap"]}
    plot = _gnuplot("set logscale y\nset xlabel 't'\nset ylabel 'relative gap'\n"
                    "plot 'crosscheck.csv' using 1:2 with lines title 'reconstructed-state gap'\n")
    return Result("crosscheck", payload,
                  {"crosscheck": (("t", "xform_gap", "energy", "res_divB", "res_gauss"), rows)},
                  plot, breakdown=any(lv["breakdown"] for lv in levels))


# -- simulate ----------------------------------------------------------------

def run_simulate(spec: ExperimentSpec, out_dir=None) -> Result:
    sim = spec.sim
    initial = (make_initial_data(sim.initial, sim.grid, sim.d, sim.norms)
               if spec.snapshot is None else _load_plasma(spec.snapshot, sim))
    traj = run(replace(sim, keep_states=False), initial=initial)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        save_snapshot(initial, Path(out_dir) / "initial.snap")
    energy = traj.column("energy")
    payload = {
        "steps": len(traj.rows) - 1,
        "t_final": float(traj.times[-1]),
        "breakdown": traj.breakdown,
        "breakdown_time": breakdown_time(traj),
        "energy_drift": float(np.max(np.abs(energy - energy[0])) / abs(energy[0])) if energy[0] else 0.0,
        "max_res_divB": float(np.nanmax(traj.column("res_divB"))),
        "max_res_gauss": float(np.nanmax(traj.column("res_gauss"))),
    }
    from .dynamics import CSV_COLUMNS

    rows = [tuple(r[c] for c in CSV_COLUMNS) for r in traj.rows]
    plot = _gnuplot("set logscale y\nset xlabel 't'\n"
                    "plot 'trajectory.csv' using 1:5 with lines title 'monitored norm',"
                    " 'trajectory.csv' using 1:6 with lines title 'vorticity norm'\n")
    return Result("simulate", payload, {"trajectory": (CSV_COLUMNS, rows)}, plot,
                  breakdown=traj.breakdown is not None)


def _load_plasma(path, sim: SimConfig) -> PlasmaState:
    from .fields import DispersiveState, to_physical

    s = load_snapshot(path)
    if isinstance(s, DispersiveState):
        s = to_physical(s)
    return s


# -- decay probe -------------------------------------------------------------

def run_decay(spec: ExperimentSpec) -> Result:
    dc = spec.decay
    out, rows = {}, []
    for sigma in dc.sigmas:
        res = linear_decay_probe(lambda rho: phi_k(rho, 0), sigma, dc.times, d=dc.d)
        out[sigma] = {"slope": res.slope, "intercept": res.intercept,
                      "quadrature_error": res.error_estimate}
        rows += [(sigma, float(t), float(v)) for t, v in zip(res.times, res.sup_values)]
    plot = _gnuplot("set logscale xy\nset xlabel 't'\nset ylabel 'sup |e^{-it Lambda} f|'\n"
                    "plot 'decay.csv' using 2:3 with linespoints title 'sup norm'\n")
    return Result("decay-probe", {"sigmas": out}, {"decay": (("sigma", "t", "sup"), rows)}, plot)


# -- resonance atlas ---------------------------------------------------------

def run_resonance(spec: ExperimentSpec) -> Result:
    rc = spec.resonance
    r = np.linspace(0.0, rc.r_max, rc.r_count)
    atlas, rows = [], []
    for d in rc.d_values:
        g1, g2 = find_resonant_spheres(d)
        table = ResonanceTable.build(d, rc.D0_exponent)
        bee, beb = PhaseTriple.of("b", "e", "e", d), PhaseTriple.of("b", "e", "b", d)
        vals = (psi(bee, r), psi(beb, r), psi_dagger("e", r, d, rc.D0_exponent),
                psi_dagger("b", r, d, rc.D0_exponent))
        atlas.append({"d": d, "gamma1": g1, "gamma2": g2, "gamma1_closed_form": math.sqrt(3 / (1 - d)),
                      "psi_e_floor": table.psi_e_floor,
                      "stationarity_residual": table.stationarity_residual()})
        rows += [(d, float(x)) + tuple(float(v[i]) for v in vals) for i, x in enumerate(r)]
    trip = PhaseTriple.of(*rc.sublevel_triple, d=rc.d_values[len(rc.d_values) // 2])
    sub = []
    for eps in rc.sublevel_eps:
        est = sublevel_measure_estimate(trip, rc.sublevel_k, rc.sublevel_R, eps, rc.sublevel_samples,
                                        seed=spec.seed)
        sub.append({"eps": eps, **asdict(est)})
    plot = _gnuplot("set xlabel 'r'\nset ylabel 'Psi'\n"
                    "plot 'resonance.csv' using 2:3 with lines title 'Psi_bee',"
                    " 'resonance.csv' using 2:4 with lines title 'Psi_beb'\n")
    return Result("resonance", {"atlas": atlas, "sublevel": sub, "sublevel_d": trip.d},
                  {"resonance": (("d", "r", "psi_bee", "psi_beb", "psi_dagger_e", "psi_dagger_b"), rows)},
                  plot)


# -- norms of a single state -------------------------------------------------

def run_norms(spec: ExperimentSpec) -> Result:
    sim = spec.sim
    state = (make_initial_data(sim.initial, sim.grid, sim.d, sim.norms)
             if spec.snapshot is None else _load_plasma(spec.snapshot, sim))
    cfg = sim.norms
    notes = []

    def attempt(label, fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - reported, not raised
            notes.append(f"{label}: {exc}")
            return None

    table = ResonanceTable.build(state.d)
    u = to_dispersive(state, strict=False)
    z = attempt("z", lambda: profile_z_norm(u, cfg, table, rotations=False))
    from .fields import profile

    g = state.grid
    tab = [("e",) + row for row in z1_tableau(g, g.fft(profile(u, "e")), "e", cfg, table)]
    payload = {
        "htilde": attempt("htilde", lambda: htilde_norm(state, cfg.N0_eff, True, cfg.localization_tol)),
        "vorticity": attempt("vorticity", lambda: vorticity_norm(state, cfg)),
        "data_norm": attempt("data_norm", lambda: data_norm(state, cfg)),
        "z": None if z is None else z[0],
        "z_witness": None if z is None else z[1],
        "notes": notes,
    }
    return Result("norms", payload, {"z_tableau": (("sigma", "k", "j", "n", "value"), tab)}, None)


# -- persistence -------------------------------------------------------------

def _gnuplot(body: str) -> str:
    return "set datafile separator ','\nset key autotitle columnhead\n" + body


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_results(result: Result, out_dir, spec: Optional[ExperimentSpec] = None) -> Path:
    """Write ``result.json``, one CSV per table and ``plot.gp`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": RESULT_SCHEMA,
        "kind": result.kind,
        "result": _clean(result.payload),
        "environment": environment_stamp(1 if spec is None else spec.threads),
    }
    if spec is not None:
        doc["config"] = _clean(config_dict(spec))
        (out / "resolved.cfg").write_text(dump_config(spec))
    (out / "result.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    for name, (cols, rows) in sorted(result.tables.items()):
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    if result.plot:
        (out / "plot.gp").write_text(result.plot)
    return out / "result.json"


RUNNERS = {
    "simulate": run_simulate,
    "lifespan-sweep": lambda spec: sweep_result(run_lifespan_sweep(spec)),
    "decay-probe": run_decay,
    "resonance": run_resonance,
    "norms": run_norms,
    "crosscheck": run_crosscheck,
}


def run_experiment(spec: ExperimentSpec, out_dir=None) -> Result:
    if spec.kind == "simulate":
        return run_simulate(spec, out_dir)
    return RUNNERS[spec.kind](spec)
