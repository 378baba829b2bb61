#!/usr/bin/env python3
"""Time to a given vorticity-norm growth at several resolutions for one sweep point.

The data is built at the first resolution and zero-padded in Fourier space
to the others, so every run starts from the same continuum fields.  The time
step shrinks with the grid spacing.
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from eml.config import load_config
from eml.dynamics import run
from eml.fields import PlasmaState, make_initial_data
from eml.norms import data_norm
from eml.spectral import Grid


def refine(a: np.ndarray, coarse: Grid, fine: Grid) -> np.ndarray:
    """Trigonometric interpolation of a real field onto a finer grid of the same box."""
    n, m = coarse.points_per_axis, fine.points_per_axis
    lo = (m - n) // 2
    c = np.fft.fftshift(coarse.fft(a), axes=(-3, -2, -1))
    pad = np.zeros(a.shape[:-3] + fine.shape, dtype=complex)
    pad[..., lo:lo + n, lo:lo + n, lo:lo + n] = c * (m / n) ** 1.5
    return fine.ifft_real(np.fft.ifftshift(pad, axes=(-3, -2, -1)))


p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
p.add_argument("config", help="a lifespan-sweep config")
p.add_argument("--fraction", type=float, default=0.16)
p.add_argument("--points", type=int, nargs="+", default=[32, 64])
p.add_argument("--t-end", type=float, help="shorter horizon than the config")
args = p.parse_args()

spec = load_config(args.config)
sim0 = replace(spec.sim, points_per_axis=args.points[0], keep_states=False)
if args.t_end is not None:
    sim0 = replace(sim0, t_end=args.t_end)
base = make_initial_data(replace(sim0.initial, delta0=0.0), sim0.grid, sim0.d, sim0.norms)
d0 = args.fraction * data_norm(base, sim0.norms)
data = make_initial_data(replace(sim0.initial, delta0=d0), sim0.grid, sim0.d, sim0.norms)
print(f"delta0={d0:.4g} at N={args.points[0]}")

for n in args.points:
    scale = n // args.points[0]
    sim = replace(sim0, points_per_axis=n, dt=sim0.dt / scale, output_stride=sim0.output_stride * scale)
    g = sim.grid
    s = data if n == args.points[0] else PlasmaState(
        g, *(refine(getattr(data, f), sim0.grid, g) for f in ("n", "v", "E", "B")), data.d, 0.0)
    t0 = time.time()
    traj = run(sim, initial=s)
    v = traj.column("vort_norm")
    t2 = next((r["t"] for r in traj.rows if r["vort_norm"] >= spec.sweep.growth_factor * v[0]), None)
    print(f"N={n}: breakdown={traj.breakdown} growth time={t2} "
          f"max growth={v.max() / v[0]:.3g} wall={time.time() - t0:.0f}s", flush=True)
