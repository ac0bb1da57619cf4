"""Validate the dipole HeatForcedCE: oracle check, ladder, scans, residual."""
import math
import time

import numpy as np

from hjlab.counterexamples import HeatForcedCE
from hjlab.grid import ScalarField, TimeGrid, TorusGrid, Trajectory, isotropic_coeff
from hjlab.hj_solver import HJProblem, residual_classical


def spectral_1d(ce, t, n_grid=2048, n_dyadic=46, gl=16, gradient=False):
    x = np.arange(n_grid) / n_grid
    xc = x - np.round(x)
    k = np.fft.rfftfreq(n_grid, 1.0 / n_grid)
    rate = 4.0 * math.pi**2 * k**2
    pts = t - t * np.power(0.5, np.arange(1, n_dyadic))
    edges = np.unique(np.concatenate([[0.0], pts, [t]]))
    gn, gw = np.polynomial.legendre.leggauss(gl)
    acc = np.zeros(k.shape, dtype=complex)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for zn, zw in zip(gn, gw):
            s = mid + half * zn
            w = half * zw
            f = ce.f3_eval(xc[:, None], s)
            acc += w * np.exp(-rate * (t - s)) * (np.fft.rfft(f) / n_grid)
    if gradient:
        return xc, np.fft.irfft(acc * 2j * math.pi * k * n_grid, n=n_grid)
    return xc, np.fft.irfft(acc * n_grid, n=n_grid)


def main():
    ce = HeatForcedCE()
    print(f"defaults: d={ce.d} T={ce.T} offsets={ce.offsets} signs={ce.signs}")

    print("== value check vs spectral oracle ==")
    for t in (0.05, 0.1, 0.124):
        xc, uo = spectral_1d(ce, t)
        idx = np.arange(0, 2048, 128)
        mine = ce.u3_eval(xc[idx][:, None], t)
        diff = np.max(np.abs(mine - uo[idx]))
        print(f"  t={t}: max|diff|={diff:.3e} range={np.max(np.abs(uo)):.4f}")

    print("== gradient check vs spectral oracle ==")
    for t in (0.1, 0.1249):
        xc, go = spectral_1d(ce, t, gradient=True)
        idx = np.arange(0, 2048, 128)
        mine = ce.du3_eval(xc[idx][:, None], t)[:, 0]
        diff = np.max(np.abs(mine - go[idx]))
        print(f"  t={t}: max|diff|={diff:.3e} range={np.max(np.abs(go)):.4f}")

    print("== lattice spectral path vs point path ==")
    grid = TorusGrid(1, 256)
    fld = ce.u3_field(grid, 0.1)
    pts = np.stack(grid.centered_coords(), axis=-1)
    sub = np.arange(0, 256, 16)
    mine = ce.u3_eval(pts.reshape(-1, 1)[sub], 0.1)
    print(f"  max|diff|={np.max(np.abs(mine - fld.values.ravel()[sub])):.3e}")

    print("== du3_sup ladder k=3..14 ==")
    t_all = time.time()
    vals = []
    for k in range(4, 15):
        t = ce.T - 2.0**-k
        t0 = time.time()
        v = ce.du3_sup(t)
        vals.append(v)
        print(f"  k={k:2d}: du3_sup={v:.6f}  ({time.time() - t0:.2f}s)")
    inc = np.diff(vals)
    print(
        f"  total {time.time() - t_all:.1f}s; increasing: {bool(np.all(inc > 0))};"
        f" worst rel inc {np.min(inc / np.array(vals[:-1])):+.4f}"
    )

    print("== f3 L^q scan verdicts (q = d+1, d+2, d+3) ==")
    slopes = []
    for q in (ce.d + 1.0, ce.d + 2.0, ce.d + 3.0):
        res = ce.f3_lq_scan(q)
        slopes.append(res.slope)
        print(f"  q={q}: verdict={res.verdict} slope={res.slope:+.3f}")
    print(f"  slope monotone in q: {bool(np.all(np.diff(slopes) > 0))}")

    print("== Duhamel residual on grid trajectory ==")
    for n in (128, 256, 512):
        grid = TorusGrid(1, n)
        tg = TimeGrid(0.06, 0.0605, 8)
        times = tg.times()
        frames = np.stack([ce.u3_field(grid, t).values for t in times])
        fframes = np.stack([ce.f3_field(grid, t).values for t in times])
        prob = HJProblem(
            grid=grid,
            time=tg,
            ham=None,
            a=isotropic_coeff(grid),
            u0=ScalarField(grid, frames[0]),
            f=Trajectory(grid, tg, fframes),
        )
        res = residual_classical(prob, Trajectory(grid, tg, frames))
        print(f"  n={n}: max residual {np.max(np.abs(res.frames)):.4e} (f3 scale {np.max(np.abs(fframes)):.3f})")


if __name__ == "__main__":
    main()
