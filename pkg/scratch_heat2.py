"""Duhamel residual on a grid trajectory, divergence ladder, L^q verdicts."""
import math
import time

import numpy as np

from hjlab.counterexamples import HeatForcedCE
from hjlab.grid import ScalarField, TimeGrid, TorusGrid, Trajectory, fit_loglog_slope
from hjlab.hj_solver import HJProblem, residual_classical
from hjlab.grid import isotropic_coeff


def duhamel_residual(d, n, t_lo, t_hi, n_steps):
    ce = HeatForcedCE(d=d, T=0.25)
    grid = TorusGrid(d, n)
    tg = TimeGrid(t_lo, t_hi, n_steps)
    times = tg.times()
    frames = np.stack([ce.u3_field(grid, t).values for t in times])
    traj = Trajectory(grid, tg, frames)
    fframes = np.stack([ce.f3_field(grid, t).values for t in times])
    ftraj = Trajectory(grid, tg, fframes)
    prob = HJProblem(
        grid=grid,
        time=tg,
        ham=None,
        a=isotropic_coeff(grid),
        u0=ScalarField(grid, frames[0]),
        f=ftraj,
    )
    res = residual_classical(prob, traj)
    scale = float(np.max(np.abs(fframes)))
    return float(np.max(np.abs(res.frames))), scale


def main():
    print("== cross-check: lattice spectral path vs point image quadrature ==")
    for d, n in ((1, 128), (2, 64)):
        ce = HeatForcedCE(d=d, T=0.25)
        grid = TorusGrid(d, n)
        t = 0.2
        fld = ce.u3_field(grid, t)
        pts = np.stack([c.ravel() for c in grid.centered_coords()], axis=-1)
        sub = pts[:: max(1, pts.shape[0] // 40)]
        mine = ce.u3_eval(sub, t)
        ref = fld.values.ravel()[:: max(1, pts.shape[0] // 40)]
        print(
            f"  d={d} n={n}: max|lattice-point|={np.max(np.abs(mine - ref)):.3e}"
            f" (range {np.max(np.abs(fld.values)):.4f})"
        )

    print("== Duhamel residual (heat equation, grid FD) ==")
    for win, steps in ((0.01, 8), (0.001, 8)):
        r, s = duhamel_residual(1, 128, 0.1, 0.1 + win, steps)
        print(f"  d=1 n=128 dt={win / steps:.2e}: max residual {r:.4e}  (f3 scale {s:.3f})")
    r, s = duhamel_residual(2, 64, 0.1, 0.101, 8)
    print(f"  d=2 n=64 dt=1.25e-04: max residual {r:.4e}  (f3 scale {s:.3f})")

    print("== du3_sup divergence ladder (d=2) ==")
    ce = HeatForcedCE(d=2, T=0.25)
    t_total = time.time()
    vals = []
    for k in range(3, 15):
        t = ce.T - 2.0**-k
        t0 = time.time()
        v = ce.du3_sup(t)
        vals.append(v)
        print(f"  k={k:2d} t={t:.8f}: du3_sup={v:.6f}  ({time.time() - t0:.1f}s)")
    elapsed = time.time() - t_total
    inc = np.diff(vals)
    print(f"  ladder total {elapsed:.1f}s; increasing: {bool(np.all(inc > 0))}")
    # loglog(1/theta) fit: x = log log(1/theta) = log(k log 2)
    ks = np.arange(3, 15)
    coef = np.polyfit(np.log(ks * math.log(2.0)), np.log(vals), 1)
    print(f"  slope of log(du3_sup) vs log(log(1/theta)): {coef[0]:.3f}")

    print("== f3 L^q scan verdicts (d=2) ==")
    for q in (3.0, 4.0, 5.0):
        t0 = time.time()
        res = ce.f3_lq_scan(q)
        print(
            f"  q={q}: verdict={res.verdict} slope={res.increment_slope:+.3f}"
            f" ({time.time() - t0:.2f}s)"
        )


if __name__ == "__main__":
    main()
