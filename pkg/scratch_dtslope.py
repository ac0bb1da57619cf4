import numpy as np

from hjlab.grid import (
    ScalarField, TimeGrid, TorusGrid, VectorField, isotropic_coeff,
    fit_loglog_slope, gradient_central,
)
from hjlab.hamiltonian import PowerHamiltonian
from hjlab.hj_solver import HJProblem, solve
from hjlab.fp_adjoint import (
    FPProblem, VectorTrajectory, solve_backward, solve_backward_transpose,
)
from hjlab.duality import representation_residual

g = TorusGrid(d=1, n_per_axis=128)
x = g.axis_coords()
ham = PowerHamiltonian(g, gamma=2.0, h=ScalarField.constant(g, 1.0),
                       b=VectorField(g, np.zeros(g.shape + (1,))))
u0 = ScalarField(g, 0.3 * np.sin(2 * np.pi * x))
ff = ScalarField(g, np.cos(2 * np.pi * x))
rho_tau = ScalarField.constant(g, 1.0)

for label, use_transpose_rho in (("flux rho", False), ("transpose rho", True)):
    resids, dts = [], []
    for n_steps in (125, 250, 500, 1000):
        tgk = TimeGrid(0.0, 0.1, n_steps)
        probk = HJProblem(grid=g, time=tgk, ham=ham, a=isotropic_coeff(g, 1.0),
                          u0=u0, f=ff)
        hjk = solve(probk, adaptive=False)
        if use_transpose_rho:
            fpk = solve_backward_transpose(hjk, rho_tau)
        else:
            drift = np.empty((n_steps + 1,) + g.shape + (1,))
            for k in range(n_steps + 1):
                du = gradient_central(ScalarField(g, hjk.u.frames[k]))
                drift[k] = -ham.eval_DpH_field(du).values
            fpk = solve_backward(FPProblem(
                grid=g, time=tgk, a=isotropic_coeff(g, 1.0),
                drift=VectorTrajectory(g, tgk, drift),
                rho_tau=rho_tau, flux="centered"))
        repk = representation_residual(hjk.u, fpk.rho, ham, ff)
        resids.append(repk.residual)
        dts.append(tgk.dt)
    print(label, ["%.3e" % r for r in resids],
          "slope:", round(fit_loglog_slope(dts, resids), 3))
