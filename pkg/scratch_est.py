import math
import numpy as np

from hjlab.grid import (
    isotropic_coeff,
    CoeffField, ScalarField, TimeGrid, TorusGrid, Trajectory,
)
from hjlab.hamiltonian import PowerHamiltonian
from hjlab.hj_solver import HJProblem, solve
from hjlab.fp_adjoint import DiracApprox, FPProblem, solve_backward
from hjlab.estimates import (
    LipBoundConfig, bernstein_audit, interpolation_step,
    lgamma_gradient_bound, lipschitz_seminorm, stimalip_bound_terms,
)


def heat_exact_traj(n, n_steps, T=0.05):
    g = TorusGrid(1, n)
    tt = TimeGrid(0.0, T, n_steps)
    x = g.coords()[0]
    frames = np.array([
        math.exp(-4 * math.pi**2 * t) * np.sin(2 * math.pi * x)
        for t in tt.times()
    ])
    return g, tt, Trajectory(g, tt, frames)


# --- lgamma heat mode ---
g, tt, u = heat_exact_traj(256, 200)
a = isotropic_coeff(g)
lhs, rhs, addends = lgamma_gradient_bound(u, None, None, a, gamma=2.0)
closed = math.sqrt((1.0 - math.exp(-8 * math.pi**2 * 0.05)) / 4.0)
print("lgamma heat lhs", lhs, "closed", closed, "rel", abs(lhs - closed) / closed)
print("rhs", rhs, "addends", addends)

# --- lgamma nonlinear ---
g1 = TorusGrid(1, 128)
tt1 = TimeGrid(0.0, 0.05, 200)
x1 = g1.coords()[0]
ham = PowerHamiltonian(g1, 2.0, ScalarField(g1, np.ones(g1.shape)),
                       np.zeros(g1.shape + (1,)))
a1 = isotropic_coeff(g1)
prob = HJProblem(
    grid=g1, time=tt1, ham=ham, a=a1,
    u0=ScalarField(g1, 0.3 * np.sin(2 * math.pi * x1)),
    f=ScalarField(g1, np.cos(2 * math.pi * x1)),
)
sol = solve(prob, adaptive=False)
lhs2, rhs2, add2 = lgamma_gradient_bound(sol.u, ham, prob.f, a1)
print("nonlin lhs", lhs2, "rhs", rhs2, "holds", lhs2 <= rhs2)
print("addends", add2)

# --- stimalip on the same run with a small Dirac sweep ---
drift = -sol.dph_frames if hasattr(sol, "dph_frames") else None
print("sol attrs", [k for k in dir(sol) if not k.startswith("_")])
