import numpy as np

from hjlab.grid import (
    ScalarField, TimeGrid, TorusGrid, Trajectory, VectorField,
    isotropic_coeff, fit_loglog_slope,
)
from hjlab.hamiltonian import PowerHamiltonian
from hjlab.hj_solver import HJProblem, solve
from hjlab.fp_adjoint import DiracApprox, solve_backward_transpose
from hjlab.estimates import (
    LipBoundConfig, lipschitz_seminorm, lgamma_gradient_bound,
    stimalip_bound_terms, interpolation_step, bernstein_audit,
    exponent_gate, embedding_exponent, thm3_threshold,
)

# 1. ramp profile
cfg = LipBoundConfig(t1=0.1)
print("sup eta':", cfg.sup_eta_prime)
ts = np.linspace(0, 0.3, 200001)
etas = cfg.eta(ts)
num_sup = np.max(np.abs(np.diff(etas) / np.diff(ts)))
print("numeric sup eta':", num_sup, "eta(0):", cfg.eta(0.0),
      "range ok:", bool(np.all((etas >= 0) & (etas <= 1))), "eta(t1):", cfg.eta(0.1))

# 2. lgamma on sampled heat mode, closed-form cross-check of lhs
n, steps, T = 256, 400, 0.05
g = TorusGrid(d=1, n_per_axis=n)
tg = TimeGrid(0.0, T, steps)
x = g.axis_coords()
frames = np.array([np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * x) for t in tg.times()])
traj = Trajectory(g, tg, frames)
lhs, rhs, add = lgamma_gradient_bound(traj, None, None, isotropic_coeff(g, 1.0))
closed = np.sqrt((1 - np.exp(-8 * np.pi**2 * T)) / 4.0)
print("heat lhs:", lhs, "closed:", closed, "reldiff:", abs(lhs - closed) / closed)

# gamma=2 nonlinear run: lhs <= rhs
ham = PowerHamiltonian(g, gamma=2.0, h=ScalarField.constant(g, 1.0),
                       b=VectorField(g, np.zeros(g.shape + (1,))))
prob = HJProblem(grid=g, time=tg, ham=ham, a=isotropic_coeff(g, 1.0),
                 u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
                 f=ScalarField(g, np.cos(2 * np.pi * x)))
hj = solve(prob, adaptive=False)
lhs2, rhs2, add2 = lgamma_gradient_bound(hj.u, ham, prob.f, isotropic_coeff(g, 1.0))
print("nonlinear lhs:", round(lhs2, 4), "rhs:", round(rhs2, 4), "holds:", lhs2 <= rhs2, add2)

# 3. stimalip with a 2-member Dirac sweep
sweep = [solve_backward_transpose(hj, DiracApprox(center=(c,), width=3).field(g))
         for c in (0.2, 0.7)]
rep = stimalip_bound_terms(hj.u, sweep, ham, prob.f, isotropic_coeff(g, 1.0),
                           LipBoundConfig(t1=0.02))
print("stimalip lhs:", round(rep["lhs"], 4), "rhs_main:", round(rep["rhs_main"], 4),
      "emp C:", round(rep["empirical_constant"], 5),
      "a_term:", rep["addends"]["a_term"], "addends:",
      {k: round(v, 4) for k, v in rep["addends"].items()})

# 4. interpolation
ones = Trajectory(g, TimeGrid(0.0, 1.0, 4), np.ones((5,) + g.shape))
chk = interpolation_step(ones, 2.0, 2)
print("const interp:", chk.lhs, chk.rhs, chk.holds)
rng = np.random.default_rng(1)
rnd = Trajectory(g, tg, np.abs(rng.normal(size=(steps + 1,) + g.shape)))
chk2 = interpolation_step(rnd, 2.0, 2)
print("random interp lhs<=rhs:", chk2.holds, "slack:", chk2.rhs - chk2.lhs)
chk3 = interpolation_step(ones, 1.2, 2)
print("trivial branch:", chk3.trivial_branch)

# 5. bernstein on manufactured heat mode (H off)
rho_uniform = Trajectory(g, tg, np.ones((steps + 1,) + g.shape))
resids, hs2 = [], []
for nn in (32, 64, 128):
    gg = TorusGrid(d=1, n_per_axis=nn)
    tt = TimeGrid(0.0, 0.05, 2 * nn)
    xx = gg.axis_coords()
    fr = np.array([np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * xx) for t in tt.times()])
    rr = Trajectory(gg, tt, np.ones((tt.n_steps + 1,) + gg.shape))
    rep_b = bernstein_audit(Trajectory(gg, tt, fr), rr, None, None, isotropic_coeff(gg, 1.0))
    resids.append(rep_b["z_residual_sup"])
    hs2.append(gg.h)
    print(f"  n={nn} z-resid={rep_b['z_residual_sup']:.4e} gap_min={rep_b['ellipticity_gap_min']:.2e} slack={rep_b['integrated_slack']:.4f}")
print("bernstein residual slope:", round(fit_loglog_slope(hs2, resids), 3))

# on the nonlinear run with a Dirac adjoint
rep_b2 = bernstein_audit(hj.u, sweep[0].rho, ham, prob.f, isotropic_coeff(g, 1.0))
print("nonlinear bernstein: gap_min", rep_b2["ellipticity_gap_min"],
      "int holds:", rep_b2["integrated_slack"] >= 0.0,
      "slack:", round(rep_b2["integrated_slack"], 4))

# 6. gates
g1 = exponent_gate(2.0, 2, 5.0, 4.0, 4.0)
g2 = exponent_gate(4.0, 2, 5.0, 4.0, 4.0)
print("thm1 (2,2,5):", g1.thm1_f_condition, " (4,2,5):", g2.thm1_f_condition)
print("aronson d/(2P)+1/Q:", g1.aronson_serrin)
print("thm3 threshold gamma=3 d=2:", thm3_threshold(3.0, 2),
      "continuity:", abs(thm3_threshold(3.0 - 1e-9, 2) - thm3_threshold(3.0 + 1e-9, 2)) < 1e-6)
print("embedding sigma=2,d=2:", embedding_exponent(2.0, 2), "sigma=4:", embedding_exponent(4.0, 2))
