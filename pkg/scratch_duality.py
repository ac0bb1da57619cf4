import numpy as np

from hjlab.grid import (
    ScalarField, TimeGrid, TorusGrid, Trajectory, VectorField,
    isotropic_coeff, fit_loglog_slope,
)
from hjlab.hamiltonian import PowerHamiltonian
from hjlab.hj_solver import HJProblem, solve
from hjlab.fp_adjoint import (
    DiracApprox, FPProblem, VectorTrajectory, solve_backward,
    solve_backward_transpose, heat_adjoint_solve, mass,
)
from hjlab.duality import (
    representation_residual, transpose_report, energy_functional,
    gradient_moment, grad_rho_norm, wasserstein1_1d, holder_exponent_fit,
    sup_norm_duality_bound, fp_gradient_empirical_constant,
)

g = TorusGrid(d=1, n_per_axis=128)
x = g.axis_coords()

def make_ham(gamma=2.0, b0=0.5):
    return PowerHamiltonian(
        g, gamma=gamma, h=ScalarField.constant(g, 1.0),
        b=VectorField(g, np.full(g.shape + (1,), b0)),
    )

# --- 1. transpose-mode report: round-off residual ---------------------
tg = TimeGrid(0.0, 0.1, 1000)
ham = make_ham()
prob = HJProblem(grid=g, time=tg, ham=ham, a=isotropic_coeff(g, 1.0),
                 u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
                 f=ScalarField(g, np.cos(2 * np.pi * x)))
hj = solve(prob, adaptive=False)
rho_tau = DiracApprox(center=(0.4,), width=3).field(g)
fp = solve_backward_transpose(hj, rho_tau)
rep = transpose_report(hj, fp, moment_betas=(1.0, 2.0), q_prime=1.2)
print("transpose residual:", rep.residual)
print("energy:", rep.energy, "moments:", rep.moments, "gradrho:", rep.grad_rho_norm)
print(rep.to_json()[:200])

# --- 2. quadrature-mode: dt-refinement slope >= 0.9 --------------------
# drift rho along -DpH(Du) via flux solver, same dt; measure residual ladder
resids = []
dts = []
for n_steps in (125, 250, 500, 1000):
    tgk = TimeGrid(0.0, 0.1, n_steps)
    probk = HJProblem(grid=g, time=tgk, ham=ham, a=isotropic_coeff(g, 1.0),
                      u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
                      f=ScalarField(g, np.cos(2 * np.pi * x)))
    hjk = solve(probk, adaptive=False)
    drift = np.empty((n_steps + 1,) + g.shape + (1,))
    from hjlab.grid import gradient_central
    for k in range(n_steps + 1):
        du = gradient_central(ScalarField(g, hjk.u.frames[k]))
        drift[k] = -ham.eval_DpH_field(du).values
    fpk = solve_backward(FPProblem(grid=g, time=tgk, a=isotropic_coeff(g, 1.0),
                                   drift=VectorTrajectory(g, tgk, drift),
                                   rho_tau=rho_tau, flux="centered"))
    repk = representation_residual(hjk.u, fpk.rho, ham, probk.f)
    resids.append(repk.residual)
    dts.append(tgk.dt)
    print(f"  n_steps={n_steps} residual={repk.residual:.4e}")
print("dt-slope:", fit_loglog_slope(dts, resids))

# --- 3. linear case (ham None): heat duality residual <=1e-10 transpose
prob0 = HJProblem(grid=g, time=tg, ham=None, a=isotropic_coeff(g, 1.0),
                  u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
                  f=ScalarField(g, np.cos(2 * np.pi * x)))
hj0 = solve(prob0, adaptive=False)
fp0 = solve_backward_transpose(hj0, rho_tau)
rep0 = transpose_report(hj0, fp0)
print("linear transpose residual:", rep0.residual, "energy:", rep0.energy)

# --- 4. wasserstein examples ------------------------------------------
da = DiracApprox(center=(0.0,)).field(g)
db = DiracApprox(center=(0.25,)).field(g)
uni = ScalarField.constant(g, 1.0)
print("dirac-dirac 1/4:", wasserstein1_1d(da, db))
print("uniform-dirac 1/4:", wasserstein1_1d(uni, db))
print("identical:", wasserstein1_1d(da, da))
rng = np.random.default_rng(0)
ok = True
for _ in range(20):
    trip = []
    for _ in range(3):
        v = rng.random(g.shape) + 0.01
        v /= v.sum() * g.h
        trip.append(ScalarField(g, v))
    dab = wasserstein1_1d(trip[0], trip[1])
    dbc = wasserstein1_1d(trip[1], trip[2])
    dac = wasserstein1_1d(trip[0], trip[2])
    if dac > dab + dbc + 2 * g.h:
        ok = False
    if abs(dab - wasserstein1_1d(trip[1], trip[0])) > 1e-14:
        ok = False
print("metric props on random triples:", ok)

# --- 5. holder fit on drift-free heat flow: ~1/2 ----------------------
tgh = TimeGrid(0.0, 0.05, 400)
hs = heat_adjoint_solve(g, tgh, isotropic_coeff(g, 1.0), DiracApprox(center=(0.5,)).field(g))
fit = holder_exponent_fit(hs.rho)
print("holder exponent (expect ~0.5):", fit.exponent, "pairs:", fit.n_pairs)

# degenerate: constant density
const_frames = np.ones((9,) + g.shape)
fitc = holder_exponent_fit(Trajectory(g, TimeGrid(0.0, 1.0, 8), const_frames))
print("degenerate flag:", fitc.degenerate)

# --- 6. sup-norm duality bound ----------------------------------------
# f=0 case: bound = ||u0||_inf; solver max <= bound + shift*tau
bnd = sup_norm_duality_bound(prob.u0, None, hs.rho, q=4.0)
print("f=0 bound:", bnd.bound, "=", bnd.u0_sup)
# f = c, H off: u = heat(u0) + c t
c = 0.7
probc = HJProblem(grid=g, time=tgh, ham=None, a=isotropic_coeff(g, 1.0),
                  u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
                  f=ScalarField.constant(g, c))
hjc = solve(probc, adaptive=False)
bndc = sup_norm_duality_bound(probc.u0, probc.f, hs.rho, q=4.0)
print("f=c bound:", bndc.bound, "solver max u(tau):", float(hjc.u.frames[-1].max()))

# --- 7. moment ordering + empirical constant ---------------------------
em = fp_gradient_empirical_constant(fp.rho, None, q=4.0)
print("empirical const (driftless):", em["constant"], "r':", em["r_prime"])
m1 = gradient_moment(hj.u, fp.rho, 1.0)
m2 = gradient_moment(hj.u, fp.rho, 2.0)
print("moments m1, m2:", m1, m2)
en = energy_functional(hj.u, fp.rho, ham)
print("energy again:", en)
