"""Forward IMEX solver: oracles, monotonicity, diagnostics contracts."""

import math

import numpy as np
import pytest

from hjlab.errors import CFLViolation
from hjlab.grid import (
    ScalarField,
    TimeGrid,
    TorusGrid,
    Trajectory,
    VectorField,
    gradient_central,
    isotropic_coeff,
)
from hjlab.hamiltonian import PowerHamiltonian
from hjlab.hj_solver import HJProblem, residual_classical, solve

from conftest import fit_slope

LINEAR_RESIDUAL_TOL = 1e-10


def quad_ham(grid, gamma=2.0, h=1.0):
    return PowerHamiltonian(
        grid,
        gamma,
        ScalarField.constant(grid, h),
        VectorField.constant(grid, (0.0,) * grid.d),
    )


def heat_problem(n, n_steps, t1=0.1, u0_fn=None, f=None):
    g = TorusGrid(d=1, n_per_axis=n)
    x = g.coords()[0]
    u0 = ScalarField(g, np.sin(2 * np.pi * x) if u0_fn is None else u0_fn(x))
    return HJProblem(
        grid=g,
        time=TimeGrid(0.0, t1, n_steps),
        ham=None,
        a=isotropic_coeff(g),
        u0=u0,
        f=f,
    )


def test_zero_data_stays_zero():
    g = TorusGrid(d=1, n_per_axis=64)
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.1, 32),
        ham=quad_ham(g),
        a=isotropic_coeff(g),
        u0=ScalarField.constant(g, 0.0),
    )
    sol = solve(prob)
    assert np.max(np.abs(sol.u.frames)) == 0.0


def test_heat_mode_matches_discrete_decay_exactly():
    # implicit Euler damps the k-th mode by (1 + dt lam_k)^-1 per step with
    # lam_k the discrete symbol; for u0 = sin(2 pi x) this is exact
    n, n_steps, t1 = 64, 80, 0.1
    prob = heat_problem(n, n_steps, t1)
    sol = solve(prob)
    g = prob.grid
    lam = 4.0 * np.sin(np.pi * g.h) ** 2 / g.h**2
    dt = prob.time.dt
    factor = (1.0 + dt * lam) ** (-n_steps)
    assert np.allclose(sol.u.frames[-1], factor * prob.u0.values, atol=1e-12)


def test_heat_mode_matches_continuum_decay():
    prob = heat_problem(256, 400, 0.1)
    sol = solve(prob)
    exact = math.exp(-4 * math.pi**2 * 0.1) * prob.u0.values
    # O(h^2 + dt) envelope at this resolution
    assert np.max(np.abs(sol.u.frames[-1] - exact)) < 2e-3


def test_constant_forcing_integrates_in_time():
    g = TorusGrid(d=1, n_per_axis=32)
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.25, 50),
        ham=None,
        a=isotropic_coeff(g),
        u0=ScalarField.constant(g, 0.0),
        f=ScalarField.constant(g, 3.0),
    )
    sol = solve(prob)
    times = prob.time.times()
    for k in (10, 25, 50):
        assert np.allclose(sol.u.frames[k], 3.0 * times[k], atol=1e-12)


def test_constants_preserved_with_hamiltonian_on():
    # f = H(x, 0) = shift keeps a constant state constant
    g = TorusGrid(d=1, n_per_axis=32)
    ham = PowerHamiltonian(
        g,
        2.0,
        ScalarField.constant(g, 1.0),
        VectorField.constant(g, (0.5,)),
    )
    assert ham.shift > 0.0
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.1, 20),
        ham=ham,
        a=isotropic_coeff(g),
        u0=ScalarField.constant(g, 1.25),
        f=ScalarField.constant(g, ham.shift),
    )
    sol = solve(prob)
    assert np.allclose(sol.u.frames, 1.25, atol=1e-12)


def manufactured_problem(n, n_steps, gamma=2.0, t1=0.1, amp=1.0):
    """u*(x,t) = amp e^-t sin(2 pi x); f follows from the strong form."""
    g = TorusGrid(d=1, n_per_axis=n)
    tt = TimeGrid(0.0, t1, n_steps)
    x = g.coords()[0]
    ham = quad_ham(g, gamma)
    frames = np.empty((n_steps + 1, n))
    for k, t in enumerate(tt.times()):
        ustar = amp * math.exp(-t) * np.sin(2 * np.pi * x)
        du = amp * math.exp(-t) * 2 * np.pi * np.cos(2 * np.pi * x)
        frames[k] = -ustar + 4 * np.pi**2 * ustar + np.abs(du) ** gamma
    f = Trajectory(g, tt, frames)
    u0 = ScalarField(g, amp * np.sin(2 * np.pi * x))
    return HJProblem(grid=g, time=tt, ham=ham, a=isotropic_coeff(g), u0=u0, f=f), x


def test_manufactured_exact_solution_recovered():
    prob, x = manufactured_problem(256, 320)
    sol = solve(prob)
    exact = math.exp(-0.1) * np.sin(2 * np.pi * x)
    assert np.max(np.abs(sol.u.frames[-1] - exact)) < 3e-2


def test_manufactured_dt_slope():
    # small amplitude keeps every ladder step under the explicit CFL bound
    # (no hidden substepping); the upwind flux carries an O(h) floor, so
    # errors are taken against a same-grid reference at much smaller dt
    n = 128
    ref_prob, _ = manufactured_problem(n, 2560, amp=0.1)
    ref = solve(ref_prob, adaptive=False).u.frames[-1]
    errs, dts = [], []
    for n_steps in (20, 40, 80, 160):
        prob, _ = manufactured_problem(n, n_steps, amp=0.1)
        sol = solve(prob, adaptive=False)
        errs.append(np.max(np.abs(sol.u.frames[-1] - ref)) + 1e-16)
        dts.append(prob.time.dt)
    assert fit_slope(dts, errs) >= 0.9


def test_monotone_comparison_on_random_pairs():
    rng = np.random.default_rng(17)
    g = TorusGrid(d=1, n_per_axis=48)
    x = g.coords()[0]
    tt = TimeGrid(0.0, 0.05, 40)
    ham = quad_ham(g)
    for trial in range(3):
        c = rng.uniform(0.1, 0.6, size=3)
        base = c[0] * np.sin(2 * np.pi * x) + c[1] * np.cos(4 * np.pi * x)
        gap = c[2] * (1.1 + np.sin(2 * np.pi * x))  # strictly positive
        u0 = ScalarField(g, 0.4 * np.sin(2 * np.pi * x))
        lo = solve(HJProblem(grid=g, time=tt, ham=ham, a=isotropic_coeff(g),
                             u0=u0, f=ScalarField(g, base)))
        hi = solve(HJProblem(grid=g, time=tt, ham=ham, a=isotropic_coeff(g),
                             u0=u0, f=ScalarField(g, base + gap)))
        assert np.all(hi.u.frames >= lo.u.frames - 1e-12)


def test_linear_residuals_within_contract():
    prob, _ = manufactured_problem(128, 64)
    sol = solve(prob)
    assert float(np.max(sol.diagnostics["linear_residual"])) <= LINEAR_RESIDUAL_TOL


def test_cfl_refusal_without_adaptivity():
    # steep initial data and a long explicit step trip the speed bound
    g = TorusGrid(d=1, n_per_axis=128)
    x = g.coords()[0]
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.1, 4),
        ham=quad_ham(g, 3.0),
        a=isotropic_coeff(g),
        u0=ScalarField(g, 2.0 * np.sin(2 * np.pi * x)),
    )
    with pytest.raises(CFLViolation):
        solve(prob, adaptive=False)
    sol = solve(prob, adaptive=True)
    assert int(np.max(sol.diagnostics["substeps"])) > 1
    assert np.all(sol.diagnostics["cfl_ratio"] <= 0.9 + 1e-12)


def test_f_cap_truncation_reported():
    g = TorusGrid(d=1, n_per_axis=32)
    spike = np.zeros(32)
    spike[5] = 50.0
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.01, 8),
        ham=None,
        a=isotropic_coeff(g),
        u0=ScalarField.constant(g, 0.0),
        f=ScalarField(g, spike),
        f_cap=10.0,
    )
    sol = solve(prob)
    assert sol.diagnostics["f_clipped_cells"] == 8  # one cell per step
    assert float(np.max(sol.u.frames)) < 0.5  # capped forcing, not 50 * t


def test_sup_norm_bound_against_data():
    prob, _ = manufactured_problem(128, 64)
    sol = solve(prob)
    ceiling = (
        float(np.max(np.abs(prob.u0.values)))
        + float(np.max(np.abs(prob.f.frames))) * prob.time.t1
    )
    assert float(np.max(np.abs(sol.u.frames))) <= ceiling + 1e-12


def test_rough_datum_regularizes():
    # |sin(pi x)|^(1/2) is not Lipschitz; at t = 0 the seminorm scales like
    # h^(-1/2) while at t = 0.05 it is grid-stable
    from hjlab.estimates import lipschitz_seminorm

    lips0, lips_final = [], []
    for n in (64, 128):
        g = TorusGrid(d=1, n_per_axis=n)
        x = g.coords()[0]
        u0 = ScalarField(g, np.sqrt(np.abs(np.sin(np.pi * x))))
        prob = HJProblem(
            grid=g,
            time=TimeGrid(0.0, 0.05, 400),
            ham=quad_ham(g),
            a=isotropic_coeff(g),
            u0=u0,
            f=ScalarField(g, np.cos(2 * np.pi * x)),
        )
        sol = solve(prob)
        lips0.append(lipschitz_seminorm(u0))
        lips_final.append(lipschitz_seminorm(sol.u.terminal()))
    assert lips0[1] / lips0[0] == pytest.approx(math.sqrt(2.0), rel=0.05)
    assert abs(lips_final[1] - lips_final[0]) / lips_final[0] < 0.05


def test_residual_classical_heat_mode_slope():
    errs, hs = [], []
    for n in (32, 64, 128):
        prob = heat_problem(n, 40 * (n // 32) ** 2, t1=0.05)
        sol = solve(prob)
        res = residual_classical(prob, sol.u)
        errs.append(float(np.max(np.abs(res.frames))))
        hs.append(prob.grid.h)
    assert fit_slope(hs, errs) >= 1.9


def test_residual_classical_manufactured_decays():
    vals = []
    for n, n_steps in ((64, 64), (128, 128)):
        prob, _ = manufactured_problem(n, n_steps, t1=0.1)
        sol = solve(prob)
        res = residual_classical(prob, sol.u)
        vals.append(float(np.max(np.abs(res.frames))))
    assert vals[1] < 0.6 * vals[0]


def test_time_dependent_coefficients_accepted():
    g = TorusGrid(d=1, n_per_axis=32)
    tt = TimeGrid(0.0, 0.02, 8)
    seq = [isotropic_coeff(g, 1.0 + 0.1 * k) for k in range(tt.n_steps + 1)]
    prob = HJProblem(
        grid=g,
        time=tt,
        ham=None,
        a=seq,
        u0=ScalarField(g, np.sin(2 * np.pi * g.coords()[0])),
    )
    sol = solve(prob)
    assert np.all(np.isfinite(sol.u.frames))
    assert float(np.max(sol.diagnostics["linear_residual"])) <= LINEAR_RESIDUAL_TOL
