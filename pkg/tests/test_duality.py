"""Duality functionals: representation identity, energy, transport metric."""

import math
import warnings

import numpy as np
import pytest

from hjlab.duality import (
    energy_functional,
    fp_gradient_empirical_constant,
    grad_rho_norm,
    grad_rho_regime,
    gradient_moment,
    holder_exponent_fit,
    representation_residual,
    sup_norm_duality_bound,
    transpose_report,
    wasserstein1_1d,
)
from hjlab.errors import (
    BadExponent,
    DimensionUnsupported,
    ExponentRangeWarning,
    ValidationError,
)
from hjlab.fp_adjoint import (
    DiracApprox,
    FPProblem,
    heat_adjoint_solve,
    solve_backward,
    solve_backward_transpose,
)
from hjlab.grid import (
    ScalarField,
    TimeGrid,
    TorusGrid,
    Trajectory,
    VectorField,
    isotropic_coeff,
)
from hjlab.hamiltonian import PowerHamiltonian
from hjlab.hj_solver import HJProblem, solve

from conftest import fit_slope


def smooth_run(n=128, n_steps=200, t1=0.05, gamma=2.0):
    g = TorusGrid(d=1, n_per_axis=n)
    x = g.coords()[0]
    ham = PowerHamiltonian(
        g, gamma, ScalarField.constant(g, 1.0), VectorField.constant(g, (0.0,))
    )
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, t1, n_steps),
        ham=ham,
        a=isotropic_coeff(g),
        u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
        f=ScalarField(g, np.cos(2 * np.pi * x)),
    )
    return solve(prob, adaptive=False)


def test_transpose_mode_residual_is_round_off():
    hj = smooth_run()
    fp = solve_backward_transpose(hj, ScalarField.constant(hj.u.grid, 1.0))
    rep = transpose_report(hj, fp)
    assert rep.residual <= 1e-10
    assert rep.metadata["mode"] == "transpose"
    assert rep.energy > 0.0


def test_transpose_mode_residual_round_off_on_subwindow():
    hj = smooth_run(n=64, n_steps=100)
    for k_stop in (20, 50):
        fp = solve_backward_transpose(
            hj, ScalarField.constant(hj.u.grid, 1.0), k_stop=k_stop
        )
        rep = transpose_report(hj, fp)
        assert rep.residual <= 1e-10


def test_linear_case_reduces_to_heat_duality():
    # Hamiltonian off: identity is <u(tau), rho_tau> = <u0, rho(0)> + I f rho
    g = TorusGrid(d=1, n_per_axis=64)
    x = g.coords()[0]
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.04, 80),
        ham=None,
        a=isotropic_coeff(g),
        u0=ScalarField(g, 0.5 * np.cos(2 * np.pi * x)),
        f=ScalarField(g, np.sin(4 * np.pi * x)),
    )
    hj = solve(prob, adaptive=False)
    fp = solve_backward_transpose(hj, ScalarField.constant(g, 1.0))
    rep = transpose_report(hj, fp)
    assert rep.residual <= 1e-10
    assert rep.energy == 0.0  # no drift without a Hamiltonian


def test_quadrature_mode_residual_decays_in_dt():
    errs, dts = [], []
    for n_steps in (50, 100, 200):
        hj = smooth_run(n=64, n_steps=n_steps)
        fp = solve_backward_transpose(hj, ScalarField.constant(hj.u.grid, 1.0))
        rep = representation_residual(
            hj.u, fp.rho, hj.problem.ham, hj.problem.f
        )
        errs.append(rep.residual)
        dts.append(hj.problem.time.dt)
    assert fit_slope(dts, errs) >= 0.9


def test_dirac_terminal_pairs_with_pointwise_value():
    hj = smooth_run(n=64, n_steps=100)
    g = hj.u.grid
    rho_tau = DiracApprox(center=(0.5,)).field(g)
    fp = solve_backward_transpose(hj, rho_tau)
    rep = transpose_report(hj, fp)
    idx = 32  # cell holding x0 = 0.5
    assert rep.lhs == pytest.approx(float(hj.u.frames[-1][idx]), abs=1e-12)
    assert rep.residual <= 1e-10


def sawtooth_setup(window=1.0, n=256, n_steps=64):
    """Slope-3 sawtooth frozen in time, density supported away from the wrap."""
    g = TorusGrid(d=1, n_per_axis=n)
    x = g.coords()[0]
    u_frames = np.repeat((3.0 * (x - 0.5))[None, :], n_steps + 1, axis=0)
    tt = TimeGrid(0.0, window, n_steps)
    u = Trajectory(g, tt, u_frames)
    box = ((x > 0.25) & (x < 0.75)).astype(float)
    box /= g.cell_volume * box.sum()
    rho = Trajectory(g, tt, np.repeat(box[None, :], n_steps + 1, axis=0))
    ham = PowerHamiltonian(
        g, 2.0, ScalarField.constant(g, 1.0), VectorField.constant(g, (0.0,))
    )
    return u, rho, ham


def test_energy_functional_closed_form_on_sawtooth():
    u, rho, ham = sawtooth_setup(window=1.0)
    # |DpH| = 2|Du| = 6 on the support, so the energy is 6^2 * window
    assert energy_functional(u, rho, ham) == pytest.approx(36.0, rel=1e-12)
    u2, rho2, _ = sawtooth_setup(window=0.25)
    assert energy_functional(u2, rho2, ham) == pytest.approx(9.0, rel=1e-12)


def test_energy_functional_zero_for_flat_u():
    g = TorusGrid(d=1, n_per_axis=64)
    tt = TimeGrid(0.0, 0.1, 16)
    u = Trajectory(g, tt, np.zeros((17, 64)))
    rho = Trajectory(g, tt, np.ones((17, 64)))
    ham = PowerHamiltonian(
        g, 2.0, ScalarField.constant(g, 1.0), VectorField.constant(g, (0.0,))
    )
    assert energy_functional(u, rho, ham) == 0.0


def test_energy_monotone_in_density():
    u, rho, ham = sawtooth_setup()
    bigger = Trajectory(rho.grid, rho.time, 2.0 * rho.frames)
    assert energy_functional(u, bigger, ham) >= energy_functional(u, rho, ham)


def test_gradient_moment_constant_slope():
    u, rho, ham = sawtooth_setup(window=0.5)
    # |Du| = 3 on the density support
    for beta in (1.0, 1.5, 2.0):
        want = 3.0**beta * 0.5
        assert gradient_moment(u, rho, beta) == pytest.approx(want, rel=1e-12)
    with pytest.raises(BadExponent):
        gradient_moment(u, rho, 0.5)


def test_gradient_moment_power_ordering():
    # |Du| <= 1 everywhere: the gamma-moment sits below the 1-moment
    g = TorusGrid(d=1, n_per_axis=128)
    x = g.coords()[0]
    tt = TimeGrid(0.0, 1.0, 32)
    u_vals = (0.1 / (2 * np.pi)) * np.sin(2 * np.pi * x)
    u = Trajectory(g, tt, np.repeat(u_vals[None, :], 33, axis=0))
    rho = Trajectory(g, tt, np.ones((33, 128)))
    m1 = gradient_moment(u, rho, 1.0)
    m2 = gradient_moment(u, rho, 2.0)
    assert m2 <= m1


def test_grad_rho_norm_flat_density_is_zero():
    g = TorusGrid(d=2, n_per_axis=16)
    tt = TimeGrid(0.0, 0.1, 8)
    rho = Trajectory(g, tt, np.ones((9, 16, 16)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExponentRangeWarning)
        assert grad_rho_norm(rho, 1.1) == 0.0
    assert grad_rho_regime(2, 1.1)
    assert not grad_rho_regime(2, 1.5)
    with pytest.raises(BadExponent):
        grad_rho_norm(rho, 0.8)


def test_grad_rho_norm_warns_outside_regime():
    g = TorusGrid(d=2, n_per_axis=16)
    tt = TimeGrid(0.0, 0.1, 8)
    rng = np.random.default_rng(0)
    rho = Trajectory(g, tt, rng.uniform(0.5, 1.5, (9, 16, 16)))
    with pytest.warns(ExponentRangeWarning):
        grad_rho_norm(rho, 1.5)


def test_wasserstein_basics():
    g = TorusGrid(d=1, n_per_axis=128)
    a = DiracApprox(center=(0.0,)).field(g)
    b = DiracApprox(center=(0.25,)).field(g)
    assert wasserstein1_1d(a, a) == 0.0
    assert wasserstein1_1d(a, b) == pytest.approx(0.25, abs=g.h)
    uniform = ScalarField.constant(g, 1.0)
    assert wasserstein1_1d(uniform, a) == pytest.approx(0.25, abs=g.h)


def test_wasserstein_is_a_metric_on_random_triples():
    rng = np.random.default_rng(23)
    g = TorusGrid(d=1, n_per_axis=64)
    h = g.h

    def rand_density():
        v = rng.uniform(0.05, 1.0, 64)
        return ScalarField(g, v / (h * v.sum()))

    for _ in range(5):
        fa, fb, fc = rand_density(), rand_density(), rand_density()
        dab = wasserstein1_1d(fa, fb)
        dba = wasserstein1_1d(fb, fa)
        assert dab == pytest.approx(dba, abs=1e-12)
        dac = wasserstein1_1d(fa, fc)
        dcb = wasserstein1_1d(fc, fb)
        assert dab <= dac + dcb + 2 * h


def test_wasserstein_rejects_2d():
    g = TorusGrid(d=2, n_per_axis=16)
    f = ScalarField.constant(g, 1.0)
    with pytest.raises(DimensionUnsupported):
        wasserstein1_1d(f, f)


def test_holder_fit_heat_spread_is_half():
    g = TorusGrid(d=1, n_per_axis=128)
    tt = TimeGrid(0.0, 0.02, 160)
    sol = heat_adjoint_solve(
        g, tt, isotropic_coeff(g), DiracApprox(center=(0.5,)).field(g)
    )
    fit = holder_exponent_fit(sol.rho)
    assert not fit.degenerate
    assert fit.exponent == pytest.approx(0.5, abs=0.1)


def test_holder_fit_degenerate_on_stationary_density():
    g = TorusGrid(d=1, n_per_axis=64)
    tt = TimeGrid(0.0, 0.1, 16)
    rho = Trajectory(g, tt, np.ones((17, 64)))
    fit = holder_exponent_fit(rho)
    assert fit.degenerate
    assert fit.exponent == 0.0


def test_holder_fit_needs_enough_samples():
    from hjlab.errors import InsufficientSamples

    g = TorusGrid(d=1, n_per_axis=64)
    tt = TimeGrid(0.0, 0.1, 4)
    rho = Trajectory(g, tt, np.ones((5, 64)))
    with pytest.raises(InsufficientSamples):
        holder_exponent_fit(rho)


def test_sup_norm_bound_no_forcing():
    g = TorusGrid(d=1, n_per_axis=64)
    x = g.coords()[0]
    u0 = ScalarField(g, 0.4 * np.sin(2 * np.pi * x))
    tt = TimeGrid(0.0, 0.05, 100)
    mu = heat_adjoint_solve(
        g, tt, isotropic_coeff(g), DiracApprox(center=(0.5,)).field(g)
    )
    bd = sup_norm_duality_bound(u0, None, mu.rho, q=5.0)
    assert bd.bound == pytest.approx(0.4)
    prob = HJProblem(grid=g, time=tt, ham=None, a=isotropic_coeff(g), u0=u0)
    sol = solve(prob)
    assert float(np.max(sol.u.frames[-1])) <= bd.bound + 1e-12


def test_sup_norm_bound_constant_forcing_tight():
    # H off, f = c: u = heat(u0) + c t, and the duality bound is attained
    # in the q -> inf limit; at finite q it majorizes with small slack
    g = TorusGrid(d=1, n_per_axis=64)
    x = g.coords()[0]
    u0 = ScalarField(g, 0.2 * np.sin(2 * np.pi * x))
    tt = TimeGrid(0.0, 0.1, 100)
    c = 1.5
    prob = HJProblem(
        grid=g, time=tt, ham=None, a=isotropic_coeff(g),
        u0=u0, f=ScalarField.constant(g, c),
    )
    sol = solve(prob)
    mu = heat_adjoint_solve(
        g, tt, isotropic_coeff(g), DiracApprox(center=(0.5,)).field(g)
    )
    bd = sup_norm_duality_bound(u0, prob.f, mu.rho, q=np.inf)
    max_u = float(np.max(sol.u.frames[-1]))
    assert max_u <= bd.bound + 1e-12
    # exact solution peaks at ~ |u0| e^{-4 pi^2 t} + c t; slack stays small
    assert bd.bound - max_u < 0.25


def test_sup_norm_bound_nonlinear_run_holds():
    hj = smooth_run(n=64, n_steps=100)
    g = hj.u.grid
    mu = heat_adjoint_solve(
        g, hj.problem.time, isotropic_coeff(g), DiracApprox(center=(0.5,)).field(g)
    )
    bd = sup_norm_duality_bound(hj.problem.u0, hj.problem.f, mu.rho, q=5.0)
    # H >= 0 after the shift, so u <= heat bound from above
    assert float(np.max(hj.u.frames[-1])) <= bd.bound + 1e-12


def test_fp_gradient_empirical_constant_fields():
    g = TorusGrid(d=1, n_per_axis=64)
    tt = TimeGrid(0.0, 0.02, 80)
    sol = solve_backward(
        FPProblem(
            grid=g, time=tt, a=isotropic_coeff(g),
            drift=VectorField.constant(g, (0.5,)),
            rho_tau=DiracApprox(center=(0.5,)).field(g),
        )
    )
    out = fp_gradient_empirical_constant(sol.rho, sol.problem.drift, q=5.0)
    assert out["r_prime"] == pytest.approx(1.0 + 3.0 / 5.0)
    assert out["q_prime"] == pytest.approx(1.25)
    assert out["constant"] > 0.0
    with pytest.raises(BadExponent):
        fp_gradient_empirical_constant(sol.rho, sol.problem.drift, q=1.0)


def test_representation_residual_window_validation():
    hj = smooth_run(n=64, n_steps=100)
    fp = solve_backward_transpose(hj, ScalarField.constant(hj.u.grid, 1.0))
    with pytest.raises(ValidationError):
        representation_residual(hj.u, fp.rho, hj.problem.ham, hj.problem.f, s=0.01)
