"""Backward density solver: conservation, positivity, Fourier oracles."""

import math

import numpy as np
import pytest

from hjlab.fp_adjoint import (
    DiracApprox,
    FPProblem,
    heat_adjoint_solve,
    mass,
    solve_backward,
)
from hjlab.grid import (
    ScalarField,
    TimeGrid,
    TorusGrid,
    VectorField,
    isotropic_coeff,
)


def gaussian_profile(grid, width=0.08):
    """Periodized Gaussian bump, normalized to unit mass."""
    x = grid.centered_coords()[0]
    r2 = sum(c**2 for c in grid.centered_coords())
    vals = np.exp(-r2 / (2 * width**2))
    f = ScalarField(grid, vals)
    return ScalarField(grid, vals / mass(f))


def test_mass_values():
    g = TorusGrid(d=1, n_per_axis=64)
    assert mass(ScalarField.constant(g, 1.0)) == pytest.approx(1.0)
    d2 = TorusGrid(d=2, n_per_axis=16)
    dirac = DiracApprox(center=(0.25, 0.25)).field(d2)
    assert float(np.max(dirac.values)) == pytest.approx(16.0**2)
    assert mass(dirac) == pytest.approx(1.0)


def test_dirac_width_must_be_odd():
    g = TorusGrid(d=1, n_per_axis=64)
    from hjlab.errors import ValidationError

    with pytest.raises(ValidationError):
        DiracApprox(center=(0.5,), width=2).field(g)
    wide = DiracApprox(center=(0.5,), width=3).field(g)
    assert mass(wide) == pytest.approx(1.0)


def test_uniform_density_is_stationary():
    g = TorusGrid(d=1, n_per_axis=64)
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.1, 40),
        a=isotropic_coeff(g),
        drift=None,
        rho_tau=ScalarField.constant(g, 1.0),
    )
    sol = solve_backward(prob)
    assert np.allclose(sol.rho.frames, 1.0, atol=1e-12)


def test_rho_tau_renormalized_at_construction():
    g = TorusGrid(d=1, n_per_axis=64)
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.1, 10),
        a=isotropic_coeff(g),
        drift=None,
        rho_tau=ScalarField.constant(g, 7.0),
    )
    assert mass(prob.rho_tau) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("flux", ["upwind", "minmod", "centered"])
def test_mass_and_positivity_under_drift(flux):
    g = TorusGrid(d=1, n_per_axis=64)
    drift = VectorField.constant(g, (0.7,))
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.05, 200),
        a=isotropic_coeff(g),
        drift=drift,
        rho_tau=DiracApprox(center=(0.5,)).field(g),
        flux=flux,
    )
    sol = solve_backward(prob)
    assert np.max(np.abs(sol.diagnostics["mass_trace"] - 1.0)) <= 1e-12
    assert float(np.min(sol.diagnostics["min_trace"])) >= -1e-13


def fourier_oracle(grid, time, rho_tau_values, v0, s_elapsed):
    """Mode-wise continuum solution for a = I and constant drift v0."""
    n = grid.n_per_axis
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = np.exp((-4 * np.pi**2 * k**2 + 2j * np.pi * k * v0) * s_elapsed)
    return np.real(np.fft.ifft(np.fft.fft(rho_tau_values) * mult))


def test_constant_drift_matches_fourier_oracle():
    # continuum-multiplier oracle; centered flux, dt ~ h^2 scaling
    n = 64
    g = TorusGrid(d=1, n_per_axis=n)
    tt = TimeGrid(0.0, 0.05, 2 * n)
    rho_tau = gaussian_profile(g)
    prob = FPProblem(
        grid=g,
        time=tt,
        a=isotropic_coeff(g),
        drift=VectorField.constant(g, (0.7,)),
        rho_tau=rho_tau,
        flux="centered",
    )
    sol = solve_backward(prob)
    oracle = fourier_oracle(g, tt, rho_tau.values, 0.7, 0.05)
    err = math.sqrt(g.cell_volume * np.sum((sol.rho.frames[0] - oracle) ** 2))
    assert err < 5e-3  # measured 2.9e-3 at this resolution


def test_centered_flux_rejects_large_peclet():
    from hjlab.errors import ValidationError

    g = TorusGrid(d=1, n_per_axis=16)
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.01, 10),
        a=isotropic_coeff(g, 0.001),
        drift=VectorField.constant(g, (5.0,)),
        rho_tau=ScalarField.constant(g, 1.0),
        flux="centered",
    )
    with pytest.raises(ValidationError):
        solve_backward(prob)


def test_negative_density_raised_without_limiter():
    from hjlab.errors import NegativeDensity

    # centered advection of a sharp spike at cell Peclet ~ 1 undershoots;
    # with weak diffusion the undershoot survives the implicit half-step
    g = TorusGrid(d=1, n_per_axis=64)
    x = g.coords()[0]
    spike = np.where(np.abs(x - 0.5) < 1.0 / 64, 1.0, 1e-6)
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.02, 50),
        a=isotropic_coeff(g, 0.008),
        drift=VectorField.constant(g, (1.0,)),
        rho_tau=ScalarField(g, spike),
        flux="centered",
        limiter=False,
    )
    with pytest.raises(NegativeDensity):
        solve_backward(prob)


def test_heat_adjoint_uniform_stationary():
    g = TorusGrid(d=1, n_per_axis=64)
    sol = heat_adjoint_solve(
        g, TimeGrid(0.0, 0.1, 40), isotropic_coeff(g), ScalarField.constant(g, 1.0)
    )
    assert np.allclose(sol.rho.frames, 1.0, atol=1e-12)


def test_heat_adjoint_dirac_matches_kernel_oracle():
    n = 128
    g = TorusGrid(d=1, n_per_axis=n)
    tt = TimeGrid(0.0, 0.02, 4 * n)
    mu_tau = gaussian_profile(g, width=0.05)
    sol = heat_adjoint_solve(g, tt, isotropic_coeff(g), mu_tau)
    oracle = fourier_oracle(g, tt, mu_tau.values, 0.0, 0.02)
    assert np.max(np.abs(sol.rho.frames[0] - oracle)) < 2e-3


def test_heat_adjoint_time_rescaling():
    # a = 2I over a window s equals a = I over 2s
    n = 96
    g = TorusGrid(d=1, n_per_axis=n)
    mu_tau = gaussian_profile(g, width=0.06)
    fast = heat_adjoint_solve(
        g, TimeGrid(0.0, 0.01, 400), isotropic_coeff(g, 2.0), mu_tau
    )
    slow = heat_adjoint_solve(
        g, TimeGrid(0.0, 0.02, 800), isotropic_coeff(g, 1.0), mu_tau
    )
    # same dt in both runs; what remains is the O(dt) Euler constant gap
    assert np.max(np.abs(fast.rho.frames[0] - slow.rho.frames[0])) < 2e-3
    assert float(np.max(fast.rho.frames[0])) == pytest.approx(
        float(np.max(slow.rho.frames[0])), rel=1e-3
    )


def test_dirac_heat_spread_conserves_mass_everywhere():
    g = TorusGrid(d=2, n_per_axis=32)
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.03, 60),
        a=isotropic_coeff(g),
        drift=None,
        rho_tau=DiracApprox(center=(0.5, 0.5)).field(g),
    )
    sol = solve_backward(prob)
    assert np.max(np.abs(sol.diagnostics["mass_trace"] - 1.0)) <= 1e-12
    assert float(np.min(sol.rho.frames)) >= -1e-13
    # diffusion spreads the peak monotonically backward in time
    peaks = np.max(sol.rho.frames, axis=(1, 2))
    assert np.all(np.diff(peaks) >= -1e-12)


def test_adaptive_substepping_reported():
    g = TorusGrid(d=1, n_per_axis=128)
    prob = FPProblem(
        grid=g,
        time=TimeGrid(0.0, 0.05, 20),  # dt far above the advective CFL
        a=isotropic_coeff(g),
        drift=VectorField.constant(g, (4.0,)),
        rho_tau=gaussian_profile(g),
        flux="upwind",
    )
    sol = solve_backward(prob)
    assert int(np.max(sol.diagnostics["substeps"])) > 1
    from hjlab.errors import CFLViolation

    with pytest.raises(CFLViolation):
        solve_backward(prob, adaptive=False)
