"""Gradient budgets, weighted Lipschitz terms, interpolation, exponent gates."""

import math

import numpy as np
import pytest

from hjlab.errors import BadExponent, MissingSweep, RoughData, ValidationError
from hjlab.estimates import (
    LipBoundConfig,
    bernstein_audit,
    embedding_exponent,
    exponent_gate,
    interpolation_step,
    lgamma_gradient_bound,
    lipschitz_seminorm,
    stimalip_bound_terms,
    thm3_threshold,
)
from hjlab.fp_adjoint import DiracApprox, FPProblem, VectorTrajectory, solve_backward
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
from hjlab.hj_solver import HJProblem, solve


def heat_mode_trajectory(n, n_steps, t1=0.05):
    """Exact single-mode heat evolution sampled on the grid nodes."""
    g = TorusGrid(d=1, n_per_axis=n)
    tt = TimeGrid(0.0, t1, n_steps)
    x = g.coords()[0]
    frames = np.array(
        [
            math.exp(-4.0 * math.pi**2 * t) * np.sin(2.0 * math.pi * x)
            for t in tt.times()
        ]
    )
    return Trajectory(g, tt, frames)


@pytest.fixture(scope="module")
def smooth_quadratic_run():
    g = TorusGrid(d=1, n_per_axis=128)
    x = g.coords()[0]
    ham = PowerHamiltonian(
        g, 2.0, ScalarField.constant(g, 1.0), VectorField.constant(g, (0.0,))
    )
    prob = HJProblem(
        grid=g,
        time=TimeGrid(0.0, 0.05, 200),
        ham=ham,
        a=isotropic_coeff(g),
        u0=ScalarField(g, 0.3 * np.sin(2 * np.pi * x)),
        f=ScalarField(g, np.cos(2 * np.pi * x)),
    )
    return solve(prob, adaptive=False)


def test_lipschitz_seminorm_constant_is_zero():
    g = TorusGrid(d=2, n_per_axis=16)
    assert lipschitz_seminorm(ScalarField.constant(g, 4.2)) == 0.0


def test_lipschitz_seminorm_triangle_wave_exact():
    # slope +-3 everywhere once the kinks sit on grid nodes, so the largest
    # one-sided quotient is exactly 3
    g = TorusGrid(d=1, n_per_axis=64)
    x = g.coords()[0]
    tri = ScalarField(g, 3.0 * np.minimum(x, 1.0 - x))
    assert lipschitz_seminorm(tri) == 3.0


def test_ramp_profile_and_derivative_sup():
    cfg = LipBoundConfig(t1=0.1)
    assert cfg.sup_eta_prime == 3.0 / 0.1
    assert cfg.eta(0.0) == 0.0
    assert cfg.eta(0.05) == 0.0
    assert cfg.eta(0.075) == pytest.approx(0.5, abs=1e-14)
    assert cfg.eta(0.1) == 1.0
    assert cfg.eta(0.2) == 1.0
    vals = cfg.eta_values(TimeGrid(0.0, 0.2, 80))
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    assert np.all(np.diff(vals) >= 0.0)


def test_ramp_rejects_nonpositive_cutoff():
    with pytest.raises(ValidationError):
        LipBoundConfig(t1=0.0)


def test_lgamma_heat_mode_matches_closed_form():
    u = heat_mode_trajectory(256, 200)
    a = isotropic_coeff(u.grid)
    lhs, rhs, addends = lgamma_gradient_bound(u, None, None, a, gamma=2.0)
    closed = math.sqrt((1.0 - math.exp(-8.0 * math.pi**2 * 0.05)) / 4.0)
    assert lhs == pytest.approx(closed, rel=1e-3)
    assert math.isinf(rhs)
    assert addends == {}


def test_lgamma_budget_holds_on_smooth_run(smooth_quadratic_run):
    sol = smooth_quadratic_run
    ham = sol.problem.ham
    lhs, rhs, addends = lgamma_gradient_bound(
        sol.u, ham, sol.problem.f, sol.problem.a
    )
    assert 0.0 < lhs <= rhs
    assert set(addends) == {"f_term", "endpoint_term", "da_term", "constant_term"}
    assert addends["da_term"] == 0.0
    assert all(v >= 0.0 for v in addends.values())


def test_lgamma_zero_trajectory_has_zero_lhs():
    g = TorusGrid(d=1, n_per_axis=32)
    tt = TimeGrid(0.0, 0.1, 4)
    u = Trajectory(g, tt, np.zeros((5,) + g.shape))
    lhs, _, _ = lgamma_gradient_bound(u, None, None, isotropic_coeff(g), gamma=2.0)
    assert lhs == 0.0


def dirac_sweep_for(sol, centers=(0.25, 0.5, 0.75)):
    grid, time, ham = sol.u.grid, sol.u.time, sol.problem.ham
    frames = np.empty((time.n_steps + 1,) + grid.shape + (grid.d,))
    for k in range(time.n_steps + 1):
        du = gradient_central(ScalarField(grid, sol.u.frames[k]))
        frames[k] = -ham.eval_DpH_field(du).values
    drift = VectorTrajectory(grid, time, frames)
    sweep = []
    for c in centers:
        fp = FPProblem(
            grid=grid,
            time=time,
            a=sol.problem.a,
            drift=drift,
            rho_tau=DiracApprox((c,), 1).field(grid),
            flux="centered",
        )
        sweep.append(solve_backward(fp))
    return sweep


def test_stimalip_terms_constant_coefficients(smooth_quadratic_run):
    sol = smooth_quadratic_run
    sweep = dirac_sweep_for(sol)
    cfg = LipBoundConfig(t1=0.05)
    rep = stimalip_bound_terms(
        sol.u, sweep, sol.problem.ham, sol.problem.f, sol.problem.a, cfg
    )
    # ramp is fully open at the horizon, so lhs is the terminal seminorm
    assert rep["eta_at_tau"] == 1.0
    assert rep["lhs"] == rep["lipschitz_terminal"]
    assert rep["lipschitz_terminal"] > 0.0
    # constant diffusion kills both coefficient-derivative contributions
    assert rep["da_sup"] == 0.0
    assert rep["addends"]["a_term"] == 0.0
    assert rep["sup_eta_prime"] == 60.0
    assert rep["rhs_main"] == pytest.approx(61.0, abs=1e-12)
    assert rep["empirical_constant"] == pytest.approx(rep["lhs"] / 61.0, rel=1e-13)
    assert rep["m_exponent"] == 3.0
    assert rep["q"] == 6.0
    assert rep["q_prime"] == pytest.approx(1.2)
    assert rep["n_members"] == len(rep["members"]) == 3
    for member in rep["members"]:
        assert member["energy"] > 0.0
        assert member["grad_rho_norm"] > 0.0
        assert member["dxl_term"] > 0.0
    assert rep["addends"]["dxl_term"] == max(m["dxl_term"] for m in rep["members"])
    assert rep["C_H"] > 0.0 and rep["C_L"] > 0.0


def test_stimalip_requires_nonempty_sweep(smooth_quadratic_run):
    sol = smooth_quadratic_run
    with pytest.raises(MissingSweep):
        stimalip_bound_terms(
            sol.u, [], sol.problem.ham, sol.problem.f, sol.problem.a,
            LipBoundConfig(t1=0.05),
        )


def test_interpolation_constant_is_equality():
    g = TorusGrid(d=2, n_per_axis=16)
    tt = TimeGrid(0.0, 0.3, 10)
    ones = Trajectory(g, tt, np.ones((11,) + g.shape))
    chk = interpolation_step(ones, 2.0, 2)
    assert chk.m_exponent == 4.0
    assert chk.theta == 0.5
    assert not chk.trivial_branch
    assert chk.lhs == pytest.approx(chk.rhs, rel=1e-12)
    assert chk.holds


def test_interpolation_holds_on_smooth_field():
    g = TorusGrid(d=2, n_per_axis=16)
    tt = TimeGrid(0.0, 0.3, 10)
    x, y = g.coords()
    frames = np.array(
        [
            1.0 + 0.5 * np.sin(2 * np.pi * x + t) * np.cos(2 * np.pi * y)
            for t in tt.times()
        ]
    )
    chk = interpolation_step(Trajectory(g, tt, frames), 2.0, 2)
    assert chk.holds
    assert chk.lhs < chk.rhs


def test_interpolation_trivial_branch():
    g = TorusGrid(d=2, n_per_axis=8)
    tt = TimeGrid(0.0, 0.1, 2)
    u = Trajectory(g, tt, np.ones((3,) + g.shape))
    chk = interpolation_step(u, 1.2, 2)
    assert chk.trivial_branch
    assert chk.m_exponent < 1.2
    assert chk.theta == 1.0
    assert chk.holds


def test_interpolation_rejects_bad_gamma():
    g = TorusGrid(d=1, n_per_axis=8)
    tt = TimeGrid(0.0, 0.1, 2)
    u = Trajectory(g, tt, np.ones((3,) + g.shape))
    with pytest.raises(BadExponent):
        interpolation_step(u, 1.0, 1)


def bernstein_heat_report(n):
    u = heat_mode_trajectory(n, 2 * n)
    rho = Trajectory(u.grid, u.time, np.ones((u.time.n_steps + 1,) + u.grid.shape))
    return bernstein_audit(u, rho, None, None, isotropic_coeff(u.grid))


def test_bernstein_residual_refines_on_exact_mode():
    reports = [bernstein_heat_report(n) for n in (32, 64)]
    vals = [rep["z_residual_sup"] for rep in reports]
    slope = math.log(vals[0] / vals[1]) / math.log(2.0)
    assert slope >= 1.5
    for rep in reports:
        # with a = I the quadratic-form comparison is an algebraic identity
        assert rep["ellipticity_gap_min"] == 0.0
        assert rep["lambda"] == 1.0
        assert rep["integrated_lhs"] <= rep["integrated_rhs"]
        assert rep["integrated_slack"] > 0.0
        assert rep["addends"]["aderiv_term"] == 0.0


def test_bernstein_variable_coefficient_gap_nonnegative():
    u = heat_mode_trajectory(32, 8, t1=0.01)
    g = u.grid
    x = g.coords()[0]
    a = isotropic_coeff(g, 1.0 + 0.5 * np.sin(2 * np.pi * x))
    rho = Trajectory(g, u.time, np.ones((u.time.n_steps + 1,) + g.shape))
    rep = bernstein_audit(u, rho, None, None, a)
    assert rep["lambda"] == pytest.approx(0.5)
    assert rep["ellipticity_gap_min"] >= 0.0
    assert rep["addends"]["aderiv_term"] > 0.0


def test_bernstein_rejects_spiky_data():
    g = TorusGrid(d=1, n_per_axis=128)
    tt = TimeGrid(0.0, 0.01, 2)
    frames = np.zeros((3,) + g.shape)
    frames[:, 40] = 2.0
    rho = Trajectory(g, tt, np.ones((3,) + g.shape))
    with pytest.raises(RoughData):
        bernstein_audit(Trajectory(g, tt, frames), rho, None, None,
                        isotropic_coeff(g))


def test_gate_growth_condition_on_source_exponent():
    gate = exponent_gate(2.0, 2, 5.0, P=4.0, Q=4.0)
    assert gate.thm1_f_condition
    assert gate.gamma_prime == 2.0
    # steeper growth pushes the requirement to q >= 12
    assert not exponent_gate(4.0, 2, 5.0, P=4.0, Q=4.0).thm1_f_condition
    assert exponent_gate(4.0, 2, 12.0, P=4.0, Q=4.0).thm1_f_condition


def test_gate_parabolic_pair_condition():
    assert exponent_gate(2.0, 2, 5.0, P=4.0, Q=4.0).aronson_serrin
    assert not exponent_gate(2.0, 2, 5.0, P=2.0, Q=2.0).aronson_serrin
    # boundary pair satisfies the inequality with equality
    assert exponent_gate(2.0, 2, 5.0, P=2.0, Q=float("inf")).aronson_serrin


def test_gate_apriori_condition_strict():
    assert exponent_gate(3.0, 2, 5.0, P=4.0, Q=4.0).thm3_apriori_condition
    assert not exponent_gate(3.0, 2, 4.0, P=4.0, Q=4.0).thm3_apriori_condition


def test_threshold_branches_meet_at_transition():
    assert thm3_threshold(3.0, 2) == 4.0
    # above the transition the d+2 branch is active exactly
    assert thm3_threshold(3.5, 2) == 4.0
    # below it the conjugate branch drops under d+2
    assert thm3_threshold(2.0, 2) == pytest.approx(2.0)
    assert abs(thm3_threshold(3.0 - 1e-9, 2) - 4.0) < 1e-6


def test_embedding_exponent_values():
    assert embedding_exponent(2.0, 2) == pytest.approx(4.0)
    assert math.isinf(embedding_exponent(4.0, 2))
    assert embedding_exponent(1.0, 2) == pytest.approx(4.0 / 3.0)
    with pytest.raises(BadExponent):
        embedding_exponent(0.0, 2)


def test_gate_guards():
    with pytest.raises(BadExponent):
        exponent_gate(1.0, 2, 5.0, P=4.0, Q=4.0)
    with pytest.raises(BadExponent):
        exponent_gate(2.0, 0, 5.0, P=4.0, Q=4.0)
    with pytest.raises(BadExponent):
        exponent_gate(2.0, 2, 0.5, P=4.0, Q=4.0)


def test_gate_derived_exponents():
    gate = exponent_gate(2.0, 2, 5.0, P=4.0, Q=4.0)
    assert gate.m_exponent == 4.0
    assert gate.r_prime == pytest.approx(1.8)
    assert gate.embedding_p is None
    with_sigma = exponent_gate(2.0, 2, 5.0, P=4.0, Q=4.0, sigma=2.0)
    assert with_sigma.embedding_p == pytest.approx(4.0)
