"""Model Hamiltonian: evaluations, conjugate, growth certificates."""

import math
import warnings

import numpy as np
import pytest

from hjlab.errors import BadGamma, InsufficientSamples, SingularGradientWarning, ValidationError
from hjlab.grid import ScalarField, TorusGrid, VectorField
from hjlab.hamiltonian import (
    GenericHamiltonian,
    PowerHamiltonian,
    legendre_numeric,
)


def make_ham(grid, gamma, h=1.0, b=(0.0, 0.0)):
    hf = ScalarField.constant(grid, h)
    bf = VectorField.constant(grid, b[: grid.d])
    return PowerHamiltonian(grid, gamma, hf, bf)


@pytest.fixture
def g2():
    return TorusGrid(d=2, n_per_axis=16)


def test_constructor_guards(g2):
    with pytest.raises(BadGamma):
        make_ham(g2, 1.0)
    with pytest.raises(ValidationError):
        make_ham(g2, 2.0, h=0.0)


def test_eval_H_values(g2):
    ham = make_ham(g2, 2.0)
    assert ham.shift == 0.0
    assert ham.eval_H(np.array([1.0, 0.0]))[0, 0] == pytest.approx(1.0)

    ham3 = make_ham(g2, 3.0)
    assert ham3.eval_H(np.array([2.0, 0.0]))[0, 0] == pytest.approx(8.0)


def test_eval_H_with_drift_includes_documented_shift(g2):
    # raw value 2|p|^2 + b.p = 5 at p=(1,1); the nonnegativity shift is the
    # conjugate of the drift part, here 1/4 * (1/2) * |b|^2 = 0.125
    ham = make_ham(g2, 2.0, h=2.0, b=(1.0, 0.0))
    assert ham.shift == pytest.approx(0.125)
    val = ham.eval_H(np.array([1.0, 1.0]))[0, 0]
    assert val - ham.shift == pytest.approx(5.0)
    # shifted H is nonnegative at its minimizer p = -b/(2h) = (-1/4, 0)
    assert ham.eval_H(np.array([-0.25, 0.0]))[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_eval_DpH_values(g2):
    assert np.allclose(
        make_ham(g2, 2.0).eval_DpH(np.array([3.0, 0.0]))[0, 0], [6.0, 0.0]
    )
    out = make_ham(g2, 3.0).eval_DpH(np.array([1.0, 1.0]))[0, 0]
    assert np.allclose(out, 3.0 * math.sqrt(2.0) * np.ones(2))
    drift = make_ham(g2, 2.0, b=(0.0, 1.0)).eval_DpH(np.zeros(2))[0, 0]
    assert np.allclose(drift, [0.0, 1.0])


def test_eval_DpH_singular_warns_and_returns_drift(g2):
    ham = make_ham(g2, 1.5, b=(0.25, 0.0))
    with pytest.warns(SingularGradientWarning):
        out = ham.eval_DpH(np.zeros(2))
    assert np.allclose(out[0, 0], [0.25, 0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ham.eval_DpH(np.array([1.0, 0.0]))  # away from 0: no warning


def test_eval_DxH_constant_coefficients_vanishes(g2):
    ham = make_ham(g2, 2.0, h=2.0, b=(0.5, -0.5))
    out = ham.eval_DxH(np.array([1.0, 2.0]))
    assert np.max(np.abs(out)) == 0.0


def test_eval_DxH_h_variation():
    g = TorusGrid(d=2, n_per_axis=256)
    x = g.coords()[0]
    hf = ScalarField(g, 1.0 + 0.5 * np.sin(2 * np.pi * x))
    ham = PowerHamiltonian(g, 2.0, hf, VectorField.constant(g, (0.0, 0.0)))
    out = ham.eval_DxH(np.array([1.0, 0.0]))
    # at x1 = 0: Dh = (pi cos 0, 0) = (pi, 0) times |p|^2 = 1
    assert out[0, 0, 0] == pytest.approx(np.pi, abs=1e-3)
    assert out[0, 0, 1] == pytest.approx(0.0, abs=1e-12)


def test_eval_DxH_b_variation():
    g = TorusGrid(d=2, n_per_axis=256)
    x = g.coords()[0]
    bf = VectorField(g, np.stack([np.sin(2 * np.pi * x), np.zeros(g.shape)], axis=-1))
    ham = PowerHamiltonian(g, 2.0, ScalarField.constant(g, 1.0), bf)
    out = ham.eval_DxH(np.array([1.0, 0.0]))
    # Db^T p at x1 = 0: row (d/dx1 b1) p1 = 2 pi
    assert out[0, 0, 0] == pytest.approx(2 * np.pi, abs=1e-3)


def test_legendre_quadratic(g2):
    lag = make_ham(g2, 2.0).legendre(np.array([2.0, 0.0]))
    assert lag.value[0, 0] == pytest.approx(1.0)
    assert np.allclose(lag.maximizer[0, 0], [1.0, 0.0])


def test_legendre_cubic_closed_form_vs_numeric(g2):
    ham = make_ham(g2, 3.0)
    lag = ham.legendre(np.array([1.0, 0.0]))
    closed = 2.0 * 3.0 ** (-1.5)
    assert lag.value[0, 0] == pytest.approx(closed, rel=1e-12)
    numeric, _ = legendre_numeric(
        lambda p: np.sum(p**2, axis=-1) ** 1.5, np.array([1.0, 0.0]), 5.0, d=2
    )
    assert numeric == pytest.approx(closed, abs=1e-5)


def test_legendre_at_drift_gives_minus_shift(g2):
    ham = make_ham(g2, 2.5, h=1.5, b=(0.75, 0.0))
    lag = ham.legendre(np.array([0.75, 0.0]))
    assert lag.value[0, 0] == pytest.approx(-ham.shift)
    assert np.allclose(lag.maximizer[0, 0], 0.0)


def test_legendre_maximizer_first_order_condition(g2):
    rng = np.random.default_rng(5)
    ham = make_ham(g2, 3.0, h=1.25, b=(0.3, -0.1))
    for _ in range(10):
        nu = rng.uniform(-3.0, 3.0, size=2)
        lag = ham.legendre(nu)
        back = ham.eval_DpH(lag.maximizer[0, 0])[0, 0]
        assert np.allclose(back, nu, atol=1e-8)


@pytest.mark.parametrize(
    "gamma,p,h",
    [
        (2.0, [1.0, 0.0], 1.0),
        (1.5, [0.5, 0.5], 1.0),
        (4.0, [2.0, -1.0], 3.0),
    ],
)
def test_conjugacy_residual(g2, gamma, p, h):
    ham = make_ham(g2, gamma, h=h)
    res = ham.conjugacy_residual(np.array(p))
    assert float(np.max(res)) <= 1e-10


def test_euler_homogeneity_identity(g2):
    # b = 0: DpH.p - H + shift = (gamma-1) h |p|^gamma exactly
    rng = np.random.default_rng(9)
    for gamma in (1.5, 2.0, 3.0):
        ham = make_ham(g2, gamma, h=1.3)
        p = rng.uniform(-4.0, 4.0, size=(20, 1, 1, 2))
        H = ham.eval_H(p)
        dph = ham.eval_DpH(p)
        lhs = np.sum(dph * p, axis=-1) - H + ham.shift
        rhs = (gamma - 1.0) * 1.3 * np.sum(p**2, axis=-1) ** (gamma / 2.0)
        assert np.allclose(lhs, rhs, atol=1e-10)


def test_gamma_prime_arithmetic(g2):
    for gamma in (1.2, 1.75, 2.0, 3.0, 4.0):
        gp = make_ham(g2, gamma).gamma_prime
        assert 1.0 / gamma + 1.0 / gp == pytest.approx(1.0, abs=1e-14)


def test_certificate_quadratic(g2):
    cert = make_ham(g2, 2.0).certify_bounds(n_samples=2048, sample_radius=10.0)
    assert 1.0 <= cert.C_H <= 2.0
    assert cert.gamma_prime == pytest.approx(2.0)
    assert not cert.drift_dominated
    with pytest.raises(InsufficientSamples):
        make_ham(g2, 2.0).certify_bounds(n_samples=100)


def test_certificate_lagrangian_bracket(g2):
    ham = make_ham(g2, 3.0, h=1.1, b=(0.2, 0.0))
    cert = ham.certify_bounds(n_samples=2048, sample_radius=6.0)
    rng = np.random.default_rng(2)
    nu = rng.uniform(-6.0, 6.0, size=(200, 1, 1, 2))
    lag = ham.legendre(nu).value
    m = np.sqrt(np.sum(nu**2, axis=-1))
    gp = cert.gamma_prime
    assert np.all(lag >= m**gp / cert.C_L - cert.C_L - 1e-9)
    assert np.all(lag <= cert.C_L * m**gp + 1e-9)


def test_certificate_flags_large_drift(g2):
    ham = make_ham(g2, 2.0, b=(1000.0, 0.0))
    cert = ham.certify_bounds(n_samples=2048, sample_radius=10.0)
    base = make_ham(g2, 2.0).certify_bounds(n_samples=2048, sample_radius=10.0)
    assert cert.C_H > base.C_H
    assert cert.drift_dominated


def test_generic_hamiltonian_reconjugation(g2):
    # numeric conjugate of the quadratic recovers the closed form
    gen = GenericHamiltonian(
        g2, lambda xs, p: np.sum(p**2, axis=-1), p_radius=10.0
    )
    lag = gen.legendre_at((0, 0), np.array([2.0, 0.0]))
    assert float(lag.value) == pytest.approx(1.0, abs=1e-5)
    du = VectorField.constant(g2, (1.0, 1.0))
    assert np.allclose(gen.eval_H_field(du).values, 2.0)
