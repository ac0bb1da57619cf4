"""Grid primitives: difference operators, coefficient certificates, norms."""

import math

import numpy as np
import pytest

from hjlab.errors import (
    BadExponent,
    DimensionUnsupported,
    NotElliptic,
    ValidationError,
)
from hjlab.grid import (
    CoeffField,
    ScalarField,
    TimeGrid,
    TorusGrid,
    Trajectory,
    backward_quotients,
    elliptic_apply,
    ellipticity_certificate,
    fit_loglog_slope,
    forward_quotients,
    gradient_central,
    isotropic_coeff,
    lp_space_norm,
    lq_spacetime_norm,
)

from conftest import fit_slope


def test_grid_constructor_limits():
    with pytest.raises(DimensionUnsupported):
        TorusGrid(d=3, n_per_axis=16)
    with pytest.raises(ValidationError):
        TorusGrid(d=1, n_per_axis=4)
    g = TorusGrid(d=2, n_per_axis=16)
    assert g.h * g.n_per_axis == 1.0
    assert g.shape == (16, 16)
    assert g.cell_volume == pytest.approx(1.0 / 256.0)


def test_time_grid_dt():
    tt = TimeGrid(0.0, 0.5, 100)
    assert tt.dt == pytest.approx(0.005)
    assert tt.times()[0] == 0.0
    assert tt.times()[-1] == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        TimeGrid(0.5, 0.5, 10)


def test_gradient_central_constant_is_exactly_zero(grid1d, grid2d):
    for g in (grid1d, grid2d):
        grad = gradient_central(ScalarField.constant(g, 3.7))
        assert np.all(grad.values == 0.0)


def test_gradient_central_sine():
    g = TorusGrid(d=1, n_per_axis=256)
    x = g.coords()[0]
    grad = gradient_central(ScalarField(g, np.sin(2 * np.pi * x)))
    exact = 2 * np.pi * np.cos(2 * np.pi * x)
    assert np.max(np.abs(grad.values[..., 0] - exact)) < 1e-3


def test_gradient_central_periodized_hat():
    # hat |x - 1/2| has kinks at 1/2 and at the wrap; the centered quotient
    # averages the one-sided slopes to 0 there and is exact elsewhere
    g = TorusGrid(d=1, n_per_axis=64)
    x = g.coords()[0]
    grad = gradient_central(ScalarField(g, np.abs(x - 0.5)))
    interior = (np.abs(x - 0.5) > 2 * g.h) & (np.minimum(x, 1 - x) > 2 * g.h)
    assert np.allclose(np.abs(grad.values[interior, 0]), 1.0)
    kink = np.argmin(np.abs(x - 0.5))
    assert grad.values[kink, 0] == pytest.approx(0.0, abs=1e-12)


def test_one_sided_quotients_spike():
    g = TorusGrid(d=1, n_per_axis=64)
    values = np.zeros(64)
    values[10] = 1.0
    f = ScalarField(g, values)
    fwd = forward_quotients(f)
    bwd = backward_quotients(f)
    assert np.max(fwd.values if hasattr(fwd, "values") else fwd) == pytest.approx(64.0)
    assert np.min(bwd.values if hasattr(bwd, "values") else bwd) == pytest.approx(-64.0)


def test_central_gradient_bracketed_by_quotients():
    rng = np.random.default_rng(7)
    g = TorusGrid(d=1, n_per_axis=64)
    f = ScalarField(g, rng.standard_normal(64))
    fwd = np.asarray(forward_quotients(f))
    bwd = np.asarray(backward_quotients(f))
    mid = gradient_central(f).values
    lo = np.minimum(fwd, bwd)
    hi = np.maximum(fwd, bwd)
    assert np.all(mid >= lo - 1e-12)
    assert np.all(mid <= hi + 1e-12)


def test_gradient_linearity():
    rng = np.random.default_rng(3)
    g = TorusGrid(d=2, n_per_axis=16)
    a = rng.standard_normal(g.shape)
    b = rng.standard_normal(g.shape)
    ga = gradient_central(ScalarField(g, a)).values
    gb = gradient_central(ScalarField(g, b)).values
    gab = gradient_central(ScalarField(g, 2.0 * a - 0.5 * b)).values
    assert np.allclose(gab, 2.0 * ga - 0.5 * gb, atol=1e-13)


def test_gradient_refinement_slope():
    errs, hs = [], []
    for n in (32, 64, 128, 256):
        g = TorusGrid(d=1, n_per_axis=n)
        x = g.coords()[0]
        grad = gradient_central(ScalarField(g, np.sin(2 * np.pi * x)))
        errs.append(np.max(np.abs(grad.values[..., 0] - 2 * np.pi * np.cos(2 * np.pi * x))))
        hs.append(g.h)
    assert fit_slope(hs, errs) >= 1.9


def test_elliptic_apply_identity_eigenfunction():
    g = TorusGrid(d=1, n_per_axis=128)
    x = g.coords()[0]
    f = ScalarField(g, np.sin(2 * np.pi * x))
    lap = elliptic_apply(isotropic_coeff(g), f)
    # discrete symbol -4 sin^2(pi h)/h^2 approaches -4 pi^2
    symbol = -4.0 * np.sin(np.pi * g.h) ** 2 / g.h**2
    assert np.allclose(lap.values, symbol * f.values, atol=1e-10)
    assert symbol == pytest.approx(-4 * np.pi**2, rel=1e-3)
    lap2 = elliptic_apply(isotropic_coeff(g, 2.0), f)
    assert np.allclose(lap2.values, 2.0 * lap.values)


def test_elliptic_apply_2d_product_slope():
    errs, hs = [], []
    for n in (16, 32, 64):
        g = TorusGrid(d=2, n_per_axis=n)
        x, y = g.coords()
        f = ScalarField(g, np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
        lap = elliptic_apply(isotropic_coeff(g), f)
        errs.append(np.max(np.abs(lap.values - (-8 * np.pi**2) * f.values)))
        hs.append(g.h)
    assert abs(fit_slope(hs, errs) - 2.0) < 0.1


def test_ellipticity_certificate_values():
    g = TorusGrid(d=2, n_per_axis=16)
    assert ellipticity_certificate(isotropic_coeff(g)) == pytest.approx(1.0)

    diag = np.zeros(g.shape + (2, 2))
    diag[..., 0, 0] = 2.0
    diag[..., 1, 1] = 0.5
    assert ellipticity_certificate(CoeffField(g, diag)) == pytest.approx(0.5)

    x = g.coords()[0]
    scale = 1.0 + 0.5 * np.sin(2 * np.pi * x)
    assert ellipticity_certificate(isotropic_coeff(g, scale)) == pytest.approx(0.5, rel=1e-3)

    with pytest.raises(NotElliptic):
        bad = np.zeros(g.shape + (2, 2))
        bad[..., 0, 0] = 1.0
        bad[..., 1, 1] = -1.0
        ellipticity_certificate(CoeffField(g, bad))


def test_coeff_field_requires_symmetry():
    g = TorusGrid(d=2, n_per_axis=16)
    skew = np.zeros(g.shape + (2, 2))
    skew[..., 0, 1] = 1.0
    with pytest.raises(ValidationError):
        CoeffField(g, skew)


def test_lp_space_norm_values():
    g = TorusGrid(d=1, n_per_axis=256)
    assert lp_space_norm(ScalarField.constant(g, 1.0), 3.0) == pytest.approx(1.0)
    assert lp_space_norm(ScalarField.constant(g, -2.5), 1.0) == pytest.approx(2.5)
    x = g.coords()[0]
    sin = ScalarField(g, np.sin(2 * np.pi * x))
    assert lp_space_norm(sin, 2.0) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-6)
    assert lp_space_norm(sin, math.inf) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(BadExponent):
        lp_space_norm(sin, 0.5)


def test_lp_norm_ordering_on_probability_measure():
    # |f| <= 1 so p -> ||f||_p is nondecreasing on the unit-volume torus
    rng = np.random.default_rng(11)
    g = TorusGrid(d=2, n_per_axis=16)
    f = ScalarField(g, rng.uniform(-1.0, 1.0, g.shape))
    ps = [1.0, 1.5, 2.0, 4.0, 8.0]
    norms = [lp_space_norm(f, p) for p in ps]
    assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:]))


def test_lq_spacetime_norm_values():
    g = TorusGrid(d=1, n_per_axis=128)
    tt = TimeGrid(0.0, 1.0, 128)
    ones = Trajectory(g, tt, np.ones((129, 128)))
    assert lq_spacetime_norm(ones, 1.0) == pytest.approx(1.0)

    # f(x,t) = t: trapezoid weights integrate the linear profile exactly
    ramp = Trajectory(g, tt, np.repeat(tt.times()[:, None], 128, axis=1))
    assert lq_spacetime_norm(ramp, 1.0) == pytest.approx(0.5)

    x = g.coords()[0]
    frames = np.exp(-tt.times())[:, None] * np.sin(2 * np.pi * x)[None, :]
    decay = Trajectory(g, tt, frames)
    closed = math.sqrt((1.0 - math.exp(-2.0)) / 4.0)
    assert lq_spacetime_norm(decay, 2.0) == pytest.approx(closed, abs=1e-4)
    with pytest.raises(BadExponent):
        lq_spacetime_norm(decay, 0.9)


def test_trajectory_shape_and_finiteness_guard():
    g = TorusGrid(d=1, n_per_axis=16)
    tt = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(Exception):
        Trajectory(g, tt, np.zeros((4, 16)))
    bad = np.zeros((5, 16))
    bad[2, 3] = np.nan
    with pytest.raises(ValidationError):
        Trajectory(g, tt, bad)


def test_fit_loglog_slope_guards():
    assert fit_loglog_slope([1.0, 2.0, 4.0], [1.0, 4.0, 16.0]) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        fit_loglog_slope([1.0], [1.0])
    with pytest.raises(ValidationError):
        fit_loglog_slope([1.0, 2.0], [0.0, 1.0])
