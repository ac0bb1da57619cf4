import numpy as np
import pytest

from hjlab.grid import (
    CoeffField,
    ScalarField,
    TimeGrid,
    TorusGrid,
    VectorField,
    isotropic_coeff,
)


@pytest.fixture
def grid1d():
    return TorusGrid(d=1, n_per_axis=64)


@pytest.fixture
def grid2d():
    return TorusGrid(d=2, n_per_axis=32)


def sine_field(grid, k=1):
    x = grid.coords()[0]
    return ScalarField(grid, np.sin(2.0 * np.pi * k * x))


def fit_slope(xs, ys):
    """Least-squares slope of log ys against log xs."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
