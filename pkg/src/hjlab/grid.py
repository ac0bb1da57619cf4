"""Uniform periodic grids on the unit torus and the discrete calculus on them.

Cells are indexed i = 0 .. n-1 per axis with spacing h = 1/n; the stored
value of a field lives at the cell center x_i = i*h and the cell covers
[x_i - h/2, x_i + h/2) modulo 1.  All quadrature is the midpoint rule

    integral f dx  ~  h^d * sum_cells f,

which is exact for cellwise-constant fields and spectrally accurate for
smooth periodic ones.  Difference operators wrap periodically via np.roll,
so no ghost layers are ever allocated.

Supported dimensions are d = 1 and d = 2.  Spatial arrays have shape (n,)
or (n, n) with axis 0 <-> x1 and axis 1 <-> x2; vector fields append a
trailing component axis and coefficient fields a trailing (d, d) block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadExponent,
    DimensionUnsupported,
    GridMismatch,
    NotElliptic,
    ValidationError,
)

__all__ = [
    "TorusGrid",
    "TimeGrid",
    "ScalarField",
    "VectorField",
    "CoeffField",
    "Trajectory",
    "gradient_central",
    "forward_quotients",
    "backward_quotients",
    "elliptic_apply",
    "ellipticity_certificate",
    "lp_space_norm",
    "lq_spacetime_norm",
    "isotropic_coeff",
    "fit_loglog_slope",
]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the flat torus [0,1)^d.

    ``h`` is derived from the cell count; index arithmetic only ever uses
    ``n_per_axis`` so the relation h * n_per_axis = 1 is exact by
    construction.
    """

    d: int
    n_per_axis: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise DimensionUnsupported(f"d={self.d}, need 1 or 2")
        if self.n_per_axis < 8:
            raise ValidationError(f"n_per_axis={self.n_per_axis} < 8")

    @property
    def h(self) -> float:
        return 1.0 / self.n_per_axis

    @property
    def shape(self) -> tuple:
        return (self.n_per_axis,) * self.d

    @property
    def n_cells(self) -> int:
        return self.n_per_axis**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.n_per_axis) / self.n_per_axis

    def coords(self) -> list:
        """Cell-center coordinate arrays, meshed for d = 2."""
        x = self.axis_coords()
        if self.d == 1:
            return [x]
        return list(np.meshgrid(x, x, indexing="ij"))

    def centered_coords(self) -> list:
        """Coordinates mapped to the symmetric representative in [-1/2, 1/2)."""
        return [c - np.round(c) for c in self.coords()]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [t0, t1] into n_steps steps."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not (self.t1 > self.t0):
            raise ValidationError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


def _check_values(grid: TorusGrid, values: np.ndarray, trailing: tuple) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape + trailing:
        raise GridMismatch(
            f"values shape {values.shape} incompatible with grid shape "
            f"{grid.shape + trailing}"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError("field contains nan/inf")
    values = values.copy()
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class ScalarField:
    """Cell-centered scalar samples; immutable after construction."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, ()))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "ScalarField":
        return cls(grid, fn(*grid.coords()) * np.ones(grid.shape))

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))


@dataclass(frozen=True)
class VectorField:
    """Cell-centered vector samples with trailing component axis."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_values(self.grid, self.values, (self.grid.d,))
        )

    @classmethod
    def from_functions(cls, grid: TorusGrid, fns) -> "VectorField":
        comps = [fn(*grid.coords()) * np.ones(grid.shape) for fn in fns]
        return cls(grid, np.stack(comps, axis=-1))

    @classmethod
    def constant(cls, grid: TorusGrid, vec) -> "VectorField":
        vec = np.asarray(vec, dtype=float)
        return cls(grid, np.broadcast_to(vec, grid.shape + (grid.d,)).copy())

    def component(self, i: int) -> np.ndarray:
        return self.values[..., i]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=-1))


@dataclass(frozen=True)
class CoeffField:
    """Symmetric (d x d) coefficient block per cell."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        d = self.grid.d
        vals = _check_values(self.grid, self.values, (d, d))
        if not np.allclose(vals, np.swapaxes(vals, -1, -2), atol=1e-14):
            raise ValidationError("coefficient blocks must be symmetric")
        object.__setattr__(self, "values", vals)

    def is_constant(self) -> bool:
        flat = self.values.reshape(-1, self.grid.d, self.grid.d)
        return bool(np.all(flat == flat[0]))

    def constant_matrix(self) -> np.ndarray:
        flat = self.values.reshape(-1, self.grid.d, self.grid.d)
        return flat[0].copy()


def isotropic_coeff(grid: TorusGrid, scale=1.0) -> CoeffField:
    """a(x) = s(x) * I, with s a constant or a cellwise array."""
    s = np.asarray(scale, dtype=float) * np.ones(grid.shape)
    eye = np.eye(grid.d)
    return CoeffField(grid, s[..., None, None] * eye)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed stack of scalar fields on one grid.

    frames has shape (n_steps + 1,) + grid.shape, frame k at time
    time.t0 + k * dt.
    """

    grid: TorusGrid
    time: TimeGrid
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        want = (self.time.n_steps + 1,) + self.grid.shape
        if frames.shape != want:
            raise GridMismatch(f"frames shape {frames.shape}, expected {want}")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("trajectory contains nan/inf")
        frames = frames.copy()
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.time.n_steps + 1

    def field_at(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.frames[k])

    def terminal(self) -> ScalarField:
        return self.field_at(self.time.n_steps)


# ---------------------------------------------------------------------------
# difference operators


def _roll(values: np.ndarray, shift: int, axis: int) -> np.ndarray:
    # np.roll(v, -1)[i] = v[i+1]: negative shift looks forward.
    return np.roll(values, shift, axis=axis)


def forward_quotients(f: ScalarField) -> np.ndarray:
    """One-sided quotients (f(x + h e_i) - f(x)) / h, shape (*grid, d)."""
    g = f.grid
    out = np.empty(g.shape + (g.d,))
    for ax in range(g.d):
        out[..., ax] = (_roll(f.values, -1, ax) - f.values) * g.n_per_axis
    return out


def backward_quotients(f: ScalarField) -> np.ndarray:
    """One-sided quotients (f(x) - f(x - h e_i)) / h, shape (*grid, d)."""
    g = f.grid
    out = np.empty(g.shape + (g.d,))
    for ax in range(g.d):
        out[..., ax] = (f.values - _roll(f.values, 1, ax)) * g.n_per_axis
    return out


def gradient_central(f: ScalarField) -> VectorField:
    """Second-order centered gradient."""
    g = f.grid
    out = np.empty(g.shape + (g.d,))
    for ax in range(g.d):
        out[..., ax] = (_roll(f.values, -1, ax) - _roll(f.values, 1, ax)) * (
            0.5 * g.n_per_axis
        )
    return VectorField(g, out)


def second_difference(values: np.ndarray, axis: int, n: int) -> np.ndarray:
    return (_roll(values, -1, axis) - 2.0 * values + _roll(values, 1, axis)) * (n * n)


def cross_difference(values: np.ndarray, ax1: int, ax2: int, n: int) -> np.ndarray:
    """Four-point centered mixed difference, O(h^2)."""
    pp = _roll(_roll(values, -1, ax1), -1, ax2)
    pm = _roll(_roll(values, -1, ax1), 1, ax2)
    mp = _roll(_roll(values, 1, ax1), -1, ax2)
    mm = _roll(_roll(values, 1, ax1), 1, ax2)
    return (pp - pm - mp + mm) * (0.25 * n * n)


def hessian_stencil(f: ScalarField) -> np.ndarray:
    """Discrete Hessian, shape (*grid, d, d); symmetric by construction."""
    g = f.grid
    n = g.n_per_axis
    out = np.empty(g.shape + (g.d, g.d))
    for i in range(g.d):
        out[..., i, i] = second_difference(f.values, i, n)
    if g.d == 2:
        cross = cross_difference(f.values, 0, 1, n)
        out[..., 0, 1] = cross
        out[..., 1, 0] = cross
    return out


def elliptic_apply(a: CoeffField, f: ScalarField) -> ScalarField:
    """Non-divergence form sum_ij a_ij(x) d_ij f with centered stencils."""
    if a.grid != f.grid:
        raise GridMismatch("coefficient and field grids differ")
    g = f.grid
    n = g.n_per_axis
    out = np.zeros(g.shape)
    for i in range(g.d):
        out += a.values[..., i, i] * second_difference(f.values, i, n)
    if g.d == 2:
        out += 2.0 * a.values[..., 0, 1] * cross_difference(f.values, 0, 1, n)
    return ScalarField(g, out)


def ellipticity_certificate(a: CoeffField) -> float:
    """Smallest eigenvalue of a(x) over all cells; raises NotElliptic if <= 0."""
    if a.grid.d == 1:
        lam = float(np.min(a.values[..., 0, 0]))
    else:
        a11 = a.values[..., 0, 0]
        a22 = a.values[..., 1, 1]
        a12 = a.values[..., 0, 1]
        mean = 0.5 * (a11 + a22)
        rad = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12**2)
        lam = float(np.min(mean - rad))
    if lam <= 0.0:
        raise NotElliptic(f"minimal eigenvalue {lam:.3e} <= 0")
    return lam


# ---------------------------------------------------------------------------
# norms


def lp_space_norm(f: ScalarField | np.ndarray, p: float, grid: TorusGrid = None) -> float:
    """Midpoint-rule L^p norm on the torus; p = inf is the max norm."""
    if isinstance(f, ScalarField):
        values, grid = f.values, f.grid
    else:
        if grid is None:
            raise ValidationError("bare array needs an explicit grid")
        values = np.asarray(f)
    if p == math.inf or p == np.inf:
        return float(np.max(np.abs(values)))
    if p < 1:
        raise BadExponent(f"p={p} < 1")
    return float((grid.cell_volume * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def _trapezoid_weights(time: TimeGrid) -> np.ndarray:
    w = np.full(time.n_steps + 1, time.dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def lq_spacetime_norm(traj: Trajectory, q: float) -> float:
    """L^q norm over the space-time cylinder.

    Midpoint rule in space, trapezoid weights in time:
    (sum_k w_k ||f(t_k)||_q^q)^(1/q), with q = inf the sup over frames.
    """
    if q == math.inf or q == np.inf:
        return float(np.max(np.abs(traj.frames)))
    if q < 1:
        raise BadExponent(f"q={q} < 1")
    w = _trapezoid_weights(traj.time)
    slice_pows = traj.grid.cell_volume * np.sum(
        np.abs(traj.frames) ** q, axis=tuple(range(1, traj.frames.ndim))
    )
    return float(np.sum(w * slice_pows) ** (1.0 / q))


def fit_loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x).

    Used throughout for refinement and scaling fits; inputs must be
    positive.  Returns the fitted exponent s in y ~ C x^s.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or xs.size != ys.size:
        raise ValidationError("need at least two paired samples for a slope fit")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValidationError("slope fit requires positive samples")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
