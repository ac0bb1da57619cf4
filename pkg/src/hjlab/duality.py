"""Duality functionals pairing a value trajectory with an adjoint density.

The central identity audited here: for u solving the forward equation and
rho the backward density with divergence drift v = D_pH(x, Du),

    <u(tau), rho_tau> = <u(s), rho(s)> + int_s^tau <f + L(x, D_pH(x,Du)), rho> dt.

Two assembly modes.  The quadrature mode evaluates the right side with
midpoint space / trapezoid time sums from the trajectories alone, so its
residual is a discretization quantity decaying under refinement.  When the
density came from the exact-transpose replay, the caller passes the stored
source pairing instead and the residual drops to round-off at any
resolution.

Every integrand that needs L avoids the power-law formulas: at the
maximizer nu = D_pH(x,p) the conjugate equals p . nu - H(x,p) identically,
which is cheaper and has no singular branch at p = 0.

Also here: the energy functional and gradient moments along the density,
space-time gradient norms of the density (with the integrability regime
flag), the circle Wasserstein-1 distance by the cumulative-function method,
the time-Holder exponent fit it feeds, and the assembled sup-norm bound
from a drift-free adjoint family.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    BadExponent,
    DimensionUnsupported,
    ExponentRangeWarning,
    GridMismatch,
    InsufficientSamples,
    ValidationError,
)
from .grid import (
    ScalarField,
    Trajectory,
    VectorField,
    _trapezoid_weights,
    fit_loglog_slope,
    gradient_central,
    lp_space_norm,
    lq_spacetime_norm,
)

__all__ = [
    "DualityReport",
    "HolderFit",
    "SupNormBound",
    "representation_residual",
    "transpose_report",
    "energy_functional",
    "gradient_moment",
    "grad_rho_norm",
    "grad_rho_regime",
    "fp_gradient_empirical_constant",
    "wasserstein1_1d",
    "holder_exponent_fit",
    "sup_norm_duality_bound",
]

_FLOOR = -1e-10


@dataclass
class DualityReport:
    """Both sides of the representation identity plus the companion functionals."""

    lhs: float
    rhs: float
    residual: float
    energy: float
    moments: dict
    grad_rho_norm: Optional[float] = None
    fitted_exponent: Optional[float] = None
    sweep_id: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.residual < 0.0:
            raise ValidationError("residual must be nonnegative")
        if self.energy < _FLOOR:
            raise ValidationError(f"energy {self.energy:.3e} below round-off floor")
        for beta, m in self.moments.items():
            if m < _FLOOR:
                raise ValidationError(f"moment beta={beta} is {m:.3e}, negative")

    def to_json(self) -> str:
        payload = {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "energy": self.energy,
            "moments": {str(k): v for k, v in self.moments.items()},
            "grad_rho_norm": self.grad_rho_norm,
            "fitted_exponent": self.fitted_exponent,
            "sweep_id": self.sweep_id,
            "metadata": self.metadata,
        }
        return json.dumps(payload, sort_keys=True)


def _align_window(u: Trajectory, rho: Trajectory) -> int:
    """Index of u's node matching rho's first frame; validates the overlap."""
    if u.grid != rho.grid:
        raise GridMismatch("value and density trajectories on different grids")
    dt = u.time.dt
    if abs(rho.time.dt - dt) > 1e-12 * max(dt, rho.time.dt):
        raise GridMismatch("value and density trajectories use different dt")
    k0f = (rho.time.t0 - u.time.t0) / dt
    k0 = int(round(k0f))
    if abs(k0f - k0) > 1e-9 or k0 < 0 or k0 + rho.time.n_steps > u.time.n_steps:
        raise GridMismatch("density window does not sit on the value time grid")
    return k0


def _f_frame(f, grid, k: int) -> np.ndarray:
    if f is None:
        return np.zeros(grid.shape)
    if isinstance(f, ScalarField):
        if f.grid != grid:
            raise GridMismatch("source term grid differs")
        return f.values
    if isinstance(f, Trajectory):
        if f.grid != grid:
            raise GridMismatch("source term grid differs")
        return f.frames[k]
    raise ValidationError(f"unsupported source term type {type(f).__name__}")


def _running_cost_frame(ham, u_frame: np.ndarray, grid) -> np.ndarray:
    """L(x, D_pH(x, Du)) from the conjugacy identity p.nu - H(x,p)."""
    if ham is None:
        return np.zeros(grid.shape)
    du = gradient_central(ScalarField(grid, u_frame))
    nu = ham.eval_DpH_field(du)
    h_of_p = ham.eval_H_field(du)
    return np.sum(du.values * nu.values, axis=-1) - h_of_p.values


def representation_residual(
    u: Trajectory,
    rho: Trajectory,
    ham,
    f=None,
    s: Optional[float] = None,
    tau: Optional[float] = None,
    transpose_pairing: Optional[float] = None,
    moment_betas=(),
    q_prime: Optional[float] = None,
    sweep_id: str = "",
) -> DualityReport:
    """Assemble both sides of the representation identity on rho's window.

    With ``transpose_pairing`` given (the source pairing accumulated by the
    exact-transpose replay) the right side uses it verbatim and the residual
    is a round-off quantity.  Otherwise the source integral is rebuilt by
    trapezoid quadrature from the trajectories, which converges under
    refinement but is not exact.
    """
    k0 = _align_window(u, rho)
    if s is not None and abs(s - rho.time.t0) > 1e-9:
        raise ValidationError(f"s={s} does not match the density window start")
    if tau is not None and abs(tau - rho.time.t1) > 1e-9:
        raise ValidationError(f"tau={tau} does not match the density window end")
    grid = u.grid
    cell = grid.cell_volume
    n_win = rho.time.n_steps

    lhs = cell * float(np.sum(u.frames[k0 + n_win] * rho.frames[n_win]))
    base = cell * float(np.sum(u.frames[k0] * rho.frames[0]))

    if transpose_pairing is not None:
        rhs = base + float(transpose_pairing)
    else:
        vals = np.empty(n_win + 1)
        for j in range(n_win + 1):
            run = _running_cost_frame(ham, u.frames[k0 + j], grid)
            src = _f_frame(f, grid, k0 + j)
            vals[j] = cell * float(np.sum((src + run) * rho.frames[j]))
        rhs = base + float(np.sum(_trapezoid_weights(rho.time) * vals))

    energy = energy_functional(u, rho, ham)
    moments = {float(b): gradient_moment(u, rho, float(b)) for b in moment_betas}
    gr = grad_rho_norm(rho, q_prime) if q_prime is not None else None
    metadata = {
        "d": grid.d,
        "n_per_axis": grid.n_per_axis,
        "n_steps_window": n_win,
        "dt": u.time.dt,
        "s": rho.time.t0,
        "tau": rho.time.t1,
        "mode": "transpose" if transpose_pairing is not None else "quadrature",
    }
    return DualityReport(
        lhs=lhs,
        rhs=rhs,
        residual=abs(lhs - rhs),
        energy=energy,
        moments=moments,
        grad_rho_norm=gr,
        sweep_id=sweep_id,
        metadata=metadata,
    )


def transpose_report(hj, fp, **kwargs) -> DualityReport:
    """representation_residual wired to an exact-transpose adjoint solution."""
    pairing = fp.diagnostics.get("source_pairing")
    if pairing is None:
        raise ValidationError("fp solution does not carry a transpose source pairing")
    return representation_residual(
        hj.u,
        fp.rho,
        hj.problem.ham,
        hj.problem.f,
        transpose_pairing=pairing,
        **kwargs,
    )


def _window_integral(u: Trajectory, rho: Trajectory, frame_fn) -> float:
    """Trapezoid-in-time of cell sums of frame_fn(u_k) * rho_k over the window."""
    k0 = _align_window(u, rho)
    cell = u.grid.cell_volume
    w = _trapezoid_weights(rho.time)
    total = 0.0
    for j in range(rho.time.n_steps + 1):
        total += w[j] * cell * float(np.sum(frame_fn(u.frames[k0 + j]) * rho.frames[j]))
    return total


def energy_functional(u: Trajectory, rho: Trajectory, ham) -> float:
    """Quadrature value of the drift energy along the density.

    Integrand |D_pH(x, Du)|^(gamma') rho; zero when ham is None (no drift).
    """
    if ham is None:
        return 0.0
    gp = ham.gamma_prime
    grid = u.grid

    def frame_fn(u_frame):
        du = gradient_central(ScalarField(grid, u_frame))
        nu = ham.eval_DpH_field(du)
        return np.sum(nu.values**2, axis=-1) ** (gp / 2.0)

    return _window_integral(u, rho, frame_fn)


def gradient_moment(u: Trajectory, rho: Trajectory, beta: float, gamma: Optional[float] = None) -> float:
    """Quadrature value of the |Du|^beta moment along the density.

    The estimate regime is 1 <= beta <= gamma; values outside warn (above)
    or raise BadExponent (below 1).
    """
    if beta < 1.0:
        raise BadExponent(f"moment exponent beta={beta} below 1")
    if gamma is not None and beta > gamma + 1e-12:
        warnings.warn(
            f"beta={beta} above gamma={gamma}; moment computed outside the regime",
            ExponentRangeWarning,
        )
    grid = u.grid

    def frame_fn(u_frame):
        du = gradient_central(ScalarField(grid, u_frame))
        return np.sum(du.values**2, axis=-1) ** (beta / 2.0)

    return _window_integral(u, rho, frame_fn)


def grad_rho_regime(d: int, q_prime: float) -> bool:
    """Whether q' sits inside the proved integrability window (1, (d+2)/(d+1))."""
    return 1.0 < q_prime < (d + 2.0) / (d + 1.0)


def grad_rho_norm(rho: Trajectory, q_prime: float) -> float:
    """Space-time L^{q'} norm of the discrete density gradient.

    Computed for any q' >= 1; outside the regime (1, (d+2)/(d+1)) a warning
    flags that no uniform bound is expected there.
    """
    if q_prime < 1.0:
        raise BadExponent(f"q'={q_prime} below 1")
    if not grad_rho_regime(rho.grid.d, q_prime):
        warnings.warn(
            f"q'={q_prime} outside (1, {(rho.grid.d + 2) / (rho.grid.d + 1):.4g}); "
            "no uniform gradient bound in this regime",
            ExponentRangeWarning,
        )
    mags = np.empty_like(rho.frames)
    for j in range(rho.frames.shape[0]):
        du = gradient_central(ScalarField(rho.grid, rho.frames[j]))
        mags[j] = np.sqrt(np.sum(du.values**2, axis=-1))
    return lq_spacetime_norm(Trajectory(rho.grid, rho.time, mags), q_prime)


def fp_gradient_empirical_constant(rho: Trajectory, drift, q: float) -> dict:
    """Empirical constant in the density-gradient vs drift-moment chain.

    With r' = 1 + (d+2)/q and q' = q/(q-1), returns the ratio
    ||D rho||_{q'} / (I |v|^{r'} rho + 1) together with both sides; the
    continuum constant is unknown, only sweep-boundedness is checkable.
    """
    d = rho.grid.d
    if q <= 1.0:
        raise BadExponent(f"q={q} must exceed 1")
    q_prime = q / (q - 1.0)
    r_prime = 1.0 + (d + 2.0) / q
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExponentRangeWarning)
        lhs = grad_rho_norm(rho, q_prime)
    cell = rho.grid.cell_volume
    w = _trapezoid_weights(rho.time)
    moment = 0.0
    for j in range(rho.time.n_steps + 1):
        if drift is None:
            break
        if isinstance(drift, VectorField):
            v = drift.values
        else:
            v = drift.frames[j] if hasattr(drift, "frames") else np.asarray(drift)[j]
        vmagr = np.sum(v**2, axis=-1) ** (r_prime / 2.0)
        moment += w[j] * cell * float(np.sum(vmagr * rho.frames[j]))
    rhs = moment + 1.0
    return {
        "constant": lhs / rhs,
        "grad_norm": lhs,
        "drift_moment": moment,
        "q": q,
        "q_prime": q_prime,
        "r_prime": r_prime,
    }


def wasserstein1_1d(rho_a: ScalarField, rho_b: ScalarField) -> float:
    """d_1 on the circle via cumulative functions.

    d_1 = min_m h sum_i |G_i - m| with G the cumulative difference at cell
    edges; the minimizing shift is the median, exact for equal weights.
    """
    if rho_a.grid.d != 1:
        raise DimensionUnsupported("circle transport distance needs d = 1")
    if rho_a.grid != rho_b.grid:
        raise GridMismatch("densities on different grids")
    grid = rho_a.grid
    h = grid.h
    for r in (rho_a, rho_b):
        if float(np.min(r.values)) < -1e-10:
            raise ValidationError("density has a negative cell beyond round-off")
        if abs(h * float(np.sum(r.values)) - 1.0) > 1e-8:
            raise ValidationError("density does not carry unit mass")
    diff = np.clip(rho_a.values, 0.0, None) - np.clip(rho_b.values, 0.0, None)
    cum = np.cumsum(diff) * h
    shift = np.median(cum)
    return float(h * np.sum(np.abs(cum - shift)))


@dataclass
class HolderFit:
    exponent: float
    n_pairs: int
    degenerate: bool
    lags: np.ndarray = field(repr=False, default=None)
    distances: np.ndarray = field(repr=False, default=None)


def holder_exponent_fit(rho: Trajectory, min_lag: Optional[float] = None) -> HolderFit:
    """Least-squares slope of log d_1(rho(t), rho(tau)) against log(tau - t).

    Pairs are anchored at the terminal frame.  Lags below ``min_lag``
    (default h^2, the spread floor of a unit-diffusion kernel) are dropped
    so the fit never sees pre-asymptotic grid-scale spreading.
    """
    if rho.grid.d != 1:
        raise DimensionUnsupported("exponent fit rides on the d = 1 distance")
    n_steps = rho.time.n_steps
    if n_steps + 1 < 8:
        raise InsufficientSamples(f"need at least 8 time samples, got {n_steps + 1}")
    if min_lag is None:
        min_lag = rho.grid.h**2
    terminal = ScalarField(rho.grid, rho.frames[-1])
    lags, dists = [], []
    for k in range(n_steps):
        lag = rho.time.t1 - (rho.time.t0 + k * rho.time.dt)
        if lag < min_lag:
            continue
        d1 = wasserstein1_1d(ScalarField(rho.grid, rho.frames[k]), terminal)
        lags.append(lag)
        dists.append(d1)
    lags = np.asarray(lags)
    dists = np.asarray(dists)
    if lags.size and float(np.max(dists)) < 1e-13:
        return HolderFit(exponent=0.0, n_pairs=int(lags.size), degenerate=True,
                         lags=lags, distances=dists)
    keep = dists > 1e-13
    if int(np.sum(keep)) < 8:
        raise InsufficientSamples(
            f"only {int(np.sum(keep))} usable pairs after the lag floor"
        )
    slope = fit_loglog_slope(lags[keep], dists[keep])
    return HolderFit(exponent=float(slope), n_pairs=int(np.sum(keep)),
                     degenerate=False, lags=lags[keep], distances=dists[keep])


@dataclass
class SupNormBound:
    bound: float
    u0_sup: float
    f_norm: float
    mu_norm: float
    q: float
    q_prime: float


def sup_norm_duality_bound(u0: ScalarField, f, heat_mu: Trajectory, q: float) -> SupNormBound:
    """Duality upper bound ||u0||_inf + ||f||_{L^q} ||mu||_{L^{q'}}.

    mu is a drift-free backward density on the run's window; the pairing
    I f mu <= ||f||_q ||mu||_{q'} is Holder on the space-time cylinder.
    """
    if q <= 1.0 and not np.isinf(q):
        raise BadExponent(f"q={q} must exceed 1 (or be inf)")
    q_prime = 1.0 if np.isinf(q) else q / (q - 1.0)
    u0_sup = float(np.max(np.abs(u0.values)))
    span = heat_mu.time.t1 - heat_mu.time.t0
    if f is None:
        f_norm = 0.0
    elif isinstance(f, ScalarField):
        f_norm = (
            float(np.max(np.abs(f.values)))
            if np.isinf(q)
            else span ** (1.0 / q) * lp_space_norm(f, q)
        )
    elif isinstance(f, Trajectory):
        if f.time != heat_mu.time:
            raise GridMismatch("source and density trajectories on different windows")
        f_norm = lq_spacetime_norm(f, q)
    else:
        raise ValidationError(f"unsupported source term type {type(f).__name__}")
    mu_norm = lq_spacetime_norm(heat_mu, q_prime)
    return SupNormBound(
        bound=u0_sup + f_norm * mu_norm,
        u0_sup=u0_sup,
        f_norm=f_norm,
        mu_norm=mu_norm,
        q=q,
        q_prime=q_prime,
    )
