"""Backward Fokker-Planck (adjoint) solver in conservative flux form,

    -d_t rho - d_ij(a_ij rho) - div(v rho) = 0,    rho(., tau) = rho_tau >= 0,

marched as a forward parabolic problem in s = tau - t:

    d_s sigma = d_ij(a_ij sigma) + div(v sigma).

The diffusive term is the exact matrix transpose of the centered
non-divergence stencil used by the value solver (for constant a the two
stencils coincide and share the FFT symbol), taken implicitly.  The
advective term uses face fluxes of w = -v, explicit in time:

    upwind    first order, nonnegativity-preserving under the CFL bound
    minmod    MUSCL slope limiting, second order away from extrema
    centered  second order; monotone only while the cell Peclet number
              |w| h / (2 lambda) stays below one (checked)

Every flux telescopes over the torus, so each step conserves mass in
exact arithmetic; the optional positivity limiter clips round-off scale
negatives and restores the step's mass exactly.

A second entry point replays a stored value-solver run as its exact
algebraic transpose: the linearization of the IMEX step around u_k is
(I - dt A)^(-1)(I - dt J_k), so the adjoint density is stepped by
(I - dt J_k^T)(I - dt A^T)^(-1), using the same upwind multiplier fields
alpha, beta recomputed from u_k.  The pairing sum_x u rho then telescopes
to round-off, which is what duality-exact verification consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    CFLViolation,
    GridMismatch,
    NegativeDensity,
    ValidationError,
)
from .grid import (
    CoeffField,
    ScalarField,
    TimeGrid,
    TorusGrid,
    Trajectory,
    VectorField,
    ellipticity_certificate,
)
from .hj_solver import DiffusionBackend, HJSolution, upwind_data

__all__ = [
    "FPProblem",
    "FPSolution",
    "DiracApprox",
    "VectorTrajectory",
    "mass",
    "solve_backward",
    "solve_backward_transpose",
    "heat_adjoint_solve",
]

MASS_TOL = 1e-12


def mass(f: ScalarField) -> float:
    return float(f.grid.cell_volume * np.sum(f.values))


@dataclass(frozen=True)
class DiracApprox:
    """Single-cell (or odd-width block) indicator of unit mass."""

    center: tuple
    width: int = 1

    def field(self, grid: TorusGrid) -> ScalarField:
        if self.width % 2 != 1 or self.width < 1:
            raise ValidationError(f"width must be odd and positive, got {self.width}")
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if center.size != grid.d:
            raise ValidationError("center dimension differs from grid")
        n = grid.n_per_axis
        idx = np.rint(center * n).astype(int) % n
        half = self.width // 2
        values = np.zeros(grid.shape)
        sel = tuple(
            (np.arange(i - half, i + half + 1) % n) for i in idx
        )
        values[np.ix_(*sel) if grid.d == 2 else sel[0]] = 1.0 / (self.width * grid.h) ** grid.d
        return ScalarField(grid, values)


@dataclass(frozen=True)
class VectorTrajectory:
    """Time-indexed drift, frames shape (n_steps+1, *grid.shape, d)."""

    grid: TorusGrid
    time: TimeGrid
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        want = (self.time.n_steps + 1,) + self.grid.shape + (self.grid.d,)
        if frames.shape != want:
            raise GridMismatch(f"drift frames shape {frames.shape}, expected {want}")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("drift contains nan/inf")
        object.__setattr__(self, "frames", frames.copy())


DriftType = Union[None, VectorField, VectorTrajectory]


@dataclass
class FPProblem:
    """Backward density problem on the window [time.t0, time.t1].

    rho_tau is renormalized to unit mass at construction (its raw mass
    must already be within 1e-12 of one after the single rescale).  The
    drift is sampled at time nodes; the step from t_{k+1} down to t_k
    uses node k, mirroring the explicit side of the value solver.
    """

    grid: TorusGrid
    time: TimeGrid
    a: Union[CoeffField, list]
    drift: DriftType
    rho_tau: ScalarField
    flux: str = "upwind"
    limiter: bool = True

    def __post_init__(self):
        if self.rho_tau.grid != self.grid:
            raise GridMismatch("rho_tau grid differs from problem grid")
        if float(np.min(self.rho_tau.values)) < 0.0:
            raise ValidationError("rho_tau must be nonnegative")
        m = mass(self.rho_tau)
        if m <= 0.0:
            raise ValidationError("rho_tau must carry positive mass")
        self.rho_tau = ScalarField(self.grid, self.rho_tau.values / m)
        if self.flux not in ("upwind", "minmod", "centered"):
            raise ValidationError(f"unknown flux {self.flux!r}")
        if isinstance(self.drift, VectorField) and self.drift.grid != self.grid:
            raise GridMismatch("drift grid differs from problem grid")
        if isinstance(self.drift, VectorTrajectory):
            if self.drift.grid != self.grid or self.drift.time != self.time:
                raise GridMismatch("drift trajectory must share grid and time axis")
        for a in ([self.a] if isinstance(self.a, CoeffField) else self.a):
            ellipticity_certificate(a)

    def a_at(self, k: int) -> CoeffField:
        if isinstance(self.a, CoeffField):
            return self.a
        if len(self.a) != self.time.n_steps + 1:
            raise ValidationError("time-dependent a needs one entry per node")
        return self.a[k]

    def drift_at(self, k: int) -> Optional[np.ndarray]:
        if self.drift is None:
            return None
        if isinstance(self.drift, VectorField):
            return self.drift.values
        return self.drift.frames[k]


@dataclass
class FPSolution:
    problem: Optional[FPProblem]
    rho: Trajectory
    diagnostics: dict = field(repr=False)


def _face_velocity(w_ax: np.ndarray, ax: int) -> np.ndarray:
    # value on the face between c and c + e_ax, indexed by c
    return 0.5 * (w_ax + np.roll(w_ax, -1, ax))


def _minmod(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.where(p * q > 0.0, np.sign(p) * np.minimum(np.abs(p), np.abs(q)), 0.0)


def _advective_divergence(sigma: np.ndarray, v: np.ndarray, grid: TorusGrid, flux: str):
    """div(w sigma) with w = -v, plus the cell-wise CFL outflow factor."""
    n = grid.n_per_axis
    div = np.zeros(grid.shape)
    outflow = np.zeros(grid.shape)
    for ax in range(grid.d):
        wf = _face_velocity(-v[..., ax], ax)
        if flux == "upwind":
            face = np.maximum(wf, 0.0) * sigma + np.minimum(wf, 0.0) * np.roll(
                sigma, -1, ax
            )
        elif flux == "minmod":
            dfwd = np.roll(sigma, -1, ax) - sigma
            dbwd = sigma - np.roll(sigma, 1, ax)
            slope = _minmod(dfwd, dbwd)
            from_left = sigma + 0.5 * slope
            from_right = np.roll(sigma, -1, ax) - 0.5 * np.roll(slope, -1, ax)
            face = np.where(wf > 0.0, wf * from_left, wf * from_right)
        else:  # centered
            face = wf * 0.5 * (sigma + np.roll(sigma, -1, ax))
        div += (face - np.roll(face, 1, ax)) * n
        outflow += np.maximum(wf, 0.0) - np.minimum(np.roll(wf, 1, ax), 0.0)
    return div, outflow


def _apply_limiter(sigma: np.ndarray, target_mass_sum: float, limiter: bool):
    """Clip round-off negatives; restore the step's cell sum exactly."""
    mn = float(np.min(sigma))
    clipped = 0.0
    if mn < 0.0:
        if not limiter:
            scale = max(1.0, float(np.max(np.abs(sigma))))
            if mn < -1e-10 * scale:
                raise NegativeDensity(
                    f"min density {mn:.3e} with positivity limiter disabled"
                )
            return sigma, 0.0
        neg = sigma < 0.0
        clipped = -float(np.sum(sigma[neg]))
        sigma = np.where(neg, 0.0, sigma)
        pos_sum = float(np.sum(sigma))
        if pos_sum > 0.0:
            sigma = sigma * (target_mass_sum / pos_sum)
    return sigma, clipped


def solve_backward(problem: FPProblem, adaptive: bool = True, cfl_safety: float = 0.9) -> FPSolution:
    """March rho from the terminal node down to t0.

    Diffusion implicit (transpose stencil), advection explicit with the
    problem's face flux.  Substeps split any step violating the advective
    CFL bound when ``adaptive``; otherwise CFLViolation is raised.  The
    centered flux additionally enforces a cell Peclet number below one.
    """
    grid, time = problem.grid, problem.time
    n_steps = time.n_steps
    backend = DiffusionBackend(grid)
    lam = min(ellipticity_certificate(a) for a in (
        [problem.a] if isinstance(problem.a, CoeffField) else problem.a
    ))
    frames = np.empty((n_steps + 1,) + grid.shape)
    frames[n_steps] = problem.rho_tau.values
    sigma = problem.rho_tau.values.copy()
    mass_trace = np.empty(n_steps + 1)
    min_trace = np.empty(n_steps + 1)
    mass_trace[n_steps] = mass(problem.rho_tau)
    min_trace[n_steps] = float(np.min(sigma))
    cfl = np.zeros(n_steps)
    lin = np.zeros(n_steps)
    subs = np.zeros(n_steps, dtype=int)
    clipped_total = 0.0
    cell = grid.cell_volume

    for k in range(n_steps - 1, -1, -1):
        ds = time.dt
        v = problem.drift_at(k)
        a_k = problem.a_at(k + 1)
        if v is None:
            m = 1
            outflow_max = 0.0
        else:
            _, outflow = _advective_divergence(sigma, v, grid, problem.flux)
            outflow_max = float(np.max(outflow))
            m = 1 if not adaptive else max(
                1, int(np.ceil(ds * outflow_max * grid.n_per_axis / cfl_safety))
            )
            if problem.flux == "centered":
                peclet = float(np.max(np.abs(v))) * grid.h / (2.0 * lam)
                if peclet > 1.0:
                    raise ValidationError(
                        f"centered flux needs cell Peclet <= 1, got {peclet:.3g}"
                    )
        while True:
            sig_try = sigma
            worst_ratio = 0.0
            worst_lin = 0.0
            clipped_step = 0.0
            ok = True
            for _ in range(m):
                if v is not None:
                    div, outflow = _advective_divergence(sig_try, v, grid, problem.flux)
                    ratio = (ds / m) * float(np.max(outflow)) * grid.n_per_axis
                    if ratio > cfl_safety + 1e-12:
                        if not adaptive:
                            raise CFLViolation(
                                ds / m, cfl_safety * grid.h / float(np.max(outflow)), ratio
                            )
                        ok = False
                        break
                    worst_ratio = max(worst_ratio, ratio)
                    stage = sig_try - (ds / m) * div
                else:
                    stage = sig_try
                target = float(np.sum(stage))
                sig_try, lin_res = backend.solve(a_k, ds / m, stage, transpose=True)
                worst_lin = max(worst_lin, lin_res)
                sig_try, clipped = _apply_limiter(sig_try, target, problem.limiter)
                clipped_step += clipped
            if ok:
                break
            m *= 2
            if m > 2**20:
                raise CFLViolation(ds / m, 0.0, float("inf"))
        sigma = sig_try
        clipped_total += clipped_step
        cfl[k] = worst_ratio
        lin[k] = worst_lin
        subs[k] = m
        frames[k] = sigma
        mass_trace[k] = cell * float(np.sum(sigma))
        min_trace[k] = float(np.min(sigma))

    rho = Trajectory(grid, time, frames)
    diagnostics = {
        "mass_trace": mass_trace,
        "min_trace": min_trace,
        "cfl_ratio": cfl,
        "linear_residual": lin,
        "substeps": subs,
        "clipped_mass_cells": clipped_total * cell,
        "backend": backend,
    }
    return FPSolution(problem=problem, rho=rho, diagnostics=diagnostics)


def solve_backward_transpose(hj: HJSolution, rho_tau: ScalarField, k_stop: int = 0) -> FPSolution:
    """Exact-transpose adjoint of a stored value-solver run.

    Steps rho_{k+1} -> rho_k = (I - dt J_k^T) (I - dt A^T)^(-1) rho_{k+1}
    with J_k the upwind linearization at the stored frame u_k, and
    accumulates the discrete source pairing

        sum_k dt h^d sum_x (f_k + Lhat_k) rho_tilde_k,
        Lhat_k = J_k u_k - Hhat_k   (the along-the-scheme conjugate),

    so that <u(tau), rho_tau> - <u(s), rho(s)> equals the accumulated
    pairing to round-off.  Requires a run stepped without substepping.
    """
    problem = hj.problem
    grid, time = problem.grid, problem.time
    if np.any(hj.diagnostics["substeps"] != 1):
        raise ValidationError(
            "transpose replay needs a run solved with adaptive=False (no substeps)"
        )
    if rho_tau.grid != grid:
        raise GridMismatch("rho_tau grid differs from solution grid")
    m0 = mass(rho_tau)
    if m0 <= 0.0 or float(np.min(rho_tau.values)) < 0.0:
        raise ValidationError("rho_tau must be nonnegative with positive mass")
    rho_tau = ScalarField(grid, rho_tau.values / m0)

    backend = hj.backend()
    n = grid.n_per_axis
    n_steps = time.n_steps
    dt = time.dt
    cell = grid.cell_volume
    if not (0 <= k_stop < n_steps):
        raise ValidationError(f"k_stop={k_stop} outside [0, {n_steps - 1}]")

    frames = np.empty((n_steps - k_stop + 1,) + grid.shape)
    frames[-1] = rho_tau.values
    sigma = rho_tau.values.copy()
    mass_trace = [mass(rho_tau)]
    min_trace = [float(np.min(sigma))]
    pairing = 0.0
    per_step = np.zeros(n_steps - k_stop)

    for k in range(n_steps - 1, k_stop - 1, -1):
        sig_tilde, _ = backend.solve(problem.a_at(k + 1), dt, sigma, transpose=True)
        up = upwind_data(problem.ham, hj.u.frames[k], grid)
        transport = np.zeros(grid.shape)
        for ax in range(grid.d):
            arho = up.alpha[ax] * sig_tilde
            brho = up.beta[ax] * sig_tilde
            transport += (arho - np.roll(arho, 1, ax)) * n       # D^- (alpha rho)
            transport += (np.roll(brho, -1, ax) - brho) * n      # D^+ (beta rho)
        sigma = sig_tilde + dt * transport
        f_vals = np.clip(problem.f_values_at(k), -problem.f_cap, problem.f_cap)
        contrib = dt * cell * float(np.sum((f_vals + up.lagrangian) * sig_tilde))
        pairing += contrib
        per_step[k - k_stop] = contrib
        frames[k - k_stop] = sigma
        mass_trace.append(cell * float(np.sum(sigma)))
        min_trace.append(float(np.min(sigma)))

    window = TimeGrid(time.t0 + k_stop * dt, time.t1, n_steps - k_stop)
    rho = Trajectory(grid, window, frames)
    diagnostics = {
        "mass_trace": np.array(mass_trace[::-1]),
        "min_trace": np.array(min_trace[::-1]),
        "source_pairing": pairing,
        "source_pairing_steps": per_step,
        "k_stop": k_stop,
        "backend": backend,
    }
    return FPSolution(problem=None, rho=rho, diagnostics=diagnostics)


def heat_adjoint_solve(
    grid: TorusGrid,
    time: TimeGrid,
    a: Union[CoeffField, list],
    mu_tau: ScalarField,
    adaptive: bool = True,
) -> FPSolution:
    """Drift-free backward density run (heat adjoint)."""
    problem = FPProblem(grid=grid, time=time, a=a, drift=None, rho_tau=mu_tau)
    return solve_backward(problem, adaptive=adaptive)
