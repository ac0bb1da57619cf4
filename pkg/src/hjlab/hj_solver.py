"""IMEX solver for forward viscous Hamilton-Jacobi equations on the torus,

    d_t u - a_ij(x,t) d_ij u + H(x, Du) = f(x,t),    u(., t0) = u0,

with the diffusion taken implicitly (unconditionally stable) and the
Hamiltonian explicitly through a monotone upwind flux.  One step reads

    (I - dt A_k) u_{k+1} = u_k - dt Hhat(x, D+ u_k, D- u_k) + dt f_k,

where A_k is the centered discretization of a_ij d_ij and Hhat is the
Godunov-type numeric Hamiltonian

    Hhat = h(x) * S^(gamma/2) + b+ . D-u + b- . D+u + shift,
    S    = sum_i [ max(D-_i u, 0)^2 + min(D+_i u, 0)^2 ].

Hhat is nonincreasing in each D+ and nondecreasing in each D-, so the
explicit part is monotone under the CFL restriction

    dt * max_cells sum_i (beta_i - alpha_i) <= h,

with alpha_i = dHhat/d(D+_i) <= 0 and beta_i = dHhat/d(D-_i) >= 0 the
upwind characteristic speeds.  These multiplier fields are exactly what
the adjoint density solver transposes, so they are recomputed from the
stored value trajectory rather than persisted.

The implicit solve goes through an FFT diagonalization when a is constant
in space and through a cached sparse LU factorization otherwise; both
paths are checked against a residual tolerance of 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CFLViolation,
    GridMismatch,
    LinearSolveFailure,
    ValidationError,
)
from .grid import (
    CoeffField,
    ScalarField,
    TimeGrid,
    TorusGrid,
    Trajectory,
    VectorField,
    backward_quotients,
    elliptic_apply,
    ellipticity_certificate,
    forward_quotients,
    gradient_central,
)
from .hamiltonian import PowerHamiltonian

__all__ = [
    "HJProblem",
    "HJSolution",
    "UpwindData",
    "DiffusionBackend",
    "upwind_data",
    "step_imex",
    "solve",
    "residual_classical",
    "lipschitz_seminorm_values",
]

LINEAR_RESIDUAL_TOL = 1e-10


def lipschitz_seminorm_values(values: np.ndarray, grid: TorusGrid) -> float:
    """Largest one-sided difference quotient magnitude over cells and axes."""
    out = 0.0
    for ax in range(grid.d):
        out = max(
            out,
            float(
                np.max(np.abs(np.roll(values, -1, ax) - values)) * grid.n_per_axis
            ),
        )
    return out


@dataclass(frozen=True)
class UpwindData:
    """Monotone flux value and its partial slopes at one value field.

    alpha/beta have shape (d,) + grid.shape; speed = sum_i (beta - alpha).
    lagrangian is the along-the-scheme conjugate pairing

        J u - Hhat = (gamma - 1) h S^(gamma/2) - shift,

    which converges to L(x, DpH(x, Du)).
    """

    hhat: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    speed: np.ndarray
    lagrangian: np.ndarray


def upwind_data(ham: Optional[PowerHamiltonian], u_values: np.ndarray, grid: TorusGrid) -> UpwindData:
    d = grid.d
    if ham is None:
        zero = np.zeros(grid.shape)
        zd = np.zeros((d,) + grid.shape)
        return UpwindData(zero, zd, zd, zero, zero)
    n = grid.n_per_axis
    dplus = np.empty((d,) + grid.shape)
    dminus = np.empty((d,) + grid.shape)
    for ax in range(d):
        fwd = np.roll(u_values, -1, ax)
        bwd = np.roll(u_values, 1, ax)
        dplus[ax] = (fwd - u_values) * n
        dminus[ax] = (u_values - bwd) * n
    up = np.minimum(dplus, 0.0)
    dn = np.maximum(dminus, 0.0)
    S = np.sum(up**2 + dn**2, axis=0)
    gamma = ham.gamma
    hx = ham.h.values
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(S > 0.0, gamma * hx * S ** (0.5 * (gamma - 2.0)), 0.0)
    alpha = np.empty_like(dplus)
    beta = np.empty_like(dminus)
    hhat = hx * S ** (0.5 * gamma) + ham.shift
    for ax in range(d):
        b_ax = ham.b.values[..., ax]
        bpos = np.maximum(b_ax, 0.0)
        bneg = np.minimum(b_ax, 0.0)
        alpha[ax] = w * up[ax] + bneg
        beta[ax] = w * dn[ax] + bpos
        hhat = hhat + bpos * dminus[ax] + bneg * dplus[ax]
    speed = np.sum(beta - alpha, axis=0)
    lagr = (gamma - 1.0) * hx * S ** (0.5 * gamma) - ham.shift
    return UpwindData(hhat, alpha, beta, speed, lagr)


class DiffusionBackend:
    """Implicit solves with (I - dt A), A the centered a_ij d_ij stencil.

    Constant-in-space coefficients are diagonalized by the FFT; varying
    ones get a sparse LU factorization.  Factorizations are cached per
    (coefficient object, dt) so constant-in-time coefficients never
    refactorize.  Transpose solves reuse the same objects (the FFT symbol
    is real, so that operator is symmetric).
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self._symbol_cache = {}
        self._lu_cache = {}
        self._matrix_cache = {}

    # symbol of the centered stencil for a constant coefficient matrix
    def _symbol(self, a_mat: np.ndarray) -> np.ndarray:
        n = self.grid.n_per_axis
        theta = 2.0 * np.pi * np.fft.fftfreq(n)
        lam = (2.0 * np.cos(theta) - 2.0) * n * n
        if self.grid.d == 1:
            return a_mat[0, 0] * lam
        s = np.sin(theta) * n
        sym = (
            a_mat[0, 0] * lam[:, None]
            + a_mat[1, 1] * lam[None, :]
            - 2.0 * a_mat[0, 1] * s[:, None] * s[None, :]
        )
        return sym

    def _assemble(self, a: CoeffField) -> sp.csr_matrix:
        key = id(a)
        if key in self._matrix_cache:
            return self._matrix_cache[key]
        grid = self.grid
        n = grid.n_per_axis
        N = grid.n_cells
        idx = np.arange(N).reshape(grid.shape)
        rows, cols, vals = [], [], []

        def add(coef: np.ndarray, shifted: np.ndarray):
            rows.append(idx.ravel())
            cols.append(shifted.ravel())
            vals.append(coef.ravel())

        n2 = float(n * n)
        center = np.zeros(grid.shape)
        for ax in range(grid.d):
            aii = a.values[..., ax, ax]
            add(aii * n2, np.roll(idx, -1, ax))
            add(aii * n2, np.roll(idx, 1, ax))
            center -= 2.0 * aii * n2
        if grid.d == 2:
            a12 = a.values[..., 0, 1]
            quarter = 0.5 * a12 * n2  # 2 * a12 * (1/4) n^2
            add(quarter, np.roll(np.roll(idx, -1, 0), -1, 1))
            add(quarter, np.roll(np.roll(idx, 1, 0), 1, 1))
            add(-quarter, np.roll(np.roll(idx, -1, 0), 1, 1))
            add(-quarter, np.roll(np.roll(idx, 1, 0), -1, 1))
        add(center, idx)
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N),
        )
        self._matrix_cache[key] = A
        return A

    def apply(self, a: CoeffField, values: np.ndarray) -> np.ndarray:
        return elliptic_apply(a, ScalarField(self.grid, values)).values

    def solve(self, a: CoeffField, dt: float, rhs: np.ndarray, transpose: bool = False):
        """Return (solution, relative residual) of (I - dt A)^(T?) u = rhs."""
        if a.is_constant():
            key = (id(a), "sym")
            sym = self._symbol_cache.get(key)
            if sym is None:
                sym = self._symbol(a.constant_matrix())
                self._symbol_cache[key] = sym
            # real symbol: operator symmetric, transpose solve identical
            hat = np.fft.fftn(rhs)
            out = np.fft.ifftn(hat / (1.0 - dt * sym)).real
        else:
            key = (id(a), float(dt))
            lu = self._lu_cache.get(key)
            if lu is None:
                A = self._assemble(a)
                M = (sp.identity(self.grid.n_cells, format="csr") - dt * A).tocsc()
                lu = spla.splu(M)
                self._lu_cache[key] = lu
            flat = lu.solve(rhs.ravel(), trans="T" if transpose else "N")
            out = flat.reshape(self.grid.shape)
        if transpose:
            # residual against the transposed operator via the pairing trick
            probe = out - dt * self._apply_transpose(a, out)
        else:
            probe = out - dt * self.apply(a, out)
        scale = float(np.max(np.abs(rhs))) or 1.0
        residual = float(np.max(np.abs(probe - rhs))) / scale
        if residual > LINEAR_RESIDUAL_TOL:
            raise LinearSolveFailure(
                f"implicit solve residual {residual:.3e} > {LINEAR_RESIDUAL_TOL:.0e}"
            )
        return out, residual

    def _apply_transpose(self, a: CoeffField, values: np.ndarray) -> np.ndarray:
        if a.is_constant():
            return self.apply(a, values)
        A = self._assemble(a)
        return (A.T @ values.ravel()).reshape(self.grid.shape)


FType = Union[None, ScalarField, Trajectory]


@dataclass
class HJProblem:
    """Forward problem data.

    ``ham = None`` switches the Hamiltonian off (pure diffusion mode).
    ``a`` may be a single CoeffField (frozen in time) or a sequence with
    one entry per time node; entry k acts on the step from t_k to t_{k+1}.
    ``f`` may be None, a static field, or a trajectory sampled on the
    same time grid.  Values of f beyond f_cap in magnitude are truncated
    and the truncation is reported in the solution diagnostics.
    """

    grid: TorusGrid
    time: TimeGrid
    ham: Optional[PowerHamiltonian]
    a: Union[CoeffField, list]
    u0: ScalarField
    f: FType = None
    f_cap: float = 1e6

    def __post_init__(self):
        if self.u0.grid != self.grid:
            raise GridMismatch("u0 grid differs from problem grid")
        if self.ham is not None and self.ham.grid != self.grid:
            raise GridMismatch("Hamiltonian grid differs from problem grid")
        if isinstance(self.f, Trajectory):
            if self.f.grid != self.grid:
                raise GridMismatch("f grid differs from problem grid")
            if self.f.time != self.time:
                raise ValidationError("f trajectory must share the time grid")
        elif isinstance(self.f, ScalarField) and self.f.grid != self.grid:
            raise GridMismatch("f grid differs from problem grid")
        for a in self._a_list():
            if a.grid != self.grid:
                raise GridMismatch("coefficient grid differs from problem grid")
            ellipticity_certificate(a)

    def _a_list(self):
        return [self.a] if isinstance(self.a, CoeffField) else list(self.a)

    def a_at(self, k: int) -> CoeffField:
        if isinstance(self.a, CoeffField):
            return self.a
        seq = self.a
        if len(seq) != self.time.n_steps + 1:
            raise ValidationError(
                "time-dependent a needs one CoeffField per time node"
            )
        return seq[k]

    def f_values_at(self, k: int) -> np.ndarray:
        if self.f is None:
            return np.zeros(self.grid.shape)
        if isinstance(self.f, ScalarField):
            return self.f.values
        return self.f.frames[k]


@dataclass
class HJSolution:
    problem: HJProblem
    u: Trajectory
    diagnostics: dict = field(repr=False)

    def backend(self) -> DiffusionBackend:
        return self.diagnostics["backend"]


def _truncate_f(f_vals: np.ndarray, cap: float):
    clipped = int(np.sum(np.abs(f_vals) > cap))
    if clipped:
        f_vals = np.clip(f_vals, -cap, cap)
    return f_vals, clipped


def step_imex(
    problem: HJProblem,
    u_values: np.ndarray,
    k: int,
    dt: float,
    backend: DiffusionBackend,
    cfl_safety: float = 1.0,
):
    """One IMEX step from node k; refuses dt violating the CFL bound.

    Returns (new values, step record dict).
    """
    grid = problem.grid
    up = upwind_data(problem.ham, u_values, grid)
    max_speed = float(np.max(up.speed))
    ratio = dt * max_speed * grid.n_per_axis
    if ratio > cfl_safety + 1e-12:
        raise CFLViolation(dt, cfl_safety * grid.h / max_speed, ratio)
    f_vals, clipped = _truncate_f(problem.f_values_at(k), problem.f_cap)
    rhs = u_values + dt * (f_vals - up.hhat)
    out, lin_res = backend.solve(problem.a_at(k + 1), dt, rhs)
    record = {
        "cfl_ratio": ratio,
        "linear_residual": lin_res,
        "f_clipped": clipped,
        "max_speed": max_speed,
    }
    return out, record


def solve(problem: HJProblem, adaptive: bool = True, cfl_safety: float = 0.9) -> HJSolution:
    """March the IMEX scheme over the problem's time grid.

    With ``adaptive`` the solver splits any step whose explicit CFL ratio
    exceeds ``cfl_safety`` into equal substeps (frames are still reported
    only at the uniform nodes).  With ``adaptive=False`` such a step
    raises CFLViolation instead, which is the mode duality-exact runs
    must use.
    """
    grid, time = problem.grid, problem.time
    backend = DiffusionBackend(grid)
    frames = np.empty((time.n_steps + 1,) + grid.shape)
    frames[0] = problem.u0.values
    u = problem.u0.values
    n_steps = time.n_steps
    cfl = np.zeros(n_steps)
    lin = np.zeros(n_steps)
    subs = np.zeros(n_steps, dtype=int)
    clipped_total = 0
    max_du = np.zeros(n_steps + 1)
    max_du[0] = lipschitz_seminorm_values(u, grid)
    for k in range(n_steps):
        dt = time.dt
        if adaptive:
            speed = float(np.max(upwind_data(problem.ham, u, grid).speed))
            m = max(1, math.ceil(dt * speed * grid.n_per_axis / cfl_safety))
        else:
            m = 1
        # substeps tile the step exactly; if speeds grow mid-step the whole
        # step is retried with twice as many pieces
        while True:
            u_try = u
            worst_ratio = 0.0
            worst_lin = 0.0
            clipped_step = 0
            try:
                for _ in range(m):
                    u_try, rec = step_imex(
                        problem, u_try, k, dt / m, backend, cfl_safety=cfl_safety
                    )
                    worst_ratio = max(worst_ratio, rec["cfl_ratio"])
                    worst_lin = max(worst_lin, rec["linear_residual"])
                    clipped_step += rec["f_clipped"]
                break
            except CFLViolation:
                if not adaptive:
                    raise
                m *= 2
                if m > 2**20:
                    raise
        u = u_try
        clipped_total += clipped_step
        cfl[k] = worst_ratio
        lin[k] = worst_lin
        subs[k] = m
        frames[k + 1] = u
        max_du[k + 1] = lipschitz_seminorm_values(u, grid)
    traj = Trajectory(grid, time, frames)
    diagnostics = {
        "cfl_ratio": cfl,
        "linear_residual": lin,
        "substeps": subs,
        "max_abs_du": max_du,
        "f_clipped_cells": clipped_total,
        "backend": backend,
    }
    return HJSolution(problem=problem, u=traj, diagnostics=diagnostics)


def residual_classical(problem: HJProblem, u: Trajectory) -> Trajectory:
    """Pointwise strong-form residual at interior time nodes.

    Uses the centered time difference, the centered elliptic stencil and
    the closed-form Hamiltonian on the centered gradient, so smooth exact
    solutions produce O(h^2 + dt^2) residuals.
    """
    time = u.time
    if time.n_steps < 3:
        raise ValidationError("need at least 3 steps for interior residuals")
    grid = u.grid
    dt = time.dt
    res = np.empty((time.n_steps - 1,) + grid.shape)
    for k in range(1, time.n_steps):
        dudt = (u.frames[k + 1] - u.frames[k - 1]) / (2.0 * dt)
        fk = ScalarField(grid, u.frames[k])
        diff = elliptic_apply(problem.a_at(k), fk).values
        if problem.ham is None:
            hterm = 0.0
        else:
            hterm = problem.ham.eval_H(gradient_central(fk).values)
        res[k - 1] = dudt - diff + hterm - problem.f_values_at(k)
    inner = TimeGrid(time.t0 + dt, time.t1 - dt, time.n_steps - 2)
    return Trajectory(grid, inner, res)
