"""Gradient-estimate machinery: seminorms, budgets, and exponent gates.

Each operation mirrors one rung of the regularity ladder: the space-time
L^gamma gradient budget obtained by integrating the equation against the
growth certificate, the weighted Lipschitz bound assembled from an adjoint
Dirac sweep, the interpolation inequality that closes the loop between the
two, the Bernstein computation for z = |Du|^2/2, and the pure arithmetic
gates on (gamma, d, q, P, Q) deciding which theorem hypotheses a
configuration satisfies.

Empirical constants are reported, never asserted against fixed thresholds:
the only checkable contracts are sweep-boundedness, sign identities, and
the exact finite Holder inequalities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BadExponent,
    ExponentRangeWarning,
    MissingSweep,
    RoughData,
    ValidationError,
)
from .grid import (
    CoeffField,
    ScalarField,
    TimeGrid,
    TorusGrid,
    Trajectory,
    _trapezoid_weights,
    ellipticity_certificate,
    gradient_central,
    lp_space_norm,
    lq_spacetime_norm,
)
from .duality import energy_functional, grad_rho_norm, _align_window
from .hj_solver import lipschitz_seminorm_values

__all__ = [
    "LipBoundConfig",
    "ExponentGate",
    "InterpolationCheck",
    "lipschitz_seminorm",
    "lgamma_gradient_bound",
    "stimalip_bound_terms",
    "interpolation_step",
    "bernstein_audit",
    "exponent_gate",
    "embedding_exponent",
]


def lipschitz_seminorm(u_t: ScalarField) -> float:
    """Discrete W^{1,inf} seminorm: largest one-sided quotient magnitude."""
    return lipschitz_seminorm_values(u_t.values, u_t.grid)


@dataclass(frozen=True)
class LipBoundConfig:
    """Time cutoff ramp: 0 on [0, t1/2], cubic smoothstep up to 1 at t1.

    The ramp is the C^1 profile 3 theta^2 - 2 theta^3 on [t1/2, t1], so
    sup |eta'| = 3/t1 exactly (attained at the midpoint).
    """

    t1: float

    def __post_init__(self):
        if self.t1 <= 0.0:
            raise ValidationError(f"t1 must be positive, got {self.t1}")

    @property
    def sup_eta_prime(self) -> float:
        return 3.0 / self.t1

    def eta(self, t):
        t = np.asarray(t, dtype=float)
        theta = np.clip((2.0 * t - self.t1) / self.t1, 0.0, 1.0)
        out = theta * theta * (3.0 - 2.0 * theta)
        return float(out) if out.ndim == 0 else out

    def eta_values(self, time: TimeGrid) -> np.ndarray:
        return self.eta(time.times())


def _du_magnitude_frames(u: Trajectory) -> np.ndarray:
    mags = np.empty_like(u.frames)
    for k in range(u.frames.shape[0]):
        du = gradient_central(ScalarField(u.grid, u.frames[k]))
        mags[k] = np.sqrt(np.sum(du.values**2, axis=-1))
    return mags


def _coeff_gradient_sup(a: CoeffField, order: int = 1) -> float:
    """sup over components of |D^(order) a| via repeated central gradients."""
    if a.is_constant():
        return 0.0
    out = 0.0
    d = a.grid.d
    for i in range(d):
        for j in range(d):
            comp = ScalarField(a.grid, a.values[..., i, j])
            g1 = gradient_central(comp).values
            if order == 1:
                out = max(out, float(np.max(np.abs(g1))))
            else:
                for k in range(d):
                    g2 = gradient_central(ScalarField(a.grid, g1[..., k])).values
                    out = max(out, float(np.max(np.abs(g2))))
    return out


def lgamma_gradient_bound(u: Trajectory, ham, f, a: CoeffField, gamma: Optional[float] = None):
    """Space-time L^gamma gradient norm against its data-driven budget.

    lhs is ||Du||_{L^gamma(Q)}.  The budget integrates the equation against
    the growth certificate: |Du|^gamma <= C_H (H + C_H), and H is eliminated
    through the equation, leaving endpoint, source, coefficient-derivative,
    and constant addends.  Every addend is returned separately; rhs is the
    budget^(1/gamma).  With ham None only lhs is meaningful (rhs = inf).
    """
    gamma = ham.gamma if ham is not None else (2.0 if gamma is None else gamma)
    mags = _du_magnitude_frames(u)
    lhs = lq_spacetime_norm(Trajectory(u.grid, u.time, mags), gamma)
    if ham is None:
        return lhs, math.inf, {}
    cert = ham.certify_bounds()
    c_h = cert.C_H
    span = u.time.t1 - u.time.t0
    cell = u.grid.cell_volume
    w = _trapezoid_weights(u.time)
    f_l1 = 0.0
    u_l1 = 0.0
    for k in range(u.time.n_steps + 1):
        if f is not None:
            fv = f.values if isinstance(f, ScalarField) else f.frames[k]
            f_l1 += w[k] * cell * float(np.sum(np.abs(fv)))
        u_l1 += w[k] * cell * float(np.sum(np.abs(u.frames[k])))
    endpoints = cell * float(np.sum(np.abs(u.frames[0])) + np.sum(np.abs(u.frames[-1])))
    addends = {
        "f_term": c_h * f_l1,
        "endpoint_term": c_h * endpoints,
        "da_term": c_h * _coeff_gradient_sup(a, order=2) * u_l1,
        "constant_term": c_h * c_h * span,
    }
    rhs = float(sum(addends.values())) ** (1.0 / gamma)
    return lhs, rhs, addends


def stimalip_bound_terms(
    u: Trajectory,
    rho_sweep,
    ham,
    f,
    a: CoeffField,
    config: LipBoundConfig,
    q: Optional[float] = None,
    certificate=None,
) -> dict:
    """Every ingredient of the weighted Lipschitz bound, plus proof addends.

    Main inequality audited:  eta(tau) ||Du(tau)||_inf against
    ||Da||_inf ||eta Du||_{L^m} + sup|eta'| + 1  with  m = (d+2)(gamma-1);
    the empirical constant is their ratio.  The second group evaluates the
    per-density addends of the proof's pairing step on each sweep member:
    the coefficient term ||D^2 a||_inf, the running-cost term
    C_L (energy + (tau - s)), the source term ||f||_{L^q} ||D rho||_{L^q'},
    and the ramp term sup|eta'|.
    """
    if not rho_sweep:
        raise MissingSweep("the bound needs at least one adjoint density")
    grid, time = u.grid, u.time
    d = grid.d
    gamma = ham.gamma
    m = (d + 2.0) * (gamma - 1.0)
    if q is None:
        q = 2.0 * (d + 2.0)
    q_prime = q / (q - 1.0)

    eta_nodes = config.eta_values(time)
    lip_terminal = lipschitz_seminorm_values(u.frames[-1], grid)
    lhs = float(eta_nodes[-1]) * lip_terminal

    mags = _du_magnitude_frames(u)
    eta_du = Trajectory(grid, time, eta_nodes[:, None] * mags if d == 1
                        else eta_nodes[:, None, None] * mags)
    eta_du_m = lq_spacetime_norm(eta_du, max(m, 1.0))
    da_sup = _coeff_gradient_sup(a, order=1)
    rhs_main = da_sup * eta_du_m + config.sup_eta_prime + 1.0

    cert = certificate if certificate is not None else ham.certify_bounds()
    if f is None:
        f_q = 0.0
    elif isinstance(f, ScalarField):
        span = time.t1 - time.t0
        f_q = span ** (1.0 / q) * lp_space_norm(f, q)
    else:
        f_q = lq_spacetime_norm(f, q)

    member_terms = []
    for rho in rho_sweep:
        traj = rho.rho if hasattr(rho, "rho") else rho
        span = traj.time.t1 - traj.time.t0
        energy = energy_functional(u, traj, ham)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExponentRangeWarning)
            drho = grad_rho_norm(traj, q_prime)
        member_terms.append(
            {
                "dxl_term": cert.C_L * (energy + span),
                "f_term": f_q * drho,
                "energy": energy,
                "grad_rho_norm": drho,
            }
        )

    addends = {
        "a_term": _coeff_gradient_sup(a, order=2),
        "dxl_term": max(t["dxl_term"] for t in member_terms),
        "f_term": max(t["f_term"] for t in member_terms),
        "eta_term": config.sup_eta_prime,
    }
    return {
        "lhs": lhs,
        "lipschitz_terminal": lip_terminal,
        "eta_at_tau": float(eta_nodes[-1]),
        "da_sup": da_sup,
        "eta_du_norm": eta_du_m,
        "m_exponent": m,
        "sup_eta_prime": config.sup_eta_prime,
        "rhs_main": rhs_main,
        "empirical_constant": lhs / rhs_main,
        "addends": addends,
        "members": member_terms,
        "n_members": len(member_terms),
        "q": q,
        "q_prime": q_prime,
        "C_L": cert.C_L,
        "C_H": cert.C_H,
    }


@dataclass
class InterpolationCheck:
    lhs: float
    rhs: float
    m_exponent: float
    theta: float
    trivial_branch: bool
    holds: bool


def interpolation_step(g: Trajectory, gamma: float, d: int) -> InterpolationCheck:
    """Finite Holder interpolation of L^m between L^gamma and L^inf.

    m = (d+2)(gamma-1), theta = gamma/m.  When m <= gamma the containment
    is immediate on the finite cylinder and the trivial-branch flag is set.
    """
    if gamma <= 1.0:
        raise BadExponent(f"gamma={gamma} must exceed 1")
    m = (d + 2.0) * (gamma - 1.0)
    if m <= gamma:
        return InterpolationCheck(
            lhs=0.0, rhs=0.0, m_exponent=m, theta=1.0, trivial_branch=True, holds=True
        )
    theta = gamma / m
    lhs = lq_spacetime_norm(g, m)
    rhs = lq_spacetime_norm(g, math.inf) ** (1.0 - theta) * lq_spacetime_norm(
        g, gamma
    ) ** theta
    return InterpolationCheck(
        lhs=lhs,
        rhs=rhs,
        m_exponent=m,
        theta=theta,
        trivial_branch=False,
        holds=bool(lhs <= rhs * (1.0 + 1e-12)),
    )


def _shared_hessian(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Hessian as central-of-central quotients, shape (*shape, d, d).

    Built from the same first-difference map on both indices so that the
    A = I ellipticity comparison is an algebraic identity, not merely a
    consistent approximation.
    """
    d = grid.d
    du = gradient_central(ScalarField(grid, values)).values
    out = np.empty(grid.shape + (d, d))
    for k in range(d):
        out[..., k, :] = gradient_central(ScalarField(grid, du[..., k])).values
    return out


def bernstein_audit(
    u: Trajectory,
    rho: Trajectory,
    ham,
    f,
    a: CoeffField,
    spike_threshold: float = 1e4,
) -> dict:
    """Audit of the z = |Du|^2/2 computation on smooth-data runs.

    Reports (i) the pointwise residual of the z-equation at interior time
    nodes, (ii) the gap in the ellipticity comparison
    sum_k A D(d_k u) . D(d_k u) >= lambda Tr((D^2 u)^2) with the shared
    discrete Hessian (exactly zero when A = I), and (iii) both sides of the
    integrated inequality over rho's window with each source addend.
    """
    grid, time = u.grid, u.time
    d = grid.d
    lam = ellipticity_certificate(a)
    if not a.is_constant():
        da = np.empty(grid.shape + (d, d, d))
        for i in range(d):
            for j in range(d):
                da[..., i, j, :] = gradient_central(
                    ScalarField(grid, a.values[..., i, j])
                ).values
    else:
        da = None

    k0 = _align_window(u, rho)
    n_win = rho.time.n_steps
    cell = grid.cell_volume
    dt = time.dt

    # frame-wise pieces reused by (i)-(iii)
    z_frames = np.empty((n_win + 1,) + grid.shape)
    quad_frames = np.empty_like(z_frames)    # sum_k A D(d_k u) . D(d_k u)
    tr_sq_frames = np.empty_like(z_frames)   # Tr((D^2 u)^2), shared Hessian
    dxh_du_frames = np.empty_like(z_frames)  # D_x H . Du
    df_du_frames = np.empty_like(z_frames)   # Df . Du
    aderiv_frames = np.empty_like(z_frames)  # sum_k d_k u Tr(d_k A D^2 u)
    gap_min = math.inf
    for j in range(n_win + 1):
        frame = u.frames[k0 + j]
        du = gradient_central(ScalarField(grid, frame)).values
        hess = _shared_hessian(frame, grid)
        if float(np.max(np.abs(hess))) > spike_threshold:
            raise RoughData(
                f"discrete Hessian magnitude exceeds {spike_threshold:.3g}; "
                "the audit is only meaningful on smooth-data runs"
            )
        z_frames[j] = 0.5 * np.sum(du**2, axis=-1)
        amat = a.values if not a.is_constant() else a.constant_matrix()
        quad = np.einsum("...ij,...ki,...kj->...", np.broadcast_to(
            amat, grid.shape + (d, d)), hess, hess)
        quad_frames[j] = quad
        tr_sq_frames[j] = np.sum(hess**2, axis=(-2, -1))
        gap_min = min(gap_min, float(np.min(quad - lam * tr_sq_frames[j])))
        dxh = ham.eval_DxH(du) if ham is not None else np.zeros(grid.shape + (d,))
        dxh_du_frames[j] = np.sum(dxh * du, axis=-1)
        if f is None:
            df_du_frames[j] = 0.0
        else:
            fv = f.values if isinstance(f, ScalarField) else f.frames[k0 + j]
            df = gradient_central(ScalarField(grid, fv)).values
            df_du_frames[j] = np.sum(df * du, axis=-1)
        if da is None:
            aderiv_frames[j] = 0.0
        else:
            aderiv_frames[j] = np.einsum("...k,...ijk,...ij->...", du, da, hess)

    # (i) z-equation residual on interior nodes of the window
    residual_sup = 0.0
    if n_win >= 2:
        for j in range(1, n_win):
            frame = u.frames[k0 + j]
            du = gradient_central(ScalarField(grid, frame)).values
            z_t = (z_frames[j + 1] - z_frames[j - 1]) / (2.0 * dt)
            zf = ScalarField(grid, z_frames[j])
            hz = _shared_hessian(z_frames[j], grid)
            amat = a.values if not a.is_constant() else a.constant_matrix()
            tr_a_hz = np.einsum(
                "...ij,...ij->...", np.broadcast_to(amat, grid.shape + (d, d)), hz
            )
            dz = gradient_central(zf).values
            dph = (
                ham.eval_DpH(du) if ham is not None else np.zeros(grid.shape + (d,))
            )
            res = (
                z_t
                - tr_a_hz
                + quad_frames[j]
                + np.sum(dph * dz, axis=-1)
                + dxh_du_frames[j]
                - aderiv_frames[j]
                - df_du_frames[j]
            )
            residual_sup = max(residual_sup, float(np.max(np.abs(res))))

    # (iii) integrated inequality over the window
    w = _trapezoid_weights(rho.time)

    def pair(frames):
        return float(
            np.sum(w * np.array([
                cell * np.sum(frames[j] * rho.frames[j]) for j in range(n_win + 1)
            ]))
        )

    z_tau = cell * float(np.sum(z_frames[-1] * rho.frames[-1]))
    z_s = cell * float(np.sum(z_frames[0] * rho.frames[0]))
    tr_term = lam * pair(tr_sq_frames)
    dxh_term = pair(np.abs(dxh_du_frames) if ham is not None else dxh_du_frames * 0)

    # source term split by parts: Df.Du rho = -f Tr(D^2 u) rho - f Du . D rho
    i1 = 0.0
    i2 = 0.0
    if f is not None:
        for j in range(n_win + 1):
            fv = f.values if isinstance(f, ScalarField) else f.frames[k0 + j]
            frame = u.frames[k0 + j]
            du = gradient_central(ScalarField(grid, frame)).values
            hess_tr = np.trace(
                _shared_hessian(frame, grid), axis1=-2, axis2=-1
            )
            drho = gradient_central(ScalarField(grid, rho.frames[j])).values
            i1 += w[j] * cell * float(np.sum(np.abs(fv * hess_tr * rho.frames[j])))
            i2 += w[j] * cell * float(np.sum(np.abs(fv * np.sum(du * drho, axis=-1))))
    aderiv_term = pair(np.abs(aderiv_frames))

    lhs_int = z_tau + tr_term
    rhs_int = z_s + dxh_term + i1 + i2 + aderiv_term
    return {
        "z_residual_sup": residual_sup,
        "ellipticity_gap_min": gap_min,
        "lambda": lam,
        "integrated_lhs": lhs_int,
        "integrated_rhs": rhs_int,
        "integrated_slack": rhs_int - lhs_int,
        "addends": {
            "z_terminal": z_tau,
            "z_start": z_s,
            "trace_term": tr_term,
            "dxh_term": dxh_term,
            "f_term_i1": i1,
            "f_term_i2": i2,
            "aderiv_term": aderiv_term,
        },
    }


@dataclass(frozen=True)
class ExponentGate:
    """Arithmetic verdicts for the theorem hypotheses at given exponents."""

    gamma: float
    gamma_prime: float
    d: int
    q: float
    P: float
    Q: float
    thm1_f_condition: bool
    aronson_serrin: bool
    thm3_apriori_condition: bool
    m_exponent: float
    r_prime: float
    embedding_p: Optional[float] = None


def thm3_threshold(gamma: float, d: int) -> float:
    """Integrability threshold min{d+2, (d+2)/(2(gamma'-1))}."""
    gp = gamma / (gamma - 1.0)
    return min(d + 2.0, (d + 2.0) / (2.0 * (gp - 1.0)))


def embedding_exponent(sigma: float, d: int) -> float:
    """Parabolic embedding exponent p with 1/p = 1/sigma - 1/(d+2)."""
    if sigma <= 0.0:
        raise BadExponent(f"sigma={sigma} must be positive")
    inv = 1.0 / sigma - 1.0 / (d + 2.0)
    return math.inf if inv <= 0.0 else 1.0 / inv


def exponent_gate(gamma: float, d: int, q: float, P: float, Q: float,
                  sigma: Optional[float] = None) -> ExponentGate:
    """Pure arithmetic evaluation of every hypothesis gate.

    thm1_f_condition: q > d+2 and q >= (d+2)/(gamma'-1)
    aronson_serrin:   d/(2P) + 1/Q <= 1/2 with P >= d, Q >= 2
    thm3_apriori:     q > min{d+2, (d+2)/(2(gamma'-1))}
    """
    if gamma <= 1.0:
        raise BadExponent(f"gamma={gamma} must exceed 1")
    if d < 1:
        raise BadExponent(f"d={d} must be at least 1")
    for name, val in (("q", q), ("P", P), ("Q", Q)):
        if val < 1.0:
            raise BadExponent(f"{name}={val} must be at least 1")
    gp = gamma / (gamma - 1.0)
    eps = 1e-12
    thm1 = (q > d + 2.0 + eps) and (q >= (d + 2.0) / (gp - 1.0) - eps)
    aronson = (P >= d - eps) and (Q >= 2.0 - eps) and (
        d / (2.0 * P) + 1.0 / Q <= 0.5 + eps
    )
    thm3 = q > thm3_threshold(gamma, d) + eps
    return ExponentGate(
        gamma=gamma,
        gamma_prime=gp,
        d=d,
        q=q,
        P=P,
        Q=Q,
        thm1_f_condition=thm1,
        aronson_serrin=aronson,
        thm3_apriori_condition=thm3,
        m_exponent=(d + 2.0) * (gamma - 1.0),
        r_prime=1.0 + (d + 2.0) / q,
        embedding_p=None if sigma is None else embedding_exponent(sigma, d),
    )
