"""Sharpness constructions for the regularity thresholds.

Three explicit fields, each designed to sit exactly on one side of an
integrability gate:

* a stationary profile with a power cusp at the origin whose transported
  drift magnitude is L^P integrable iff P < d,
* a forced self-similar solution built from a radial ODE profile, whose
  sup norm blows up at t = 0 while the forcing stays bounded,
* a heat-kernel convolution whose forcing is L^q integrable exactly up
  to the borderline exponent q = d + 2 and whose gradient sup norm
  climbs without bound (an iterated logarithm) at the horizon.

All samplers are pure and radial; grid exports produce the standard
ScalarField / Trajectory containers so the solver and estimate layers
consume them unchanged.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    BadExponent,
    BadGamma,
    BlowUp,
    DimensionUnsupported,
    QuadratureBudgetExceeded,
    TableRangeWarning,
    ValidationError,
)
from .grid import ScalarField, TimeGrid, TorusGrid, Trajectory, fit_loglog_slope

__all__ = [
    "CutoffProfile",
    "StationaryCE",
    "ShootResult",
    "shoot_ode",
    "find_critical_alpha0",
    "SelfSimilarCE",
    "HeatForcedCE",
    "LqScanResult",
    "sigma_exponent",
    "self_similar_window",
]


# ---------------------------------------------------------------------------
# radial cutoff


@dataclass(frozen=True)
class CutoffProfile:
    """C2 radial bump: identically 1 inside ``inner_radius``, 0 outside
    ``outer_radius``, quintic smoothstep in between.

    The profile and its first two derivatives are continuous; the third
    derivative jumps at the two junction radii.  C2 is enough for every
    centered stencil used downstream, which is why the transition is a
    polynomial rather than an exponential glue.
    """

    inner_radius: float = 0.25
    outer_radius: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.inner_radius < self.outer_radius):
            raise ValidationError(
                f"need 0 < inner < outer, got ({self.inner_radius}, {self.outer_radius})"
            )

    @property
    def width(self) -> float:
        return self.outer_radius - self.inner_radius

    def _theta(self, r):
        r = np.asarray(r, dtype=float)
        return np.clip((r - self.inner_radius) / self.width, 0.0, 1.0)

    def value(self, r):
        th = self._theta(r)
        return 1.0 - th**3 * (10.0 + th * (6.0 * th - 15.0))

    def deriv(self, r):
        th = self._theta(r)
        return -30.0 * th**2 * (1.0 - th) ** 2 / self.width

    def second(self, r):
        th = self._theta(r)
        return -60.0 * th * (1.0 - th) * (1.0 - 2.0 * th) / self.width**2


def _radius(grid: TorusGrid) -> np.ndarray:
    c = grid.centered_coords()
    return np.sqrt(sum(x * x for x in c))


# ---------------------------------------------------------------------------
# stationary cusp construction


@dataclass(frozen=True)
class StationaryCE:
    """Stationary field c psi(|x|) |x|^alpha with gradient-power gamma > 2.

    The exponents are tuned so the diffusion and the gradient power cancel
    exactly inside the inner ball: alpha (gamma - 1) = gamma - 2 makes both
    terms scale like |x|^(-gamma') and the amplitude c equates their
    coefficients.  The forcing that makes the field an exact steady state
    is therefore supported on the cutoff annulus alone.
    """

    gamma: float
    d: int
    cutoff: CutoffProfile = field(default_factory=CutoffProfile)

    def __post_init__(self):
        if self.gamma <= 2.0:
            raise BadGamma(f"stationary construction needs gamma > 2, got {self.gamma}")
        if self.d < 2:
            raise DimensionUnsupported(f"stationary construction needs d >= 2, got {self.d}")

    @property
    def alpha(self) -> float:
        return (self.gamma - 2.0) / (self.gamma - 1.0)

    @property
    def c(self) -> float:
        a = self.alpha
        return (self.d + a - 2.0) ** (1.0 / (self.gamma - 1.0)) / a

    # radial closed forms; r = 0 maps to the honest limits (0 for the value,
    # +inf for the derivative magnitudes).

    def u1_radial(self, r):
        r = np.asarray(r, dtype=float)
        return self.c * self.cutoff.value(r) * r**self.alpha

    def du1_radial(self, r):
        r = np.asarray(r, dtype=float)
        a = self.alpha
        safe = np.where(r > 0.0, r, 1.0)
        out = self.c * (
            self.cutoff.deriv(r) * safe**a + a * self.cutoff.value(r) * safe ** (a - 1.0)
        )
        return np.where(r > 0.0, out, np.inf)

    def f1_radial(self, r):
        """Forcing -Lap(u1) + |Du1|^gamma, radial closed form."""
        r = np.asarray(r, dtype=float)
        a, cc, d = self.alpha, self.c, self.d
        psi = self.cutoff.value(r)
        dpsi = self.cutoff.deriv(r)
        ddpsi = self.cutoff.second(r)
        safe = np.where(r > 0.0, r, 1.0)
        dphi = cc * (dpsi * safe**a + a * psi * safe ** (a - 1.0))
        lap = cc * (
            ddpsi * safe**a
            + (2.0 * a + d - 1.0) * dpsi * safe ** (a - 1.0)
            + a * (a + d - 2.0) * psi * safe ** (a - 2.0)
        )
        out = -lap + np.abs(dphi) ** self.gamma
        return np.where(r > 0.0, out, np.inf)

    def dph_magnitude_radial(self, r):
        """|D_p H(Du1)| = gamma |Du1|^(gamma-1), which scales like 1/r."""
        return self.gamma * np.abs(self.du1_radial(r)) ** (self.gamma - 1.0)

    # point samplers on trailing-axis coordinates

    def u1_eval(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValidationError(f"points must have trailing dimension {self.d}")
        return self.u1_radial(np.sqrt(np.sum(x * x, axis=-1)))

    def f1_eval(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValidationError(f"points must have trailing dimension {self.d}")
        return self.f1_radial(np.sqrt(np.sum(x * x, axis=-1)))

    # grid exports and refinement scans

    def _require_grid(self, grid: TorusGrid):
        if grid.d != self.d:
            raise DimensionUnsupported(
                f"construction has d={self.d}, grid has d={grid.d}"
            )

    def u1_field(self, grid: TorusGrid) -> ScalarField:
        self._require_grid(grid)
        return ScalarField(grid, self.u1_radial(_radius(grid)))

    def f1_field(self, grid: TorusGrid) -> ScalarField:
        self._require_grid(grid)
        vals = self.f1_radial(_radius(grid))
        return ScalarField(grid, np.where(np.isfinite(vals), vals, 0.0))

    def f1_annulus_bound(self, n_samples: int = 4001) -> float:
        rs = np.linspace(self.cutoff.inner_radius, self.cutoff.outer_radius, n_samples)
        return float(np.max(np.abs(self.f1_radial(rs))))

    def lp_scan(self, p: float, ladder=(64, 128, 256), radius: float = 0.125) -> dict:
        """Lattice quadrature of |D_p H(Du1)|^P over the punctured ball.

        The center cell is excluded: the integrand is +inf there and the
        cell carries measure h^d, so its inclusion is ill posed on the
        lattice.  Divergence shows up as growth of the partial sums under
        refinement instead.
        """
        if p <= 0:
            raise BadExponent(f"need P > 0, got {p}")
        if self.d > 2:
            raise DimensionUnsupported("lattice scans need d <= 2")
        if len(ladder) < 3:
            raise ValidationError("scan ladder needs at least 3 resolutions")
        values = []
        hs = []
        for n in ladder:
            grid = TorusGrid(self.d, int(n))
            r = _radius(grid)
            mask = (r > 0.0) & (r <= radius)
            vals = self.dph_magnitude_radial(np.where(mask, r, 1.0))
            values.append(float(np.sum(vals[mask] ** p) * grid.cell_volume))
            hs.append(grid.h)
        # the partial sums carry a large resolution-independent offset, so
        # the verdict reads the refinement increments instead: missing mass
        # h^(d-P) shrinking for P < d, fresh mass h^(d-P) piling up for P > d
        increments = np.abs(np.diff(values))
        inc_slope = fit_loglog_slope(hs[1:], increments)
        if inc_slope >= 0.2:
            verdict = "convergent"
        elif inc_slope <= -0.2:
            verdict = "divergent"
        else:
            verdict = "marginal"
        return {
            "p": p,
            "ladder": list(ladder),
            "values": values,
            "value_slope": fit_loglog_slope(hs, values),
            "increment_slope": inc_slope,
            "verdict": verdict,
        }

    def residual_refinement(self, ladder=(64, 128, 256), r_lo: float = 1.0 / 16, r_hi: float = 1.0 / 8) -> dict:
        """Discrete residual -Lap_h u1 + |D_c u1|^gamma - f1 on an annulus.

        The annulus keeps a fixed distance from the cusp, so the centered
        stencils converge; the rate is degraded below 2 because the
        fourth derivative grows like r^(alpha - 4) toward the origin.
        """
        from .grid import elliptic_apply, gradient_central, isotropic_coeff

        errs = []
        hs = []
        for n in ladder:
            grid = TorusGrid(self.d, int(n))
            u = self.u1_field(grid)
            lap = elliptic_apply(isotropic_coeff(grid), u).values
            g = gradient_central(u).values
            gnorm = np.sqrt(np.sum(g * g, axis=-1))
            resid = -lap + gnorm**self.gamma - self.f1_radial(_radius(grid))
            r = _radius(grid)
            mask = (r > r_lo) & (r < r_hi)
            errs.append(float(np.max(np.abs(resid[mask]))))
            hs.append(grid.h)
        return {"ladder": list(ladder), "errors": errs, "slope": fit_loglog_slope(hs, errs)}


# ---------------------------------------------------------------------------
# radial profile ODE and shooting


def sigma_exponent(gamma: float) -> float:
    """Self-similar decay exponent (2 - gamma) / (2 (gamma - 1))."""
    if not (1.0 < gamma < 2.0):
        raise BadGamma(f"self-similar exponent needs gamma in (1, 2), got {gamma}")
    return (2.0 - gamma) / (2.0 * (gamma - 1.0))


def self_similar_window(d: int) -> float:
    """Lower gamma threshold 1 + 2/(d+2) for the vanishing L2 trace."""
    return 1.0 + 2.0 / (d + 2.0)


_SERIES_START = 1e-4
_BLOWUP_CAP = 1e6
_GAUSS5_NODES = np.array(
    [-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640]
)
_GAUSS5_WEIGHTS = np.array(
    [0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665, 0.2369268850561891]
)


@dataclass(frozen=True)
class ShootResult:
    """One integration of the radial profile equation.

    classification is one of "decaying" (no sign change up to Y_max),
    "diverging" (exactly one crossing, the profile leaves the decay
    funnel), "oscillating" (several crossings).  defect_max is the
    largest integral-form defect of the accepted steps, checked with a
    5-node Gauss rule on the dense output.
    """

    gamma: float
    d: int
    alpha0: float
    coefficient: float
    Y_max: float
    ys: np.ndarray
    U: np.ndarray
    Up: np.ndarray
    classification: str
    crossings: int
    defect_max: float
    max_abs: float
    drop_gradient_term: bool = False

    def Upp(self) -> np.ndarray:
        return _profile_rhs_vec(
            self.ys, self.U, self.Up, self.gamma, self.d, self.coefficient, self.drop_gradient_term
        )

    def tail_weight(self, y_from: float = None) -> np.ndarray:
        """(|U| + |U'| + |U''|) e^y on the tabulated tail."""
        y_from = self.Y_max - 3.0 if y_from is None else y_from
        mask = self.ys >= y_from
        w = (np.abs(self.U) + np.abs(self.Up) + np.abs(self.Upp())) * np.exp(self.ys)
        return w[mask]


def _profile_rhs_vec(y, u, up, gamma, d, coeff, drop_gradient_term):
    grad = 0.0 if drop_gradient_term else np.abs(up) ** gamma
    return -((d - 1.0) / y + 0.5 * y) * up - coeff * u - grad


def shoot_ode(
    gamma: float,
    d: int,
    alpha0: float,
    Y_max: float = 10.0,
    coefficient: float = None,
    rtol: float = 1e-11,
    drop_gradient_term: bool = False,
    n_tab: int = 2001,
) -> ShootResult:
    """Integrate U'' + ((d-1)/y + y/2) U' + coeff*U + |U'|^gamma = 0 from 0.

    The origin is a regular singular point; integration starts from the
    series U = alpha0 (1 - coeff y^2 / (2d)) at y = 1e-4.  The default
    zero-order coefficient is sigma(gamma), the choice that makes the
    self-similar forcing equal the equation residual exactly (see
    SelfSimilarCE).  Raises BlowUp when |U| exceeds 1e6, which signals
    alpha0 far outside the stable window.
    """
    if not (1.0 < gamma < 2.0):
        raise BadGamma(f"profile equation needs gamma in (1, 2), got {gamma}")
    if d < 1:
        raise ValidationError(f"need d >= 1, got {d}")
    if alpha0 < 0.0:
        raise ValidationError(f"need alpha0 >= 0, got {alpha0}")
    coeff = sigma_exponent(gamma) if coefficient is None else float(coefficient)

    y0 = _SERIES_START
    upp0 = -coeff * alpha0 / d
    z0 = np.array([alpha0 + 0.5 * upp0 * y0**2, upp0 * y0])

    def rhs(y, z):
        return np.array(
            [z[1], _profile_rhs_vec(y, z[0], z[1], gamma, d, coeff, drop_gradient_term)]
        )

    def crossing(y, z):
        return z[0]

    crossing.terminal = False

    def guard(y, z):
        return _BLOWUP_CAP - abs(z[0])

    guard.terminal = True
    guard.direction = -1

    def slope_guard(y, z):
        # for gamma < 2 the slope blows up in finite y strictly before the
        # profile does; cap it so the step size never underflows
        return _BLOWUP_CAP - abs(z[1])

    slope_guard.terminal = True
    slope_guard.direction = -1

    sol = solve_ivp(
        rhs,
        (y0, Y_max),
        z0,
        method="RK45",
        rtol=rtol,
        atol=1e-14,
        dense_output=True,
        events=[crossing, guard, slope_guard],
    )
    blew_up = (
        sol.t_events[1].size > 0
        or sol.t_events[2].size > 0
        or np.max(np.abs(sol.y)) >= _BLOWUP_CAP
    )
    if not sol.success and not blew_up:
        if np.max(np.abs(sol.y[:, -1])) > 1e3:
            blew_up = True
        else:
            raise ValidationError(f"profile integration failed: {sol.message}")
    if blew_up:
        raise BlowUp(
            f"profile or slope exceeded {_BLOWUP_CAP:.0e} at alpha0={alpha0}; "
            "outside the stable window"
        )

    # integral-form defect of each accepted step, on the dense output
    defect_max = 0.0
    ts = sol.t
    for i in range(len(ts) - 1):
        a, b = ts[i], ts[i + 1]
        half = 0.5 * (b - a)
        nodes = 0.5 * (a + b) + half * _GAUSS5_NODES
        zn = sol.sol(nodes)
        int_up = half * np.sum(_GAUSS5_WEIGHTS * zn[1])
        int_rhs = half * np.sum(
            _GAUSS5_WEIGHTS
            * _profile_rhs_vec(nodes, zn[0], zn[1], gamma, d, coeff, drop_gradient_term)
        )
        za, zb = sol.sol(a), sol.sol(b)
        defect = abs(zb[0] - za[0] - int_up) + abs(zb[1] - za[1] - int_rhs)
        defect_max = max(defect_max, defect)

    y_end = ts[-1]
    ys = np.linspace(y0, y_end, n_tab)
    tab = sol.sol(ys)
    crossings = int(sol.t_events[0].size)
    if alpha0 == 0.0 or crossings == 0:
        classification = "decaying"
    elif crossings == 1:
        classification = "diverging"
    else:
        classification = "oscillating"
    return ShootResult(
        gamma=gamma,
        d=d,
        alpha0=alpha0,
        coefficient=coeff,
        Y_max=Y_max,
        ys=ys,
        U=tab[0],
        Up=tab[1],
        classification=classification,
        crossings=crossings,
        defect_max=defect_max,
        max_abs=float(np.max(np.abs(tab[0]))),
        drop_gradient_term=drop_gradient_term,
    )


DEFAULT_BRACKET = tuple(2.0 ** np.arange(-6, 5))


def find_critical_alpha0(
    gamma: float,
    d: int,
    Y_max: float = 10.0,
    coefficient: float = None,
    iters: int = 60,
    bracket=DEFAULT_BRACKET,
) -> ShootResult:
    """Bisect the shooting parameter between decay and divergence.

    Small alpha0 stays positive (the linearization dominates and its
    solution from this initial data carries the slowly decaying branch);
    large alpha0 lets the gradient term push the profile through zero.
    The bisection limit is the borderline profile with the Gaussian-type
    tail; 60 halvings pin it far below the tabulation resolution.
    """

    def side(a0):
        try:
            return shoot_ode(gamma, d, a0, Y_max, coefficient).classification == "decaying"
        except BlowUp:
            return False

    lo = None
    hi = None
    for a0 in bracket:
        if side(a0):
            lo = a0
        else:
            hi = a0
            break
    if lo is None or hi is None:
        raise ValidationError(
            f"no decay/divergence bracket for gamma={gamma}, d={d} in {bracket[0]}..{bracket[-1]}"
        )
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if side(mid):
            lo = mid
        else:
            hi = mid
    return shoot_ode(gamma, d, lo, Y_max, coefficient)


# ---------------------------------------------------------------------------
# forced self-similar construction


class SelfSimilarCE:
    """Forced self-similar field -t^(-sigma) U(|x| t^(-1/2)) psi(|x|).

    The radial profile U comes from the critical shooting solution of

        U'' + ((d-1)/y + y/2) U' + sigma U + |U'|^gamma = 0,

    whose zero-order coefficient sigma = (2-gamma)/(2(gamma-1)) is forced
    by requiring the forcing f2 to be exactly the parabolic residual of
    u2: with any other constant the residual picks up an extra unbounded
    multiple of t^(-sigma-1) U inside the inner ball.  (Write-ups of this
    construction sometimes display the profile equation with constant 1
    and a separate small parameter k in the forcing; the two displays are
    only mutually consistent when both constants equal sigma, which is
    what this implementation uses throughout.)

    The L2 norm of u2(., t) vanishes as t -> 0 exactly when gamma exceeds
    1 + 2/(d+2); the constructor enforces that window.
    """

    def __init__(
        self,
        gamma: float,
        d: int,
        cutoff: CutoffProfile = None,
        Y_max: float = 10.0,
        coefficient: float = None,
    ):
        if d < 1:
            raise ValidationError(f"need d >= 1, got {d}")
        if not (self_similar_window(d) < gamma < 2.0):
            raise BadGamma(
                f"self-similar window is ({self_similar_window(d)}, 2) for d={d}, got gamma={gamma}"
            )
        self.gamma = float(gamma)
        self.d = int(d)
        self.cutoff = CutoffProfile() if cutoff is None else cutoff
        self.Y_max = float(Y_max)
        self.sigma = sigma_exponent(gamma)
        self.coefficient = self.sigma if coefficient is None else float(coefficient)
        self.shoot = find_critical_alpha0(gamma, d, Y_max, self.coefficient)
        self.alpha0 = self.shoot.alpha0

        # Hermite tabulation on [0, Y_max]; the y = 0 node comes from the
        # series (U = alpha0, U' = 0), which keeps the spline regular at
        # the singular origin.
        ys = np.concatenate(([0.0], self.shoot.ys))
        U = np.concatenate(([self.alpha0], self.shoot.U))
        Up = np.concatenate(([0.0], self.shoot.Up))
        self._u_spline = CubicHermiteSpline(ys, U, Up)
        upp0 = -self.coefficient * self.alpha0 / self.d
        Upp = np.concatenate(([upp0], self.shoot.Upp()))
        self._up_spline = CubicHermiteSpline(ys, Up, Upp)

        # exponential tail: anchor at the last node where U is solidly
        # above round-off, decay rate from the log-derivative there
        mags = np.abs(self.shoot.U)
        good = np.nonzero(mags >= 1e-12 * np.max(mags))[0]
        ia = good[-1]
        self._tail_anchor = float(self.shoot.ys[ia])
        self._tail_u = float(self.shoot.U[ia])
        self._tail_up = float(self.shoot.Up[ia])
        rate = -self._tail_up / self._tail_u if self._tail_u != 0.0 else 1.0
        self._tail_rate = max(1.0, float(rate))

    def profile(self, y, order: int = 0):
        """Tabulated U (order 0) or U' (order 1); exponential-tail
        extrapolation beyond Y_max with a TableRangeWarning."""
        if order not in (0, 1):
            raise ValidationError("profile orders 0 and 1 are tabulated")
        y = np.asarray(y, dtype=float)
        shape = y.shape
        y = np.atleast_1d(y)
        out = np.empty_like(y)
        inside = y <= self.Y_max
        spline = self._u_spline if order == 0 else self._up_spline
        out[inside] = spline(y[inside])
        if np.any(~inside):
            warnings.warn(
                f"profile queried beyond Y_max={self.Y_max}; exponential-tail extrapolation",
                TableRangeWarning,
            )
            yt = y[~inside]
            decay = np.exp(-self._tail_rate * (yt - self._tail_anchor))
            if order == 0:
                out[~inside] = self._tail_u * decay
            else:
                out[~inside] = -self._tail_rate * self._tail_u * decay
        return out.reshape(shape)

    # radial samplers

    def core_radial(self, r, t: float):
        """Cutoff-free profile -t^(-sigma) U(r t^(-1/2))."""
        if t <= 0.0:
            raise ValidationError(f"need t > 0, got {t}")
        y = np.asarray(r, dtype=float) / math.sqrt(t)
        return -(t ** (-self.sigma)) * self.profile(y, 0)

    def u2_radial(self, r, t: float):
        return self.core_radial(r, t) * self.cutoff.value(r)

    def du2_radial(self, r, t: float):
        """Radial derivative of u2."""
        if t <= 0.0:
            raise ValidationError(f"need t > 0, got {t}")
        r = np.asarray(r, dtype=float)
        rt = math.sqrt(t)
        y = r / rt
        U = self.profile(y, 0)
        Up = self.profile(y, 1)
        return -(t ** (-self.sigma)) * (Up / rt * self.cutoff.value(r) + U * self.cutoff.deriv(r))

    def f2_radial(self, r, t: float):
        """Forcing du2/dt - Lap(u2) + |Du2|^gamma, in closed form.

        The profile equation eliminates the second-derivative bracket, so
        only first-order profile data enters:

            f2 = t^(-sigma-1) { -|U'|^gamma psi + |U' psi + sqrt(t) U psi'|^gamma
                                + 2 sqrt(t) U' psi' + t U psi''
                                + (d-1) (t/r) U psi' }.

        Inside the inner ball psi' = psi'' = 0 and psi = 1, so the braces
        cancel exactly; outside the outer ball every term carries a
        vanished cutoff factor.  The forcing is bounded uniformly as
        t -> 0 even though u2 itself blows up like t^(-sigma).
        """
        if t <= 0.0:
            raise ValidationError(f"need t > 0, got {t}")
        r = np.asarray(r, dtype=float)
        rt = math.sqrt(t)
        y = r / rt
        U = self.profile(y, 0)
        Up = self.profile(y, 1)
        psi = self.cutoff.value(r)
        dpsi = self.cutoff.deriv(r)
        ddpsi = self.cutoff.second(r)
        grad_core = Up * psi + rt * U * dpsi
        curv = np.where(dpsi != 0.0, (self.d - 1.0) * t * U * dpsi / np.where(r > 0, r, 1.0), 0.0)
        braces = (
            -np.abs(Up) ** self.gamma * psi
            + np.abs(grad_core) ** self.gamma
            + 2.0 * rt * Up * dpsi
            + t * U * ddpsi
            + curv
        )
        return t ** (-self.sigma - 1.0) * braces

    def f2_radial_bracket(self, r, t: float):
        """Same forcing through the displayed second-derivative bracket.

        Agrees with f2_radial up to the ODE defect of the tabulated
        profile; kept separate so tests can measure that defect.
        """
        if t <= 0.0:
            raise ValidationError(f"need t > 0, got {t}")
        r = np.asarray(r, dtype=float)
        rt = math.sqrt(t)
        y = np.maximum(np.asarray(r, dtype=float) / rt, 1e-8)
        U = self.profile(y, 0)
        Up = self.profile(y, 1)
        Upp = _profile_rhs_vec(y, U, Up, self.gamma, self.d, self.coefficient, False)
        psi = self.cutoff.value(r)
        dpsi = self.cutoff.deriv(r)
        ddpsi = self.cutoff.second(r)
        bracket = Upp + ((self.d - 1.0) / y + 0.5 * y) * Up + self.coefficient * U
        grad_core = Up * psi + rt * U * dpsi
        curv = np.where(dpsi != 0.0, (self.d - 1.0) * t * U * dpsi / np.where(r > 0, r, 1.0), 0.0)
        braces = (
            bracket * psi
            + np.abs(grad_core) ** self.gamma
            + 2.0 * rt * Up * dpsi
            + t * U * ddpsi
            + curv
        )
        return t ** (-self.sigma - 1.0) * braces

    # point samplers and grid exports

    def _points_radius(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValidationError(f"points must have trailing dimension {self.d}")
        return np.sqrt(np.sum(x * x, axis=-1))

    def u2_eval(self, x, t: float):
        return self.u2_radial(self._points_radius(x), t)

    def f2_eval(self, x, t: float):
        return self.f2_radial(self._points_radius(x), t)

    def _require_grid(self, grid: TorusGrid):
        if grid.d != self.d:
            raise DimensionUnsupported(f"construction has d={self.d}, grid has d={grid.d}")

    def u2_field(self, grid: TorusGrid, t: float) -> ScalarField:
        self._require_grid(grid)
        return ScalarField(grid, self.u2_radial(_radius(grid), t))

    def f2_field(self, grid: TorusGrid, t: float) -> ScalarField:
        self._require_grid(grid)
        return ScalarField(grid, self.f2_radial(_radius(grid), t))

    def u2_trajectory(self, grid: TorusGrid, time: TimeGrid) -> Trajectory:
        self._require_grid(grid)
        if time.t0 <= 0.0:
            raise ValidationError("self-similar field needs t0 > 0")
        r = _radius(grid)
        frames = np.stack([self.u2_radial(r, t) for t in time.times()])
        return Trajectory(grid, time, frames)

    def f2_trajectory(self, grid: TorusGrid, time: TimeGrid) -> Trajectory:
        self._require_grid(grid)
        if time.t0 <= 0.0:
            raise ValidationError("self-similar field needs t0 > 0")
        r = _radius(grid)
        frames = np.stack([self.f2_radial(r, t) for t in time.times()])
        return Trajectory(grid, time, frames)

    def scaling_check(self, r, t: float, lam: float):
        """Both sides of the parabolic scaling identity for the core:
        (lam^2 t)^sigma |core(lam r, lam^2 t)| = t^sigma |core(r, t)|."""
        left = (lam**2 * t) ** self.sigma * np.abs(self.core_radial(lam * np.asarray(r), lam**2 * t))
        right = t**self.sigma * np.abs(self.core_radial(r, t))
        return left, right

    def sup_scaled(self, grid: TorusGrid, t: float) -> float:
        """max |u2(., t)| * t^sigma; constant alpha0 on any grid containing
        the origin cell."""
        return float(np.max(np.abs(self.u2_field(grid, t).values)) * t**self.sigma)

    def l2_norm_radial(self, t: float, n_panels: int = 256) -> float:
        """L2 norm of u2(., t) by dense radial quadrature.

        Lattice quadrature cannot resolve the sqrt(t) profile width once t
        is small, so the trace check integrates the radial closed form
        instead; scales like t^(d/4 - sigma), which vanishes exactly on
        the admissible gamma window.
        """
        area = 2.0 * math.pi ** (0.5 * self.d) / math.gamma(0.5 * self.d)
        edges = np.linspace(0.0, self.cutoff.outer_radius, n_panels + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            r = 0.5 * (a + b) + half * _GL10_NODES
            vals = self.u2_radial(r, t) ** 2 * r ** (self.d - 1)
            total += half * float(np.sum(_GL10_WEIGHTS * vals))
        return math.sqrt(area * total)


# ---------------------------------------------------------------------------
# heat-kernel construction with critically integrable forcing


@dataclass(frozen=True)
class LqScanResult:
    q: float
    epsilons: np.ndarray
    partials: np.ndarray
    increments: np.ndarray
    slope: float
    verdict: str
    chi_lq: float


_GL10_NODES, _GL10_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL20_NODES, _GL20_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _composite_gl(n_panels: int, n_nodes: int, lo: float, hi: float):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    base_n, base_w = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * base_n[None, :]).ravel()
    weights = (half[:, None] * base_w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=8)
def _hermite_cloud_cached(n_hermite: int, d: int):
    nodes, weights = np.polynomial.hermite.hermgauss(n_hermite)
    if d == 1:
        return nodes[:, None], weights
    zx, zy = np.meshgrid(nodes, nodes, indexing="ij")
    return np.stack([zx.ravel(), zy.ravel()], axis=-1), np.outer(weights, weights).ravel()


@lru_cache(maxsize=8)
def _bump_tensor_cached(chi: "CutoffProfile", d: int):
    """Per-axis Legendre nodes over the bump support plus the tensored
    chi * weight table, so the kernel contraction can run axis by axis."""
    nodes, weights = _composite_gl(6, 8, -chi.outer_radius, chi.outer_radius)
    if d == 1:
        return nodes, chi.value(np.abs(nodes)) * weights
    zx, zy = np.meshgrid(nodes, nodes, indexing="ij")
    chi_w = chi.value(np.sqrt(zx**2 + zy**2)) * np.outer(weights, weights)
    return nodes, chi_w


def _panel_nodes(edges: np.ndarray):
    """Gauss-Legendre 10 nodes and weights on each consecutive panel."""
    a = edges[:-1]
    b = edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = (mid[:, None] + half[:, None] * _GL10_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL10_WEIGHTS[None, :]).ravel()
    return nodes, weights


def _split_edges(edges: np.ndarray) -> np.ndarray:
    mids = 0.5 * (edges[:-1] + edges[1:])
    return np.sort(np.concatenate([edges, mids]))


@dataclass(frozen=True)
class HeatForcedCE:
    """Heat-kernel convolution with forcing on the borderline of L^(d+2).

    f3(x,t) = chi(x / sqrt(T-t)) / (sqrt(T-t) log(T-t)) where chi is a
    compactly supported profile in the similarity variable; the horizon
    stays below 1 so the logarithm is negative and the amplitude grows
    without reaching any L^q barrier below d+2.  u3 is the space-time
    convolution with the Gaussian kernel, periodized over a fixed number
    of lattice images.

    The gradient blow-up accumulates at the similarity center x = 0: a
    source window at width scale theta deposits a gradient proportional
    to the smoothed profile slope at the fixed similarity position 0, and
    the window weights dtheta / (theta |log theta|) sum to an iterated
    logarithm.  An even profile centered at 0 cancels that slope by
    symmetry and the accumulation disappears, so the default profile is
    an odd pair of off-axis bumps (weights ``signs`` at positions
    ``offsets`` along the first axis, in similarity units), which keeps
    every past window pushing the gradient at the origin the same way.
    """

    d: int = 1
    T: float = 0.125
    chi: CutoffProfile = field(default_factory=CutoffProfile)
    offsets: tuple = (0.9, -0.9)
    signs: tuple = (1.0, -1.0)
    amplitude: float = 1.0
    n_images: int = 3
    rel_tol: float = 1e-6
    budget: int = 2_000_000_000
    n_hermite: int = 32
    n_legendre: int = 24

    def __post_init__(self):
        if self.d not in (1, 2):
            raise DimensionUnsupported(f"kernel quadrature supports d in {{1, 2}}, got {self.d}")
        if not (0.0 < self.T < 1.0):
            raise ValidationError(f"need horizon in (0, 1), got T={self.T}")
        if len(self.offsets) != len(self.signs) or not self.offsets:
            raise ValidationError("offsets and signs must be equal-length and non-empty")
        # disjoint supports keep the closed-form L^q reduction exact
        for i, ci in enumerate(self.offsets):
            for cj in self.offsets[:i]:
                if abs(ci - cj) < 2.0 * self.chi.outer_radius:
                    raise ValidationError("bump supports overlap; L^q reduction would be wrong")
        # the widest bump (at t = 0) must stay inside one cell, otherwise the
        # forcing would wrap around the torus and the samplers would clip it
        reach = max(abs(c) for c in self.offsets) + self.chi.outer_radius
        if reach * math.sqrt(self.T) > 0.5 + 1e-12:
            raise ValidationError(
                f"support reach {reach:.3f}*sqrt(T) exceeds the half-cell; shrink T or offsets"
            )

    # forcing

    def _chi_sim(self, z_first, z_rest_sq):
        """Signed profile sum at similarity points; z_first is the first
        coordinate, z_rest_sq the squared norm of the remaining ones."""
        out = np.zeros(np.broadcast(z_first, z_rest_sq).shape)
        for c, s in zip(self.offsets, self.signs):
            out = out + s * self.chi.value(np.sqrt((z_first - c) ** 2 + z_rest_sq))
        return out

    def f3_eval(self, x, t: float):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValidationError(f"points must have trailing dimension {self.d}")
        theta = self._theta(t)
        root = math.sqrt(theta)
        rest = np.sum(x[..., 1:] ** 2, axis=-1) / theta
        vals = self._chi_sim(x[..., 0] / root, rest)
        return self.amplitude * vals / (root * math.log(theta))

    def f3_field(self, grid: TorusGrid, t: float) -> ScalarField:
        if grid.d != self.d:
            raise DimensionUnsupported(f"construction has d={self.d}, grid has d={grid.d}")
        pts = np.stack(grid.centered_coords(), axis=-1)
        return ScalarField(grid, self.f3_eval(pts, t))

    def _theta(self, t: float) -> float:
        if not (0.0 < t < self.T):
            raise ValidationError(f"need 0 < t < T={self.T}, got t={t}")
        return self.T - t

    # quadrature backbone -------------------------------------------------

    def _images(self) -> np.ndarray:
        rng = np.arange(-self.n_images, self.n_images + 1, dtype=float)
        if self.d == 1:
            return rng[:, None]
        mx, my = np.meshgrid(rng, rng, indexing="ij")
        return np.stack([mx.ravel(), my.ravel()], axis=-1)

    def _hermite_cloud(self):
        return _hermite_cloud_cached(self.n_hermite, self.d)

    def _inner(self, pts: np.ndarray, tau: float, theta: float, gradient: bool, counter: list):
        """Space integral of the signed profile sum against the kernel (or
        its gradient) at the given points; one pass per bump component."""
        shape = (pts.shape[0], self.d) if gradient else (pts.shape[0],)
        total = np.zeros(shape)
        shift = np.zeros(self.d)
        for c, s in zip(self.offsets, self.signs):
            shift[0] = c * math.sqrt(theta)
            total = total + s * self._inner_single(pts - shift, tau, theta, gradient, counter)
        return total

    def _inner_single(
        self, pts: np.ndarray, tau: float, theta: float, gradient: bool, counter: list
    ):
        """Kernel integral against one centered bump, points pre-shifted.

        Two node placements, switched on the width ratio: kernel-centered
        Gauss-Hermite once the kernel is much narrower than the bump
        (tau <= theta/100, so the bump is flat across the nodes), and
        composite Gauss-Legendre panels over the bump support otherwise
        (the kernel width in bump units is then at least 0.2, resolved by
        the panel rule).  A single-rule switch at tau = theta would leave
        the bump transition unresolved near the crossover.  The Legendre
        branch exploits the tensor structure of both the kernel and the
        node grid: one exp per axis, then a batched contraction against
        the cached chi * weight table.
        """
        images = self._images()
        offsets = pts[:, None, :] + images[None, :, :]  # (B, M, d)
        dist = np.sqrt(np.sum(offsets**2, axis=-1))
        # an image can contribute only if some point sits within the bump
        # support plus the kernel reach (e^-36 at 12 sqrt(tau))
        reach = self.chi.outer_radius * math.sqrt(theta) + 12.0 * math.sqrt(max(tau, 0.0))
        keep = np.nonzero(np.min(dist, axis=0) <= reach)[0]
        if keep.size == 0:
            shape = (pts.shape[0], self.d) if gradient else (pts.shape[0],)
            return np.zeros(shape)
        offsets = offsets[:, keep, :]
        n_b, n_m = offsets.shape[0], offsets.shape[1]

        if tau <= 0.01 * theta:
            # y = x + m - 2 sqrt(tau) zeta, Gaussian weight absorbed
            zeta, wq = self._hermite_cloud()
            w = offsets[:, :, None, :] - 2.0 * math.sqrt(tau) * zeta[None, None, :, :]
            counter[0] += w.shape[0] * w.shape[1] * w.shape[2]
            rw = np.sqrt(np.sum(w**2, axis=-1))
            norm = math.pi ** (-0.5 * self.d)
            if not gradient:
                vals = self.chi.value(rw / math.sqrt(theta))
                return norm * np.sum(vals * wq[None, None, :], axis=(1, 2))
            dchi = self.chi.deriv(rw / math.sqrt(theta)) / math.sqrt(theta)
            unit = w / np.where(rw[..., None] > 0.0, rw[..., None], 1.0)
            return norm * np.sum(dchi[..., None] * unit * wq[None, None, :, None], axis=(1, 2))

        # y = sqrt(theta) z over the bump support, axis-separated
        nodes, chi_w = _bump_tensor_cached(self.chi, self.d)
        counter[0] += n_b * n_m * nodes.size**self.d
        flat = offsets.reshape(n_b * n_m, self.d)
        pref = theta ** (0.5 * self.d) * (4.0 * math.pi * tau) ** (-0.5 * self.d)
        diff0 = flat[:, 0][:, None] - math.sqrt(theta) * nodes[None, :]
        k0 = np.exp(-(diff0**2) / (4.0 * tau))
        if self.d == 1:
            if not gradient:
                return pref * (k0 @ chi_w).reshape(n_b, n_m).sum(axis=1)
            g0 = (k0 * (-diff0 / (2.0 * tau))) @ chi_w
            return pref * g0.reshape(n_b, n_m).sum(axis=1)[:, None]
        diff1 = flat[:, 1][:, None] - math.sqrt(theta) * nodes[None, :]
        k1 = np.exp(-(diff1**2) / (4.0 * tau))
        t0 = k0 @ chi_w  # (P, n)
        if not gradient:
            return pref * np.sum(t0 * k1, axis=1).reshape(n_b, n_m).sum(axis=1)
        g0 = np.sum(((k0 * (-diff0 / (2.0 * tau))) @ chi_w) * k1, axis=1)
        g1 = np.sum(t0 * (k1 * (-diff1 / (2.0 * tau))), axis=1)
        grad = np.stack([g0, g1], axis=-1).reshape(n_b, n_m, 2).sum(axis=1)
        return pref * grad

    def _s_edges(self, t: float) -> np.ndarray:
        theta_t = self.T - t
        edges = {0.0, t}
        tau = t
        floor = max(theta_t * 1e-4, t * 1e-12)
        while tau > floor:
            tau *= 0.5
            edges.add(t - tau)
        theta = self.T
        while theta * 0.5 > theta_t:
            theta *= 0.5
            edges.add(self.T - theta)
        # pin the inner-rule crossover tau = theta / 100 to a panel edge;
        # (t - s) / (T - s) is monotone in s, so the rule flips only there
        switch = (t - 0.01 * self.T) / 0.99
        if 0.0 < switch < t:
            edges.add(switch)
        return np.array(sorted(edges))

    def _convolve(self, pts: np.ndarray, t: float, gradient: bool):
        """Adaptive composite quadrature of the source-time integral."""
        self._theta(t)
        edges = self._s_edges(t)
        counter = [0]
        prev = None
        for _level in range(5):
            snodes, sweights = _panel_nodes(edges)
            shape = (pts.shape[0], self.d) if gradient else (pts.shape[0],)
            total = np.zeros(shape)
            for s, w in zip(snodes, sweights):
                theta = self.T - s
                g = self.amplitude / (math.sqrt(theta) * math.log(theta))
                inner = self._inner(pts, t - s, theta, gradient, counter)
                total += (w * g) * inner
            if counter[0] > self.budget:
                raise QuadratureBudgetExceeded(
                    f"kernel quadrature exceeded {self.budget} evaluations at t={t}"
                )
            if prev is not None:
                scale = float(np.max(np.abs(total)))
                if scale == 0.0 or float(np.max(np.abs(total - prev))) <= self.rel_tol * scale:
                    return total
            prev = total
            edges = _split_edges(edges)
        raise QuadratureBudgetExceeded(
            f"kernel quadrature failed to settle at rel_tol={self.rel_tol} within 5 levels"
        )

    def _convolve_grid(self, grid: TorusGrid, t: float) -> np.ndarray:
        """Source-time integral evaluated on a full lattice.

        Point batches the size of a grid make the real-space image sum
        uneconomical, so the lattice path periodizes in Fourier instead:
        per source node, transform the sampled forcing and damp each mode
        by its heat decay over t - s.  Periodization is exact; the only
        spatial error is the band limit of the sampled bump.  The s
        quadrature reuses the same panel ladder and settling test as the
        point path, and the two paths check each other in the test suite.
        """
        self._theta(t)
        pts = np.stack(grid.centered_coords(), axis=-1)
        freqs = np.meshgrid(
            *[np.fft.fftfreq(n, 1.0 / n) for n in grid.shape[:-1]]
            + [np.fft.rfftfreq(grid.shape[-1], 1.0 / grid.shape[-1])],
            indexing="ij",
        )
        rate = 4.0 * math.pi**2 * sum(f**2 for f in freqs)
        edges = self._s_edges(t)
        prev = None
        for _level in range(5):
            snodes, sweights = _panel_nodes(edges)
            acc = np.zeros(rate.shape, dtype=complex)
            for s, w in zip(snodes, sweights):
                fhat = np.fft.rfftn(self.f3_eval(pts, s))
                acc += w * np.exp(-rate * (t - s)) * fhat
            total = np.fft.irfftn(acc, s=grid.shape)
            if prev is not None:
                scale = float(np.max(np.abs(total)))
                if scale == 0.0 or float(np.max(np.abs(total - prev))) <= self.rel_tol * scale:
                    return total
            prev = total
            edges = _split_edges(edges)
        raise QuadratureBudgetExceeded(
            f"lattice heat quadrature failed to settle at rel_tol={self.rel_tol} within 5 levels"
        )

    # public samplers ------------------------------------------------------

    def u3_eval(self, x, t: float):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.d:
            raise ValidationError(f"points must have trailing dimension {self.d}")
        out = self._convolve(x, t, gradient=False)
        return out if out.size > 1 else float(out[0])

    def du3_eval(self, x, t: float):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.d:
            raise ValidationError(f"points must have trailing dimension {self.d}")
        return self._convolve(x, t, gradient=True)

    def u3_field(self, grid: TorusGrid, t: float) -> ScalarField:
        if grid.d != self.d:
            raise DimensionUnsupported(f"construction has d={self.d}, grid has d={grid.d}")
        return ScalarField(grid, self._convolve_grid(grid, t))

    def du3_sup(self, t: float, n_dirs: int = 4, n_radii: int = 12) -> float:
        """Max of |Du3(., t)| over a radial fan plus the similarity center.

        The fan spans radii from well inside the shrinking support out to
        the cell boundary, and always includes the origin, where the
        source windows accumulate; the reported value is a sampled lower
        bound of the true sup, which is all the divergence ladder needs.
        """
        theta = self._theta(t)
        radii = np.geomspace(math.sqrt(theta) / 32.0, 0.45, n_radii)
        if self.d == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            angles = np.linspace(0.0, math.pi, n_dirs, endpoint=False)
            dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, self.d)
        pts = np.concatenate([np.zeros((1, self.d)), pts])
        grad = self._convolve(pts, t, gradient=True)
        return float(np.max(np.sqrt(np.sum(grad**2, axis=-1))))

    def chi_lq(self, q: float) -> float:
        """Integral of |profile sum|^q over the whole space by radial
        quadrature; bump supports are disjoint so the components add."""
        if q <= 0:
            raise BadExponent(f"need q > 0, got {q}")
        area = 2.0 * math.pi ** (0.5 * self.d) / math.gamma(0.5 * self.d)
        half = 0.5 * self.chi.outer_radius
        r = half + half * _GL20_NODES
        w = half * _GL20_WEIGHTS
        vals = (self.amplitude * self.chi.value(r)) ** q * r ** (self.d - 1)
        weight = sum(abs(s) ** q for s in self.signs)
        return float(weight * area * np.sum(w * vals))

    def f3_lq_scan(
        self, q: float, j_min: int = 4, j_max: int = 60, fit_window: int = 12
    ) -> LqScanResult:
        """Partial integrals of |f3|^q over [0, T - eps] on a dyadic ladder.

        The space integral reduces exactly to theta^(d/2) ||chi||_q^q, so
        only the one-dimensional time integral

            integral of theta^((d-q)/2) |log theta|^(-q) d theta

        is quadratured, panel by dyadic panel.  The verdict comes from the
        fitted slope of log(increments) against log(1/eps): mass piling up
        (slope >= 0.1) reads divergent, geometric decay (<= -0.1) reads
        convergent.  The |log theta|^(-q) factor shifts the apparent slope
        by -q / (j ln 2) at ladder depth j, so the fit window sits at the
        deep end of the ladder where the power behavior dominates; this is
        also what makes the slope non-decreasing in q on a fixed ladder.
        """
        if q <= 0:
            raise BadExponent(f"need q > 0, got {q}")
        cq = self.chi_lq(q)
        js = np.arange(j_min, j_max + 1)
        eps = 2.0 ** (-js.astype(float))
        valid = eps < 0.5 * self.T
        eps = eps[valid]
        js = js[valid]
        if eps.size < fit_window + 2:
            raise ValidationError("ladder too short for the fit window")

        def segment(a, b):
            half = 0.5 * (b - a)
            nodes = 0.5 * (a + b) + half * _GL20_NODES
            vals = nodes ** (0.5 * (self.d - q)) * np.abs(np.log(nodes)) ** (-q)
            return half * float(np.sum(_GL20_WEIGHTS * vals))

        base = segment(eps[0], self.T)
        increments = np.array([segment(eps[i + 1], eps[i]) for i in range(eps.size - 1)])
        partials = cq * (base + np.concatenate(([0.0], np.cumsum(increments))))
        increments = cq * increments
        if cq == 0.0:
            return LqScanResult(
                q=q, epsilons=eps, partials=partials, increments=increments,
                slope=0.0, verdict="convergent", chi_lq=cq,
            )
        tail = slice(-fit_window, None)
        slope = fit_loglog_slope(1.0 / eps[1:][tail], increments[tail])
        if slope >= 0.1:
            verdict = "divergent"
        elif slope <= -0.1:
            verdict = "convergent"
        else:
            verdict = "marginal"
        return LqScanResult(
            q=q,
            epsilons=eps,
            partials=partials,
            increments=increments,
            slope=slope,
            verdict=verdict,
            chi_lq=cq,
        )
