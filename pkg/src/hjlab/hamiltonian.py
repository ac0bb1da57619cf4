"""Coercive model Hamiltonian, its conjugate, and growth certificates.

The model class is

    H(x, p) = h(x) |p|^gamma + b(x) . p + shift,      gamma > 1, min h > 0,

where the constant shift is chosen once at construction so that H >= 0
everywhere: the raw part dips to -K_gamma h^(1-gamma') |b|^gamma' at its
minimizing p, so shift is the max of that dip over cells (zero whenever
b == 0).  The conjugate is then available in closed form,

    L(x, nu) = K_gamma h(x)^(1-gamma') |nu - b(x)|^gamma' - shift,
    K_gamma  = (gamma - 1) gamma^(-gamma'),   gamma' = gamma/(gamma-1),

with maximizing momentum p* = (|nu-b|/(gamma h))^(1/(gamma-1)) along
unit(nu - b).

Growth certificates: the smallest C >= 1 making the four coercivity and
growth inequalities hold on a quasi-random (x, p) cloud is found by
bisection; the analogous conjugate-side constant C_L is certified on a
velocity cloud.  Certificates are sampling statements, not proofs, and
record the cloud that produced them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import (
    BadGamma,
    CertificateFailed,
    GridMismatch,
    InsufficientSamples,
    SingularGradientWarning,
    ValidationError,
)
from .grid import ScalarField, TorusGrid, VectorField, gradient_central

__all__ = [
    "PowerHamiltonian",
    "GenericHamiltonian",
    "HBoundsCertificate",
    "LagrangianValue",
    "legendre_numeric",
]

_SINGULAR_TOL = 1e-14


@dataclass(frozen=True)
class HBoundsCertificate:
    """Sampled growth-bound constants for one Hamiltonian.

    C_H is the smallest sampled constant for the primal inequalities,
    C_L the conjugate-side one.  drift_dominated flags a C_H more than
    an order of magnitude above the drift-free baseline.
    """

    C_H: float
    C_L: float
    gamma: float
    gamma_prime: float
    sample_radius: float
    n_samples: int
    shift: float
    drift_dominated: bool


@dataclass(frozen=True)
class LagrangianValue:
    value: np.ndarray
    maximizer: np.ndarray


class PowerHamiltonian:
    def __init__(self, grid: TorusGrid, gamma: float, h: ScalarField, b: VectorField):
        if gamma <= 1.0:
            raise BadGamma(f"gamma={gamma} <= 1")
        if h.grid != grid or b.grid != grid:
            raise GridMismatch("h and b must live on the stated grid")
        h0 = float(np.min(h.values))
        if h0 <= 0.0:
            raise ValidationError(f"min h = {h0:.3e} <= 0")
        self.grid = grid
        self.gamma = float(gamma)
        self.h = h
        self.b = b
        self.h0 = h0
        # shift = max_x of the raw Hamiltonian's dip below zero
        self.shift = float(np.max(self._conjugate_raw_at_zero()))
        self._dh = gradient_central(h).values
        self._db = np.stack(
            [gradient_central(ScalarField(grid, b.component(j))).values
             for j in range(grid.d)],
            axis=-1,
        )  # _db[..., k, j] = d b_j / d x_k

    @property
    def gamma_prime(self) -> float:
        return self.gamma / (self.gamma - 1.0)

    @property
    def k_gamma(self) -> float:
        return (self.gamma - 1.0) * self.gamma ** (-self.gamma_prime)

    def _conjugate_raw_at_zero(self) -> np.ndarray:
        bmag = self.b.magnitude()
        return (
            self.k_gamma
            * self.h.values ** (1.0 - self.gamma_prime)
            * bmag**self.gamma_prime
        )

    # -- pointwise evaluations; h_x/b_x default to the full grid fields ----

    def _coeffs(self, h_x, b_x):
        h_x = self.h.values if h_x is None else np.asarray(h_x, dtype=float)
        b_x = self.b.values if b_x is None else np.asarray(b_x, dtype=float)
        return h_x, b_x

    def eval_H(self, p, h_x=None, b_x=None) -> np.ndarray:
        """H(x, p) including the nonnegativity shift."""
        h_x, b_x = self._coeffs(h_x, b_x)
        p = np.asarray(p, dtype=float)
        mag = np.sqrt(np.sum(p**2, axis=-1))
        return (
            h_x * mag**self.gamma + np.sum(b_x * p, axis=-1) + self.shift
        )

    def eval_DpH(self, p, h_x=None, b_x=None) -> np.ndarray:
        """gamma h |p|^(gamma-2) p + b.

        For gamma < 2 the radial factor is singular at p = 0; those points
        return b(x) and a SingularGradientWarning is emitted.
        """
        h_x, b_x = self._coeffs(h_x, b_x)
        p = np.asarray(p, dtype=float)
        mag = np.sqrt(np.sum(p**2, axis=-1))
        small = mag < _SINGULAR_TOL
        if self.gamma < 2.0 and np.any(small):
            warnings.warn(
                "DpH evaluated at p ~ 0 with gamma < 2; returning b(x) there",
                SingularGradientWarning,
                stacklevel=2,
            )
        safe = np.where(small, 1.0, mag)
        radial = np.where(small, 0.0, self.gamma * h_x * safe ** (self.gamma - 2.0))
        return radial[..., None] * p + b_x

    def eval_DxH(self, p, dh_x=None, db_x=None) -> np.ndarray:
        """Component k: d_k h |p|^gamma + sum_j d_k b_j p_j."""
        dh_x = self._dh if dh_x is None else np.asarray(dh_x, dtype=float)
        db_x = self._db if db_x is None else np.asarray(db_x, dtype=float)
        p = np.asarray(p, dtype=float)
        mag = np.sqrt(np.sum(p**2, axis=-1))
        return dh_x * mag[..., None] ** self.gamma + np.einsum(
            "...kj,...j->...k", db_x, p
        )

    def eval_H_field(self, du: VectorField) -> ScalarField:
        return ScalarField(self.grid, self.eval_H(du.values))

    def eval_DpH_field(self, du: VectorField) -> VectorField:
        return VectorField(self.grid, self.eval_DpH(du.values))

    # -- conjugate ----------------------------------------------------------

    def legendre(self, nu, h_x=None, b_x=None) -> LagrangianValue:
        """Closed-form conjugate sup_p [nu.p - H(x,p)] and its maximizer."""
        h_x, b_x = self._coeffs(h_x, b_x)
        nu = np.asarray(nu, dtype=float)
        rel = nu - b_x
        m = np.sqrt(np.sum(rel**2, axis=-1))
        value = (
            self.k_gamma * h_x ** (1.0 - self.gamma_prime) * m**self.gamma_prime
            - self.shift
        )
        safe = np.where(m < _SINGULAR_TOL, 1.0, m)
        scale = np.where(
            m < _SINGULAR_TOL,
            0.0,
            (safe / (self.gamma * h_x)) ** (1.0 / (self.gamma - 1.0)) / safe,
        )
        return LagrangianValue(value=value, maximizer=scale[..., None] * rel)

    def legendre_field(self, nu: VectorField) -> ScalarField:
        return ScalarField(self.grid, self.legendre(nu.values).value)

    def eval_DxL(self, nu, h_x=None, b_x=None, dh_x=None, db_x=None) -> np.ndarray:
        """Spatial gradient of the conjugate, component k."""
        h_x, b_x = self._coeffs(h_x, b_x)
        dh_x = self._dh if dh_x is None else np.asarray(dh_x, dtype=float)
        db_x = self._db if db_x is None else np.asarray(db_x, dtype=float)
        nu = np.asarray(nu, dtype=float)
        gp = self.gamma_prime
        rel = nu - b_x
        m = np.sqrt(np.sum(rel**2, axis=-1))
        hpow = h_x ** (-gp)
        term_h = (1.0 - gp) * (hpow * m**gp)[..., None] * dh_x
        safe = np.where(m < _SINGULAR_TOL, 1.0, m)
        mfac = np.where(m < _SINGULAR_TOL, 0.0, safe ** (gp - 2.0))
        # d_k |nu - b| = -(nu - b) . d_k b / |nu - b|
        term_b = -gp * (h_x * hpow)[..., None] * mfac[..., None] * np.einsum(
            "...kj,...j->...k", db_x, rel
        )
        return self.k_gamma * (term_h + term_b)

    def conjugacy_residual(self, p, h_x=None, b_x=None) -> np.ndarray:
        """|H(x,p) - (nu.p - L(x,nu))| at nu = DpH(x,p)."""
        h_x, b_x = self._coeffs(h_x, b_x)
        nu = self.eval_DpH(p, h_x, b_x)
        lag = self.legendre(nu, h_x, b_x)
        pair = np.sum(nu * np.asarray(p, dtype=float), axis=-1)
        return np.abs(self.eval_H(p, h_x, b_x) - (pair - lag.value))

    # -- certificates --------------------------------------------------------

    def _sample_cloud(self, n_samples: int, radius: float, seed: int):
        grid = self.grid
        d = grid.d
        eng = qmc.Halton(d=2 * d, seed=seed)
        u = eng.random(n_samples)
        cells = tuple(
            np.minimum((u[:, k] * grid.n_per_axis).astype(int), grid.n_per_axis - 1)
            for k in range(d)
        )
        if d == 1:
            p = (radius * (2.0 * u[:, 1] - 1.0))[:, None]
        else:
            ang = 2.0 * np.pi * u[:, 2]
            r = radius * u[:, 3] ** 2  # bias toward small momenta
            p = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)
        p[0] = 0.0  # force the degenerate point into every cloud
        return cells, p

    def _feasible_primal(self, C, mag, H, rect, dxh_mag, dph_mag, slack):
        g = self.gamma
        ok = H >= mag**g / C - C - slack
        ok &= H <= C * (mag**g + 1.0) + slack
        ok &= rect >= mag**g / C - C - slack
        ok &= dxh_mag <= C * (mag**g + 1.0) + slack
        ok &= dph_mag >= mag ** (g - 1.0) / C - C - slack
        ok &= dph_mag <= C * mag ** (g - 1.0) + C + slack
        return bool(np.all(ok))

    @staticmethod
    def _bisect_constant(feasible, what: str) -> float:
        hi = 1.0
        while not feasible(hi):
            hi *= 2.0
            if hi > 1e12:
                raise CertificateFailed(f"no {what} constant below 1e12")
        if hi == 1.0:
            return 1.0
        lo = hi / 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        return hi

    def certify_bounds(
        self,
        n_samples: int = 4096,
        sample_radius: float = 10.0,
        seed: int = 0,
        _baseline: bool = True,
    ) -> HBoundsCertificate:
        """Bisect the smallest C >= 1 satisfying the growth inequalities.

        Primal side on an (x, p) cloud with |p| <= sample_radius:
          (1)  |p|^g / C - C <= H <= C (|p|^g + 1)
          (2)  DpH . p - H   >= |p|^g / C - C
          (3)  |DxH|         <= C (|p|^g + 1)
          (4)  |p|^(g-1)/C - C <= |DpH| <= C |p|^(g-1) + C
        Conjugate side on a velocity cloud with |nu| <= sample_radius:
          (L1) |nu|^g' / C - C <= L <= C |nu|^g'
          (L2) |DxL|           <= C (|nu|^g' + 1)
        """
        if n_samples < 1000:
            raise InsufficientSamples(f"n_samples={n_samples} < 1000")
        cells, p = self._sample_cloud(n_samples, sample_radius, seed)
        h_x = self.h.values[cells]
        b_x = self.b.values[cells]
        dh_x = self._dh[cells]
        db_x = self._db[cells]

        mag = np.sqrt(np.sum(p**2, axis=-1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularGradientWarning)
            H = self.eval_H(p, h_x, b_x)
            dph = self.eval_DpH(p, h_x, b_x)
        rect = np.sum(dph * p, axis=-1) - H
        dxh_mag = np.sqrt(np.sum(self.eval_DxH(p, dh_x, db_x) ** 2, axis=-1))
        dph_mag = np.sqrt(np.sum(dph**2, axis=-1))
        slack = 1e-12 * (1.0 + np.max(np.abs(H)))

        C_H = self._bisect_constant(
            lambda C: self._feasible_primal(C, mag, H, rect, dxh_mag, dph_mag, slack),
            "primal",
        )

        nu = p  # same cloud geometry serves as velocity samples
        lag = self.legendre(nu, h_x, b_x)
        dxl_mag = np.sqrt(
            np.sum(self.eval_DxL(nu, h_x, b_x, dh_x, db_x) ** 2, axis=-1)
        )
        gp = self.gamma_prime
        numag = mag

        def feasible_conj(C):
            ok = lag.value >= numag**gp / C - C - slack
            ok &= lag.value <= C * numag**gp + slack
            ok &= dxl_mag <= C * (numag**gp + 1.0) + slack
            return bool(np.all(ok))

        C_L = self._bisect_constant(feasible_conj, "conjugate")

        drift_dominated = False
        if _baseline and float(np.max(self.b.magnitude())) > 0.0:
            zero_b = VectorField(self.grid, np.zeros(self.grid.shape + (self.grid.d,)))
            base = PowerHamiltonian(self.grid, self.gamma, self.h, zero_b).certify_bounds(
                n_samples=n_samples,
                sample_radius=sample_radius,
                seed=seed,
                _baseline=False,
            )
            drift_dominated = C_H > 10.0 * base.C_H

        return HBoundsCertificate(
            C_H=C_H,
            C_L=C_L,
            gamma=self.gamma,
            gamma_prime=gp,
            sample_radius=sample_radius,
            n_samples=n_samples,
            shift=self.shift,
            drift_dominated=drift_dominated,
        )


def legendre_numeric(H_at_p, nu, radius: float, d: int, n_r: int = 2048, n_angle: int = 64):
    """Brute-force conjugate sup_p [nu.p - H(p)] over a radial momentum grid.

    ``H_at_p`` maps an array of momenta with trailing component axis to
    values.  Used as the fallback for generic Hamiltonians and as the
    independent oracle for the closed form above.
    """
    radii = np.linspace(0.0, radius, n_r)
    if d == 1:
        p = np.concatenate([radii, -radii])[:, None]
    else:
        ang = 2.0 * np.pi * np.arange(n_angle) / n_angle
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        p = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 2)
    nu = np.asarray(nu, dtype=float)
    gains = p @ nu - H_at_p(p)
    k = int(np.argmax(gains))
    return float(gains[k]), p[k].copy()


class GenericHamiltonian:
    """Convex Hamiltonian given by callables, conjugated numerically.

    H_fn(xs, p) must broadcast over a trailing momentum axis; xs is the
    tuple of coordinate arrays.  No shift handling is applied here.
    """

    def __init__(self, grid: TorusGrid, H_fn, DpH_fn=None, p_radius: float = 20.0):
        self.grid = grid
        self.H_fn = H_fn
        self.DpH_fn = DpH_fn
        self.p_radius = p_radius

    def eval_H_field(self, du: VectorField) -> ScalarField:
        return ScalarField(self.grid, self.H_fn(self.grid.coords(), du.values))

    def legendre_at(self, x_index, nu) -> LagrangianValue:
        xs = [c[x_index] for c in self.grid.coords()]

        def H_at_p(p):
            return self.H_fn(xs, p)

        value, maximizer = legendre_numeric(
            H_at_p, nu, self.p_radius, self.grid.d
        )
        return LagrangianValue(value=np.asarray(value), maximizer=maximizer)
