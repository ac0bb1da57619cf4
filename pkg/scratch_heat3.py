"""Similarity-frame model of |Du3| to pick the bump offset geometry.

grad u3(x,t) = A * int_{theta_t}^{T} (Gamma_lam * grad chi)(x/sqrt(theta))
               dtheta / (theta log theta),   lam^2 = 1 - theta_t/theta.

Computes the exact model ladder sup_x |Du3(x, T - 2^-k)| for k=3..14 over
bump configs (center offset r0, inner, outer), d = 1 and 2.
"""
import math

import numpy as np

from hjlab.counterexamples import CutoffProfile


def theta_nodes(theta_t, T, n_per_dyad=6):
    edges = [theta_t]
    th = theta_t
    while th * 2 < T:
        th *= 2
        edges.append(th)
    edges.append(T)
    edges = np.array(edges)
    gn, gw = np.polynomial.legendre.leggauss(n_per_dyad)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * gn[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def grad_smoothed_1d(chi, r0, lam, xi):
    """(Gamma_lam * chi')(xi) for chi(z) = bump(|z - r0|), 1-d."""
    zs = np.linspace(r0 - chi.outer_radius, r0 + chi.outer_radius, 320)
    dz = zs[1] - zs[0]
    dchi = chi.deriv(np.abs(zs - r0)) * np.sign(zs - r0)
    if lam < 1e-12:
        return np.interp(xi, zs, dchi, left=0.0, right=0.0)
    k = (4.0 * math.pi * lam**2) ** -0.5 * np.exp(
        -((xi[:, None] - zs[None, :]) ** 2) / (4.0 * lam**2)
    )
    return dz * k @ dchi


def grad_smoothed_2d(chi, r0, lam, xi):
    """x-component of (Gamma_lam * grad chi)(xi, 0), bump centered (r0, 0)."""
    n = 96
    zs = np.linspace(-chi.outer_radius, chi.outer_radius, n)
    dz = zs[1] - zs[0]
    Z1, Z2 = np.meshgrid(zs, zs, indexing="ij")
    R = np.sqrt(Z1**2 + Z2**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        g1 = np.where(R > 0, chi.deriv(R) * Z1 / R, 0.0)
    if lam < 1e-12:
        out = np.zeros_like(xi)
        for i, x in enumerate(xi):
            out[i] = np.interp(
                abs(x - r0), np.abs(zs), np.zeros(1), left=0, right=0
            )  # lam=0 handled by caller range
        return out
    w1 = Z1.ravel() + r0
    w2 = Z2.ravel()
    gv = g1.ravel() * dz * dz
    k = (4.0 * math.pi * lam**2) ** -1.0 * np.exp(
        -((xi[:, None] - w1[None, :]) ** 2 + w2[None, :] ** 2) / (4.0 * lam**2)
    )
    return k @ gv


def ladder(d, r0, inner, outer, T=0.25, ks=range(3, 15)):
    chi = CutoffProfile(inner_radius=inner, outer_radius=outer)
    xs = np.concatenate([[0.0], np.geomspace(1e-4, 0.45, 60)])
    out = []
    for k in ks:
        theta_t = 2.0**-k
        t = T - theta_t
        ths, tws = theta_nodes(theta_t, T)
        total = np.zeros_like(xs)
        for th, tw in zip(ths, tws):
            lam = math.sqrt(max(1.0 - theta_t / th, 0.0))
            xi = xs / math.sqrt(th)
            if d == 1:
                s = grad_smoothed_1d(chi, r0, lam, xi)
            else:
                s = grad_smoothed_2d(chi, r0, lam, xi)
            total += s * tw / (th * math.log(th))
        out.append(float(np.max(np.abs(total))))
    return np.array(out)


def report(tag, vals):
    inc = np.diff(vals)
    mono = bool(np.all(inc > 0))
    worst = float(np.min(inc / vals[:-1]))
    print(
        f"  {tag}: k3={vals[0]:.4f} k8={vals[5]:.4f} k14={vals[-1]:.4f}"
        f" monotone={mono} worst_rel_inc={worst:+.3f}"
    )


if __name__ == "__main__":
    print("== d=1 ==")
    for r0 in (0.6, 0.9, 1.2, 1.5):
        for geom in ((0.05, 0.5), (0.25, 0.5), (0.05, 0.3)):
            report(f"r0={r0} inn={geom[0]} out={geom[1]}", ladder(1, r0, *geom))
    print("== d=2 ==")
    for r0 in (0.6, 0.9, 1.2, 1.5):
        for geom in ((0.05, 0.5), (0.25, 0.5)):
            report(f"r0={r0} inn={geom[0]} out={geom[1]}", ladder(2, r0, *geom))


def ladder2(d, r0, inner, outer, T=0.25, ks=range(3, 15), dipole=False):
    chi = CutoffProfile(inner_radius=inner, outer_radius=outer)
    xs = np.concatenate([[0.0], np.geomspace(1e-4, 0.45, 60)])
    xs = np.concatenate([-xs[::-1], xs[1:]]) if dipole else xs
    out = []
    for k in ks:
        theta_t = 2.0**-k
        if theta_t >= T:
            out.append(np.nan)
            continue
        ths, tws = theta_nodes(theta_t, T)
        total = np.zeros_like(xs)
        for th, tw in zip(ths, tws):
            lam = math.sqrt(max(1.0 - theta_t / th, 0.0))
            xi = xs / math.sqrt(th)
            if d == 1:
                s = grad_smoothed_1d(chi, r0, lam, xi)
                if dipole:
                    s = s - grad_smoothed_1d(chi, -r0, lam, xi)
            else:
                s = grad_smoothed_2d(chi, r0, lam, xi)
                if dipole:
                    s = s - grad_smoothed_2d(chi, -r0, lam, xi)
            total += s * tw / (th * math.log(th))
        out.append(float(np.max(np.abs(total))))
    return np.array(out)


def report2(tag, vals):
    good = vals[~np.isnan(vals)]
    inc = np.diff(good)
    mono = bool(np.all(inc > 0))
    worst = float(np.min(inc / good[:-1]))
    print(
        f"  {tag}: first={good[0]:.4f} last={good[-1]:.4f}"
        f" monotone={mono} worst_rel_inc={worst:+.3f}"
    )


print("== d=1 dipole T=0.25 k=3..14 ==")
for r0 in (0.9, 1.2, 1.5):
    report2(f"r0={r0} inn=0.25 out=0.5", ladder2(1, r0, 0.25, 0.5, dipole=True))
print("== d=1 single T=2^-4 k=5..14 ==")
for r0 in (1.2, 1.5):
    report2(f"r0={r0} inn=0.25 out=0.5", ladder2(1, r0, 0.25, 0.5, T=2.0**-4, ks=range(5, 15)))
print("== d=1 dipole T=2^-4 k=5..14 ==")
for r0 in (0.9, 1.2, 1.5):
    report2(f"r0={r0} inn=0.25 out=0.5", ladder2(1, r0, 0.25, 0.5, T=2.0**-4, ks=range(5, 15), dipole=True))
print("== d=2 dipole T=0.25 k=3..14 ==")
for r0 in (1.2, 1.5, 2.0):
    report2(f"r0={r0} inn=0.25 out=0.5", ladder2(2, r0, 0.25, 0.5, dipole=True))
