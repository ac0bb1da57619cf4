"""Cross-check HeatForcedCE quadrature against a spectral Duhamel oracle."""
import math
import time

import numpy as np

from hjlab.counterexamples import HeatForcedCE


def spectral_u3_1d(ce, t, n_grid=1024, n_dyadic=42, gl=16):
    x = np.arange(n_grid) / n_grid
    xc = x - np.round(x)
    k = np.fft.rfftfreq(n_grid, 1.0 / n_grid)
    rate = 4.0 * math.pi**2 * k**2
    pts = t - t * np.power(0.5, np.arange(1, n_dyadic))
    edges = np.unique(np.concatenate([[0.0], pts, [t]]))
    gn, gw = np.polynomial.legendre.leggauss(gl)
    acc = np.zeros(k.shape, dtype=complex)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for zn, zw in zip(gn, gw):
            s = mid + half * zn
            w = half * zw
            theta = ce.T - s
            f = ce.amplitude * ce.chi.value(np.abs(xc) / math.sqrt(theta)) / (
                math.sqrt(theta) * math.log(theta)
            )
            fh = np.fft.rfft(f) / n_grid
            acc += w * np.exp(-rate * (t - s)) * fh
    u = np.fft.irfft(acc * n_grid, n=n_grid)
    return xc, u


def spectral_u3_2d(ce, t, n_grid=256, n_dyadic=38, gl=12, gradient=False):
    x = np.arange(n_grid) / n_grid
    xc = x - np.round(x)
    X, Y = np.meshgrid(xc, xc, indexing="ij")
    R = np.sqrt(X**2 + Y**2)
    kx = np.fft.fftfreq(n_grid, 1.0 / n_grid)
    ky = np.fft.rfftfreq(n_grid, 1.0 / n_grid)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    rate = 4.0 * math.pi**2 * (KX**2 + KY**2)
    pts = t - t * np.power(0.5, np.arange(1, n_dyadic))
    edges = np.unique(np.concatenate([[0.0], pts, [t]]))
    gn, gw = np.polynomial.legendre.leggauss(gl)
    acc = np.zeros(KX.shape, dtype=complex)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for zn, zw in zip(gn, gw):
            s = mid + half * zn
            w = half * zw
            theta = ce.T - s
            f = ce.amplitude * ce.chi.value(R / math.sqrt(theta)) / (
                math.sqrt(theta) * math.log(theta)
            )
            fh = np.fft.rfft2(f) / n_grid**2
            acc += w * np.exp(-rate * (t - s)) * fh
    if gradient:
        gx = np.fft.irfft2(acc * 2j * math.pi * KX * n_grid**2, s=(n_grid, n_grid))
        gy = np.fft.irfft2(acc * 2j * math.pi * KY * n_grid**2, s=(n_grid, n_grid))
        return xc, gx, gy
    u = np.fft.irfft2(acc * n_grid**2, s=(n_grid, n_grid))
    return xc, u


def main():
    print("== d=1 value check ==")
    ce1 = HeatForcedCE(d=1, T=0.25)
    for t in (0.1, 0.2, 0.24):
        xc, uo = spectral_u3_1d(ce1, t)
        idx = np.arange(0, 1024, 64)
        pts = xc[idx][:, None]
        t0 = time.time()
        mine = ce1.u3_eval(pts, t)
        dt = time.time() - t0
        diff = np.max(np.abs(mine - uo[idx]))
        rng = np.max(np.abs(uo))
        print(f"  t={t}: max|diff|={diff:.3e} range={rng:.4f} rel={diff / rng:.2e} ({dt:.1f}s)")

    print("== d=2 value check ==")
    ce2 = HeatForcedCE(d=2, T=0.25)
    for t in (0.1, 0.2, 0.24):
        t0 = time.time()
        xc, uo = spectral_u3_2d(ce2, t)
        to = time.time() - t0
        ii = np.arange(0, 256, 32)
        pts = np.stack(
            [np.repeat(xc[ii], ii.size), np.tile(xc[ii], ii.size)], axis=-1
        )
        t0 = time.time()
        mine = ce2.u3_eval(pts, t)
        dt = time.time() - t0
        ref = uo[np.ix_(ii, ii)].ravel()
        diff = np.max(np.abs(mine - ref))
        rng = np.max(np.abs(uo))
        print(
            f"  t={t}: max|diff|={diff:.3e} range={rng:.4f} rel={diff / rng:.2e}"
            f" (oracle {to:.1f}s, mine {dt:.1f}s)"
        )

    print("== d=2 gradient check ==")
    t = 0.2
    xc, gx, gy = spectral_u3_2d(ce2, t, gradient=True)
    ii = np.arange(8, 256, 48)
    pts = np.stack([np.repeat(xc[ii], ii.size), np.tile(xc[ii], ii.size)], axis=-1)
    g = ce2.du3_eval(pts, t)
    ref = np.stack([gx[np.ix_(ii, ii)].ravel(), gy[np.ix_(ii, ii)].ravel()], axis=-1)
    diff = np.max(np.abs(g - ref))
    rng = np.max(np.sqrt(gx**2 + gy**2))
    print(f"  t={t}: max|diff|={diff:.3e} range={rng:.4f} rel={diff / rng:.2e}")


if __name__ == "__main__":
    main()
