"""Pointwise evaluation of a band-limited metric's inverse and its derivatives.

The mollified metric is a trigonometric polynomial, and its inverse has
exponentially decaying Fourier coefficients. Truncating those coefficients
on the sampling grid gives K = G^{-1}, dK, d2K and the divergence drift
b^m = w^{-1} d_l (w K^{lm}) at arbitrary off-grid points to near machine
precision.
"""
from __future__ import annotations

import numpy as np

from ..errors import ResolutionError
from ..geometry import MetricField
from ..propagators import _metric_inverse


class MetricSeries:
    def __init__(self, metric: MetricField, tol: float = 1e-15):
        grid = metric.grid
        self.grid = grid
        d = metric.d
        self.d = d
        K, w = _metric_inverse(metric.values)
        b = []
        for m in range(d):
            acc = 0.0
            for l in range(d):
                acc = acc + grid.derivative(w * K[l, m], l)
            b.append(acc / w)
        fields = [K[l, m] for l in range(d) for m in range(d)] + b
        coef = np.stack([np.fft.fftn(f) / grid.size for f in fields], axis=-1)
        # size the box from K alone: spectral derivatives in b amplify round-off by k_max
        cK0 = np.abs(coef[..., : d * d])
        keep = cK0.max(axis=-1) > tol * cK0.max()
        box = []
        for ax, n in enumerate(grid.shape):
            idx = np.fft.fftfreq(n) * n
            sel = np.moveaxis(keep, ax, 0).reshape(n, -1).any(axis=1)
            M = int(np.abs(idx[sel]).max()) if sel.any() else 0
            if n > 1 and M >= n // 2 - 1:
                raise ResolutionError("metric inverse is not resolved by its grid; refine the grid")
            box.append(M)
        self.box = box
        # coefficients on the box -M..M per axis, C-ordered
        index = np.ix_(*[np.arange(-M, M + 1) % n for M, n in zip(box, grid.shape)])
        cb = coef[index]
        kvec = np.meshgrid(*[2 * np.pi / L * np.arange(-M, M + 1) for M, L in zip(box, grid.lengths)], indexing="ij")
        nm = cb.shape[:-1]
        cb = cb.reshape(-1, cb.shape[-1])
        kvec = [k.ravel() for k in kvec]
        cK = cb[:, : d * d].reshape(-1, d, d)
        cols = [cK.reshape(-1, d * d)]
        for n in range(d):
            cols.append((1j * kvec[n])[:, None] * cK.reshape(-1, d * d))
        for n in range(d):
            for p in range(d):
                cols.append((-kvec[n] * kvec[p])[:, None] * cK.reshape(-1, d * d))
        cols.append(cb[:, d * d:])
        full = np.concatenate(cols, axis=1)
        self.active = np.abs(full).max(axis=0) > 0
        self.coef = full[:, self.active]
        self.ncol = full.shape[1]
        self.nmodes = nm
        self.kappa = [2 * np.pi / L for L in grid.lengths]

    def _basis(self, pts: np.ndarray) -> np.ndarray:
        E = None
        for ax, M in enumerate(self.box):
            z = np.exp(1j * self.kappa[ax] * pts[:, ax])
            pw = np.empty((pts.shape[0], 2 * M + 1), dtype=complex)
            pw[:, M] = 1.0
            if M:
                pw[:, M + 1:] = np.cumprod(np.repeat(z[:, None], M, axis=1), axis=1)
                pw[:, :M] = np.conj(pw[:, :M:-1])
            E = pw if E is None else (E[:, :, None] * pw[:, None, :]).reshape(pts.shape[0], -1)
        return E

    def evaluate(self, points: np.ndarray, chunk: int = 65536) -> dict:
        """K (P,d,d), dK (P,n,l,m), d2K (P,n,p,l,m) and b (P,m) at points (P, d)."""
        d = self.d
        pts = np.asarray(points, dtype=float).reshape(-1, d)
        P = pts.shape[0]
        out = np.zeros((P, self.ncol))
        for s in range(0, P, chunk):
            E = self._basis(pts[s:s + chunk])
            out[s:s + chunk, self.active] = (E @ self.coef).real
        d2 = d * d
        K = out[:, :d2].reshape(P, d, d)
        dK = out[:, d2: d2 + d * d2].reshape(P, d, d, d)
        o = d2 + d * d2
        d2K = out[:, o: o + d * d * d2].reshape(P, d, d, d, d)
        b = out[:, o + d * d * d2:]
        return {"K": K, "dK": dK, "d2K": d2K, "b": b}

    def hamiltonian(self, points: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """H = K^{lm}(x) eta_l eta_m."""
        K = self.evaluate(points)["K"]
        eta = np.asarray(eta, dtype=float).reshape(-1, self.d)
        return np.einsum("plm,pl,pm->p", K, eta, eta)
