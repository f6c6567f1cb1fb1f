"""Uniform periodic grids, spectral differentiation and trigonometric interpolation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Uniform grid on the torus prod_i [0, lengths[i]).

    Axis ``i`` carries ``shape[i]`` points with spacing ``lengths[i] / shape[i]``.
    """

    shape: tuple
    lengths: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        lengths = tuple(float(x) for x in self.lengths)
        if len(shape) != len(lengths) or not shape:
            raise ConfigurationError("shape and lengths must have equal, nonzero length")
        if any(n < 1 for n in shape) or any(x <= 0 for x in lengths):
            raise ConfigurationError(f"invalid periodic grid {shape} x {lengths}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def axes(self) -> list:
        return [np.arange(n) * dx for n, dx in zip(self.shape, self.spacing)]

    @cached_property
    def mesh(self) -> list:
        return np.meshgrid(*self.axes, indexing="ij")

    @cached_property
    def points(self) -> np.ndarray:
        """Grid points as an array of shape (size, ndim)."""
        return np.stack([m.ravel() for m in self.mesh], axis=-1)

    @cached_property
    def wavenumbers(self) -> list:
        """Angular wavenumbers per axis, in FFT order."""
        return [2 * np.pi * np.fft.fftfreq(n, d=L / n) for n, L in zip(self.shape, self.lengths)]

    @property
    def nyquist(self) -> tuple:
        return tuple(np.pi / dx for dx in self.spacing)

    def _broadcast(self, axis: int, vec: np.ndarray) -> np.ndarray:
        sh = [1] * self.ndim
        sh[axis] = -1
        return vec.reshape(sh)

    @cached_property
    def kmesh(self) -> list:
        return [self._broadcast(i, k) for i, k in enumerate(self.wavenumbers)]

    @cached_property
    def kabs(self) -> np.ndarray:
        """|k| on the full spectral grid."""
        out = np.zeros(self.shape)
        for k in self.kmesh:
            out = out + k**2
        return np.sqrt(out)

    @cached_property
    def derivative_symbols(self) -> list:
        """Symbols ``i k`` of d/dx_i with the Nyquist mode removed.

        Zeroing Nyquist keeps the discrete derivative real, skew-adjoint and
        odd under reflection of the axis.
        """
        out = []
        for i, n in enumerate(self.shape):
            k = 1j * self.wavenumbers[i].copy()
            if n % 2 == 0:
                k[n // 2] = 0.0
            out.append(self._broadcast(i, k))
        return out

    def fft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.fftn(u, axes=self._axes_of(u))

    def ifft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(u, axes=self._axes_of(u))

    def _axes_of(self, u):
        return tuple(range(u.ndim - self.ndim, u.ndim))

    def multiplier(self, u: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier; trailing axes of ``u`` are the grid axes."""
        return self.ifft(symbol * self.fft(u))

    def derivative(self, u: np.ndarray, axis: int) -> np.ndarray:
        out = self.multiplier(u, self.derivative_symbols[axis])
        return out.real if np.isrealobj(u) else out

    def gradient(self, u: np.ndarray) -> list:
        uh = self.fft(u)
        out = [self.ifft(s * uh) for s in self.derivative_symbols]
        if np.isrealobj(u):
            out = [o.real for o in out]
        return out

    def same_as(self, other) -> bool:
        return (
            isinstance(other, PeriodicGrid)
            and self.shape == other.shape
            and np.allclose(self.lengths, other.lengths, rtol=1e-14, atol=0)
        )


def axis_powers(x: np.ndarray, kappa: float, n: int) -> np.ndarray:
    """Return exp(i m kappa x) for FFT-ordered integer modes m of an n-point axis.

    Output has shape ``x.shape + (n,)``. The Nyquist column of an even axis is
    replaced by cos(m kappa x) so interpolants stay real for real data.
    """
    z = np.exp(1j * kappa * np.asarray(x, dtype=float))
    out = np.empty(z.shape + (n,), dtype=complex)
    out[..., 0] = 1.0
    npos = (n - 1) // 2
    if npos > 0:
        out[..., 1 : npos + 1] = np.cumprod(np.broadcast_to(z[..., None], z.shape + (npos,)), axis=-1)
        out[..., n - npos :] = np.conj(out[..., npos:0:-1])
    if n % 2 == 0 and n > 1:
        half = n // 2
        zh = z ** half
        out[..., half] = zh.real
    return out


class TrigInterpolant:
    """Trigonometric interpolant of periodic samples on a :class:`PeriodicGrid`.

    ``values`` has shape ``batch + grid.shape``. Evaluation takes points of
    shape ``batch + (P, ndim)`` so each batch member has its own point cloud.
    """

    def __init__(self, values: np.ndarray, grid: PeriodicGrid):
        self.grid = grid
        values = np.asarray(values)
        self.batch = values.shape[: values.ndim - grid.ndim]
        self.coef = np.fft.fftn(values, axes=tuple(range(len(self.batch), values.ndim))) / grid.size
        self.real = np.isrealobj(values)

    def tail(self) -> float:
        """Relative coefficient mass in the outer quarter of each axis."""
        c = np.abs(self.coef)
        total = c.max() if c.size else 0.0
        if total == 0:
            return 0.0
        mask = np.zeros(self.grid.shape, dtype=bool)
        for i, n in enumerate(self.grid.shape):
            if n < 8:
                continue
            m = np.abs(np.fft.fftfreq(n) * n)
            sel = self.grid._broadcast(i, m >= n / 4)
            mask = mask | np.broadcast_to(sel, self.grid.shape)
        return float(c[..., mask].max() / total) if mask.any() else 0.0

    def derivative(self, orders: tuple) -> "TrigInterpolant":
        """Interpolant of the partial derivative with the given orders per axis."""
        out = object.__new__(TrigInterpolant)
        out.grid = self.grid
        out.batch = self.batch
        sym = np.ones(self.grid.shape, dtype=complex)
        for axis, order in enumerate(orders):
            if order:
                sym = sym * self.grid.derivative_symbols[axis] ** order
        out.coef = self.coef * sym
        out.real = self.real
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        g = self.grid
        points = np.asarray(points, dtype=float)
        if g.ndim == 1:
            Z = axis_powers(points[..., 0], 2 * np.pi / g.lengths[0], g.shape[0])
            val = np.matmul(Z, self.coef[..., :, None])[..., 0]
        elif g.ndim == 2:
            n0, n1 = g.shape
            Z0 = axis_powers(points[..., 0], 2 * np.pi / g.lengths[0], n0)
            Z1 = axis_powers(points[..., 1], 2 * np.pi / g.lengths[1], n1)
            # sum_{i,j} Z0[p,i] Z1[p,j] C[i,j]
            T = np.matmul(Z1, np.swapaxes(self.coef, -1, -2))
            val = np.einsum("...pi,...pi->...p", Z0, T)
        else:
            raise ConfigurationError("trig interpolation supports 1 or 2 dimensions")
        return val.real if self.real else val


def fourier_resample(values: np.ndarray, src: PeriodicGrid, dst_shape: tuple) -> np.ndarray:
    """Band-limited resampling of periodic samples onto a grid of another size.

    Trailing axes of ``values`` match ``src.shape``; leading axes are batch.
    """
    nb = values.ndim - src.ndim
    axes = tuple(range(nb, values.ndim))
    coef = np.fft.fftn(values, axes=axes)
    out = coef
    for ax, (n, m) in enumerate(zip(src.shape, dst_shape)):
        out = _resize_axis(out, nb + ax, n, m)
    scale = np.prod(dst_shape) / np.prod(src.shape)
    res = np.fft.ifftn(out, axes=axes) * scale
    return res.real if np.isrealobj(values) else res


def _resize_axis(c: np.ndarray, axis: int, n: int, m: int) -> np.ndarray:
    if n == m:
        return c
    c = np.moveaxis(c, axis, -1)
    out = np.zeros(c.shape[:-1] + (m,), dtype=complex)
    k = min(n, m)
    npos = (k - 1) // 2
    out[..., : npos + 1] = c[..., : npos + 1]
    if npos > 0:
        out[..., m - npos :] = c[..., n - npos :]
    if k % 2 == 0 and k > 0:
        # split (or fold) the Nyquist mode of the smaller grid symmetrically
        half = k // 2
        if n < m:
            out[..., half] = 0.5 * c[..., half]
            out[..., m - half] += 0.5 * c[..., half]
        else:
            out[..., half] = c[..., half] + c[..., n - half]
    return np.moveaxis(out, -1, axis)
