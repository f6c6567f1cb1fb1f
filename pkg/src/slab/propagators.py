"""Laplace-Beltrami operators on periodic grids and linear Schrodinger propagators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft
from scipy.integrate import simpson
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import CapacityError, ConfigurationError, QuadratureError, SolverError
from .geometry import ComplexField, DomainGrid, DoubledGrid, MetricField, double_metric, extend, restrict
from .torus import PeriodicGrid

EIGEN_CAP = 4096
METHODS = ("eigen_exact", "crank_nicolson", "strang_split")


def _metric_inverse(values: np.ndarray):
    """Pointwise inverse and sqrt(det) of a (d, d, *grid) metric array."""
    d = values.shape[0]
    if d == 1:
        det = values[0, 0]
        return values ** -1.0, np.sqrt(det)
    a, b, c = values[0, 0], values[0, 1], values[1, 1]
    det = a * c - b * b
    inv = np.empty_like(values)
    inv[0, 0] = c / det
    inv[1, 1] = a / det
    inv[0, 1] = inv[1, 0] = -b / det
    return inv, np.sqrt(det)


class LaplaceBeltrami:
    """Delta_G u = w^{-1} D_l (w G^{lm} D_m u) with w = sqrt(det G).

    Derivatives are spectral on the periodic grid of the metric. The operator
    is self-adjoint and nonpositive for the inner product weighted by w.
    """

    def __init__(self, metric: MetricField, eigen_cap: int = EIGEN_CAP):
        grid = metric.grid
        if not isinstance(grid, PeriodicGrid):
            raise ConfigurationError("Laplace-Beltrami needs a metric on a periodic grid")
        self.metric = metric
        self.grid = grid
        self.eigen_cap = eigen_cap
        self.K, self.w = _metric_inverse(metric.values)
        self.constant = metric.is_constant(1e-14)
        self.d = metric.d

    @cached_property
    def symbol(self) -> np.ndarray:
        """Fourier symbol for a constant metric (uses the mean otherwise)."""
        s = self.grid.derivative_symbols
        out = np.zeros(self.grid.shape)
        Kbar = self.K.reshape(self.d, self.d, -1).mean(axis=-1)
        for l in range(self.d):
            for m in range(self.d):
                out = out + (Kbar[l, m] * s[l] * s[m]).real
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Apply to an array whose trailing axes are the grid axes."""
        g = self.grid
        if self.constant:
            out = g.multiplier(u, self.symbol)
            return out.real if np.isrealobj(u) else out
        grads = g.gradient(u)
        total = 0.0
        for l in range(self.d):
            flux = sum(self.K[l, m] * grads[m] for m in range(self.d)) * self.w
            total = total + g.derivative(flux, l)
        return total / self.w

    __call__ = apply

    def adjoint_flat(self, u: np.ndarray) -> np.ndarray:
        """Adjoint for the unweighted L2 inner product: w * Delta(u / w)."""
        if self.constant:
            return self.apply(u)
        return self.w * self.apply(u / self.w)

    @property
    def weights(self) -> np.ndarray:
        return self.w * self.grid.cell_volume

    def inner(self, u, v) -> complex:
        return complex(np.sum(self.weights * np.conj(u) * v))

    def norm(self, u) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(u) ** 2)))

    def dirichlet_form(self, u) -> float:
        """<-Delta u, u> in the weighted inner product."""
        return float(np.real(self.inner(-self.apply(u), u)))

    def dense(self) -> np.ndarray:
        n = self.grid.size
        if n > self.eigen_cap:
            raise CapacityError(f"dense operator on {n} points exceeds cap {self.eigen_cap}")
        eye = np.eye(n).reshape((n,) + tuple(self.grid.shape))
        cols = self.apply(eye).reshape(n, n)
        return cols.T

    @cached_property
    def eigensystem(self):
        """Eigenvalues and weighted-orthonormal eigenvectors (dense)."""
        A = self.dense()
        sw = np.sqrt(self.w.ravel())
        S = sw[:, None] * A / sw[None, :]
        S = 0.5 * (S + S.T)
        lam, V = np.linalg.eigh(S)
        return lam, V

    # spectral coordinates of the exact flow
    def to_spectral(self, u: np.ndarray) -> np.ndarray:
        if self.constant:
            return self.grid.fft(u)
        _, V = self.eigensystem
        n = self.grid.size
        flat = (np.sqrt(self.w) * u).reshape(u.shape[: u.ndim - self.grid.ndim] + (n,))
        return flat @ V

    def from_spectral(self, c: np.ndarray) -> np.ndarray:
        if self.constant:
            return self.grid.ifft(c)
        _, V = self.eigensystem
        out = c @ V.T
        return out.reshape(c.shape[:-1] + tuple(self.grid.shape)) / np.sqrt(self.w)

    @property
    def spectrum(self) -> np.ndarray:
        return self.symbol if self.constant else self.eigensystem[0]

    def _phase(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lam = self.spectrum
        return np.exp(1j * t.reshape(t.shape + (1,) * lam.ndim) * lam)

    def flow(self, u: np.ndarray, t: float) -> np.ndarray:
        """Exact e^{it Delta} u."""
        return self.from_spectral(self._phase(t) * self.to_spectral(u))

    def flow_many(self, u: np.ndarray, times) -> np.ndarray:
        """e^{it Delta} u for each t in ``times``; output shape (len(times),) + u.shape."""
        return self.from_spectral(self._phase(times) * self.to_spectral(u)[None])

    def flow_each(self, u: np.ndarray, times) -> np.ndarray:
        """Apply e^{i t_j Delta} to u[j]."""
        return self.from_spectral(self._phase(times) * self.to_spectral(u))


@dataclass(frozen=True)
class PropagatorSpec:
    method: str = "eigen_exact"
    dt: float | None = None
    tol: float = 1e-10
    cap: int = EIGEN_CAP

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown propagation method {self.method!r}")
        if self.method == "crank_nicolson" and not (self.dt and self.dt > 0):
            raise ConfigurationError("crank_nicolson needs a positive dt")


def _check_cap(lb: LaplaceBeltrami, spec: PropagatorSpec):
    if not lb.constant and lb.grid.size > spec.cap:
        raise CapacityError(f"eigen_exact on {lb.grid.size} points exceeds cap {spec.cap}")


def _crank_nicolson(u: np.ndarray, t: float, lb: LaplaceBeltrami, spec: PropagatorSpec) -> np.ndarray:
    nsteps = max(1, int(np.ceil(abs(t) / spec.dt - 1e-12)))
    dt = t / nsteps
    shape = u.shape
    n = u.size
    a = 0.5j * dt

    def lhs(x):
        x = x.reshape(shape)
        return (x - a * lb.apply(x)).ravel()

    pre_sym = 1.0 / (1.0 - a * lb.symbol)

    def precond(x):
        return lb.grid.multiplier(x.reshape(shape), pre_sym).ravel()

    A = LinearOperator((n, n), matvec=lhs, dtype=complex)
    M = LinearOperator((n, n), matvec=precond, dtype=complex)
    x = np.asarray(u, dtype=complex)
    for _ in range(nsteps):
        if lb.constant:
            x = lb.grid.multiplier(x, (1 + a * lb.symbol) / (1 - a * lb.symbol))
            continue
        rhs = (x + a * lb.apply(x)).ravel()
        sol, info = gmres(A, rhs, x0=x.ravel(), rtol=spec.tol, atol=0.0, M=M, restart=50, maxiter=200)
        if info != 0:
            raise SolverError(f"Crank-Nicolson GMRES did not converge (info={info})")
        x = sol.reshape(shape)
    return x


def propagate_array(u: np.ndarray, t: float, lb: LaplaceBeltrami, spec: PropagatorSpec | None = None) -> np.ndarray:
    spec = spec or PropagatorSpec()
    if t == 0:
        return np.array(u, dtype=complex)
    if spec.method == "crank_nicolson":
        return _crank_nicolson(u, t, lb, spec)
    # the linear Strang split of a single operator is its exact flow
    _check_cap(lb, spec)
    return lb.flow(np.asarray(u, dtype=complex), t)


def propagate(u0: ComplexField, t: float, lb: LaplaceBeltrami, spec: PropagatorSpec | None = None) -> ComplexField:
    """Approximate e^{it Delta_G} u0 on the operator's grid."""
    if not lb.grid.same_as(u0.grid):
        raise ConfigurationError("field and operator live on different grids")
    return u0.with_values(propagate_array(u0.values, t, lb, spec))


def laplacian_for(g: MetricField, eigen_cap: int = EIGEN_CAP) -> LaplaceBeltrami:
    """Operator on the doubled grid for a metric given on either grid."""
    if isinstance(g.grid, DomainGrid):
        g = double_metric(g)
    return LaplaceBeltrami(g, eigen_cap)


def propagate_dirichlet(u0: ComplexField, t: float, lb_or_metric, spec: PropagatorSpec | None = None) -> ComplexField:
    """Dirichlet flow on Omega via odd extension, propagation on the double and restriction."""
    lb = lb_or_metric if isinstance(lb_or_metric, LaplaceBeltrami) else laplacian_for(lb_or_metric)
    v = extend(u0, "dirichlet")
    return restrict(propagate(v, t, lb, spec))


def duhamel(u0: ComplexField, f, t: float, lb: LaplaceBeltrami, spec: PropagatorSpec | None = None) -> ComplexField:
    """e^{it Delta} u0 - i int_0^t e^{i(t - tau) Delta} f(tau) dtau with uniform Simpson nodes.

    ``f`` is a sequence (or array) of source samples at tau_j = j t / (n - 1).
    """
    vals = np.asarray([x.values if isinstance(x, ComplexField) else x for x in f], dtype=complex)
    n = vals.shape[0]
    if n < 3 or n % 2 == 0:
        raise QuadratureError(f"Simpson quadrature needs an odd number >= 3 of nodes, got {n}")
    spec = spec or PropagatorSpec()
    tau = np.linspace(0.0, t, n)
    if spec.method == "crank_nicolson":
        g = np.stack([propagate_array(vals[j], t - tau[j], lb, spec) for j in range(n)])
    else:
        _check_cap(lb, spec)
        g = lb.flow_each(vals, t - tau)
    integral = simpson(g, x=tau, axis=0)
    return u0.with_values(propagate_array(u0.values, t, lb, spec) - 1j * integral)


def sine_series_propagator(u0: ComplexField, t: float) -> ComplexField:
    """Reference Dirichlet flow on the flat cylinder or interval.

    Uses a type-I sine transform in r and an FFT in theta; eigenvalues are the
    exact continuum ones, -(k_theta^2 + (pi m)^2).
    """
    grid = u0.grid
    if not isinstance(grid, DomainGrid):
        raise ConfigurationError("sine-series oracle expects a field on the domain")
    inner = u0.values[..., 1:-1]
    m = np.arange(1, grid.n_r - 1)
    lam = -(np.pi * m) ** 2
    b = scipy.fft.dst(inner, type=1, axis=-1)
    if grid.d == 2:
        b = np.fft.fft(b, axis=0)
        kth = 2 * np.pi * np.fft.fftfreq(grid.n_theta, d=grid.dtheta)
        lam = lam[None, :] - kth[:, None] ** 2
        b = np.fft.ifft(np.exp(1j * t * lam) * b, axis=0)
    else:
        b = np.exp(1j * t * lam) * b
    out = np.zeros(grid.shape, dtype=complex)
    out[..., 1:-1] = scipy.fft.idst(b, type=1, axis=-1)
    return ComplexField(out, grid, "none")
