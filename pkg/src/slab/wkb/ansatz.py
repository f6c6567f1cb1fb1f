"""Assembly of the WKB approximate solution, its residual and the decay/validity scans.

On the torus the oscillatory integral over xi is a sum over the lattice
xi = hbar k (hbar = h / unit) weighted by the Fourier coefficients of v0:

    w(s, x) = sum_k c_k e^{i Phi(s, x, hbar k) / hbar} sum_j hbar^j a_j(s, x, hbar k).

It solves i hbar d_s w + hbar^2 Delta w = r, so e^{i hbar s Delta} is the exact
flow it approximates. At s = 0 it equals phi(hbar |D|) v0.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, FitError, ResolutionError
from ..geometry import ComplexField, MetricField
from ..propagators import LaplaceBeltrami
from ..scaling import ScalingReport, fit_scaling
from ..spectral import DEFAULT_PROFILE, CutoffProfile, mollify_metric
from ..torus import PeriodicGrid, axis_powers, fourier_resample
from .characteristics import DELTA_MIN, solve_characteristics, unit_directions
from .chebyshev import interp_matrix
from .series import MetricSeries
from .tables import PhaseAmplitudeTable, build_phase, metric_on, solve_transport

LAMBDA_MAX = 2.0  # phi is supported in 1/2 <= |xi| <= 2


def direction_weights(directions: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Interpolation weights (n_xi, n_dir) from the tabulated unit directions to xi / |xi|."""
    xi = np.atleast_2d(xi)
    d = directions.shape[1]
    if d == 1:
        W = np.zeros((xi.shape[0], 2))
        W[xi[:, 0] > 0, 0] = 1.0
        W[xi[:, 0] < 0, 1] = 1.0
        return W
    M = directions.shape[0]
    grid_angles = np.arctan2(directions[:, 1], directions[:, 0])
    ang = np.arctan2(xi[:, 1], xi[:, 0])
    Z = axis_powers(ang, 1.0, M)
    # f(theta) = sum_m Z_m(theta) c_m with c_m = (1/M) sum_a f_a conj(e^{i m theta_a})
    E = np.exp(-1j * np.outer(np.fft.fftfreq(M) * M, grid_angles))
    if M % 2 == 0:
        E[M // 2] = np.cos(M // 2 * grid_angles)
    return (Z @ E / M).real


def tau_weights(table: PhaseAmplitudeTable, taus) -> np.ndarray:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if taus.max(initial=0.0) > table.T * (1 + 1e-12) or taus.min(initial=0.0) < 0:
        raise ConfigurationError(f"requested tau up to {taus.max():.4g} outside the table window [0, {table.T:.4g}]")
    return interp_matrix(len(table.tau), table.T, np.clip(taus, 0.0, table.T))


def _coefficients(v0, grid: PeriodicGrid):
    vals = v0.values if isinstance(v0, ComplexField) else np.asarray(v0)
    if vals.shape != tuple(grid.shape):
        raise ConfigurationError(f"v0 has shape {vals.shape}, grid is {grid.shape}")
    return np.fft.fftn(vals) / grid.size


class Ansatz:
    """Precomputed lattice data for assembling w(s) from a table on a fine grid."""

    def __init__(self, table: PhaseAmplitudeTable, v0, grid: PeriodicGrid | None = None,
                 coef_tol: float = 0.0):
        if grid is None:
            grid = v0.grid if isinstance(v0, ComplexField) else table.grid
        tg = table.grid
        if not np.allclose(grid.lengths, tg.lengths, rtol=1e-13, atol=0):
            raise ConfigurationError("fine grid and table grid live on different tori")
        self.table = table
        self.grid = grid
        self.d = table.d
        self.fast = self.d == 2 and tg.shape[0] == 1
        if any(m < n for m, n, ax in zip(grid.shape, tg.shape, range(grid.ndim)) if not (self.fast and ax == 0)):
            raise ConfigurationError("the assembly grid must be at least as fine as the table grid")
        c = _coefficients(v0, grid).ravel()
        kvec = np.stack([np.broadcast_to(k, grid.shape).ravel() for k in grid.kmesh], axis=-1)
        hb = table.hbar
        xi = hb * kvec
        lam = np.linalg.norm(xi, axis=-1)
        weight = table.profile.phi(lam)
        keep = (weight > 0) & (np.abs(c) > coef_tol * max(np.abs(c).max(), 1e-300)) & (np.abs(c) > 0)
        self.index = np.flatnonzero(keep)
        self.c = c[keep] * weight[keep]
        self.k = kvec[keep]
        self.xi = xi[keep]
        self.lam = lam[keep]
        self.Wa = direction_weights(table.directions, self.xi) if self.xi.size else np.zeros((0, len(table.directions)))
        self._check_resolution()
        self._lb = None

    def _check_resolution(self):
        """The largest local wavenumber |grad Phi| / hbar must sit below Nyquist."""
        if not self.k.size:
            return
        gmax = self.table.diagnostics.get("grad_phase_max", 1.0)
        top = LAMBDA_MAX * gmax / self.table.hbar
        ny = min(n for n, m in zip(self.grid.nyquist, self.grid.shape) if m > 1)
        if top > ny:
            raise ResolutionError(f"assembly grid Nyquist {ny:.4g} below the local wavenumber {top:.4g}")

    @property
    def lb(self) -> LaplaceBeltrami:
        if self._lb is None:
            self._lb = LaplaceBeltrami(metric_on(self.table.metric, self.grid))
        return self._lb

    def _interp(self, s: float, arrays) -> list:
        """Table arrays (t, a, P) interpolated to (tau = lam s, xi/|xi|) -> (n_xi, P)."""
        Wt = tau_weights(self.table, self.lam * s)
        out = []
        for arr in arrays:
            if self.d == 1:
                a_idx = np.argmax(self.Wa, axis=1)
                G = np.moveaxis(arr[:, a_idx, :], 1, 0)  # (xi, t, P)
            else:
                G = np.einsum("xa,tap->xtp", self.Wa, arr, optimize=True)
            out.append(np.einsum("xt,xtp->xp", Wt, G))
        return out

    def _to_fine(self, E: np.ndarray) -> np.ndarray:
        tg = self.table.grid
        E = E.reshape((-1,) + tuple(tg.shape))
        if self.fast:
            return fourier_resample(E, tg, (1, self.grid.shape[1]))[:, 0, :]
        return fourier_resample(E, tg, self.grid.shape)

    def _sum(self, E: np.ndarray) -> np.ndarray:
        """sum_xi c_xi e^{i k . x} E_xi(x) on the fine grid."""
        g = self.grid
        if self.fast:
            r = g.axes[1]
            kth, kr = self.k[:, 0], self.k[:, 1]
            terms = self.c[:, None] * np.exp(1j * np.outer(kr, r)) * E
            F = np.zeros((g.shape[0], g.shape[1]), dtype=complex)
            idx = np.rint(kth * g.lengths[0] / (2 * np.pi)).astype(int) % g.shape[0]
            np.add.at(F, idx, terms)
            return np.fft.ifft(F, axis=0) * g.shape[0]
        if self.d == 1:
            x = g.axes[0]
            return np.einsum("x,xp->p", self.c, np.exp(1j * np.outer(self.k[:, 0], x)) * E)
        out = np.zeros(g.shape, dtype=complex)
        X = g.mesh
        for i in range(len(self.c)):
            out += self.c[i] * np.exp(1j * (self.k[i, 0] * X[0] + self.k[i, 1] * X[1])) * E[i]
        return out

    def _amplitude_sum(self, amps: list) -> np.ndarray:
        hb = self.table.hbar
        total = 0.0
        for j, a in enumerate(amps):
            total = total + (hb / self.lam[:, None]) ** j * a
        return total

    def _chunks(self, size: int = 512):
        n = len(self.c)
        for i in range(0, n, size):
            yield slice(i, i + size)

    def _restricted(self, sl):
        sub = object.__new__(Ansatz)
        sub.__dict__.update(self.__dict__)
        sub.c, sub.k, sub.xi, sub.lam, sub.Wa = self.c[sl], self.k[sl], self.xi[sl], self.lam[sl], self.Wa[sl]
        return sub

    def w(self, s: float, N: int | None = None) -> np.ndarray:
        t = self.table
        N = t.N if N is None else N
        if not len(self.c):
            return np.zeros(self.grid.shape, dtype=complex)
        out = 0.0
        for sl in self._chunks():
            sub = self._restricted(sl)
            parts = sub._interp(s, [t.psi] + [t.amps[j] for j in range(N + 1)])
            psi = sub._to_fine(parts[0]).real
            A = sub._to_fine(sub._amplitude_sum(parts[1:]))
            E = np.exp(1j * sub._phase_factor(psi)) * A
            out = out + sub._sum(E)
        return out

    def _phase_factor(self, psi):
        lam = self.lam.reshape((-1,) + (1,) * (psi.ndim - 1))
        return lam * psi / self.table.hbar

    def residual(self, s: float, N: int | None = None) -> np.ndarray:
        """r = i hbar d_s w + hbar^2 Delta_G w, with d_s taken analytically through the tables."""
        t = self.table
        N = t.N if N is None else N
        hb = t.hbar
        dpsi = t.dtau("psi")
        damps = t.dtau("amps")
        w = 0.0
        ds_term = 0.0
        for sl in self._chunks():
            sub = self._restricted(sl)
            parts = sub._interp(s, [t.psi, dpsi] + [t.amps[j] for j in range(N + 1)]
                                + [damps[j] for j in range(N + 1)])
            psi = sub._to_fine(parts[0]).real
            psi_t = sub._to_fine(parts[1]).real
            A = sub._to_fine(sub._amplitude_sum(parts[2:N + 3]))
            A_t = sub._to_fine(sub._amplitude_sum(parts[N + 3:]))
            lam = sub.lam.reshape((-1,) + (1,) * (psi.ndim - 1))
            e = np.exp(1j * sub._phase_factor(psi))
            w = w + sub._sum(e * A)
            ds_term = ds_term + sub._sum(e * (-lam**2 * psi_t * A + 1j * hb * lam * A_t))
        return ds_term + hb**2 * self.lb.apply(w)


def assemble_ansatz(table: PhaseAmplitudeTable, v0, s: float, grid: PeriodicGrid | None = None,
                    N: int | None = None):
    """w_N(s) on the grid of ``v0``; a ComplexField when ``v0`` is one."""
    A = Ansatz(table, v0, grid)
    vals = A.w(s, N)
    if isinstance(v0, ComplexField):
        return ComplexField(vals, v0.grid, "none")
    return vals


def exact_free_flow(v0, s: float, hbar: float, profile: CutoffProfile = DEFAULT_PROFILE,
                    grid: PeriodicGrid | None = None) -> np.ndarray:
    """e^{i hbar s Delta} phi(hbar |D|) v0 for the flat metric (Fourier multiplier)."""
    grid = grid or v0.grid
    vals = v0.values if isinstance(v0, ComplexField) else np.asarray(v0)
    sym = profile.phi(hbar * grid.kabs) * np.exp(-1j * hbar * s * grid.kabs**2)
    return grid.multiplier(vals, sym)


def build_table(metric: MetricField, h: float, alpha: float, S: float, N: int = 3, n_s: int = 33,
                n_dir: int | None = None, grid: PeriodicGrid | None = None, substeps: int = 4,
                profile: CutoffProfile = DEFAULT_PROFILE, chi_tilde=None, domain=None,
                delta_min: float = DELTA_MIN) -> PhaseAmplitudeTable:
    """Characteristics, phase and transport on the window |s| <= S for all |xi| <= 2.

    ``grid`` is the start-point/table grid (defaults to the metric grid, or to
    a one-row grid in r for theta-invariant two-dimensional metrics).
    """
    d = metric.d
    series = MetricSeries(metric)
    if grid is None:
        grid = metric.grid
        if d == 2 and metric.is_theta_invariant():
            grid = PeriodicGrid((1, metric.grid.shape[1]), metric.grid.lengths)
    dirs = unit_directions(d, n_dir or 32)
    flow = solve_characteristics(series, LAMBDA_MAX * S, n_s, dirs, grid, substeps, delta_min)
    table = build_phase(flow, metric, h, alpha, S, profile, chi_tilde)
    return solve_transport(table, N, flow, domain)


def dispersive_fit(sups, s_list, h: float, d: int, tol: float = 0.2, label: str = "dispersive") -> ScalingReport:
    """Fit log sup|w(s)| against log(h s); the prediction is -d/2."""
    s_list = list(s_list)
    if len(s_list) < 4:
        raise FitError("dispersive fit needs at least 4 time nodes")
    hs = [h * s for s in s_list]
    return fit_scaling(label, hs, list(sups), predicted=-d / 2.0, tol=tol, mode="two-sided",
                       min_scales=4, s=s_list)


def decay_profile(table: PhaseAmplitudeTable, v0, s_list, grid=None, N: int | None = None):
    A = Ansatz(table, v0, grid)
    return [float(np.abs(A.w(s, N)).max()) for s in s_list]


def residual_norm(table: PhaseAmplitudeTable, v0, s: float, grid=None, N: int | None = None) -> float:
    """||r(s)||_{L2} / ||v0||_{L1} with flat grid norms."""
    A = Ansatz(table, v0, grid)
    r = A.residual(s, N)
    g = A.grid
    vals = v0.values if isinstance(v0, ComplexField) else np.asarray(v0)
    l2 = np.sqrt(np.sum(np.abs(r) ** 2) * g.cell_volume)
    l1 = np.sum(np.abs(vals)) * g.cell_volume
    return float(l2 / l1)


def residual_predicted(N: int, alpha: float, d: int, sigma: float = 0.0) -> float:
    return N * (1 - alpha) + 2 - alpha - sigma - d


def residual_scan(g: MetricField, u0_factory, alpha: float, N: int, ks, c: float, fine_factory,
                  profile: CutoffProfile = DEFAULT_PROFILE, n_s: int = 65, n_dir: int | None = None,
                  tol: float = 0.3) -> ScalingReport:
    """||r_{h,N}(S/2)||_{L2} / ||v0||_{L1} over h = 2^-k against N(1-a) + 2 - a - d.

    ``fine_factory(k)`` returns the assembly grid and ``u0_factory(grid, h)``
    the datum v0 on it.
    """
    ks = list(ks)
    hs, vals = [], []
    for k in ks:
        h = 2.0 ** (-k)
        gh = mollify_metric(g, h, alpha, profile)
        S = c * h**alpha
        table = build_table(gh, h, alpha, S, N, n_s, n_dir, profile=profile)
        fine = fine_factory(k)
        v0 = u0_factory(fine, h)
        hs.append(h)
        vals.append(residual_norm(table, v0, 0.5 * S, fine))
    return fit_scaling(f"residual N={N}", hs, vals, predicted=residual_predicted(N, alpha, g.d), tol=tol,
                       mode="at-least", ks=ks, alpha=alpha, N=N)


def caustic_time(metric: MetricField, T: float, n_s: int = 65, n_dir: int | None = None,
                 grid=None, delta: float = DELTA_MIN, substeps: int = 4):
    """First tau in [0, T] where min J <= delta (None if the Jacobian stays above it)."""
    series = MetricSeries(metric)
    d = metric.d
    if grid is None and d == 2 and metric.is_theta_invariant():
        grid = PeriodicGrid((1, metric.grid.shape[1]), metric.grid.lengths)
    flow = solve_characteristics(series, T, n_s, unit_directions(d, n_dir or 32), grid, substeps, delta, check=False)
    return flow.first_caustic(delta)


def measure_validity(g: MetricField, alpha: float, ks, T_probe: float = 4.0,
                     profile: CutoffProfile = DEFAULT_PROFILE, delta: float = DELTA_MIN,
                     n_dir: int | None = None) -> dict:
    """Window constants c_k = s*_k / h^alpha with s*_k the first caustic time for |xi| <= 2.

    s* = tau* / 2 by homogeneity. A scale with no caustic inside the probe
    reports the probe end as a lower bound.
    """
    out = {"k": [], "c": [], "lower_bound": []}
    for k in ks:
        h = 2.0 ** (-k)
        gh = mollify_metric(g, h, alpha, profile)
        tau = caustic_time(gh, T_probe, n_dir=n_dir, delta=delta)
        bound = tau is None
        s_star = (T_probe if bound else tau) / LAMBDA_MAX
        out["k"].append(k)
        out["c"].append(s_star / h**alpha)
        out["lower_bound"].append(bound)
    cs = np.array(out["c"])
    out["c_min"] = float(cs.min())
    out["spread"] = float(cs.max() / cs.min())
    out["stable"] = bool(out["spread"] <= 2.0)
    return out
