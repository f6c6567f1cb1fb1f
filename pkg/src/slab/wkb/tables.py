"""Eulerian phase and amplitude tables built from a characteristic flow.

Tables are stored for unit momenta omega on the tau window [0, T]:

    Phi~(tau, x, omega) = x . omega + psi(tau, x, omega)
    a~_j(tau, x, omega)

and expanded with Phi(s, x, lam omega) = lam Phi~(lam s) and
a_j(s, x, lam omega) = phi(lam) lam^{-j} a~_j(lam s).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, ResolutionError, TransportError
from ..geometry import MetricField, make_metric
from ..propagators import LaplaceBeltrami
from ..spectral import DEFAULT_PROFILE, CutoffProfile
from ..torus import PeriodicGrid, TrigInterpolant, fourier_resample
from .chebyshev import diff_matrix, integration_matrix
from .characteristics import CharacteristicFlow


def metric_on(metric: MetricField, grid: PeriodicGrid) -> MetricField:
    """The (band-limited) metric sampled on another grid of the same torus."""
    src = metric.grid
    if tuple(src.shape) == tuple(grid.shape):
        return metric
    if grid.ndim == 2 and grid.shape[0] == 1:
        if not metric.is_theta_invariant():
            raise ConfigurationError("a one-row table grid needs a theta-invariant metric")
        vals = metric.values[:, :, :1, :]
        sub = PeriodicGrid((1, src.shape[1]), src.lengths)
        if grid.shape[1] != src.shape[1]:
            vals = fourier_resample(vals, sub, grid.shape)
        return make_metric(vals, grid)
    return make_metric(fourier_resample(metric.values, src, grid.shape), grid)


def _as_batch(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """(..., P) -> (..., *grid.shape)."""
    return values.reshape(values.shape[:-1] + tuple(grid.shape))


def invert_flow(flow: CharacteristicFlow, tol: float = 1e-12, max_iter: int = 50):
    """Start points x0(tau, omega, x) with y(tau, x0, omega) = x for every grid point x.

    Damped Newton iteration on x0 + D(x0) = x with the trigonometric
    interpolant of the periodic displacement D = y - x0, continued along the
    tau nodes from x0 = x at tau = 0.
    """
    grid = flow.grid
    d = grid.ndim
    x = grid.points
    D = flow.y - x[None, None]  # (t, a, P, d)
    scale = max(1.0, max(grid.lengths))
    x0 = np.empty_like(D)
    x0[0] = x[None]
    worst = 0.0
    tails = []
    for t in range(1, D.shape[0]):
        interp = TrigInterpolant(_as_batch(np.moveaxis(D[t], -1, 1), grid), grid)  # batch (a, d)
        grads = [interp.derivative(tuple(int(i == ax) for i in range(d))) for ax in range(d)]
        tails.append(interp.tail())

        def resid(z):
            return z + np.moveaxis(interp(z[:, None]), 1, -1) - x[None]

        z = x0[t - 1].copy()
        F = resid(z)
        err = np.abs(F).max(axis=(1, 2))
        for _ in range(max_iter):
            if err.max() < tol * scale:
                break
            Jm = np.stack([np.moveaxis(gr(z[:, None]), 1, -1) for gr in grads], axis=-1) + np.eye(d)
            step = np.linalg.solve(Jm, F[..., None])[..., 0]
            lam = np.ones(z.shape[0])
            for _ in range(8):
                z_new = z - lam[:, None, None] * step
                F_new = resid(z_new)
                e_new = np.abs(F_new).max(axis=(1, 2))
                bad = e_new > err
                if not bad.any():
                    break
                lam = np.where(bad, 0.5 * lam, lam)
            z, F, err = z_new, F_new, e_new
        if err.max() >= tol * scale:
            raise ResolutionError(f"inversion of x -> y(s, x) did not converge at tau = {flow.tau[t]:.4g} "
                                  f"(residual {err.max():.3e}); the trajectory grid is too coarse")
        x0[t] = z
        worst = max(worst, float(err.max()))
    return x0, {"inversion_residual": worst, "displacement_tail": float(max(tails, default=0.0))}


def lagrangian_to_eulerian(values: np.ndarray, x0: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Evaluate Lagrangian fields f(t, a, x0) (shape (t, a, P)) at the start points x0(t, a, x)."""
    return TrigInterpolant(_as_batch(values, grid), grid)(x0)


@dataclass
class PhaseAmplitudeTable:
    """Phase and amplitudes on the (tau nodes) x (directions) x (table grid) tensor grid."""

    tau: np.ndarray
    directions: np.ndarray
    grid: PeriodicGrid
    psi: np.ndarray
    amps: np.ndarray
    metric: MetricField = field(repr=False)
    h: float = 1.0
    alpha: float = 0.5
    N: int = 0
    S: float = 0.0
    profile: CutoffProfile = DEFAULT_PROFILE
    diagnostics: dict = field(default_factory=dict)
    flow: CharacteristicFlow | None = field(default=None, repr=False)
    x0: np.ndarray | None = field(default=None, repr=False)

    @property
    def hbar(self) -> float:
        return self.h / self.profile.unit

    @property
    def T(self) -> float:
        return float(self.tau[-1])

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def dtau(self, which: str = "psi") -> np.ndarray:
        Dm = diff_matrix(len(self.tau), self.T)
        arr = self.psi if which == "psi" else self.amps
        axis = 0 if which == "psi" else 1
        return np.moveaxis(np.tensordot(Dm, np.moveaxis(arr, axis, 0), axes=(1, 0)), 0, axis)

    def phase(self, s: float, xi) -> np.ndarray:
        """Phi(s, x, xi) on the table grid for one momentum xi (by homogeneity)."""
        from .ansatz import direction_weights, tau_weights  # local import avoids a cycle
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        lam = np.linalg.norm(xi, axis=-1)
        Wa = direction_weights(self.directions, xi)
        Wt = tau_weights(self, lam * s)
        psi = np.einsum("xa,xt,tap->xp", Wa, Wt, self.psi)
        xdot = self.grid.points @ xi.T
        return (xdot.T + lam[:, None] * psi).reshape((-1,) + tuple(self.grid.shape))

    def amplitude(self, j: int, s: float, xi) -> np.ndarray:
        """a_j(s, x, xi) on the table grid."""
        from .ansatz import direction_weights, tau_weights
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        lam = np.linalg.norm(xi, axis=-1)
        Wa = direction_weights(self.directions, xi)
        Wt = tau_weights(self, lam * s)
        a = np.einsum("xa,xt,tap->xp", Wa, Wt, self.amps[j])
        fac = self.profile.phi(lam) * lam ** (-float(j))
        return (fac[:, None] * a).reshape((-1,) + tuple(self.grid.shape))

    def save(self, path) -> tuple:
        """Write ``path``.npz (arrays) and ``path``.json (scalars and diagnostics)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        npz = path.with_suffix(".npz")
        np.savez(npz, tau=self.tau, directions=self.directions, psi=self.psi, amps=self.amps,
                 metric=self.metric.values, shape=np.array(self.grid.shape), lengths=np.array(self.grid.lengths))
        meta = {"h": self.h, "alpha": self.alpha, "N": self.N, "S": self.S, "unit": self.profile.unit,
                "T": self.T, "n_s": len(self.tau), "n_dir": len(self.directions),
                "grid_shape": list(self.grid.shape), "diagnostics": _jsonable(self.diagnostics)}
        js = path.with_suffix(".json")
        js.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return npz, js

    @classmethod
    def load(cls, path) -> "PhaseAmplitudeTable":
        path = Path(path)
        z = np.load(path.with_suffix(".npz"))
        meta = json.loads(path.with_suffix(".json").read_text())
        grid = PeriodicGrid(tuple(int(n) for n in z["shape"]), tuple(float(x) for x in z["lengths"]))
        return cls(tau=z["tau"], directions=z["directions"], grid=grid, psi=z["psi"], amps=z["amps"],
                   metric=make_metric(z["metric"], grid), h=meta["h"], alpha=meta["alpha"], N=meta["N"],
                   S=meta["S"], profile=CutoffProfile(meta["unit"]), diagnostics=meta["diagnostics"])


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, (int, float, str, bool, list)) or v is None:
            out[k] = v
    return out


def build_phase(flow: CharacteristicFlow, metric: MetricField, h: float = 1.0, alpha: float = 0.5,
                S: float | None = None, profile: CutoffProfile = DEFAULT_PROFILE,
                chi_tilde: np.ndarray | None = None) -> PhaseAmplitudeTable:
    """Invert the flow and tabulate psi = Phi~ - x . omega and a~_0 on the table grid.

    Along a trajectory Phi~(tau, y) = x0 . omega + tau H(x0, omega), so
    psi(tau, x) = -(x - x0) . omega + tau H(x0, omega) with x0 = x0(tau, x).
    ``chi_tilde`` (on the table grid) multiplies a~_0; None means the global chart.
    """
    grid = flow.grid
    mg = metric_on(metric, grid)
    x0, diag = invert_flow(flow)
    x = grid.points
    om = flow.directions
    H = flow.series.hamiltonian(x0.reshape(-1, grid.ndim),
                                np.broadcast_to(om[None, :, None, :], x0.shape).reshape(-1, grid.ndim))
    H = H.reshape(x0.shape[:-1])
    psi = -np.einsum("tapd,ad->tap", x[None, None] - x0, om) + flow.tau[:, None, None] * H
    ell = lagrangian_to_eulerian(flow.ell, x0, grid)
    a0 = np.exp(ell).astype(complex)
    if chi_tilde is not None:
        chi = np.asarray(chi_tilde, dtype=float).reshape(grid.shape)
        a0 = a0 * TrigInterpolant(chi, grid)(x0)
    table = PhaseAmplitudeTable(
        tau=flow.tau, directions=om, grid=grid, psi=psi, amps=a0[None], metric=mg,
        h=h, alpha=alpha, N=0, S=float(S if S is not None else flow.T / 2.0), profile=profile,
        flow=flow, x0=x0,
    )
    table.diagnostics.update(diag)
    table.diagnostics.update(phase_diagnostics(table, flow))
    return table


def phase_diagnostics(table: PhaseAmplitudeTable, flow: CharacteristicFlow) -> dict:
    """Hamilton-Jacobi residual, gradient window and momentum bounds."""
    grid = table.grid
    lb = LaplaceBeltrami(table.metric)
    psi = _as_batch(table.psi, grid)
    grads = grid.gradient(psi)  # list over axes of (t, a, *shape)
    grad_phi = np.stack([g + table.directions[None, :, i].reshape((1, -1) + (1,) * grid.ndim)
                         for i, g in enumerate(grads)], axis=-1)
    K = np.moveaxis(lb.K, (0, 1), (-2, -1))  # (*shape, d, d)
    quad = np.einsum("...l,...lm,...m->...", grad_phi, K[None, None], grad_phi)
    dpsi = _as_batch(table.dtau("psi"), grid)
    hj = float(np.abs(dpsi + quad).max())
    gnorm = np.linalg.norm(grad_phi, axis=-1)
    eta_lo, eta_hi = flow.momentum_bounds()
    return {
        "hj_residual": hj,
        "grad_phase_min": float(gnorm.min()),
        "grad_phase_max": float(gnorm.max()),
        "momentum_min": eta_lo,
        "momentum_max": eta_hi,
        "jacobian_min": flow.jacobian_min,
        "hamiltonian_drift": flow.hamiltonian_drift(),
        "psi_tail": TrigInterpolant(psi, grid).tail(),
    }


def laplacian_phase(table: PhaseAmplitudeTable) -> np.ndarray:
    """Delta_G Phi~ on the table grid: Delta psi + b . omega."""
    grid = table.grid
    lb = LaplaceBeltrami(table.metric)
    lap = lb.apply(_as_batch(table.psi, grid))
    bvec = []
    for m in range(grid.ndim):
        acc = sum(grid.derivative(lb.w * lb.K[l, m], l) for l in range(grid.ndim))
        bvec.append(acc / lb.w)
    bw = sum(bvec[m][None, None] * table.directions[None, :, m].reshape((1, -1) + (1,) * grid.ndim)
             for m in range(grid.ndim))
    return lap + bw


def solve_transport(table: PhaseAmplitudeTable, N: int, flow: CharacteristicFlow | None = None,
                    domain: np.ndarray | None = None, support_tol: float = 1e-12) -> PhaseAmplitudeTable:
    """Fill a~_1 .. a~_N by integrating a~_j' = -Delta Phi~ a~_j + i Delta a~_{j-1} along the flow.

    With e^{ell} the integrating factor of the damping, the solution from zero
    data is a~_j = e^{ell} int_0^tau e^{-ell} i (Delta a~_{j-1})(y) dtau' (Chebyshev
    quadrature). ``domain`` (boolean mask on the table grid) is the chart; a
    nonzero amplitude outside it raises :class:`TransportError`.
    """
    if N < 0:
        raise ConfigurationError("amplitude order N must be >= 0")
    flow = flow or table.flow
    x0 = table.x0
    if flow is None or x0 is None:
        raise ConfigurationError("solve_transport needs the table's characteristic flow")
    grid = table.grid
    lb = LaplaceBeltrami(table.metric)
    Q = integration_matrix(len(table.tau), table.T)
    ell = flow.ell
    amps = [table.amps[0]]
    for j in range(1, N + 1):
        lap = lb.apply(_as_batch(amps[-1], grid))
        src = 1j * TrigInterpolant(lap, grid)(flow.y)  # at y(tau, x0), shape (t, a, P)
        integ = np.tensordot(Q, np.exp(-ell) * src, axes=(1, 0))
        aL = np.exp(ell) * integ
        amps.append(lagrangian_to_eulerian(aL, x0, grid))
    table.amps = np.stack(amps)
    table.N = N
    tails = [TrigInterpolant(_as_batch(a, grid), grid).tail() for a in table.amps]
    table.diagnostics["amplitude_tail"] = float(max(tails))
    if domain is not None:
        _check_support(table, np.asarray(domain, dtype=bool), support_tol)
    return table


def _check_support(table: PhaseAmplitudeTable, domain: np.ndarray, tol: float):
    mag = np.abs(table.amps).max(axis=0)  # (t, a, P)
    scale = mag.max()
    outside = ~domain.reshape(-1)
    bad = (mag[..., outside] > tol * scale)
    if bad.any():
        t = int(np.argmax(bad.reshape(len(table.tau), -1).any(axis=1)))
        err = TransportError(f"amplitude support leaves the chart at tau = {table.tau[t]:.4g}")
        err.time = float(table.tau[t])
        raise err


def amplitude_growth(table: PhaseAmplitudeTable) -> dict:
    """Compare sup|a~_0(tau)| with e^{M tau} sup|a~_0(0)|, M = sup |Delta Phi~|."""
    M = float(np.abs(laplacian_phase(table)).max())
    sup = np.abs(table.amps[0]).reshape(len(table.tau), -1).max(axis=1)
    bound = np.exp(M * table.tau) * sup[0]
    return {"M": M, "sup": sup, "bound": bound, "holds": bool(np.all(sup <= bound * (1 + 1e-9)))}
