"""Bicharacteristics of H(x, eta) = G^{lm}(x) eta_l eta_m with variational equations.

Orientation: y' = 2 G^{-1}(y) eta and eta'_n = -d_n G^{lm}(y) eta_l eta_m, so
the Eulerian phase satisfies d_s Phi + G^{lm} d_l Phi d_m Phi = 0 and the
transport drift is 2 G^{lm} d_l Phi d_m. The recorded Hamiltonian is the
symbol p = -H, which is conserved along every trajectory.

Trajectories are computed for unit momenta omega. The flow is homogeneous:
the trajectory from (x, lam * omega) at time s is the one from (x, omega) at
time tau = lam * s, with momentum scaled by lam.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CausticError, ConfigurationError
from ..geometry import MetricField
from ..torus import PeriodicGrid
from .chebyshev import cgl_nodes
from .series import MetricSeries

DELTA_MIN = 0.1


def unit_directions(d: int, n_dir: int | None = None) -> np.ndarray:
    """+1/-1 in one dimension, ``n_dir`` equispaced unit vectors in two."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if not n_dir or n_dir < 4:
        raise ConfigurationError("two-dimensional flows need at least 4 directions")
    a = 2 * np.pi * np.arange(n_dir) / n_dir
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


def _det(A):
    if A.shape[-1] == 1:
        return A[..., 0, 0]
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def _inv(A):
    if A.shape[-1] == 1:
        return 1.0 / A
    det = _det(A)
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1] / det
    out[..., 1, 1] = A[..., 0, 0] / det
    out[..., 0, 1] = -A[..., 0, 1] / det
    out[..., 1, 0] = -A[..., 1, 0] / det
    return out


def _rhs(series: MetricSeries, state: dict) -> dict:
    y, eta, A, B = state["y"], state["eta"], state["A"], state["B"]
    ev = series.evaluate(y)
    K, dK, d2K, b = ev["K"], ev["dK"], ev["d2K"], ev["b"]
    ydot = 2 * np.einsum("plm,pm->pl", K, eta)
    etadot = -np.einsum("pnlm,pl,pm->pn", dK, eta, eta)
    Myy = 2 * np.einsum("pnlm,pm->pln", dK, eta)
    Mey = -np.einsum("pnqlm,pl,pm->pnq", d2K, eta, eta)
    Adot = Myy @ A + 2 * K @ B
    Bdot = Mey @ A - np.swapaxes(Myy, 1, 2) @ B
    hess = B @ _inv(A)
    lap_phi = np.einsum("plm,pml->p", K, hess) + np.einsum("pm,pm->p", b, eta)
    return {"y": ydot, "eta": etadot, "A": Adot, "B": Bdot, "ell": -lap_phi}


def _axpy(state, k, a):
    return {key: state[key] + a * k[key] for key in state}


def _rk4_step(series, state, dt):
    k1 = _rhs(series, state)
    k2 = _rhs(series, _axpy(state, k1, 0.5 * dt))
    k3 = _rhs(series, _axpy(state, k2, 0.5 * dt))
    k4 = _rhs(series, _axpy(state, k3, dt))
    return {key: state[key] + dt / 6.0 * (k1[key] + 2 * k2[key] + 2 * k3[key] + k4[key]) for key in state}


@dataclass
class CharacteristicFlow:
    """Trajectories on the tensor grid (tau nodes) x (directions) x (start points).

    Arrays are indexed [t, a, p, ...] with t over ``tau``, a over
    ``directions`` and p over the flattened start grid ``grid``.
    """

    tau: np.ndarray
    directions: np.ndarray
    grid: PeriodicGrid
    y: np.ndarray
    eta: np.ndarray
    A: np.ndarray
    B: np.ndarray
    ell: np.ndarray
    hamiltonian: np.ndarray
    series: MetricSeries = field(repr=False)
    substeps: int = 1

    @property
    def J(self) -> np.ndarray:
        return _det(self.A)

    @property
    def T(self) -> float:
        return float(self.tau[-1])

    @property
    def jacobian_min(self) -> float:
        return float(self.J.min())

    def hamiltonian_drift(self) -> float:
        """max over trajectories of the relative change of p along the flow."""
        n = self.y.shape[:3]
        p = -self.series.hamiltonian(self.y.reshape(-1, self.y.shape[-1]), self.eta.reshape(-1, self.eta.shape[-1]))
        p = p.reshape(n)
        return float(np.abs(p / self.hamiltonian[None] - 1.0).max())

    def momentum_bounds(self) -> tuple:
        m = np.linalg.norm(self.eta, axis=-1)
        return float(m.min()), float(m.max())

    def first_caustic(self, delta: float = DELTA_MIN):
        """First tau node where min J <= delta, or None."""
        bad = self.J.reshape(len(self.tau), -1).min(axis=1) <= delta
        if not bad.any():
            return None
        return float(self.tau[int(np.argmax(bad))])


def solve_characteristics(metric: MetricField | MetricSeries, T: float, n_s: int = 33,
                          directions=None, grid: PeriodicGrid | None = None, substeps: int = 4,
                          delta_min: float = DELTA_MIN, check: bool = True) -> CharacteristicFlow:
    """Integrate the Hamiltonian system with its variational equations by RK4.

    ``T`` is the end of the tau window, sampled at ``n_s`` Chebyshev-Gauss-Lobatto
    nodes; each node interval is covered by ``substeps`` equal RK4 steps.
    Start points default to the metric grid. Raises :class:`CausticError` when
    the Jacobian det(dy/dx) drops to ``delta_min`` inside the window.
    """
    series = metric if isinstance(metric, MetricSeries) else MetricSeries(metric)
    d = series.d
    grid = grid or series.grid
    if directions is None:
        directions = unit_directions(d, 32)
    directions = np.asarray(directions, dtype=float).reshape(-1, d)
    if n_s < 3 or T <= 0:
        raise ConfigurationError("need n_s >= 3 nodes on a positive window")
    tau = cgl_nodes(n_s, T)
    M, P = directions.shape[0], grid.size
    x0 = np.broadcast_to(grid.points[None], (M, P, d)).reshape(-1, d)
    om = np.broadcast_to(directions[:, None, :], (M, P, d)).reshape(-1, d)
    Q = M * P
    eye = np.broadcast_to(np.eye(d), (Q, d, d))
    state = {"y": x0.copy(), "eta": om.copy(), "A": eye.copy(), "B": np.zeros((Q, d, d)), "ell": np.zeros(Q)}
    H0 = series.hamiltonian(x0, om)
    out = {key: np.empty((n_s,) + v.shape) for key, v in state.items()}
    for key in state:
        out[key][0] = state[key]
    for i in range(1, n_s):
        dt = (tau[i] - tau[i - 1]) / substeps
        for _ in range(substeps):
            state = _rk4_step(series, state, dt)
        for key in state:
            out[key][i] = state[key]
        if check:
            jmin = float(_det(state["A"]).min())
            if not np.isfinite(jmin) or jmin <= delta_min:
                err = CausticError(f"Jacobian fell to {jmin:.3g} <= {delta_min} at tau = {tau[i]:.4g}")
                err.time = float(tau[i])
                raise err
    shape = (n_s, M, P)
    return CharacteristicFlow(
        tau=tau,
        directions=directions,
        grid=grid,
        y=out["y"].reshape(shape + (d,)),
        eta=out["eta"].reshape(shape + (d,)),
        A=out["A"].reshape(shape + (d, d)),
        B=out["B"].reshape(shape + (d, d)),
        ell=out["ell"].reshape(shape),
        hamiltonian=-H0.reshape(M, P),
        series=series,
        substeps=substeps,
    )
