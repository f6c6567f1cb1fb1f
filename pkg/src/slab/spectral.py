"""Littlewood-Paley cutoffs, dyadic spectral truncations, metric mollification
and operator-norm scans."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, CapacityError, MollificationError, ResolutionError
from .geometry import ComplexField, DoubledGrid, MetricField, make_metric
from .propagators import LaplaceBeltrami
from .scaling import ScalingReport, fit_scaling, loglog_fit
from .torus import PeriodicGrid

ALPHA_MIN = 3.0 / 7.0
# Default frequency unit: pi, the fundamental wavenumber of the doubled
# normal circle R/2Z, so reduced frequencies are mode numbers.
FREQ_UNIT = np.pi


def reduced_frequency(grid: PeriodicGrid, unit: float = FREQ_UNIT) -> np.ndarray:
    return grid.kabs / unit


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        s = 1.0 - t
        b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def bump(lam):
    """Radial cutoff b: 1 for |lam| <= 1, 0 for |lam| >= 2."""
    return smooth_step(2.0 - np.abs(lam))


@dataclass(frozen=True)
class CutoffProfile:
    """phi0 = b(2l), phi = b(l) - b(2l), phi_tilde = b(l/2) - b(4l), psi = b(2l).

    phi lives on 1/2 <= |l| <= 2 and phi0 + sum_k phi(2^-k l) telescopes to 1.
    phi_tilde is 1 on [1/2, 2] and supported in [1/4, 4].

    The profiles are evaluated at the reduced frequency l = |k| / unit, where
    k is the physical wavenumber. ``unit`` fixes the chart scale.
    """

    unit: float = FREQ_UNIT

    def phi0(self, lam):
        return bump(2.0 * np.asarray(lam))

    def phi(self, lam):
        lam = np.asarray(lam)
        return bump(lam) - bump(2.0 * lam)

    def phi_tilde(self, lam):
        lam = np.asarray(lam)
        return bump(0.5 * lam) - bump(4.0 * lam)

    def psi(self, lam):
        return bump(2.0 * np.asarray(lam))


DEFAULT_PROFILE = CutoffProfile()


@dataclass(frozen=True, eq=False)
class Chart:
    chi: np.ndarray
    chi_tilde: np.ndarray


def two_chart_atlas(grid: PeriodicGrid, axis: int = 0) -> list:
    """Smooth two-chart partition of unity along one periodic axis.

    chi_1 = q, chi_2 = 1 - q with q = 1 on the middle of the axis and 0 near
    its ends; each chi_tilde is 1 on supp chi and vanishes on an arc.
    """
    L = grid.lengths[axis]
    u = (grid.mesh[axis] / L) % 1.0

    def ramp(a, b, x):
        return smooth_step((x - a) / (b - a))

    q = ramp(0.1, 0.3, u) * (1 - ramp(0.7, 0.9, u))
    t1 = ramp(0.05, 0.1, u) * (1 - ramp(0.9, 0.95, u))
    v = (u + 0.5) % 1.0
    t2 = ramp(0.05, 0.2, v) * (1 - ramp(0.8, 0.95, v))
    return [Chart(q, t1), Chart(1.0 - q, t2)]


def check_atlas(atlas, tol: float = 1e-13) -> None:
    if not atlas:
        return
    total = sum(c.chi for c in atlas)
    if np.abs(total - 1).max() > tol:
        raise ConfigurationError("chart cutoffs do not sum to one")
    for c in atlas:
        if c.chi.min() < -tol or c.chi.max() > 1 + tol:
            raise ConfigurationError("chart cutoff outside [0, 1]")
        if np.abs(c.chi_tilde * c.chi - c.chi).max() > tol:
            raise ConfigurationError("chi_tilde is not 1 on the support of chi")


@dataclass(frozen=True, eq=False)
class DyadicBand:
    k: int
    profile: CutoffProfile = DEFAULT_PROFILE
    atlas: list | None = None

    def __post_init__(self):
        check_atlas(self.atlas)

    @property
    def h(self) -> float:
        return 2.0 ** (-self.k)


def _check_resolved(grid: PeriodicGrid, top: float, unit: float = FREQ_UNIT):
    ny = min(grid.nyquist) / unit
    if top > ny:
        raise ResolutionError(f"band reaches |xi| = {top:.4g} beyond the grid Nyquist frequency {ny:.4g}")


def chart_multiplier(grid: PeriodicGrid, symbol: np.ndarray, atlas=None, adjoint: bool = False):
    """Operator f -> sum_j chi_tilde_j m(D) (chi_j f) (or its adjoint)."""
    if not atlas:
        def op(f):
            return grid.multiplier(f, symbol)
        return op

    def op(f):
        out = 0.0
        for c in atlas:
            a, b = (c.chi, c.chi_tilde) if not adjoint else (c.chi_tilde, c.chi)
            out = out + b * grid.multiplier(a * f, symbol)
        return out
    return op


def band_operator(band: DyadicBand, grid: PeriodicGrid, which: str = "phi", adjoint: bool = False,
                  check: bool = True):
    """J_h (or the phi_tilde variant) as a callable on arrays over ``grid``."""
    fn = {"phi": band.profile.phi, "phi_tilde": band.profile.phi_tilde}[which]
    if check:
        _check_resolved(grid, (2.0 if which == "phi" else 4.0) / band.h, band.profile.unit)
    return chart_multiplier(grid, fn(band.h * reduced_frequency(grid, band.profile.unit)), band.atlas, adjoint)


def _atlas_even(atlas, grid) -> bool:
    if not atlas:
        return True
    if not isinstance(grid, DoubledGrid):
        return False
    return all(np.array_equal(grid.reflect_values(c.chi), c.chi)
               and np.array_equal(grid.reflect_values(c.chi_tilde), c.chi_tilde) for c in atlas)


def _wrap(f: ComplexField, values, atlas) -> ComplexField:
    sym = f.symmetry if _atlas_even(atlas, f.grid) else "none"
    return ComplexField(values, f.grid, sym)


def apply_band(band: DyadicBand, f: ComplexField, check: bool = True) -> ComplexField:
    """J_h f = sum_j chi_tilde_j phi(hD)(chi_j f)."""
    return _wrap(f, band_operator(band, f.grid, check=check)(f.values), band.atlas)


def apply_low(profile: CutoffProfile, f: ComplexField, atlas=None) -> ComplexField:
    """J_0 f = sum_j chi_tilde_j phi0(D)(chi_j f)."""
    op = chart_multiplier(f.grid, profile.phi0(reduced_frequency(f.grid, profile.unit)), atlas)
    return _wrap(f, op(f.values), atlas)


def lp_reconstruct(f: ComplexField, K: int | None = None, profile: CutoffProfile = DEFAULT_PROFILE,
                   atlas=None) -> ComplexField:
    """J_0 f + sum_{k=0}^K J_{2^-k} f.

    The top bands may extend past Nyquist here; they only need to cover the
    lattice, so the resolution check is skipped.
    """
    if K is None:
        K = int(np.ceil(np.log2(max(float(reduced_frequency(f.grid, profile.unit).max()), 1.0)))) + 1
    out = apply_low(profile, f, atlas).values.copy()
    for k in range(K + 1):
        out += apply_band(DyadicBand(k, profile, atlas), f, check=False).values
    return _wrap(f, out, atlas)


# metric mollification ------------------------------------------------------

def _mollify_values(values, grid, h, alpha, profile, atlas):
    op = chart_multiplier(grid, profile.psi(h**alpha * reduced_frequency(grid, profile.unit)), atlas)
    out = op(values).real
    return 0.5 * (out + np.swapaxes(out, 0, 1))


def ellipticity_threshold(g: MetricField, alpha: float, profile: CutoffProfile = DEFAULT_PROFILE,
                          atlas=None, kmax: int | None = None) -> float:
    """Largest dyadic h* with lambda_min(G_h) >= c/2 for every dyadic h <= h*.

    Scales finer than the grid act as the identity, so the scan is finite.
    """
    c = g.ellipticity[0]
    grid = g.grid
    if kmax is None:
        # psi(h^alpha l) = 1 once h^alpha l_max <= 1/2
        kmax = int(np.ceil(np.log2(2.0 * max(reduced_frequency(grid, profile.unit).max(), 2.0)) / alpha)) + 1
    h_star = None
    for k in range(kmax, -1, -1):
        h = 2.0 ** (-k)
        vals = _mollify_values(g.values, grid, h, alpha, profile, atlas)
        lo = _min_eig(vals)
        if lo < 0.5 * c:
            break
        h_star = h
    return 0.0 if h_star is None else h_star


def _min_eig(vals):
    d = vals.shape[0]
    mats = np.moveaxis(vals.reshape(d, d, -1), -1, 0)
    return float(np.linalg.eigvalsh(mats).min())


def mollify_metric(g: MetricField, h: float, alpha: float, profile: CutoffProfile = DEFAULT_PROFILE,
                   atlas=None) -> MetricField:
    """G_h = sum_j chi_tilde_j psi(h^alpha D)(chi_j G), componentwise."""
    if not 0 < alpha < 1:
        raise MollificationError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha < ALPHA_MIN:
        warnings.warn(f"alpha = {alpha} is below the admissible range [3/7, 1)", RuntimeWarning, stacklevel=2)
    if not isinstance(g.grid, PeriodicGrid):
        raise ConfigurationError("mollification needs a metric on a periodic grid")
    vals = _mollify_values(g.values, g.grid, h, alpha, profile, atlas)
    c = g.ellipticity[0]
    if _min_eig(vals) < 0.5 * c:
        h_star = ellipticity_threshold(g, alpha, profile, atlas)
        err = MollificationError(f"G_h loses ellipticity at h = {h:.4g}; threshold h* = {h_star:.4g}")
        err.h_star = h_star
        raise err
    out = make_metric(vals, g.grid)
    out.meta.update({"h": h, "alpha": alpha})
    return out


def second_derivative_sup(g: MetricField) -> float:
    """max over components and pairs (a, b) of sup |d_a d_b G|."""
    grid = g.grid
    best = 0.0
    s = grid.derivative_symbols
    for i in range(g.d):
        for j in range(i, g.d):
            ch = grid.fft(g.values[i, j])
            for a in range(grid.ndim):
                for b in range(a, grid.ndim):
                    best = max(best, float(np.abs(grid.ifft(s[a] * s[b] * ch).real).max()))
    return best


def mollify_scan(g: MetricField, alpha: float, ks, profile: CutoffProfile = DEFAULT_PROFILE,
                 tol: float = 0.15):
    """Scaling of sup|G_h - G| (slope alpha) and sup|d^2 G_h| (slope -alpha)."""
    ks = list(ks)
    hs, diffs, curv = [], [], []
    for k in ks:
        h = 2.0 ** (-k)
        gh = mollify_metric(g, h, alpha, profile)
        hs.append(h)
        diffs.append(float(np.abs(gh.values - g.values).max()))
        curv.append(second_derivative_sup(gh))
    r1 = fit_scaling("sup|G_h - G|", hs, diffs, predicted=alpha, tol=tol, ks=ks)
    r2 = fit_scaling("sup|d2 G_h|", hs, curv, predicted=-alpha, tol=tol, ks=ks)
    return r1, r2


# operator norms ------------------------------------------------------------

def _norm_weight(grid: PeriodicGrid, spec) -> np.ndarray | None:
    """Fourier weight <k>^s for an H^s norm spec ('L2', 'H1', or a number s)."""
    if spec in ("L2", 0, 0.0):
        return None
    s = {"H1": 1.0, "H2": 2.0, "H-1": -1.0}.get(spec, spec)
    try:
        s = float(s)
    except (TypeError, ValueError):
        raise ConfigurationError(f"unknown norm spec {spec!r}")
    return (1.0 + grid.kabs**2) ** (0.5 * s)


def operator_norm(A, grid: PeriodicGrid, domain="L2", codomain="L2", trials: int = 30, seed: int = 0,
                  adjoint=None, max_iter: int = 300, rtol: float = 1e-10, dense_cap: int = 2048,
                  check_linear: bool = True) -> float:
    """Power-iteration estimate of the norm of A between Sobolev spaces on ``grid``.

    Norms are flat and Fourier based. With ``adjoint`` (the unweighted L2
    adjoint) the iteration is matrix free; otherwise A is assembled densely by
    columns. The result is a lower bound maximised over ``trials`` starts.
    """
    rng = np.random.default_rng(seed)
    shape = tuple(grid.shape)
    if check_linear:
        _check_linear(A, shape, rng)
    wd = _norm_weight(grid, domain)
    wc = _norm_weight(grid, codomain)

    def lift(x, w, inverse=False):
        if w is None:
            return x
        return grid.multiplier(x, 1.0 / w if inverse else w)

    if adjoint is not None:
        def B(x):
            return lift(A(lift(x, wd, True)), wc)

        def BH(y):
            return lift(adjoint(lift(y, wc)), wd, True)
    else:
        n = grid.size
        if n > dense_cap:
            raise CapacityError(f"dense operator assembly on {n} points exceeds cap {dense_cap}; pass an adjoint")
        eye = np.eye(n, dtype=complex).reshape((n,) + shape)
        cols = np.asarray(A(lift(eye, wd, True)))
        M = lift(cols, wc).reshape(n, n).T

        def B(x):
            return (M @ x.reshape(x.shape[0], -1).T).T.reshape(x.shape)

        def BH(y):
            return (M.conj().T @ y.reshape(y.shape[0], -1).T).T.reshape(y.shape)

    x = rng.standard_normal((trials,) + shape) + 1j * rng.standard_normal((trials,) + shape)
    axes = tuple(range(1, 1 + len(shape)))
    x /= np.sqrt(np.sum(np.abs(x) ** 2, axis=axes, keepdims=True))
    est = np.zeros(trials)
    for _ in range(max_iter):
        y = B(x)
        new = np.sqrt(np.sum(np.abs(y) ** 2, axis=axes))
        z = BH(y)
        zn = np.sqrt(np.sum(np.abs(z) ** 2, axis=axes, keepdims=True))
        if np.all(zn == 0):
            est = new
            break
        x = z / np.where(zn == 0, 1.0, zn)
        done = np.all(np.abs(new - est) <= rtol * np.maximum(new, 1e-300))
        est = new
        if done:
            break
    return float(est.max())


def _check_linear(A, shape, rng, tol: float = 1e-9):
    u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a, b = 0.7 - 0.3j, -1.3 + 0.4j
    lhs = np.asarray(A(a * u + b * v))
    rhs = a * np.asarray(A(u)) + b * np.asarray(A(v))
    scale = np.linalg.norm(lhs) + np.linalg.norm(rhs) + 1e-6 * np.linalg.norm(a * u + b * v)
    if np.linalg.norm(lhs - rhs) > tol * max(scale, 1e-300):
        raise ContractError("operator failed the linearity probe")


COMMUTATOR_KINDS = {
    "L2_to_L2": ("L2", -1.0),
    "H1_to_L2": ("H1", 0.0),
    "diff_H1_to_L2": ("H1", None),
    "T_h": ("L2", 4.0),
}
T_H_FLOOR = 1e-12


def commutator_operators(g: MetricField, h: float, alpha: float, which: str, band: DyadicBand,
                         profile: CutoffProfile = DEFAULT_PROFILE):
    """Operator and its flat adjoint for one commutator kind at scale h."""
    grid = g.grid
    F = band_operator(band, grid)
    Fa = band_operator(band, grid, adjoint=True)
    if which == "T_h":
        Ft = band_operator(band, grid, which="phi_tilde", check=False)
        Fta = band_operator(band, grid, which="phi_tilde", adjoint=True, check=False)
        return (lambda u: Ft(F(u)) - F(u)), (lambda u: Fa(Fta(u)) - Fa(u))
    lbh = LaplaceBeltrami(mollify_metric(g, h, alpha, profile, band.atlas))
    if which in ("L2_to_L2", "H1_to_L2"):
        def op(u):
            return F(lbh.apply(u)) - lbh.apply(F(u))

        def adj(u):
            return lbh.adjoint_flat(Fa(u)) - Fa(lbh.adjoint_flat(u))
        return op, adj
    if which == "diff_H1_to_L2":
        lb = LaplaceBeltrami(g)

        def op(u):
            return F(lbh.apply(u) - lb.apply(u))

        def adj(u):
            v = Fa(u)
            return lbh.adjoint_flat(v) - lb.adjoint_flat(v)
        return op, adj
    raise ConfigurationError(f"unknown commutator kind {which!r}")


def commutator_scan(g: MetricField, alpha: float, ks, which: str = "L2_to_L2", atlas=None,
                    profile: CutoffProfile = DEFAULT_PROFILE, trials: int = 30, seed: int = 0,
                    tol: float = 0.25) -> ScalingReport:
    """Operator-norm scaling of the commutator family named by ``which``."""
    if which not in COMMUTATOR_KINDS:
        raise ConfigurationError(f"unknown commutator kind {which!r}")
    domain, predicted = COMMUTATOR_KINDS[which]
    if which == "diff_H1_to_L2":
        predicted = alpha - 1.0
    ks = list(ks)
    hs, vals = [], []
    for k in ks:
        band = DyadicBand(k, profile, atlas)
        op, adj = commutator_operators(g, band.h, alpha, which, band, profile)
        hs.append(band.h)
        # built from linear pieces; the probe cannot judge operators that vanish by cancellation
        vals.append(operator_norm(op, g.grid, domain, "L2", trials=trials, seed=seed + k, adjoint=adj,
                                  check_linear=False))
    if which == "T_h":
        return _rapid_decay_report(hs, vals, ks, predicted)
    return fit_scaling(f"commutator {which}", hs, vals, predicted=predicted, tol=tol, ks=ks, alpha=alpha)


def _rapid_decay_report(hs, vals, ks, bound) -> ScalingReport:
    """Rapid decay: norms shrink at least like h^bound as h -> 0, or sit below the floor."""
    floored = [max(v, 1e-300) for v in vals]
    slope, intercept, resid = loglog_fit(hs, floored)
    below = all(v < T_H_FLOOR for v in vals)
    return ScalingReport(
        label="T_h = F~_h F_h - F_h", scales=list(hs), values=list(vals), fitted_slope=slope,
        intercept=intercept, residual=resid, predicted_slope=bound, tolerance=0.0, mode="at-least",
        verdict=below or slope >= bound, ks=list(ks), extra={"floor": T_H_FLOOR, "all_below_floor": below},
    )
