"""Reference cylinder, its mirror double and the symmetry extensions.

The domain is Omega = S^1_L x [0, 1] sampled with both boundary rows. Its
double is the torus S^1_L x R/2Z; the reflection r -> -r (mod 2) fixes the
two boundary circles. In the 1D model Omega = [0, 1] doubles to R/2Z.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BoundaryConditionError, ConfigurationError, MetricError, StructureError
from .torus import PeriodicGrid

TAU_BC = 1e-10

SYMMETRIES = ("odd", "even", "none")


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Uniform grid on Omega with the boundary points r = 0 and r = 1 included."""

    L: float
    n_theta: int
    n_r: int
    d: int = 2

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}")
        if self.n_r < 4:
            raise ConfigurationError(f"n_r must be >= 4, got {self.n_r}")
        if self.d == 2:
            if not (self.L > 0 and np.isfinite(self.L)):
                raise ConfigurationError(f"L must be positive, got {self.L}")
            if self.n_theta < 4 or self.n_theta % 2:
                raise ConfigurationError(f"n_theta must be even and >= 4, got {self.n_theta}")
        else:
            object.__setattr__(self, "n_theta", 1)
            object.__setattr__(self, "L", 1.0)

    @property
    def shape(self) -> tuple:
        return (self.n_theta, self.n_r) if self.d == 2 else (self.n_r,)

    @property
    def dtheta(self) -> float:
        return self.L / self.n_theta

    @property
    def dr(self) -> float:
        return 1.0 / (self.n_r - 1)

    @property
    def spacing(self) -> tuple:
        return (self.dtheta, self.dr) if self.d == 2 else (self.dr,)

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @cached_property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_r)

    @cached_property
    def mesh(self) -> list:
        if self.d == 1:
            return [self.r]
        return np.meshgrid(self.theta, self.r, indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights (half weight on the boundary rows)."""
        wr = np.full(self.n_r, self.dr)
        wr[0] = wr[-1] = 0.5 * self.dr
        if self.d == 1:
            return wr
        return np.broadcast_to(self.dtheta * wr, self.shape).copy()

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[..., 0] = True
        m[..., -1] = True
        return m

    def doubled(self) -> "DoubledGrid":
        return DoubledGrid.from_domain(self)


def build_domain(L: float, n_theta: int, n_r: int) -> DomainGrid:
    return DomainGrid(float(L), int(n_theta), int(n_r), d=2)


def build_interval(n_r: int) -> DomainGrid:
    return DomainGrid(1.0, 1, int(n_r), d=1)


@dataclass(frozen=True, eq=False)
class DoubledGrid(PeriodicGrid):
    """Periodic double of a :class:`DomainGrid`.

    The doubled normal axis has 2(n_r - 1) points with the same spacing as the
    domain; r = 0 and r = 1 appear once each and are the reflection fixed set.
    """

    base: DomainGrid = None

    @classmethod
    def from_domain(cls, base: DomainGrid) -> "DoubledGrid":
        nr2 = 2 * (base.n_r - 1)
        if base.d == 2:
            return cls((base.n_theta, nr2), (base.L, 2.0), base)
        return cls((nr2,), (2.0,), base)

    @property
    def d(self) -> int:
        return self.base.d

    @cached_property
    def reflection_index(self) -> np.ndarray:
        """Index table j -> (-j) mod N along the doubled normal axis."""
        n = self.shape[-1]
        return (-np.arange(n)) % n

    @cached_property
    def fixed_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[..., 0] = True
        m[..., self.base.n_r - 1] = True
        return m

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.shape, self.cell_volume)

    def reflect_values(self, values: np.ndarray) -> np.ndarray:
        return values[..., self.reflection_index]


def _geometry_of(grid) -> str:
    return "double" if isinstance(grid, DoubledGrid) else "domain"


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples on a domain or doubled grid, tagged with a symmetry."""

    values: np.ndarray
    grid: object
    symmetry: str = "none"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != tuple(self.grid.shape):
            raise ConfigurationError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if self.symmetry not in SYMMETRIES:
            raise ConfigurationError(f"unknown symmetry {self.symmetry!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def geometry(self) -> str:
        return _geometry_of(self.grid)

    def with_values(self, values, symmetry=None) -> "ComplexField":
        return ComplexField(values, self.grid, self.symmetry if symmetry is None else symmetry)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(self.values) ** 2)))


@dataclass(frozen=True, eq=False)
class MetricField:
    """Grid-sampled SPD metric. ``values`` has shape (d, d) + grid.shape."""

    values: np.ndarray
    grid: object
    lipschitz_bound: float = np.nan
    ellipticity: tuple = (np.nan, np.nan)
    block_diagonal: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def geometry(self) -> str:
        return _geometry_of(self.grid)

    def component(self, i: int, j: int) -> np.ndarray:
        return self.values[i, j]

    def is_constant(self, tol: float = 0.0) -> bool:
        v = self.values.reshape(self.d, self.d, -1)
        return bool(np.all(np.abs(v - v[..., :1]) <= tol * max(1.0, np.abs(v).max())))

    def is_theta_invariant(self, tol: float = 1e-14) -> bool:
        if self.d == 1:
            return False
        v = self.values
        return bool(np.all(np.abs(v - v[:, :, :1, :]) <= tol * np.abs(v).max()))


def _difference_quotient_bound(values: np.ndarray, grid) -> float:
    """Sup of first-difference quotients over neighbouring grid points."""
    comps = values.reshape((-1,) + tuple(grid.shape))
    periodic = isinstance(grid, PeriodicGrid)
    best = 0.0
    for axis, h in enumerate(grid.spacing):
        ax = axis + 1
        if grid.shape[axis] < 2:
            continue
        if periodic or (isinstance(grid, DomainGrid) and grid.d == 2 and axis == 0):
            diff = np.roll(comps, -1, axis=ax) - comps
        else:
            diff = np.diff(comps, axis=ax)
        best = max(best, float(np.abs(diff).max()) / h)
    return best


def make_metric(values: np.ndarray, grid, block_tol: float = 1e-14) -> MetricField:
    """Validate samples and wrap them in a :class:`MetricField` with metadata."""
    values = np.asarray(values, dtype=float)
    d = grid.d if hasattr(grid, "d") else grid.ndim
    if values.shape != (d, d) + tuple(grid.shape):
        raise ConfigurationError(f"metric shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise MetricError("metric has non-finite entries")
    if np.abs(values - np.swapaxes(values, 0, 1)).max() > 1e-12 * np.abs(values).max():
        raise MetricError("metric is not symmetric")
    mats = np.moveaxis(values.reshape(d, d, -1), -1, 0)
    eig = np.linalg.eigvalsh(mats)
    lo, hi = float(eig.min()), float(eig.max())
    if lo <= 0:
        raise MetricError(f"metric is not positive definite (min eigenvalue {lo:.3e})")
    block = True
    if d == 2:
        block = bool(np.abs(values[0, 1]).max() <= block_tol * np.abs(values).max())
    return MetricField(values, grid, _difference_quotient_bound(values, grid), (lo, hi), block)


def metric_from_function(grid, fn) -> MetricField:
    """Sample ``fn(*mesh) -> (d, d) nested sequence`` on the grid."""
    mesh = grid.mesh
    raw = fn(*mesh)
    d = len(raw)
    vals = np.empty((d, d) + tuple(grid.shape))
    for i in range(d):
        for j in range(d):
            vals[i, j] = np.broadcast_to(raw[i][j], grid.shape)
    return make_metric(vals, grid)


def flat_metric(grid) -> MetricField:
    d = grid.d if hasattr(grid, "d") else grid.ndim
    vals = np.zeros((d, d) + tuple(grid.shape))
    for i in range(d):
        vals[i, i] = 1.0
    return make_metric(vals, grid)


def lipschitz_metric(base: DomainGrid, amp_theta: float = 0.2, amp_r: float = 0.3) -> MetricField:
    """diag(1 + a_theta sin(pi r), 1 + a_r sin(pi r)) on the domain.

    Its even double is 1 + a |sin(pi r)|, which has a kink on the fixed set.
    """
    if base.d == 1:
        return metric_from_function(base, lambda r: [[1 + amp_r * np.sin(np.pi * r)]])
    return metric_from_function(
        base,
        lambda th, r: [[1 + amp_theta * np.sin(np.pi * r), 0.0], [0.0, 1 + amp_r * np.sin(np.pi * r)]],
    )


def _even_index(grid: DoubledGrid) -> np.ndarray:
    """Domain row feeding each doubled row under even extension."""
    n = grid.shape[-1]
    j = np.arange(n)
    return np.where(j <= grid.base.n_r - 1, j, n - j)


def double_metric(g: MetricField) -> MetricField:
    """Even extension of a block-diagonal metric across both boundary circles."""
    if not isinstance(g.grid, DomainGrid):
        raise ConfigurationError("double_metric expects a metric on a DomainGrid")
    if not np.isfinite(g.lipschitz_bound):
        raise MetricError("metric has no finite Lipschitz bound")
    if not g.block_diagonal:
        raise StructureError("metric has normal-tangential cross terms; cannot reflect evenly")
    if g.ellipticity[0] <= 0:
        raise MetricError("metric is not positive definite")
    dg = g.grid.doubled()
    vals = g.values[..., _even_index(dg)].copy()
    if g.d == 2:
        vals[0, 1] = vals[1, 0] = 0.0
    return make_metric(vals, dg)


def extend(u: ComplexField, mode: str, tol: float = TAU_BC) -> ComplexField:
    """Odd (Dirichlet) or even (Neumann) extension of a field on Omega.

    Dirichlet data within ``tol`` of zero on the boundary are set to exactly
    zero on the fixed set so the result is exactly odd.
    """
    if not isinstance(u.grid, DomainGrid):
        raise ConfigurationError("extend expects a field on a DomainGrid")
    dg = u.grid.doubled()
    vals = u.values[..., _even_index(dg)].copy()
    nr = u.grid.n_r
    if mode == "dirichlet":
        scale = float(np.abs(u.values).max())
        edge = float(np.abs(u.values[..., [0, nr - 1]]).max())
        if scale > 0 and edge > tol * scale:
            raise BoundaryConditionError(
                f"Dirichlet extension needs u = 0 on the boundary (|u| = {edge:.3e}, tolerance {tol * scale:.3e})"
            )
        vals[..., nr:] *= -1
        vals[..., 0] = 0.0
        vals[..., nr - 1] = 0.0
        return ComplexField(vals, dg, "odd")
    if mode == "neumann":
        return ComplexField(vals, dg, "even")
    raise ConfigurationError(f"unknown extension mode {mode!r}")


def restrict(v: ComplexField) -> ComplexField:
    if not isinstance(v.grid, DoubledGrid):
        raise ConfigurationError("restrict expects a field on a DoubledGrid")
    return ComplexField(v.values[..., : v.grid.base.n_r], v.grid.base, "none")


def reflect(v: ComplexField) -> ComplexField:
    if not isinstance(v.grid, DoubledGrid):
        raise ConfigurationError("reflect expects a field on a DoubledGrid")
    return ComplexField(v.grid.reflect_values(v.values), v.grid, v.symmetry)


def asymmetry(v: ComplexField, symmetry: str) -> float:
    """max |v(r(y)) -/+ v(y)| for odd/even symmetry."""
    refl = v.grid.reflect_values(np.asarray(v.values))
    sign = -1.0 if symmetry == "odd" else 1.0
    return float(np.abs(refl - sign * v.values).max())
