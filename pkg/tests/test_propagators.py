import numpy as np
import pytest
from hypothesis import given, strategies as st

from slab.errors import CapacityError, ConfigurationError, QuadratureError
from slab.geometry import (ComplexField, asymmetry, build_domain, build_interval, extend, flat_metric,
                           lipschitz_metric, make_metric)
from slab.propagators import (LaplaceBeltrami, PropagatorSpec, duhamel, laplacian_for, propagate,
                              propagate_dirichlet, sine_series_propagator)
from slab.torus import PeriodicGrid


def _curved_1d(n=64):
    grid = PeriodicGrid((n,), (2.0,))
    a = 1 + 0.3 * np.sin(np.pi * grid.mesh[0])
    return grid, a, LaplaceBeltrami(make_metric((a**2)[None, None], grid))


def test_flat_laplacian_on_trig():
    grid = PeriodicGrid((32, 16), (2.0, 1.0))
    x, y = grid.mesh
    u = np.sin(np.pi * x) * np.cos(4 * np.pi * y)
    lb = LaplaceBeltrami(flat_metric(grid))
    np.testing.assert_allclose(lb.apply(u).real, -(np.pi**2 + 16 * np.pi**2) * u, atol=1e-9)


def test_curved_laplacian_closed_form():
    # G = a^2 in 1D: Delta_G u = a^-1 (a^-1 u')'
    grid, a, lb = _curved_1d()
    x = grid.mesh[0]
    u = np.sin(np.pi * x)
    da = 0.3 * np.pi * np.cos(np.pi * x)
    exact = (-np.pi**2 * np.sin(np.pi * x) * a - np.pi * np.cos(np.pi * x) * da) / a**3
    np.testing.assert_allclose(lb.apply(u).real, exact, atol=1e-9)


def test_laplacian_self_adjoint_nonpositive(rng):
    grid, _, lb = _curved_1d()
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert lb.inner(u, lb.apply(v)) == pytest.approx(lb.inner(lb.apply(u), v), rel=1e-10)
    assert lb.inner(u, lb.apply(u)).real <= 0
    assert lb.spectrum.max() <= 1e-10


@given(t=st.floats(-2.0, 2.0), seed=st.integers(0, 1000))
def test_exact_flow_is_unitary(t, seed):
    rng = np.random.default_rng(seed)
    grid, _, lb = _curved_1d(32)
    u = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    w = lb.flow(u, t)
    assert lb.norm(w) == pytest.approx(lb.norm(u), rel=1e-11)


@given(s=st.floats(-1.0, 1.0), t=st.floats(-1.0, 1.0))
def test_flow_group_property(s, t):
    grid, _, lb = _curved_1d(32)
    u = np.exp(np.cos(np.pi * grid.mesh[0])).astype(complex)
    np.testing.assert_allclose(lb.flow(lb.flow(u, s), t), lb.flow(u, s + t), atol=1e-10)


def test_crank_nicolson_second_order():
    grid, _, lb = _curved_1d(32)
    u = np.exp(np.cos(np.pi * grid.mesh[0])).astype(complex)
    ref = lb.flow(u, 0.2)
    errs = [np.abs(propagate(ComplexField(u, build_interval(17).doubled()), 0.2, lb,
                             PropagatorSpec("crank_nicolson", dt)).values - ref).max() for dt in (2e-3, 1e-3)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_crank_nicolson_conserves_norm():
    grid, _, lb = _curved_1d(32)
    u = np.exp(np.cos(np.pi * grid.mesh[0])).astype(complex)
    w = propagate(ComplexField(u, build_interval(17).doubled()), 0.5, lb, PropagatorSpec("crank_nicolson", 0.05))
    assert lb.norm(w.values) == pytest.approx(lb.norm(u), rel=1e-9)


def test_dirichlet_flow_matches_sine_series(rng):
    dom = build_domain(2.0, 16, 17)
    th, r = dom.mesh
    u = ComplexField(sum(rng.standard_normal() * np.sin(np.pi * m * r) * np.cos(np.pi * j * th)
                         for m in range(1, 5) for j in range(3)), dom)
    w = propagate_dirichlet(u, 0.3, flat_metric(dom))
    ref = sine_series_propagator(u, 0.3)
    assert np.abs(w.values - ref.values).max() < 1e-10 * np.abs(ref.values).max()


def test_curved_flow_stays_odd():
    dom = build_domain(2.0, 16, 17)
    th, r = dom.mesh
    u = ComplexField(np.sin(np.pi * r) * (1 + np.cos(np.pi * th)), dom)
    lb = laplacian_for(lipschitz_metric(dom))
    w = propagate(extend(u, "dirichlet"), 0.7, lb)
    assert asymmetry(w, "odd") < 1e-12 * np.abs(w.values).max()


def test_duhamel_against_closed_form():
    # source phi (eigenvalue -lam), zero data: u(t) = -(1 - exp(-i lam t)) / lam phi
    dom = build_interval(33)
    lb = laplacian_for(flat_metric(dom))
    grid = dom.doubled()
    phi = np.sin(np.pi * grid.mesh[0]).astype(complex)
    lam, t = np.pi**2, 0.5
    zero = ComplexField(np.zeros(grid.shape), grid)
    exact = -(1 - np.exp(-1j * lam * t)) / lam * phi
    errs = [np.abs(duhamel(zero, [phi] * n, t, lb).values - exact).max() for n in (33, 65, 129)]
    # Simpson: fourth order in the node spacing
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.1)
    assert errs[2] < 1e-8


def test_duhamel_needs_odd_node_count():
    dom = build_interval(9)
    lb = laplacian_for(flat_metric(dom))
    zero = ComplexField(np.zeros(16), dom.doubled())
    with pytest.raises(QuadratureError):
        duhamel(zero, [np.zeros(16)] * 4, 0.1, lb)


def test_propagator_errors():
    with pytest.raises(ConfigurationError):
        PropagatorSpec("crank_nicolson")
    with pytest.raises(ConfigurationError):
        PropagatorSpec("leapfrog")
    dom = build_interval(17)
    lb = laplacian_for(lipschitz_metric(dom), eigen_cap=8)
    u = ComplexField(np.zeros(32), dom.doubled())
    with pytest.raises(CapacityError):
        propagate(u, 0.1, lb, PropagatorSpec(cap=8))
    with pytest.raises(ConfigurationError):
        propagate(ComplexField(np.zeros(16), build_interval(9).doubled()), 0.1, lb)
