import numpy as np
import pytest
from hypothesis import given, strategies as st

from slab.errors import CausticError, ConfigurationError, FitError
from slab.geometry import build_interval, double_metric, flat_metric, lipschitz_metric, make_metric
from slab.spectral import CutoffProfile, mollify_metric
from slab.torus import PeriodicGrid
from slab.wkb import (Ansatz, PhaseAmplitudeTable, build_table, dispersive_fit, exact_free_flow, residual_predicted,
                      solve_characteristics, unit_directions)
from slab.wkb.ansatz import direction_weights, tau_weights
from slab.wkb.chebyshev import cgl_nodes, diff_matrix, integration_matrix, interp_matrix
from slab.wkb.series import MetricSeries
from slab.wkb.tables import amplitude_growth


def _smooth_1d(n=64, amp=0.3):
    grid = PeriodicGrid((n,), (2.0,))
    a = 1 + amp * np.sin(np.pi * grid.mesh[0])
    return make_metric(a[None, None], grid), a


# chebyshev ---------------------------------------------------------------------

@given(n=st.integers(4, 30), T=st.floats(0.1, 10.0))
def test_cgl_matrices_exact_on_polynomials(n, T):
    t = cgl_nodes(n, T)
    assert t[0] == 0.0 and t[-1] == pytest.approx(T)
    p = (t / T) ** 3 - 2 * (t / T) + 1
    dp = 3 * t**2 / T**3 - 2 / T
    Ip = T * ((t / T) ** 4 / 4 - (t / T) ** 2 + t / T)
    np.testing.assert_allclose(diff_matrix(n, T) @ p, dp, atol=1e-8 * max(1, 1 / T) * n**2)
    np.testing.assert_allclose(integration_matrix(n, T) @ p, Ip, atol=1e-11 * max(T, 1))


def test_interp_matrix():
    n, T = 17, 2.0
    t = cgl_nodes(n, T)
    targets = np.array([0.0, 0.37, 1.0, 1.99, T])
    M = interp_matrix(n, T, targets)
    np.testing.assert_allclose(M @ np.cos(t), np.cos(targets), atol=1e-12)
    np.testing.assert_allclose(interp_matrix(n, T, t), np.eye(n), atol=0)


# metric series -----------------------------------------------------------------

def test_series_matches_closed_form():
    g, a = _smooth_1d()
    ser = MetricSeries(g)
    x = np.array([[0.123], [0.9], [1.77]])
    ev = ser.evaluate(x)
    ax = 1 + 0.3 * np.sin(np.pi * x[:, 0])
    dax = 0.3 * np.pi * np.cos(np.pi * x[:, 0])
    np.testing.assert_allclose(ev["K"][:, 0, 0], 1 / ax, rtol=1e-12)
    np.testing.assert_allclose(ev["dK"][:, 0, 0, 0], -dax / ax**2, rtol=1e-10)
    # b = w^-1 (w K)' with w = sqrt(a), K = 1/a
    np.testing.assert_allclose(ev["b"][:, 0], -0.5 * dax / ax**2, rtol=1e-10)


# characteristics ---------------------------------------------------------------

def test_unit_directions():
    assert unit_directions(1).tolist() == [[1.0], [-1.0]]
    dirs = unit_directions(2, 8)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)
    with pytest.raises(ConfigurationError):
        unit_directions(2, 2)


def test_flat_bicharacteristics_are_lines():
    grid = PeriodicGrid((8, 8), (2.0, 2.0))
    dirs = unit_directions(2, 8)
    flow = solve_characteristics(flat_metric(grid), 0.5, 9, dirs)
    expect = grid.points[None, None] + 2 * flow.tau[:, None, None, None] * dirs[None, :, None, :]
    np.testing.assert_allclose(flow.y, expect, atol=1e-13)
    np.testing.assert_allclose(flow.J, 1.0, atol=1e-13)
    assert flow.hamiltonian_drift() < 1e-14


def test_curved_flow_conserves_hamiltonian():
    g, _ = _smooth_1d()
    drifts = [solve_characteristics(g, 0.5, 33, unit_directions(1), substeps=m).hamiltonian_drift() for m in (2, 4)]
    # RK4: fourth order in the step
    assert drifts[0] / drifts[1] == pytest.approx(16, rel=0.25)
    assert drifts[1] < 1e-8


def test_homogeneity_of_the_flow():
    # (x, 2 omega) at tau equals (x, omega) at 2 tau with doubled momentum
    g, _ = _smooth_1d(64)
    f1 = solve_characteristics(g, 0.5, 9, unit_directions(1))
    f2 = solve_characteristics(g, 0.25, 9, 2 * unit_directions(1))
    np.testing.assert_allclose(f2.y, f1.y, atol=1e-12)
    np.testing.assert_allclose(f2.eta, 2 * f1.eta, atol=1e-12)


def test_caustic_detected():
    g, _ = _smooth_1d(128, amp=0.6)
    with pytest.raises(CausticError) as info:
        solve_characteristics(g, 6.0, 65, unit_directions(1))
    assert 0 < info.value.time <= 6.0


# tables and assembly -----------------------------------------------------------

@pytest.fixture(scope="module")
def flat_table():
    grid = PeriodicGrid((32, 32), (2.0, 2.0))
    h = 2.0**-3
    return build_table(flat_metric(grid), h, 0.5, 0.5 * h**0.5, N=2, n_s=17, n_dir=16)


def test_flat_closed_forms(flat_table):
    t = flat_table
    X = t.grid.mesh
    s = 0.5 * t.S
    for xi in ([0.7, 0.3], [-1.2, 0.4], [0.0, -1.9]):
        lam = np.linalg.norm(xi)
        phi = t.phase(s, xi)[0]
        np.testing.assert_allclose(phi, xi[0] * X[0] + xi[1] * X[1] - s * lam**2, atol=1e-8)
        a0 = t.amplitude(0, s, xi)[0]
        np.testing.assert_allclose(a0, t.profile.phi(lam), atol=1e-8)
        assert np.abs(t.amplitude(1, s, xi)).max() < 1e-8


def test_flat_ansatz_matches_exact_flow(flat_table):
    t = flat_table
    fine = PeriodicGrid((64, 64), (2.0, 2.0))
    X = fine.mesh
    v0 = np.exp(-((X[0] - 1) ** 2 + (X[1] - 0.7) ** 2) / (2 * (0.3 * t.h) ** 2))
    A = Ansatz(t, v0, fine)
    for s in np.linspace(0, t.S, 4):
        w = A.w(s)
        ex = exact_free_flow(v0, s, t.hbar, t.profile, fine)
        assert np.linalg.norm(w - ex) / np.linalg.norm(ex) < 1e-6


def test_table_roundtrip(tmp_path, flat_table):
    flat_table.save(tmp_path / "tab")
    back = PhaseAmplitudeTable.load(tmp_path / "tab")
    np.testing.assert_array_equal(back.psi, flat_table.psi)
    np.testing.assert_array_equal(back.amps, flat_table.amps)
    assert back.h == flat_table.h and back.S == flat_table.S
    np.testing.assert_allclose(back.phase(0.01, [1.0, 0.5]), flat_table.phase(0.01, [1.0, 0.5]))


def test_tau_outside_window(flat_table):
    with pytest.raises(ConfigurationError):
        tau_weights(flat_table, [flat_table.T * 1.5])


def test_direction_weights_interpolate():
    dirs = unit_directions(2, 12)
    np.testing.assert_allclose(direction_weights(dirs, dirs), np.eye(12), atol=1e-12)
    # a band-limited function of the angle is reproduced between nodes
    ang = 0.3
    xi = np.array([[np.cos(ang), np.sin(ang)]]) * 1.7
    f = np.cos(2 * np.arctan2(dirs[:, 1], dirs[:, 0]))
    assert direction_weights(dirs, xi) @ f == pytest.approx(np.cos(2 * ang), abs=1e-12)


def test_curved_table_diagnostics():
    g = double_metric(lipschitz_metric(build_interval(65)))
    h = 2.0**-4
    gh = mollify_metric(g, h, 0.5)
    t = build_table(gh, h, 0.5, h**0.5, N=2, n_s=33)
    assert t.diagnostics["hj_residual"] < 1e-6
    assert t.diagnostics["jacobian_min"] > 0.1
    assert amplitude_growth(t)["holds"]


def test_dispersive_fit_on_exact_decay():
    h = 2.0**-6
    s = np.geomspace(4 * h, 2 * h**0.5, 6)
    rep = dispersive_fit((h * s) ** -1.0, s, h, 2)
    assert rep.fitted_slope == pytest.approx(-1.0) and rep.verdict
    with pytest.raises(FitError):
        dispersive_fit([1, 2, 3], [1, 2, 3], h, 2)


def test_residual_prediction():
    assert residual_predicted(3, 0.5, 2) == pytest.approx(1.0)
    assert residual_predicted(3, 0.5, 1) == pytest.approx(2.0)
