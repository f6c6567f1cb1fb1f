"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected and repeated in the terminal summary. Heavy scans
are marked ``slow``; they still run in the default suite.
"""
import time
from fractions import Fraction

import numpy as np
import pytest

from slab.geometry import (ComplexField, asymmetry, build_domain, build_interval, double_metric, extend,
                           flat_metric, lipschitz_metric, restrict)
from slab.nls import (NlsProblem, calibrate_constant, choose_T, conservation_report, energy_bound, global_extend,
                      lipschitz_flow_probe, picard_solve, strang_solve)
from slab.norms import sigma, sigma_ledger, strichartz_window_scan
from slab.propagators import laplacian_for, propagate, sine_series_propagator
from slab.spectral import CutoffProfile, commutator_scan, lp_reconstruct, mollify_metric, mollify_scan
from slab.torus import PeriodicGrid
from slab.wkb import Ansatz, build_table, dispersive_fit, exact_free_flow, residual_scan


@pytest.fixture
def verdict(request, acceptance_log):
    """Record one line per criterion; a test that errors out is logged as FAIL."""
    t0 = time.perf_counter()
    seen = []

    def record(num, name, passed, detail=""):
        line = f"criterion {num:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.1f} s)"
        seen.append(line)
        acceptance_log.append(line)
        print(line)
        return passed

    yield record
    if not seen:
        acceptance_log.append(f"FAIL  {request.node.name}: raised before a verdict")


def _rel_l2(a, b, w=None):
    w = 1.0 if w is None else w
    return float(np.sqrt(np.sum(w * np.abs(a - b) ** 2) / np.sum(w * np.abs(b) ** 2)))


# 1 -------------------------------------------------------------------------------

def test_c01_littlewood_paley_reconstruction(verdict):
    grid = build_domain(2.0, 128, 33).doubled()
    assert grid.shape == (128, 64)
    rng = np.random.Generator(np.random.PCG64(1))
    mask = np.ones(grid.shape, dtype=bool)
    for ax, n in enumerate(grid.shape):
        k = np.abs(np.fft.fftfreq(n) * n)
        mask &= (k <= n // 4).reshape([-1 if i == ax else 1 for i in range(2)])
    z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    f = ComplexField(np.fft.ifft2(np.fft.fft2(z) * mask), grid)
    err = float(np.abs(lp_reconstruct(f).values - f.values).max())
    assert verdict(1, "LP reconstruction", err < 1e-10, f"sup error {err:.2e} < 1e-10")


# 2 -------------------------------------------------------------------------------

def test_c02_doubling_symmetry_chain(verdict):
    dom = build_domain(2.0, 16, 17)
    th, r = dom.mesh
    u0 = ComplexField(np.sin(np.pi * r) * (1 + 0.5 * np.cos(np.pi * th)) + 0.4j * np.sin(3 * np.pi * r), dom)
    t = 0.1
    ok, parts = True, []
    for name, g in (("flat", flat_metric(dom)), ("lipschitz", lipschitz_metric(dom))):
        w = propagate(extend(u0, "dirichlet"), t, laplacian_for(g))
        asym = asymmetry(w, "odd") / float(np.abs(w.values).max())
        ok &= asym < 1e-9
        parts.append(f"{name} asymmetry {asym:.1e}")
        if name == "flat":
            ref = sine_series_propagator(u0, t)
            err = _rel_l2(restrict(w).values, ref.values, dom.weights)
            ok &= err < 1e-8
            parts.append(f"sine oracle {err:.1e}")
    assert verdict(2, "doubling/symmetry", ok, ", ".join(parts) + " (< 1e-9, < 1e-8)")


# 3 -------------------------------------------------------------------------------

def test_c03_mollification_exponents(verdict):
    g = double_metric(lipschitz_metric(build_domain(2.0, 64, 65)))
    r1, r2 = mollify_scan(g, 0.5, range(3, 10), tol=0.15)
    ok = abs(r1.fitted_slope - 0.5) <= 0.15 and abs(r2.fitted_slope + 0.5) <= 0.15
    assert verdict(3, "mollification", ok,
                   f"slopes {r1.fitted_slope:.3f} (0.5 +- 0.15), {r2.fitted_slope:.3f} (-0.5 +- 0.15)")


# 4 -------------------------------------------------------------------------------

@pytest.mark.slow
def test_c04_commutator_scaling(verdict):
    g = double_metric(lipschitz_metric(build_interval(1025)))
    assert g.grid.shape == (2048,)
    prof = CutoffProfile(4 * np.pi)
    l2 = commutator_scan(g, 0.5, range(3, 8), "L2_to_L2", profile=prof, trials=30)
    h1 = commutator_scan(g, 0.5, range(3, 8), "H1_to_L2", profile=prof, trials=30)
    ok = abs(l2.fitted_slope + 1) <= 0.25 and abs(h1.fitted_slope) <= 0.25
    assert verdict(4, "commutator scaling", ok,
                   f"L2->L2 slope {l2.fitted_slope:.3f} (-1 +- 0.25), H1->L2 slope {h1.fitted_slope:.3f} (0 +- 0.25)")


# 5 -------------------------------------------------------------------------------

def test_c05_flat_wkb_exactness(verdict):
    grid = PeriodicGrid((32, 32), (2.0, 2.0))
    h = 2.0**-3
    tab = build_table(flat_metric(grid), h, 0.5, 0.5 * h**0.5, N=2, n_s=17, n_dir=16)
    X = tab.grid.mesh
    closed = 0.0
    for s in np.linspace(0, tab.S, 5):
        for xi in ([0.7, 0.3], [-1.2, 0.4], [0.0, -1.9], [0.55, 0.0]):
            lam = np.linalg.norm(xi)
            closed = max(closed,
                         float(np.abs(tab.phase(s, xi)[0] - (xi[0] * X[0] + xi[1] * X[1] - s * lam**2)).max()),
                         float(np.abs(tab.amplitude(0, s, xi)[0] - tab.profile.phi(lam)).max()))
    fine = PeriodicGrid((64, 64), (2.0, 2.0))
    Y = fine.mesh
    v0 = np.exp(-((Y[0] - 1) ** 2 + (Y[1] - 0.7) ** 2) / (2 * (0.3 * h) ** 2))
    A = Ansatz(tab, v0, fine)
    err = max(_rel_l2(A.w(s), exact_free_flow(v0, s, tab.hbar, tab.profile, fine))
              for s in np.linspace(0, tab.S, 9))
    ok = err < 1e-6 and closed < 1e-8
    assert verdict(5, "flat WKB exactness", ok, f"ansatz rel L2 {err:.1e} < 1e-6, closed forms {closed:.1e} < 1e-8")


# 6 -------------------------------------------------------------------------------

def _dispersive_slope(g, h, c, fine_n, n_dir):
    d = g.d
    S = c * h**0.5
    tab = build_table(mollify_metric(g, h, 0.5), h, 0.5, S, N=0, n_s=65, n_dir=n_dir)
    fine = PeriodicGrid((fine_n,) * d, g.grid.lengths)
    X = fine.mesh
    centre = [1.0, 0.7][-d:]
    v0 = np.exp(-sum((X[i] - centre[i]) ** 2 for i in range(d)) / (2 * (0.3 * h) ** 2))
    s_list = np.geomspace(4 * h, S, 8)
    A = Ansatz(tab, v0, fine)
    sups = [float(np.abs(A.w(s)).max()) for s in s_list]
    return dispersive_fit(sups, s_list, h, d, tol=0.2 if d == 2 else 0.1)


@pytest.mark.slow
def test_c06_dispersive_decay(verdict):
    r1 = _dispersive_slope(double_metric(lipschitz_metric(build_interval(129))), 2.0**-8, 2.0, 2048, None)
    r2 = _dispersive_slope(double_metric(lipschitz_metric(build_domain(2.0, 8, 65))), 2.0**-6, 2.0, 512, 32)
    ok = abs(r2.fitted_slope + 1) <= 0.2 and abs(r1.fitted_slope + 0.5) <= 0.1
    assert verdict(6, "dispersive decay", ok,
                   f"d=2 slope {r2.fitted_slope:.3f} (-1 +- 0.2), d=1 slope {r1.fitted_slope:.3f} (-0.5 +- 0.1)")


# 7 -------------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("d", [1, 2])
def test_c07_residual_scaling(verdict, d):
    base = build_interval(129) if d == 1 else build_domain(2.0, 8, 65)
    g = double_metric(lipschitz_metric(base))

    def fine(k):
        n = max(256, 2 ** int(np.ceil(np.log2(6 * 2**k))))
        return PeriodicGrid((n,) * d, g.grid.lengths)

    def datum(grid, h):
        X = grid.mesh
        centre = [1.0, 0.7][-d:]
        return np.exp(-sum((X[i] - centre[i]) ** 2 for i in range(d)) / (2 * (0.3 * h) ** 2))

    rep = residual_scan(g, datum, 0.5, 3, range(3, 8), 1.0, fine, n_s=65, n_dir=32 if d == 2 else None, tol=0.3)
    ok = rep.fitted_slope >= rep.predicted_slope - 0.3
    assert verdict(7, f"residual scaling d={d}", ok,
                   f"slope {rep.fitted_slope:.3f} >= {rep.predicted_slope:.2f} - 0.3")


# 8 -------------------------------------------------------------------------------

@pytest.mark.slow
def test_c08_windowed_strichartz(verdict):
    rep = strichartz_window_scan(0.5, 4, 4, range(3, 8), d=2)
    ok = rep.fitted_slope >= 0.8
    assert verdict(8, "windowed Strichartz", ok, f"slope {rep.fitted_slope:.3f} >= 0.8")


# 9 -------------------------------------------------------------------------------

def test_c09_exponent_ledger(verdict):
    led = sigma_ledger(4)
    best = led["argmax"]
    ok = (best == Fraction(1, 2) and led["max"] == Fraction(5, 8) == 1 - Fraction(3, 8)
          and all(isinstance(v, Fraction) for _, v in led["rows"])
          and led["max"] == max(sigma(a, 4) for a in (Fraction(3, 7), 0.45, 0.5, 0.6, 0.8)))
    assert verdict(9, "exponent ledger", ok, f"argmax {best}, max {led['max']} (1/2, 5/8 exact)")


# 10, 11 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def nls_setup():
    dom = build_domain(2 * np.pi, 32, 33)
    th, r = dom.mesh
    u0 = ComplexField(np.sin(np.pi * r) * (1 + 0.5 * np.cos(th)) + 0.3j * np.sin(2 * np.pi * r) * np.sin(2 * th), dom)
    prob = NlsProblem(2, u0)
    return prob, calibrate_constant(prob)


@pytest.mark.slow
def test_c10_nls_local_solve(verdict, nls_setup):
    prob, c = nls_setup
    T = choose_T(prob.h1_norm(), 2, 4, c)
    tr = picard_solve(prob, T, n_t=129, tol=1e-12)
    drift = conservation_report(tr)
    probe = lipschitz_flow_probe(prob, T, (1e-2, 1e-3, 1e-4), n_t=65)
    r = np.asarray(probe["ratios"])
    ok = (tr.info["contraction"] < 1 and drift["mass_drift"] < 1e-6 and drift["energy_drift"] < 1e-6
          and r.max() <= 2 * r.min())
    assert verdict(10, "NLS local solve", ok,
                   f"c={c:.1f}, T={T:.2e}, ratio {tr.info['contraction']:.3f} < 1, mass {drift['mass_drift']:.1e}, "
                   f"energy {drift['energy_drift']:.1e} (< 1e-6), Lipschitz ratios {np.round(r, 4).tolist()}")


@pytest.mark.slow
def test_c11_global_extension(verdict, nls_setup):
    prob, c = nls_setup
    Tw = choose_T(energy_bound(prob), 2, 4, c)
    tr = global_extend(prob, 10 * Tw, c=c, n_t=129)
    drift = conservation_report(tr)["energy_drift"]
    ref = strang_solve(prob, 10 * Tw, Tw / 200)
    err = _rel_l2(tr.final.values, ref.values)
    ok = tr.info["windows"] >= 10 and drift < 1e-5 and err < 1e-4
    assert verdict(11, "global extension", ok,
                   f"{tr.info['windows']} windows, energy drift {drift:.1e} < 1e-5, splitting rel L2 {err:.1e} < 1e-4")
