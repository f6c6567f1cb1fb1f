"""Command line runner: ``slab <subcommand> [--config FILE] [flags]``.

Exit status: 0 when every asserted verdict passes, 1 when one fails, 2 for
configuration errors and 3 for runtime errors. ``SLAB_THREADS`` caps the
native thread pools (set before numpy loads).
"""
from __future__ import annotations

import os
import sys

_threads = os.environ.get("SLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import logging  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import nls  # noqa: E402
from .config import ExperimentConfig, load_config  # noqa: E402
from .errors import ConfigurationError, SlabError  # noqa: E402
from .fieldio import read_field, read_metric, write_field  # noqa: E402
from .geometry import (ComplexField, DomainGrid, asymmetry, build_domain, build_interval, double_metric,  # noqa: E402
                       extend, flat_metric, lipschitz_metric, make_metric, restrict)
from .norms import strichartz_interval_scan, strichartz_window_scan  # noqa: E402
from .propagators import PropagatorSpec, laplacian_for, propagate, sine_series_propagator  # noqa: E402
from .report import RunResult, emit_report  # noqa: E402
from .spectral import (CutoffProfile, commutator_scan, lp_reconstruct, mollify_metric, mollify_scan,  # noqa: E402
                       two_chart_atlas)
from .torus import PeriodicGrid  # noqa: E402
from .wkb import Ansatz, build_table, dispersive_fit  # noqa: E402

log = logging.getLogger("slab")

# flag -> config key
FLAGS = {
    "alpha": "scan.alpha", "kmin": "scan.kmin", "kmax": "scan.kmax", "k": "scan.k", "p": "scan.p", "q": "scan.q",
    "seed": "scan.seed", "tol": "scan.tol", "which": "scan.which", "interval": "scan.interval", "N": "scan.N",
    "c": "scan.c", "unit": "scan.unit", "deltas": "scan.deltas", "u0": "input.u0", "t": "solver.t",
    "method": "solver.method", "dt": "solver.dt", "beta": "solver.beta", "T": "solver.T",
    "T_total": "solver.T_total", "n_t": "solver.n_t", "out": "output.dir",
}

# commands whose "auto" metric preset is the flat metric
FLAT_BY_DEFAULT = {"strichartz-scan", "propagate", "nls-solve", "nls-global", "flow-lipschitz", "regularity-probe"}


# helpers -------------------------------------------------------------------------

def _domain(cfg: ExperimentConfig) -> DomainGrid:
    if cfg["geometry.d"] == 1:
        return build_interval(cfg["geometry.n_r"])
    return build_domain(cfg["geometry.L"], cfg["geometry.n_theta"], cfg["geometry.n_r"])


def _preset(cfg, command) -> str:
    p = cfg["metric.preset"]
    if p == "auto":
        if cfg["metric.file"]:
            return "file"
        return "flat" if command in FLAT_BY_DEFAULT else "lipschitz"
    return p


def _metric(cfg, command, dom):
    p = _preset(cfg, command)
    if p == "flat":
        return flat_metric(dom)
    if p == "lipschitz":
        return lipschitz_metric(dom, cfg["metric.amp_theta"], cfg["metric.amp_r"])
    if p == "file":
        if not cfg["metric.file"]:
            raise ConfigurationError("metric.preset = file needs metric.file")
        return read_metric(cfg["metric.file"])
    raise ConfigurationError(f"unknown metric preset {p!r}")


def _doubled(g):
    return double_metric(g) if isinstance(g.grid, DomainGrid) else g


def _tol(cfg, default):
    t = cfg["scan.tol"]
    return default if t == "auto" else t


def _ks(cfg):
    return list(range(cfg["scan.kmin"], cfg["scan.kmax"] + 1))


def _rng(cfg):
    return np.random.Generator(np.random.PCG64(cfg["scan.seed"]))


def _profile(cfg, command=None):
    unit = cfg["scan.unit"]
    if unit <= 0:
        # commutator norms reach their asymptotic regime only with the finer chart scale
        unit = 4 * np.pi if command == "commutator-scan" else np.pi
    return CutoffProfile(unit)


def _smooth_dirichlet(dom: DomainGrid, rng, modes: int = 4) -> ComplexField:
    """Random combination of low sine modes in r and Fourier modes in theta."""
    mesh = dom.mesh
    r = mesh[-1]
    u = np.zeros(dom.shape, dtype=complex)
    for m in range(1, modes + 1):
        if dom.d == 1:
            u += (rng.standard_normal() + 1j * rng.standard_normal()) * np.sin(np.pi * m * r) / m**2
            continue
        for j in range(-modes, modes + 1):
            a = (rng.standard_normal() + 1j * rng.standard_normal()) / (m**2 + j**2)
            u += a * np.sin(np.pi * m * r) * np.exp(2j * np.pi * j * mesh[0] / dom.L)
    return ComplexField(u, dom)


def builtin_datum(dom: DomainGrid) -> ComplexField:
    """sin(pi r)(1 + cos(kappa theta)/2) + 0.3i sin(2 pi r) sin(2 kappa theta), kappa = 2 pi / L."""
    if dom.d == 1:
        r = dom.r
        return ComplexField(np.sin(np.pi * r) + 0.3j * np.sin(2 * np.pi * r), dom)
    th, r = dom.mesh
    kap = 2 * np.pi / dom.L
    u = np.sin(np.pi * r) * (1 + 0.5 * np.cos(kap * th)) + 0.3j * np.sin(2 * np.pi * r) * np.sin(2 * kap * th)
    return ComplexField(u, dom)


def _u0(cfg, dom):
    """Data from input.u0 (whose grid then defines the domain) or the built-in datum on ``dom``."""
    if cfg["input.u0"]:
        return read_field(cfg["input.u0"])
    return builtin_datum(dom)


def _spec(cfg):
    method = cfg["solver.method"]
    if method == "cn":
        method = "crank_nicolson"
    return PropagatorSpec(method, cfg["solver.dt"] or None)


# subcommands ---------------------------------------------------------------------

def cmd_doubling_check(cfg, res: RunResult):
    dom = _domain(cfg)
    u0 = _smooth_dirichlet(dom, _rng(cfg))
    t = cfg["solver.t"]
    rows = []
    for name, g in (("flat", flat_metric(dom)), ("curved", _metric(cfg, "doubling-check", dom))):
        v = extend(u0, "dirichlet")
        w = propagate(v, t, laplacian_for(g), _spec(cfg))
        asym = asymmetry(w, "odd") / max(float(np.abs(w.values).max()), 1e-300)
        res.check(f"{name}_asymmetry", asym, 1e-9)
        row = {"metric": name, "asymmetry": asym, "oracle_error": None}
        if name == "flat":
            ref = sine_series_propagator(u0, t)
            err = float(np.sqrt(np.sum(dom.weights * np.abs(restrict(w).values - ref.values) ** 2))
                        / np.sqrt(np.sum(dom.weights * np.abs(ref.values) ** 2)))
            res.check("flat_sine_oracle", err, 1e-8)
            row["oracle_error"] = err
        rows.append(row)
    res.tables["doubling"] = (["metric", "asymmetry", "oracle_error"], rows)


def cmd_lp_check(cfg, res):
    dom = _domain(cfg)
    grid = dom.doubled()
    rng = _rng(cfg)
    z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    # band limit to half the Nyquist frequency on every axis
    mask = np.ones(grid.shape, dtype=bool)
    for ax, n in enumerate(grid.shape):
        k = np.abs(np.fft.fftfreq(n) * n)
        mask &= grid._broadcast(ax, k <= n // 4)
    f = ComplexField(grid.ifft(grid.fft(z) * mask), grid)
    rec = lp_reconstruct(f, profile=_profile(cfg))
    err = float(np.abs(rec.values - f.values).max())
    res.check("lp_reconstruction", err, 1e-10)
    res.extra["reconstruction_error"] = err


def cmd_mollify_scan(cfg, res):
    g = _doubled(_metric(cfg, "mollify-scan", _domain(cfg)))
    r1, r2 = mollify_scan(g, cfg["scan.alpha"], _ks(cfg), _profile(cfg), _tol(cfg, 0.15))
    res.add_scan("mollify_difference", r1)
    res.add_scan("mollify_curvature", r2)


WHICH = {"l2": "L2_to_L2", "h1": "H1_to_L2", "diff": "diff_H1_to_L2", "th": "T_h"}


def cmd_commutator_scan(cfg, res):
    n = cfg["scan.grid_points"]
    # operator norms are measured on one-dimensional grids unless a metric file says otherwise
    g = _doubled(_metric(cfg, "commutator-scan", build_interval(n // 2 + 1)))
    which = WHICH.get(cfg["scan.which"].lower(), cfg["scan.which"])
    atlas = two_chart_atlas(g.grid) if which == "T_h" else None
    rep = commutator_scan(g, cfg["scan.alpha"], _ks(cfg), which, atlas=atlas, profile=_profile(cfg, "commutator-scan"),
                          trials=cfg["scan.trials"], seed=cfg["scan.seed"], tol=_tol(cfg, 0.25))
    res.add_scan(f"commutator_{which}", rep)


def _dispersive(cfg, command, res, save_table=None):
    dom = _domain(cfg)
    g = _doubled(_metric(cfg, command, dom))
    k, alpha = cfg["scan.k"], cfg["scan.alpha"]
    h = 2.0**-k
    S = cfg["scan.c"] * h**alpha
    gh = mollify_metric(g, h, alpha, _profile(cfg))
    table = build_table(gh, h, alpha, S, N=cfg["scan.N"], n_s=cfg["scan.n_s"],
                        n_dir=cfg["scan.n_dir"] if g.d == 2 else None, profile=_profile(cfg))
    if save_table:
        table.save(save_table)
    d = g.d
    nf = cfg["scan.fine"]
    fine = PeriodicGrid((nf,) * d, g.grid.lengths)
    X = fine.mesh
    centre = [0.5 * L for L in g.grid.lengths]
    centre[-1] = 0.7
    v0 = np.exp(-sum((X[i] - centre[i]) ** 2 for i in range(d)) / (2 * (0.3 * h) ** 2))
    s_list = np.geomspace(4 * h, S, 8)
    A = Ansatz(table, v0, fine)
    sups = [float(np.abs(A.w(s)).max()) for s in s_list]
    rep = dispersive_fit(sups, s_list, h, d, tol=_tol(cfg, 0.2 if d == 2 else 0.1))
    res.add_scan("dispersive", rep)
    res.extra.update({"hj_residual": table.diagnostics.get("hj_residual"),
                      "jacobian_min": table.diagnostics.get("jacobian_min"),
                      "dispersive_slope": rep.fitted_slope, "h": h, "S": S})
    return table


def cmd_wkb_run(cfg, res):
    out = Path(cfg["output.dir"])
    _dispersive(cfg, "wkb-run", res, save_table=out / "table")


def cmd_dispersive_fit(cfg, res):
    _dispersive(cfg, "dispersive-fit", res)


def cmd_propagate(cfg, res):
    u0 = _u0(cfg, _domain(cfg))
    dom = u0.grid if isinstance(u0.grid, DomainGrid) else u0.grid.base
    g = _metric(cfg, "propagate", dom)
    lb = laplacian_for(g)
    if isinstance(u0.grid, DomainGrid):
        out = restrict(propagate(extend(u0, "dirichlet"), cfg["solver.t"], lb, _spec(cfg)))
    else:
        out = propagate(u0, cfg["solver.t"], lb, _spec(cfg))
    path = Path(cfg["output.dir"])
    path.mkdir(parents=True, exist_ok=True)
    write_field(path / "u_t.slab", out)
    n0, n1 = u0.l2_norm(), out.l2_norm()
    res.check("norm_drift", abs(n1 - n0) / max(n0, 1e-300), 1e-6)


def cmd_strichartz_scan(cfg, res):
    d = cfg["geometry.d"]
    preset = _preset(cfg, "strichartz-scan")
    metric_for = None
    if preset != "flat":
        alpha = cfg["scan.alpha"]

        def metric_for(grid):
            x = grid.mesh[-1]
            vals = np.zeros((d, d) + tuple(grid.shape))
            for i in range(d):
                vals[i, i] = 1 + cfg["metric.amp_r"] * np.abs(np.sin(np.pi * x))
            # the default grids have spacing h / 2
            return mollify_metric(make_metric(vals, grid), 2 * float(grid.spacing[0]), alpha)
    args = dict(d=d, metric_for=metric_for, n_random=cfg["scan.ensemble"], n_packets=cfg["scan.packets"],
                seed=cfg["scan.seed"], tol=_tol(cfg, 0.2), profile=_profile(cfg))
    if cfg["scan.interval"] == "window":
        rep = strichartz_window_scan(cfg["scan.alpha"], cfg["scan.p"], cfg["scan.q"], _ks(cfg), **args)
        res.add_scan("strichartz_window", rep)
    elif cfg["scan.interval"] == "unit":
        rep = strichartz_interval_scan(cfg["scan.alpha"], cfg["scan.p"], cfg["scan.q"], _ks(cfg), **args)
        res.add_scan("strichartz_interval", rep)
    else:
        raise ConfigurationError(f"unknown interval {cfg['scan.interval']!r}")


def _nls_problem(cfg, command):
    u0 = _u0(cfg, _domain(cfg))
    g = _metric(cfg, command, u0.grid)
    return nls.NlsProblem(cfg["solver.beta"], u0, cfg["scan.p"], g if isinstance(g.grid, DomainGrid) else None,
                          focusing=cfg["solver.focusing"])


def _nls_T(cfg, prob, res):
    c = cfg["solver.c_T"]
    if c == "auto":
        c = nls.calibrate_constant(prob, cfg["solver.target"])
    res.extra["c_T"] = c
    T = cfg["solver.T"]
    if T == "auto":
        M = prob.h1_norm()
        T = nls.choose_T(M, prob.beta, prob.p, c) if M > 0 else 1.0
    res.extra["T"] = T
    return c, T


def cmd_nls_solve(cfg, res):
    prob = _nls_problem(cfg, "nls-solve")
    _, T = _nls_T(cfg, prob, res)
    traj = nls.picard_solve(prob, T, n_t=cfg["solver.n_t"], tol=cfg["solver.tol"])
    traj.save(Path(cfg["output.dir"]) / "trajectory")
    rep = nls.conservation_report(traj)
    res.check("contraction", traj.info["contraction"], 1.0)
    res.check("mass_drift", rep["mass_drift"], cfg["solver.drift_tol"])
    res.check("energy_drift", rep["energy_drift"], cfg["solver.drift_tol"])
    res.extra.update({"iterations": traj.info["iterations"], "distances": traj.info["distances"]})


def cmd_nls_global(cfg, res):
    prob = _nls_problem(cfg, "nls-global")
    c, _ = _nls_T(cfg, prob, res)
    traj = nls.global_extend(prob, cfg["solver.T_total"], c=c, n_t=cfg["solver.n_t"])
    traj.save(Path(cfg["output.dir"]) / "trajectory")
    rep = nls.conservation_report(traj)
    res.check("energy_drift", rep["energy_drift"], 10 * cfg["solver.drift_tol"])
    res.extra.update({"windows": traj.info["windows"], "window_T": traj.info["window_T"], **rep})
    if cfg["solver.dt"] > 0:
        ref = nls.strang_solve(prob, cfg["solver.T_total"], cfg["solver.dt"])
        err = float(np.linalg.norm(ref.values - traj.final.values) / np.linalg.norm(ref.values))
        res.extra["splitting_difference"] = err


def cmd_flow_lipschitz(cfg, res):
    prob = _nls_problem(cfg, "flow-lipschitz")
    _, T = _nls_T(cfg, prob, res)
    rep = nls.lipschitz_flow_probe(prob, T, cfg["scan.deltas"], seed=cfg["scan.seed"], samples=cfg["scan.samples"],
                                   n_t=cfg["solver.n_t"])
    res.verdicts["lipschitz_stable"] = {"passed": rep["stable"], "value": rep["max"], "predicted": 2 * rep["median"],
                                        "relation": "<="}
    res.tables["lipschitz"] = (["delta", "ratio"], [{"delta": d, "ratio": r} for d, r in zip(rep["deltas"], rep["ratios"])])
    res.extra.update(rep)


def cmd_regularity_probe(cfg, res):
    prob = _nls_problem(cfg, "regularity-probe")
    _, T = _nls_T(cfg, prob, res)
    rep = nls.regularity_probe(prob, T, n_t=cfg["solver.n_t"])
    if rep["asserted"]:
        res.verdicts["h2_bound"] = {"passed": rep["holds"], "value": rep["sup_ratio"], "predicted": rep["bound"],
                                    "relation": "<="}
    res.extra.update(rep)


COMMANDS = {
    "doubling-check": cmd_doubling_check,
    "lp-check": cmd_lp_check,
    "mollify-scan": cmd_mollify_scan,
    "commutator-scan": cmd_commutator_scan,
    "wkb-run": cmd_wkb_run,
    "dispersive-fit": cmd_dispersive_fit,
    "propagate": cmd_propagate,
    "strichartz-scan": cmd_strichartz_scan,
    "nls-solve": cmd_nls_solve,
    "nls-global": cmd_nls_global,
    "flow-lipschitz": cmd_flow_lipschitz,
    "regularity-probe": cmd_regularity_probe,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="configuration file ([section] key = value)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any configuration key")
        p.add_argument("--metric", help="metric file (sets metric.preset = file)")
        p.add_argument("-v", "--verbose", action="store_true")
        for flag in FLAGS:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None)
    return ap


def make_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value.strip(), source="--set")
    if args.metric:
        cfg.set("metric.preset", "file")
        cfg.set("metric.file", args.metric)
    for flag, key in FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            cfg.set(key, v, source="--" + flag.replace("_", "-"))
    return cfg


def run(command: str, cfg: ExperimentConfig) -> tuple:
    """Run one subcommand; returns (exit status, summary)."""
    res = RunResult(command)
    t0 = time.perf_counter()
    COMMANDS[command](cfg, res)
    summary = emit_report(res, cfg["output.dir"], cfg, wall_time=time.perf_counter() - t0)
    return (0 if res.passed else 1), summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = make_config(args)
    except ConfigurationError as exc:
        print(f"slab: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        status, summary = run(args.command, cfg)
    except ConfigurationError as exc:
        print(f"slab: configuration error: {exc}", file=sys.stderr)
        return 2
    except (SlabError, OSError, ValueError, FloatingPointError) as exc:
        print(f"slab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for name, v in summary["verdicts"].items():
        print(f"{'PASS' if v['passed'] else 'FAIL'} {name}")
    print(f"report written to {cfg['output.dir']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
