import json
import os
import subprocess
import sys

import numpy as np
import pytest

from slab.cli import builtin_datum, main
from slab.fieldio import read_field, write_field
from slab.geometry import build_domain
from slab.nls import Trajectory

SMALL_NLS = ["--set", "geometry.n_theta=16", "--set", "geometry.n_r=17", "--set", "geometry.L=6.283185307179586",
             "--n-t", "33", "--set", "solver.drift_tol=1e-4"]


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _summary(path):
    return json.loads((path / "summary.json").read_text())


def test_lp_check(tmp_path, capsys):
    code, out, _ = _run(capsys, "lp-check", "--out", str(tmp_path))
    assert code == 0 and "PASS lp_reconstruction" in out
    assert _summary(tmp_path)["extra"]["reconstruction_error"] < 1e-10


def test_doubling_check(tmp_path, capsys):
    code, out, _ = _run(capsys, "doubling-check", "--out", str(tmp_path), "--set", "geometry.n_theta=16",
                        "--set", "geometry.n_r=17")
    assert code == 0
    s = _summary(tmp_path)
    assert set(s["verdicts"]) == {"flat_asymmetry", "curved_asymmetry", "flat_sine_oracle"}
    assert (tmp_path / "doubling.csv").exists()


def test_mollify_scan(tmp_path, capsys):
    code, _, _ = _run(capsys, "mollify-scan", "--out", str(tmp_path), "--kmin", "3", "--kmax", "6",
                      "--set", "geometry.d=1", "--set", "geometry.n_r=129")
    assert code == 0
    assert (tmp_path / "mollify_difference.csv").exists()
    assert (tmp_path / "mollify_curvature.tsv").exists()


def test_malformed_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scan]\nkmin = 3\n  bogus = 1\n")
    code, _, err = _run(capsys, "lp-check", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert f"{cfg}:3:3:" in err and "bogus" in err
    assert not (tmp_path / "o").exists()


def test_bad_override_exit_2(tmp_path, capsys):
    code, _, err = _run(capsys, "lp-check", "--set", "scan.kmin=abc", "--out", str(tmp_path))
    assert code == 2 and "kmin" in err
    code, _, _ = _run(capsys, "lp-check", "--set", "noequals", "--out", str(tmp_path))
    assert code == 2


def test_runtime_error_exit_3(tmp_path, capsys):
    (tmp_path / "junk.slab").write_bytes(b"SLAB" + bytes(4))
    code, _, err = _run(capsys, "propagate", "--u0", str(tmp_path / "junk.slab"), "--out", str(tmp_path / "o"))
    assert code in (2, 3) and err


def test_strichartz_forced_failure(tmp_path, capsys):
    args = ["strichartz-scan", "--kmin", "3", "--kmax", "6", "--set", "scan.ensemble=2", "--set", "scan.packets=1"]
    code, out, _ = _run(capsys, *args, "--out", str(tmp_path / "a"))
    assert code == 0
    # the window slope sits near 1; demanding at least 1.5 must fail
    code, out, _ = _run(capsys, *args, "--tol=-0.5", "--out", str(tmp_path / "b"))
    assert code == 1 and "FAIL strichartz_window" in out
    s = _summary(tmp_path / "b")
    assert s["passed"] is False and s["verdicts"]["strichartz_window"]["tolerance"] == -0.5


def test_propagate_doubled_data(tmp_path, capsys):
    from slab.geometry import extend
    dom = build_domain(2.0, 8, 9)
    write_field(tmp_path / "v0.slab", extend(builtin_datum(dom), "dirichlet"))
    code, _, _ = _run(capsys, "propagate", "--u0", str(tmp_path / "v0.slab"), "--t", "0.05",
                      "--out", str(tmp_path / "o"))
    assert code == 0
    assert read_field(tmp_path / "o" / "u_t.slab").symmetry == "odd"


def test_propagate_roundtrip(tmp_path, capsys):
    dom = build_domain(2.0, 16, 17)
    write_field(tmp_path / "u0.slab", builtin_datum(dom))
    code, _, _ = _run(capsys, "propagate", "--u0", str(tmp_path / "u0.slab"), "--t", "0.05",
                      "--out", str(tmp_path / "o"))
    assert code == 0
    u = read_field(tmp_path / "o" / "u_t.slab")
    assert u.grid.shape == dom.shape


def test_crank_nicolson_alias(tmp_path, capsys):
    code, _, _ = _run(capsys, "propagate", "--method", "cn", "--dt", "0.001", "--t", "0.01",
                      "--set", "geometry.n_theta=8", "--set", "geometry.n_r=9", "--out", str(tmp_path))
    assert code == 0


def test_reproducible_outputs(tmp_path, capsys):
    args = ["strichartz-scan", "--kmin", "3", "--kmax", "6", "--set", "scan.ensemble=2", "--set", "scan.packets=1",
            "--seed", "7"]
    _run(capsys, *args, "--out", str(tmp_path / "a"))
    _run(capsys, *args, "--out", str(tmp_path / "b"))
    a, b = _summary(tmp_path / "a"), _summary(tmp_path / "b")
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b
    for name in ("strichartz_window.csv", "strichartz_window.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_flags(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[scan]\nkmin = 3\nkmax = 7\nensemble = 2\npackets = 1\n")
    code, _, _ = _run(capsys, "strichartz-scan", "--config", str(cfg), "--kmax", "6", "--out", str(tmp_path / "o"))
    assert code == 0
    echoed = (tmp_path / "o" / "config.ini").read_text()
    assert "kmax = 6" in echoed and "ensemble = 2" in echoed


def test_nls_solve(tmp_path, capsys):
    code, out, _ = _run(capsys, "nls-solve", *SMALL_NLS, "--out", str(tmp_path))
    assert code == 0, out
    s = _summary(tmp_path)
    assert s["extra"]["T"] > 0 and s["verdicts"]["contraction"]["passed"]
    tr = Trajectory.load(tmp_path / "trajectory")
    assert len(tr) == 65


def test_nls_global(tmp_path, capsys):
    code, out, _ = _run(capsys, "nls-global", *SMALL_NLS, "--T-total", "0.5", "--dt", "0.001", "--out", str(tmp_path))
    assert code == 0, out
    s = _summary(tmp_path)
    assert s["extra"]["windows"] >= 1 and s["extra"]["splitting_difference"] < 1e-3


def test_flow_lipschitz_and_regularity(tmp_path, capsys):
    code, _, _ = _run(capsys, "flow-lipschitz", *SMALL_NLS, "--out", str(tmp_path / "a"))
    assert code == 0
    assert (tmp_path / "a" / "lipschitz.csv").exists()
    code, _, _ = _run(capsys, "regularity-probe", *SMALL_NLS, "--out", str(tmp_path / "b"))
    assert code == 0
    assert _summary(tmp_path / "b")["extra"]["asserted"] is True


def test_dispersive_fit_1d(tmp_path, capsys):
    code, out, _ = _run(capsys, "dispersive-fit", "--set", "geometry.d=1", "--set", "geometry.n_r=129",
                        "--k", "8", "--set", "scan.fine=2048", "--out", str(tmp_path))
    assert code == 0, out
    assert _summary(tmp_path)["extra"]["dispersive_slope"] == pytest.approx(-0.5, abs=0.1)


def test_wkb_run_saves_table(tmp_path, capsys):
    code, _, _ = _run(capsys, "wkb-run", "--set", "geometry.d=1", "--set", "geometry.n_r=65", "--k", "5",
                      "--set", "scan.fine=512", "--set", "scan.n_s=33", "--tol", "10", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "table.npz").exists() and (tmp_path / "table.json").exists()


def test_commutator_scan_small(tmp_path, capsys):
    code, out, _ = _run(capsys, "commutator-scan", "--kmin", "3", "--kmax", "6", "--set", "scan.trials=4",
                        "--which", "l2", "--out", str(tmp_path))
    assert code == 0, out
    assert _summary(tmp_path)["slopes"]["commutator_L2_to_L2"] == pytest.approx(-1.0, abs=0.25)


def test_entry_point_with_thread_cap(tmp_path):
    env = dict(os.environ, SLAB_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "slab.cli", "lp-check", "--out", str(tmp_path)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout


def test_builtin_datum_vanishes_on_boundary():
    u = builtin_datum(build_domain(2.0, 8, 9))
    assert np.abs(u.values[:, [0, -1]]).max() < 1e-15
