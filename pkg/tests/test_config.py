import pytest
from hypothesis import given, strategies as st

from slab.config import SCHEMA, ConfigParseError, ExperimentConfig, load_config, parse_config
from slab.errors import ConfigurationError


def test_defaults_and_overrides():
    cfg = parse_config("[scan]\nkmin = 4\nalpha = 0.6\ndeltas = 0.1, 0.01\n[solver]\nfocusing = yes\n")
    assert cfg["scan.kmin"] == 4 and cfg["scan.alpha"] == 0.6
    assert cfg["scan.deltas"] == (0.1, 0.01)
    assert cfg["solver.focusing"] is True
    assert cfg["geometry.n_r"] == SCHEMA["geometry"]["n_r"][0]
    assert cfg["scan.tol"] == "auto"


def test_comments_and_blank_lines():
    cfg = parse_config("# comment\n\n; other\n[geometry]\n  d = 1\n")
    assert cfg["geometry.d"] == 1


@pytest.mark.parametrize("text, line, col, fragment", [
    ("[scan]\nkmin = 3\n  bogus = 1\n", 3, 3, "unknown key"),
    ("[nowhere]\n", 1, 2, "unknown section"),
    ("[scan]\nkmin = three\n", 2, 8, "bad value"),
    ("kmin = 3\n", 1, 1, "outside of a section"),
    ("[scan\n", 1, 1, "unterminated"),
    ("[scan]\njust words\n", 2, 1, "expected"),
])
def test_errors_carry_position(text, line, col, fragment):
    with pytest.raises(ConfigParseError) as info:
        parse_config(text, "exp.ini")
    err = info.value
    assert (err.line, err.column) == (line, col)
    assert str(err).startswith(f"exp.ini:{line}:{col}:")
    assert fragment in str(err)


def test_set_and_errors():
    cfg = ExperimentConfig()
    cfg.set("solver.T", "0.25")
    cfg.set("scan.tol", "-0.5")
    assert cfg["solver.T"] == 0.25 and cfg["scan.tol"] == -0.5
    with pytest.raises(ConfigParseError):
        cfg.set("solver.bogus", "1")
    with pytest.raises(ConfigParseError):
        cfg.set("nodot", "1")
    with pytest.raises(ConfigParseError):
        cfg.set("scan.kmin", "x")


def test_render_roundtrip_and_hash():
    cfg = parse_config("[scan]\nalpha = 0.55\ndeltas = 0.1,0.2\n[output]\ndir = /tmp/x\n")
    back = parse_config(cfg.render())
    assert back.values == cfg.values
    assert back.hash == cfg.hash
    assert ExperimentConfig().hash == ExperimentConfig().hash
    assert cfg.hash != ExperimentConfig().hash


@given(kmin=st.integers(0, 20), alpha=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
def test_render_is_stable(kmin, alpha, seed):
    cfg = ExperimentConfig()
    cfg.set("scan.kmin", kmin)
    cfg.set("scan.alpha", alpha)
    cfg.set("scan.seed", seed)
    assert parse_config(cfg.render()).hash == cfg.hash


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.ini")
    (tmp_path / "ok.ini").write_text("[geometry]\nn_r = 9\n")
    assert load_config(tmp_path / "ok.ini")["geometry.n_r"] == 9
