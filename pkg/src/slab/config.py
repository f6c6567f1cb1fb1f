"""Experiment configuration: flat ``key = value`` text under ``[section]`` headers.

Every key has a default and a type. Unknown sections or keys and values
that fail to convert are rejected with the line and column of the offence.
The effective configuration renders back to canonical text, which is echoed
into output directories and hashed for reports.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError


class ConfigParseError(ConfigurationError):
    def __init__(self, message, line: int = 0, column: int = 0, source: str = "<config>"):
        self.line, self.column, self.source = line, column, source
        super().__init__(f"{source}:{line}:{column}: {message}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _auto_float(text: str):
    return "auto" if text.strip().lower() == "auto" else float(text)


# section -> key -> (default, converter, description)
SCHEMA = {
    "geometry": {
        "d": (2, int, "dimension of the model (1 or 2)"),
        "L": (2.0, float, "period of the tangential circle"),
        "n_theta": (32, int, "tangential grid points"),
        "n_r": (33, int, "normal grid points including both boundary circles"),
    },
    "metric": {
        "preset": ("auto", str, "auto | flat | lipschitz | file; auto picks the command's documented default"),
        "file": ("", str, "metric file used when preset = file"),
        "amp_theta": (0.2, float, "tangential amplitude of the lipschitz preset"),
        "amp_r": (0.3, float, "normal amplitude of the lipschitz preset"),
    },
    "scan": {
        "alpha": (0.5, float, "mollification exponent"),
        "kmin": (3, int, "smallest dyadic index k, h = 2^-k"),
        "kmax": (7, int, "largest dyadic index"),
        "k": (6, int, "single dyadic index for wkb-run and dispersive-fit"),
        "p": (4.0, float, "time exponent"),
        "q": (4.0, float, "space exponent"),
        "ensemble": (8, int, "random members of the Strichartz ensemble"),
        "packets": (4, int, "wave packets of the Strichartz ensemble"),
        "seed": (0, int, "seed of the PCG64 generator"),
        "tol": ("auto", _auto_float, "slope tolerance; auto selects the documented default"),
        "which": ("L2_to_L2", str, "commutator kind: L2_to_L2 | H1_to_L2 | diff_H1_to_L2 | T_h"),
        "trials": (30, int, "power-iteration probes per operator norm"),
        "unit": (0.0, float, "frequency unit of the dyadic cutoffs; 0 selects pi (4 pi for commutator-scan)"),
        "interval": ("window", str, "window | unit"),
        "N": (3, int, "WKB amplitude order"),
        "c": (2.0, float, "WKB window constant, S = c h^alpha"),
        "n_s": (65, int, "Chebyshev nodes in the WKB time window"),
        "n_dir": (32, int, "momentum directions for two-dimensional tables"),
        "fine": (512, int, "points per axis of the WKB assembly grid"),
        "grid_points": (2048, int, "points of the one-dimensional commutator grid"),
        "deltas": ((1e-2, 1e-3, 1e-4), _floats, "perturbation sizes for flow-lipschitz"),
        "samples": (2, int, "perturbation directions for flow-lipschitz"),
    },
    "solver": {
        "method": ("eigen_exact", str, "eigen_exact | crank_nicolson"),
        "dt": (0.0, float, "time step for crank_nicolson and the splitting oracle"),
        "t": (0.1, float, "propagation time"),
        "tol": (1e-8, float, "relative Picard stopping distance"),
        "beta": (2, int, "nonlinearity exponent (even, >= 2)"),
        "T": ("auto", _auto_float, "local window; auto uses choose_T with a calibrated constant"),
        "T_total": (5.0, float, "global extension horizon"),
        "n_t": (257, int, "time nodes per half window (odd)"),
        "c_T": ("auto", _auto_float, "choose_T constant; auto calibrates by bisection"),
        "target": (0.5, float, "contraction factor targeted by the calibration"),
        "drift_tol": (1e-6, float, "allowed relative mass and energy drift"),
        "focusing": (False, _bool, "use the focusing sign (local solves only)"),
    },
    "input": {
        "u0": ("", str, "initial data field file; empty selects the built-in datum"),
        "table": ("", str, "phase/amplitude table path"),
    },
    "output": {
        "dir": ("slab-out", str, "output directory"),
    },
}


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {s: {k: v[0] for k, v in keys.items()} for s, keys in SCHEMA.items()})

    def __getitem__(self, key: str):
        section, name = key.split(".", 1)
        return self.values[section][name]

    def set(self, key: str, value, source: str = "<override>") -> None:
        """Set ``section.key`` from a value or its text form."""
        if "." not in key:
            raise ConfigParseError(f"override {key!r} must look like section.key", source=source)
        section, name = key.split(".", 1)
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigParseError(f"unknown key {key!r}", source=source)
        conv = SCHEMA[section][name][1]
        if isinstance(value, str):
            try:
                value = conv(value)
            except ValueError as exc:
                raise ConfigParseError(f"bad value for {key}: {exc}", source=source) from None
        self.values[section][name] = value

    def render(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for k, v in keys.items():
                lines.append(f"{k} = {_render_value(v)}")
            lines.append("")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        """sha256 of the canonical settings; where the report is written does not enter."""
        canon = json.dumps({s: {k: _render_value(v) for k, v in kv.items()}
                            for s, kv in self.values.items() if s != "output"}, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigParseError("unterminated section header", lineno, col, source)
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section [{section}]", lineno, col + 1, source)
            continue
        if "=" not in raw:
            raise ConfigParseError("expected 'key = value'", lineno, col, source)
        if section is None:
            raise ConfigParseError("key outside of a section", lineno, col, source)
        key, _, value = raw.partition("=")
        name = key.strip()
        if name not in SCHEMA[section]:
            raise ConfigParseError(f"unknown key {name!r} in [{section}]", lineno, col, source)
        vcol = len(key) + 2 + (len(value) - len(value.lstrip()))
        try:
            cfg.values[section][name] = SCHEMA[section][name][1](value.strip())
        except ValueError as exc:
            raise ConfigParseError(f"bad value for {name}: {exc}", lineno, vcol, source) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
