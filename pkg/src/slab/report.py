"""Report emission: CSV per scan, TSV (x, y) series per log-log fit, JSON summary."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scaling import ScalingReport

SCAN_COLUMNS = ["k", "h", "value", "fitted_slope", "predicted_slope", "residual"]


@dataclass
class RunResult:
    """Everything one subcommand produced.

    ``verdicts`` maps a name to a dict with at least ``passed``; numeric
    verdicts also carry the ``predicted`` value they were compared against.
    """

    command: str
    scans: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add_scan(self, name: str, rep: ScalingReport) -> None:
        self.scans[name] = rep
        self.verdicts[name] = {
            "passed": bool(rep.verdict), "measured_slope": rep.fitted_slope,
            "predicted": rep.predicted_slope, "tolerance": rep.tolerance, "mode": rep.mode,
        }

    def check(self, name: str, value: float, bound: float, relation: str = "<") -> bool:
        ok = value < bound if relation == "<" else value > bound if relation == ">" else value <= bound
        self.verdicts[name] = {"passed": bool(ok), "value": value, "predicted": bound, "relation": relation}
        return ok

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values())


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow(["" if row.get(c) is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                            for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_report(result: RunResult, outdir, config=None, wall_time: float = 0.0) -> dict:
    """Write the report files under ``outdir`` and return the JSON summary."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files = []
    for name, rep in result.scans.items():
        files.append(write_csv(out / f"{name}.csv", SCAN_COLUMNS, list(rep.rows())))
        tsv = out / f"{name}.tsv"
        tsv.write_text("".join(f"{h!r}\t{v!r}\n" for h, v in zip(rep.scales, rep.values)))
        files.append(tsv)
    for name, (columns, rows) in result.tables.items():
        files.append(write_csv(out / f"{name}.csv", columns, rows))
    summary = {
        "command": result.command,
        "passed": result.passed,
        "verdicts": result.verdicts,
        "slopes": {n: r.fitted_slope for n, r in result.scans.items()},
        "residuals": {n: r.residual for n, r in result.scans.items()},
        "extra": result.extra,
        "config_hash": config.hash if config is not None else None,
        "wall_time": wall_time,
    }
    summary = _clean(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if config is not None:
        (out / "config.ini").write_text(config.render())
    return summary
