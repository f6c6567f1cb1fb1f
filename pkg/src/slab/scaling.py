"""Log-log scaling fits shared by the spectral, wkb and norms experiments."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FitError

MIN_SCALES = 4


@dataclass
class ScalingReport:
    """Measured values against a scale parameter with a fitted power law.

    ``mode`` selects how the verdict compares the fitted slope with the
    prediction: ``two-sided`` (|slope - predicted| <= tol), ``at-least``
    (slope >= predicted - tol) or ``at-most`` (slope <= predicted + tol).
    """

    label: str
    scales: list
    values: list
    fitted_slope: float
    intercept: float
    residual: float
    predicted_slope: float | None
    tolerance: float
    mode: str = "two-sided"
    verdict: bool = True
    ks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def rows(self):
        ks = self.ks or [None] * len(self.scales)
        for k, h, v in zip(ks, self.scales, self.values):
            yield {
                "k": k,
                "h": h,
                "value": v,
                "fitted_slope": self.fitted_slope,
                "predicted_slope": self.predicted_slope,
                "residual": self.residual,
            }

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("extra", None)
        out.update({f"extra_{k}": v for k, v in self.extra.items() if np.isscalar(v)})
        return out


def loglog_fit(scales, values):
    """Least-squares slope, intercept and RMS residual of log(values) vs log(scales)."""
    x = np.log(np.asarray(scales, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(np.asarray(values, dtype=float))
    if x.size < 2 or not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise FitError("log-log fit needs at least two positive finite samples")
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(res**2)))


def judge(slope: float, predicted, tol: float, mode: str) -> bool:
    if predicted is None:
        return True
    if mode == "two-sided":
        return abs(slope - predicted) <= tol
    if mode == "at-least":
        return slope >= predicted - tol
    if mode == "at-most":
        return slope <= predicted + tol
    raise ValueError(f"unknown verdict mode {mode!r}")


def fit_scaling(label, scales, values, predicted=None, tol=0.0, mode="two-sided", ks=None,
                min_scales=MIN_SCALES, **extra) -> ScalingReport:
    scales = [float(s) for s in scales]
    values = [float(v) for v in values]
    if len(scales) < min_scales:
        raise FitError(f"{label}: need at least {min_scales} scales, got {len(scales)}")
    slope, intercept, resid = loglog_fit(scales, values)
    return ScalingReport(
        label=label,
        scales=scales,
        values=values,
        fitted_slope=slope,
        intercept=intercept,
        residual=resid,
        predicted_slope=predicted,
        tolerance=tol,
        mode=mode,
        verdict=judge(slope, predicted, tol, mode),
        ks=list(ks) if ks is not None else [],
        extra=dict(extra),
    )
