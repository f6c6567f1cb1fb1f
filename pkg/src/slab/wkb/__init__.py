"""Semiclassical WKB approximate solutions: characteristics, phase, transport and assembly."""
from .ansatz import (
    LAMBDA_MAX,
    Ansatz,
    assemble_ansatz,
    build_table,
    caustic_time,
    decay_profile,
    dispersive_fit,
    exact_free_flow,
    measure_validity,
    residual_norm,
    residual_predicted,
    residual_scan,
)
from .characteristics import DELTA_MIN, CharacteristicFlow, solve_characteristics, unit_directions
from .series import MetricSeries
from .tables import PhaseAmplitudeTable, amplitude_growth, build_phase, invert_flow, solve_transport

__all__ = [
    "LAMBDA_MAX", "DELTA_MIN", "Ansatz", "CharacteristicFlow", "MetricSeries", "PhaseAmplitudeTable",
    "amplitude_growth", "assemble_ansatz", "build_phase", "build_table", "caustic_time", "decay_profile",
    "dispersive_fit", "exact_free_flow", "invert_flow", "measure_validity", "residual_norm",
    "residual_predicted", "residual_scan", "solve_characteristics", "solve_transport", "unit_directions",
]
