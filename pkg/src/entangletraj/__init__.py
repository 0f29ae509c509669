"""Diffusive quantum trajectories of two decaying qubits and their entanglement."""

from .ensemble import (
    EnsembleConfig, EnsembleStats, compare_psi11, compare_to_analytic, compare_to_master,
    optimality_scan, run_ensemble,
)
from .entanglement import (
    analytic_mean_concurrence, analytic_signed_concurrence, analytic_ts,
    detect_disentanglement, pure_concurrence,
)
from .noise import NoiseGenerator, real_covariance
from .oracle import MasterEvolution, evolve_master, lambda_timeseries, wootters_concurrence
from .records import (
    CurrentRecord, RecordMismatch, read_record_csv, record_trajectory, replay_from_record,
    write_record_csv,
)
from .sse import SseConfig, StepDivergence, TrajectoryRecord, run_trajectory
from .states import PRESETS, DensityMatrix, LindbladSet, StateVector, make_state, parse_state
from .unraveling import CorrelationMatrix, OptimalPhaseUndefined, optimal_unraveling

__version__ = "0.1.0"

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "compare_psi11",
    "compare_to_analytic",
    "compare_to_master",
    "optimality_scan",
    "run_ensemble",
    "analytic_mean_concurrence",
    "analytic_signed_concurrence",
    "analytic_ts",
    "detect_disentanglement",
    "pure_concurrence",
    "NoiseGenerator",
    "real_covariance",
    "MasterEvolution",
    "evolve_master",
    "lambda_timeseries",
    "wootters_concurrence",
    "CurrentRecord",
    "RecordMismatch",
    "read_record_csv",
    "record_trajectory",
    "replay_from_record",
    "write_record_csv",
    "SseConfig",
    "StepDivergence",
    "TrajectoryRecord",
    "run_trajectory",
    "PRESETS",
    "DensityMatrix",
    "LindbladSet",
    "StateVector",
    "make_state",
    "parse_state",
    "CorrelationMatrix",
    "OptimalPhaseUndefined",
    "optimal_unraveling",
]
