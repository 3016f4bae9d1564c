"""Robust day-ahead arbitrage and frequency-reserve bidding for storage."""

from .types import (
    AlignmentError,
    BidSchedule,
    DomainError,
    PriceSeries,
    RegulationSignal,
    StorageParams,
    TimeGrid,
    UncertaintyBudget,
    default_initial_soc,
    effective_budget,
    sigma,
    sigma_vector,
)
from .soc import (
    FeasibilityReport,
    SocTrajectory,
    WorstCaseResult,
    brute_force_max_soc,
    brute_force_min_soc,
    check_feasibility,
    max_soc_at_time,
    max_soc_estimate,
    max_soc_gap_bound,
    max_soc_over_interval,
    min_soc_at_boundaries,
    phi,
    power_output,
    simulate_soc,
)
from .ir import ModelError, ModelOptions
from .builder import dispatch_variant
from .solve import SolveResult, solve, solve_exact_bilinear
from .data import DataError, Dataset, frequency_to_signal, \
    generate_synthetic_dataset
from .backtest import (
    BacktestReport,
    ExperimentConfig,
    SolverError,
    run_backtest,
    run_day,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BacktestReport",
    "BidSchedule",
    "DataError",
    "Dataset",
    "DomainError",
    "ExperimentConfig",
    "FeasibilityReport",
    "ModelError",
    "ModelOptions",
    "PriceSeries",
    "RegulationSignal",
    "SocTrajectory",
    "SolveResult",
    "SolverError",
    "StorageParams",
    "TimeGrid",
    "UncertaintyBudget",
    "WorstCaseResult",
    "brute_force_max_soc",
    "brute_force_min_soc",
    "check_feasibility",
    "default_initial_soc",
    "dispatch_variant",
    "effective_budget",
    "frequency_to_signal",
    "generate_synthetic_dataset",
    "max_soc_at_time",
    "max_soc_estimate",
    "max_soc_gap_bound",
    "max_soc_over_interval",
    "min_soc_at_boundaries",
    "phi",
    "power_output",
    "run_backtest",
    "run_day",
    "sigma",
    "sigma_vector",
    "simulate_soc",
    "solve",
    "solve_exact_bilinear",
    "write_report",
]
