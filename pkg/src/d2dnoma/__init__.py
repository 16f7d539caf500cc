"""Resource allocation for D2D pairs underlaying a downlink NOMA cellular network."""

from .baseline import compute_ofdma_coefficients, ofdma_solve, verify_feasible_ofdma
from .cupower import CoefficientSet, compute_coefficients, cu_powers
from .dbira import Allocation, DualState, SolverSettings, solve
from .oracle import FeasibilityReport, brute_force, verify_feasible
from .scenario import ChannelRealization, ConfigError, ScenarioConfig, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "Allocation", "ChannelRealization", "CoefficientSet", "ConfigError", "DualState",
    "FeasibilityReport", "ScenarioConfig", "SolverSettings", "brute_force",
    "compute_coefficients", "compute_ofdma_coefficients", "cu_powers", "generate_scenario",
    "ofdma_solve", "solve", "verify_feasible", "verify_feasible_ofdma",
]
