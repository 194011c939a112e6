"""Production scheduling and balancing-market flexibility for plants with
storage silos, on-site PV and a battery."""

__version__ = "0.1.0"

from .baseline import InfeasiblePlanError, VariableLayout, build_baseline_program, solve_baseline
from .flex import FlexRequest, FlexTransaction, evaluate_transaction, flexibility_cost, greedy_select, sweep_day
from .market import PriceSet, load_prices, spreads, write_prices
from .mip import MixedIntegerProgram, solve_mip
from .model import (Battery, GridContract, Horizon, Machine, MachineHistory, PlantConfig, Schedule, Silo,
                    validate_config, validate_schedule)

__all__ = [
    "Battery", "FlexRequest", "FlexTransaction", "GridContract", "Horizon", "InfeasiblePlanError", "Machine",
    "MachineHistory", "MixedIntegerProgram", "PlantConfig", "PriceSet", "Schedule", "Silo", "VariableLayout",
    "build_baseline_program", "evaluate_transaction", "flexibility_cost", "greedy_select", "load_prices",
    "solve_baseline", "solve_mip", "spreads", "sweep_day", "validate_config", "validate_schedule", "write_prices",
]
