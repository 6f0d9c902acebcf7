"""Energy-aware placement of fog processing servers for health monitoring
over a GPON access network."""
from .app_traffic import AppProfile, PhaseParams, derive_phases, get_app, processing_time
from .energy_accounting import EnergyBreakdown, total_energy
from .eofc_heuristic import run_eofc
from .exact_solver import SolveReport, assemble, solve_exact
from .instance import Instance, make_instance
from .oracle import brute_force_oracle
from .power_profiles import DevicePowerProfile, load_profiles, scale_idle
from .scenario_runner import Scenario, load_dataset, load_scenario, run_scenario
from .solution import PlacementSolution
from .topology import Topology, load_topology, west_leeds
from .validation import validate

__version__ = "0.1.0"

__all__ = [
    "AppProfile", "PhaseParams", "derive_phases", "get_app", "processing_time",
    "EnergyBreakdown", "total_energy", "run_eofc", "SolveReport", "assemble", "solve_exact",
    "Instance", "make_instance", "brute_force_oracle", "DevicePowerProfile", "load_profiles",
    "scale_idle", "Scenario", "load_dataset", "load_scenario", "run_scenario",
    "PlacementSolution", "Topology", "load_topology", "west_leeds", "validate",
]
