"""Steady-state finite-volume thermal simulator for chiplet packages.

Compares backside against frontside power delivery stacks through a
coarse global solve plus a fine-pitch local refinement around the hottest core.
"""
from .experiments import load_scenario, load_sweep, run_scenario, run_sweep
from .metrics import delta_report, peak
from .powermap import PowerMap, gen_center_focused, gen_clustered, gen_uniform, resample
from .refine import extract_boundary, find_hottest_window, solve_local
from .solver import assemble, attach_power, discretize, energy_balance, solve
from .stackmodel import PackageStack, Preset, build_preset, load_stack, validate

__version__ = "0.1.0"

__all__ = [
    "PackageStack", "PowerMap", "Preset",
    "assemble", "attach_power", "build_preset", "delta_report", "discretize",
    "energy_balance", "extract_boundary", "find_hottest_window", "gen_center_focused",
    "gen_clustered", "gen_uniform", "load_scenario", "load_stack", "load_sweep", "peak",
    "resample", "run_scenario", "run_sweep", "solve", "solve_local", "validate",
]
