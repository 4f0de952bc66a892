"""Simulation and small-signal analysis of AC/DC grids of grids."""
from .kernels import default_backend
from .errors import (GogError, InfeasibleDispatch, NotAtEquilibrium, SettleTimeout,
                     ValidationError)
from .scenario import Scenario
from .scenario_io import bundled, dump_scenario, load_scenario, parse_scenario
from .sim import SimResult, Snapshot, settle, simulate
from .dispatch import DispatchProblem, apply_setpoints, solve_dispatch
from . import analysis

__version__ = "0.1.0"
BACKEND = default_backend()

__all__ = ["BACKEND", "DispatchProblem", "GogError", "InfeasibleDispatch",
           "NotAtEquilibrium", "Scenario", "SettleTimeout", "SimResult", "Snapshot",
           "ValidationError", "analysis", "apply_setpoints", "bundled", "default_backend",
           "dump_scenario", "load_scenario", "parse_scenario", "settle", "simulate",
           "solve_dispatch"]
