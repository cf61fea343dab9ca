"""Optimal tap selection for step-voltage regulators on unbalanced radial feeders.

The lifted branch-flow model is relaxed to a semidefinite program with
McCormick envelopes for the regulator gain products, solved with a conic
interior-point backend, and the taps are recovered and certified with a
forward-backward sweep load flow.
"""
from .builder import BuildOptions, build_mbopf, rbopf_residuals
from .conic import ConicProblem, solve
from .errors import SolverFailure, SvrOpfError
from .loadflow import metrics, sweep
from .netmodel import Network, load_feeder, parse_feeder
from .recovery import evaluate, optimize, tap_grid_search
from .svrgain import SvrSpec, gain_matrix, ratio_to_tap, tap_to_ratio

__all__ = [
    "BuildOptions", "ConicProblem", "Network", "SolverFailure", "SvrOpfError", "SvrSpec",
    "build_mbopf", "evaluate", "gain_matrix", "load_feeder", "metrics", "optimize", "parse_feeder",
    "rbopf_residuals", "ratio_to_tap", "solve", "sweep", "tap_grid_search", "tap_to_ratio",
]

__version__ = "0.1.0"


def feeder_path(name: str):
    """Path of a bundled feeder, e.g. ``feeder_path("ieee13")``."""
    from importlib.resources import files

    return files(__name__) / "feeders" / f"{name}.json"
