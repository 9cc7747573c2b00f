"""Potential-well computations and simulation for ``u_tt − Δu = f(u)`` with Dirichlet data."""

__version__ = "0.1.0"

from .domain import Grid, WellContext, embedding_constant, lambda1
from .errors import InputError, NumericalError, StepFailure
from .nonlinearity import ConditionParams, NonlinearitySpec, check_condition_H, growth_constants
from .wells import depth, depth_curve, evaluate, fiber_scan, nehari_scale
from .dynamics import Monitors, State, simulate, step
from .classify import ExperimentPlan, Recipe, predict, run_experiment

__all__ = [
    "Grid", "WellContext", "embedding_constant", "lambda1",
    "InputError", "NumericalError", "StepFailure",
    "ConditionParams", "NonlinearitySpec", "check_condition_H", "growth_constants",
    "depth", "depth_curve", "evaluate", "fiber_scan", "nehari_scale",
    "Monitors", "State", "simulate", "step",
    "ExperimentPlan", "Recipe", "predict", "run_experiment",
]
