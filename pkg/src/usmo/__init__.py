"""Positive-unlabeled kernel classification with the USMO dual solver."""

from .data import Dataset, PUSplit, f_measure, load_csv, load_libsvm, make_pu_split
from .estimator import USMOClassifier
from .exceptions import (
    BudgetExceededError,
    ConfigurationError,
    InputError,
    InternalStateError,
    ParseError,
    USMOError,
)
from .initializer import initial_state
from .kernel import GramCache, KernelSpec, eval_kernel
from .model import Model, predict_label, predict_score
from .solver import DualState, Hyperparams, SolverTrace, derive_constants, run

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ConfigurationError",
    "Dataset",
    "DualState",
    "GramCache",
    "Hyperparams",
    "InputError",
    "InternalStateError",
    "KernelSpec",
    "Model",
    "PUSplit",
    "ParseError",
    "SolverTrace",
    "USMOClassifier",
    "USMOError",
    "derive_constants",
    "eval_kernel",
    "f_measure",
    "initial_state",
    "load_csv",
    "load_libsvm",
    "make_pu_split",
    "predict_label",
    "predict_score",
    "run",
]
