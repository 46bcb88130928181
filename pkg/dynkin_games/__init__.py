"""
Dynkin Game Toolkit

Solver, verifier and experiment harness for zero-sum Dynkin games on finite
filtration trees and recombining lattices.
"""

from .config import TOOL_VERSION
from .exceptions import (
    BudgetExceeded,
    CertificationError,
    DynkinError,
    EnumerationCapExceeded,
    GameFileError,
    GameValidationError,
    PreconditionError,
)
from .models import (
    Arithmetic,
    ArithmeticMode,
    DynkinGame,
    FiltrationTree,
    StoppingTime,
    AdaptedProcess,
    ValueProcess,
    Verdict,
)
from .solver import DynkinSolver, check_assumption, compute_value, optimal_stopping_times
from .oracle import EquilibriumOracle, brute_force_minimax, check_existence_characterisation, find_nash
from .lattice import LatticeSpec, build_lattice, convergence_study
from .gamefile import load_game, load_lattice_spec
from .database import RunStore

__all__ = [
    'Arithmetic',
    'ArithmeticMode',
    'FiltrationTree',
    'AdaptedProcess',
    'StoppingTime',
    'DynkinGame',
    'ValueProcess',
    'Verdict',
    'DynkinSolver',
    'compute_value',
    'optimal_stopping_times',
    'check_assumption',
    'EquilibriumOracle',
    'brute_force_minimax',
    'find_nash',
    'check_existence_characterisation',
    'LatticeSpec',
    'build_lattice',
    'convergence_study',
    'load_game',
    'load_lattice_spec',
    'RunStore',
    'DynkinError',
    'GameValidationError',
    'GameFileError',
    'PreconditionError',
    'EnumerationCapExceeded',
    'BudgetExceeded',
    'CertificationError',
]

__version__ = TOOL_VERSION
