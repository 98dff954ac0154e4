"""
TreeSelect Core Modules
=======================

Branch and bound with a learned, tree-structured node selection policy.
"""

from .bnb_engine import Budget, SolveResult, solve
from .config import SolverConfig
from .lp_solver import LinearProgram, solve_lp
from .tree_policy import PolicyConfig, PolicySelector

__all__ = ['Budget', 'SolveResult', 'solve', 'SolverConfig', 'LinearProgram', 'solve_lp',
           'PolicyConfig', 'PolicySelector']
