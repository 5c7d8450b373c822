"""Distributionally robust linear programs with possibilistic ambiguity sets."""

from .discrete import (block_completion_exists, dual_constraint_block, partition_levels,
                       worst_expectation_greedy, worst_expectation_lp)
from .errors import CertificationError, ModelError, PossdroError, SolverError
from .interval import (LevelGrid, WorstCaseEvaluator, block_completion, conic_block, inner_max_dual,
                       inner_max_primal, level_maxima_lp, worst_distribution, worst_expectation)
from .io import DocumentError, build_problem, load, parse, program_to_json, serialize
from .model import (LinearRow, UncertainLP, UncertainObjective, UncertainRow, deterministic_counterpart,
                    evaluate_solution, lift_all, solve_backend, solve_reference)
from .possibility import (BudgetInterval, DiscretePossibility, Distortion, FuzzyInterval, JointPossibilityModel,
                          LevelRegion, budget_radius, distort, fuzzy_cut, fuzzy_membership, joint_membership,
                          level_set)
from .solvers import Status

__version__ = "0.1.0"

__all__ = [
    "block_completion_exists", "dual_constraint_block", "partition_levels", "worst_expectation_greedy",
    "worst_expectation_lp", "CertificationError", "ModelError", "PossdroError", "SolverError",
    "LevelGrid", "WorstCaseEvaluator", "block_completion", "conic_block", "inner_max_dual", "inner_max_primal",
    "level_maxima_lp", "worst_distribution", "worst_expectation", "DocumentError", "build_problem", "load",
    "parse", "program_to_json", "serialize", "LinearRow", "UncertainLP", "UncertainObjective", "UncertainRow",
    "deterministic_counterpart", "evaluate_solution", "lift_all", "solve_backend", "solve_reference",
    "BudgetInterval", "DiscretePossibility", "Distortion", "FuzzyInterval", "JointPossibilityModel",
    "LevelRegion", "budget_radius", "distort", "fuzzy_cut", "fuzzy_membership", "joint_membership",
    "level_set", "Status", "__version__",
]
