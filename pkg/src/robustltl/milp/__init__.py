from .model import STRUCTURAL, MilpModel, ModelBuilder, ModelFormatError, read_model, write_model
from .simplex import LPProblem, LPResult, SingularBasisError, solve_lp
from .solve import (BACKEND_ENV, InfeasibleModelError, MilpSolution, NodeLimitError, SolveOptions,
                    find_support_constraints, group_slacks, most_binding_scenarios, solve)

__all__ = [
    "STRUCTURAL", "MilpModel", "ModelBuilder", "ModelFormatError", "read_model", "write_model",
    "LPProblem", "LPResult", "SingularBasisError", "solve_lp", "BACKEND_ENV", "InfeasibleModelError",
    "MilpSolution", "NodeLimitError", "SolveOptions", "find_support_constraints", "group_slacks",
    "most_binding_scenarios", "solve",
]
