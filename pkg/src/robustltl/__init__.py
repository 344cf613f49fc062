"""Scenario-based synthesis of disturbance-feedback policies for bounded LTL specifications."""
from .dynamics import MatrixFamily, UncertainSystem
from .logic import parse_formula, to_pnf
from .policy import Partition, PolicySpec, RecourseSpec, load_policy, save_policy
from .problem import ObjectiveSpec, Polyhedron, SynthesisProblem
from .scenario import Multisample, SampleBudget, assemble_scenario_program, empirical_violation

__version__ = "0.1.0"

__all__ = [
    "MatrixFamily", "UncertainSystem", "parse_formula", "to_pnf", "Partition", "PolicySpec",
    "RecourseSpec", "load_policy", "save_policy", "ObjectiveSpec", "Polyhedron", "SynthesisProblem",
    "Multisample", "SampleBudget", "assemble_scenario_program", "empirical_violation",
]
