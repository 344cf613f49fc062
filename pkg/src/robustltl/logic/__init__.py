from .formula import (FALSE, TRUE, And, Atom, FalseF, Formula, NegAtom, Next, Not, Or,
                      Release, TrueF, Until, always, atoms, depth, eventually, is_pnf,
                      pretty, to_pnf, walk)
from .parser import FormulaSyntaxError, UnknownAtomError, parse_formula
from .propositions import (AffineProposition, AtomicProposition, CallbackProposition,
                           RotatedBoxProposition, axis_box)
from .semantics import Trajectory, atom_truth, eval_bounded, truth_table

__all__ = [
    "FALSE", "TRUE", "And", "Atom", "FalseF", "Formula", "NegAtom", "Next", "Not", "Or",
    "Release", "TrueF", "Until", "always", "atoms", "depth", "eventually", "is_pnf",
    "pretty", "to_pnf", "walk", "FormulaSyntaxError", "UnknownAtomError", "parse_formula",
    "AffineProposition", "AtomicProposition", "CallbackProposition", "RotatedBoxProposition",
    "axis_box", "Trajectory", "atom_truth", "eval_bounded", "truth_table",
]
