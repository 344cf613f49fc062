"""Plain containers describing one synthesis problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .dynamics import UncertainSystem
from .logic.formula import Formula, to_pnf
from .logic.propositions import AtomicProposition


@dataclass(frozen=True)
class Polyhedron:
    """``{z : A z <= b}``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != len(b):
            raise ValueError("polyhedron rows and right-hand side differ in length")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, z, tol: float = 1e-6) -> bool:
        return bool(np.all(self.A @ np.asarray(z, dtype=float) <= self.b + tol))

    def violation(self, Z) -> np.ndarray:
        """Largest row violation per point for ``Z`` of shape ``(..., dim)``."""
        Z = np.asarray(Z, dtype=float)
        return np.max(Z @ self.A.T - self.b, axis=-1)

    @classmethod
    def box(cls, lower, upper) -> "Polyhedron":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        I = np.eye(len(lower))
        keep_u = np.isfinite(upper)
        keep_l = np.isfinite(lower)
        return cls(np.vstack([I[keep_u], -I[keep_l]]), np.concatenate([upper[keep_u], -lower[keep_l]]))

    def stack(self, other: "Polyhedron") -> "Polyhedron":
        return Polyhedron(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))


@dataclass(frozen=True)
class ObjectiveSpec:
    """Linear terminal cost ``weights . x_N``: sample average or worst case (epigraph)."""

    kind: str = "sample_average_terminal"
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("sample_average_terminal", "worst_case"):
            raise ValueError(f"unknown objective kind {self.kind!r}")


@dataclass
class SynthesisProblem:
    system: UncertainSystem
    formula: Formula
    props: Dict[str, AtomicProposition]
    x0: np.ndarray
    X: Optional[Polyhedron] = None
    U: Optional[Polyhedron] = None
    state_box: Optional[tuple] = None  # (lower, upper), bounds used for big-M and state variables
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    H_bound: float = 100.0
    tol: float = 1e-5

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.formula = to_pnf(self.formula)
        sys = self.system
        if len(self.x0) != sys.n_x:
            raise ValueError(f"x0 has length {len(self.x0)}, system state has {sys.n_x}")
        for p in self.props.values():
            if p.n_x != sys.n_x:
                raise ValueError(f"proposition {p.id!r} acts on {p.n_x} states, system has {sys.n_x}")
        if self.X is not None and self.X.dim != sys.n_x:
            raise ValueError("state polyhedron dimension mismatch")
        if self.U is not None and self.U.dim != sys.n_u:
            raise ValueError("input polyhedron dimension mismatch")
        if self.state_box is None:
            self.state_box = bounding_box(self.X, sys.n_x)
        lo, hi = (np.asarray(v, dtype=float) for v in self.state_box)
        if lo.shape != (sys.n_x,) or hi.shape != (sys.n_x,):
            raise ValueError("state box dimension mismatch")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("the state box used for big-M bounds must be finite")
        self.state_box = (lo, hi)
        if self.objective.weights is None:
            object.__setattr__(self.objective, "weights", np.zeros(sys.n_x))
        w = np.asarray(self.objective.weights, dtype=float)
        if w.shape != (sys.n_x,):
            raise ValueError("objective weights must have one entry per state")
        object.__setattr__(self.objective, "weights", w)


def bounding_box(poly: Optional[Polyhedron], n: int) -> tuple:
    """Coordinate bounds of a polyhedron via 2n LPs; infinite where unbounded."""
    lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    if poly is None:
        return lo, hi
    from scipy.optimize import linprog

    for j in range(n):
        for sgn in (1.0, -1.0):
            c = np.zeros(n)
            c[j] = sgn
            r = linprog(c, A_ub=poly.A, b_ub=poly.b, bounds=[(None, None)] * n, method="highs")
            if r.status == 0:
                if sgn > 0:
                    lo[j] = r.fun
                else:
                    hi[j] = -r.fun
            elif r.status == 2:
                raise ValueError("state polyhedron is empty")
    return lo, hi
