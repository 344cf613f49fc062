"""Bounded (no-loop) LTL semantics over state/disturbance trajectories.

The evaluator works on a batch of trajectories at once: every subformula is
mapped to a boolean array of shape ``(S, N + 1)`` holding its truth value at
each time step of each trajectory. ``Next`` at the final step is false.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .formula import (And, Atom, FalseF, Formula, NegAtom, Next, Not, Or, Release,
                      TrueF, Until)
from .parser import UnknownAtomError


@dataclass(frozen=True)
class Trajectory:
    x: np.ndarray  # (N + 1, n_x)
    w: np.ndarray  # (N + 1, n_w)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(len(x), -1) if len(x) else w.reshape(0, 0)
        if len(x) != len(w):
            raise ValueError(f"state and disturbance sequences differ in length ({len(x)} vs {len(w)})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def N(self) -> int:
        return len(self.x) - 1


def atom_truth(prop, X: np.ndarray, W: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Membership ``P(w_k) x_k <= rho(w_k) + tol`` for arrays ``(S, N+1, .)``."""
    S, T = X.shape[:2]
    P, rho = prop.evaluate_batch(W.reshape(S * T, -1))
    lhs = np.einsum("nij,nj->ni", P, X.reshape(S * T, -1))
    return np.all(lhs <= rho + tol, axis=1).reshape(S, T)


def truth_table(f: Formula, X, W, props: Mapping, tol: float = 1e-6) -> np.ndarray:
    """Truth of ``f`` at every time step for a batch of trajectories.

    ``X`` has shape ``(S, N+1, n_x)`` and ``W`` shape ``(S, N+1, n_w)``.
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if X.ndim == 2:
        X, W = X[None], W[None]
    S, T = X.shape[:2]
    atoms: dict = {}
    memo: dict = {}

    def atom(name):
        if name not in atoms:
            if name not in props:
                raise UnknownAtomError(name, -1)
            atoms[name] = atom_truth(props[name], X, W, tol)
        return atoms[name]

    def ev(g):
        if g in memo:
            return memo[g]
        if isinstance(g, TrueF):
            out = np.ones((S, T), dtype=bool)
        elif isinstance(g, FalseF):
            out = np.zeros((S, T), dtype=bool)
        elif isinstance(g, Atom):
            out = atom(g.id)
        elif isinstance(g, NegAtom):
            out = ~atom(g.id)
        elif isinstance(g, Not):
            out = ~ev(g.child)
        elif isinstance(g, And):
            out = np.logical_and.reduce([ev(a) for a in g.args])
        elif isinstance(g, Or):
            out = np.logical_or.reduce([ev(a) for a in g.args])
        elif isinstance(g, Next):
            c = ev(g.child)
            out = np.zeros_like(c)
            out[:, :-1] = c[:, 1:]
        elif isinstance(g, Until):
            a, b = ev(g.left), ev(g.right)
            out = np.empty_like(a)
            out[:, -1] = b[:, -1]
            for k in range(T - 2, -1, -1):
                out[:, k] = b[:, k] | (a[:, k] & out[:, k + 1])
        elif isinstance(g, Release):
            a, b = ev(g.left), ev(g.right)
            out = np.empty_like(a)
            out[:, -1] = b[:, -1]
            for k in range(T - 2, -1, -1):
                out[:, k] = b[:, k] & (a[:, k] | out[:, k + 1])
        else:
            raise TypeError(f"not a formula: {g!r}")
        memo[g] = out
        return out

    return ev(f)


def eval_bounded(f: Formula, traj: Trajectory, props: Mapping, k: int = 0,
                 tol: float = 1e-6) -> bool:
    """Whether ``traj`` satisfies ``f`` at time ``k``."""
    if not 0 <= k <= traj.N:
        raise ValueError(f"time index {k} outside [0, {traj.N}]")
    return bool(truth_table(f, traj.x, traj.w, props, tol)[0, k])
