"""Big-M mixed-integer encoding of bounded LTL and its condensation onto policy parameters.

The logic part is compiled once into a template over local recourse columns
(atom-row binaries first, then continuous auxiliaries). Each disturbance
sample then instantiates the atom rows with the trajectory written as an
affine function of the free policy parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dynamics import UncertainSystem
from .logic.formula import (And, Atom, FalseF, Formula, NegAtom, Next, Or, Release, TrueF,
                            Until, is_pnf)
from .policy import PolicySpec
from .problem import Polyhedron

BIGM_INFLATION = 1.5


class EncodingError(ValueError):
    pass


# -- big-M bounds -----------------------------------------------------------------------

@dataclass(frozen=True)
class BigMTable:
    """Per proposition: row-wise ``(M_plus, M_minus)`` bounds on ``P x - rho``."""

    bounds: Mapping[str, Tuple[np.ndarray, np.ndarray]]

    def __getitem__(self, atom_id: str):
        return self.bounds[atom_id]

    def widened(self, factor: float) -> "BigMTable":
        return BigMTable({k: (mp + factor * np.abs(mp) + factor, mm - factor * np.abs(mm) - factor)
                          for k, (mp, mm) in self.bounds.items()})


def _box_range(P: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple:
    """Row-wise min and max of ``P x`` over the box ``[lo, hi]``."""
    a, b = P * lo, P * hi
    return np.minimum(a, b).sum(axis=-1), np.maximum(a, b).sum(axis=-1)


def compute_bigm(props: Mapping, state_box: tuple, W=None, w_box: Optional[tuple] = None) -> BigMTable:
    """Big-M bounds over ``state_box`` and a disturbance domain.

    ``W`` is a set of per-stage disturbance vectors (rows); affine propositions
    may instead use the box ``w_box``. For affine propositions the bounds are
    exact; callback propositions are enumerated over ``W`` and inflated.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in state_box)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise EncodingError("big-M bounds need a bounded state set")
    if W is None and w_box is None:
        raise EncodingError("big-M bounds need a disturbance domain")
    out = {}
    for pid, p in props.items():
        if W is not None:
            Wd = np.atleast_2d(np.asarray(W, dtype=float))
            if len(Wd) == 0:
                raise EncodingError("empty disturbance domain")
        if p.is_affine and hasattr(p, "rhoW"):
            Pmin, Pmax = _box_range(p.P, lo, hi)
            if w_box is not None and p.n_w:
                rmin, rmax = _box_range(p.rhoW, *(np.asarray(v, float)[: p.n_w] for v in w_box))
            elif p.n_w:
                r = Wd[:, : p.n_w] @ p.rhoW.T
                rmin, rmax = r.min(axis=0), r.max(axis=0)
            else:
                rmin = rmax = np.zeros(p.r)
            out[pid] = (Pmax - p.rho0 - rmin, Pmin - p.rho0 - rmax)
        else:
            if W is None:
                raise EncodingError(f"proposition {pid!r} needs a sampled disturbance domain")
            P, rho = p.evaluate_batch(Wd)
            Pmin, Pmax = _box_range(P, lo, hi)
            sup = (Pmax - rho).max(axis=0)
            inf = (Pmin - rho).min(axis=0)
            f = BIGM_INFLATION - 1.0
            out[pid] = (sup + f * np.abs(sup), inf - f * np.abs(inf))
    return BigMTable(out)


# -- formula template -------------------------------------------------------------------

@dataclass(frozen=True)
class AtomSlot:
    atom: str
    k: int
    start: int  # first local binary
    r: int
    upper: bool  # emit the "delta = 1 => inside" rows
    lower: bool  # emit the "delta = 0 => outside" rows


@dataclass
class FormulaTemplate:
    N: int
    n_b: int
    n_c: int
    slots: List[AtomSlot]
    rows: List[Tuple[np.ndarray, np.ndarray, float]]  # local idx, coef, rhs  (<=)
    infeasible: bool = False

    @property
    def n_rec(self) -> int:
        return self.n_b + self.n_c


class _Compiler:
    def __init__(self, props, N, polarity):
        self.props, self.N, self.polarity = props, N, polarity
        self.kinds: List[str] = []  # "b" or "c" per allocated variable
        self.rows: list = []
        self.slots: Dict[tuple, dict] = {}
        self.memo: dict = {}

    def new(self, kind: str) -> int:
        self.kinds.append(kind)
        return len(self.kinds) - 1

    def row(self, terms, rhs: float) -> None:
        """``sum coef * literal <= rhs``; literals are (var, negated)."""
        idx, coef = [], []
        for c, (v, neg) in terms:
            if neg:  # c * (1 - x)
                rhs -= c
                c = -c
            idx.append(v)
            coef.append(c)
        self.rows.append((idx, coef, rhs))

    def conj(self, lits):
        lits = [l for l in lits if l is not True]
        if any(l is False for l in lits):
            return False
        lits = list(dict.fromkeys(lits))
        if not lits:
            return True
        if len(lits) == 1:
            return lits[0]
        z = (self.new("c"), False)
        for l in lits:
            self.row([(1.0, z), (-1.0, l)], 0.0)
        self.row([(-1.0, z)] + [(1.0, l) for l in lits], len(lits) - 1.0)
        return z

    def disj(self, lits):
        lits = [l for l in lits if l is not False]
        if any(l is True for l in lits):
            return True
        lits = list(dict.fromkeys(lits))
        if not lits:
            return False
        if len(lits) == 1:
            return lits[0]
        z = (self.new("c"), False)
        for l in lits:
            self.row([(-1.0, z), (1.0, l)], 0.0)
        self.row([(1.0, z)] + [(-1.0, l) for l in lits], 0.0)
        return z

    def atom_vars(self, name, k, side):
        key = (name, k)
        if key not in self.slots:
            if name not in self.props:
                raise EncodingError(f"unknown atomic proposition {name!r}")
            r = self.props[name].r
            self.slots[key] = {"vars": [self.new("b") for _ in range(r)], "upper": False, "lower": False}
        s = self.slots[key]
        if self.polarity == "both":
            s["upper"] = s["lower"] = True
        else:
            s[side] = True
        return s["vars"]

    def lit(self, f: Formula, k: int):
        key = (f, k)
        if key in self.memo:
            return self.memo[key]
        N = self.N
        if isinstance(f, TrueF):
            out = True
        elif isinstance(f, FalseF):
            out = False
        elif isinstance(f, Atom):
            out = self.conj([(v, False) for v in self.atom_vars(f.id, k, "upper")])
        elif isinstance(f, NegAtom):
            out = self.disj([(v, True) for v in self.atom_vars(f.id, k, "lower")])
        elif isinstance(f, (And, Or)):
            stop = isinstance(f, Or)  # the absorbing constant
            lits = []
            for a in f.args:  # stop early so unreachable atoms get no binaries
                lits.append(self.lit(a, k))
                if lits[-1] is stop:
                    break
            out = self.disj(lits) if stop else self.conj(lits)
        elif isinstance(f, Next):
            out = self.lit(f.child, k + 1) if k < N else False
        elif isinstance(f, Until):
            out = self.lit(f.right, k)
            if k < N and out is not True:
                left = self.lit(f.left, k)
                if left is not False:
                    out = self.disj([out, self.conj([left, self.lit(f, k + 1)])])
        elif isinstance(f, Release):
            out = self.lit(f.right, k)
            if k < N and out is not False:
                left = self.lit(f.left, k)
                if left is not True:
                    out = self.conj([out, self.disj([left, self.lit(f, k + 1)])])
        else:
            raise EncodingError(f"formula is not in positive normal form: {f!r}")
        self.memo[key] = out
        return out


def encode_formula(f: Formula, props: Mapping, N: int, polarity: str = "both") -> FormulaTemplate:
    """Compile a PNF formula into a recourse template over horizon ``N``.

    ``polarity="both"`` emits both big-M rows for every atom row binary;
    ``"auto"`` emits only the side(s) each atom occurrence needs, which keeps
    feasibility unchanged because PNF formulas are monotone in their literals.
    """
    if not is_pnf(f):
        raise EncodingError("formula must be in positive normal form")
    if polarity not in ("both", "auto"):
        raise ValueError("polarity must be 'both' or 'auto'")
    for name in _atom_names(f):
        if name not in props:
            raise EncodingError(f"unknown atomic proposition {name!r}")
    comp = _Compiler(props, N, polarity)
    root = comp.lit(f, 0)
    infeasible = root is False
    if root not in (True, False):
        comp.row([(-1.0, root)], -1.0)
    # local order: binaries first, then auxiliaries
    kinds = np.array(comp.kinds)
    order = np.concatenate([np.flatnonzero(kinds == "b"), np.flatnonzero(kinds == "c")]).astype(int)
    remap = np.empty(len(kinds), dtype=int)
    remap[order] = np.arange(len(kinds))
    rows = [(remap[np.asarray(i, dtype=int)], np.asarray(c, dtype=float), float(r)) for i, c, r in comp.rows]
    slots = []
    for (name, k), s in comp.slots.items():
        loc = remap[s["vars"]]
        slots.append(AtomSlot(name, k, int(loc[0]), len(loc), s["upper"], s["lower"]))
    slots.sort(key=lambda s: s.start)
    n_b = int((kinds == "b").sum())
    return FormulaTemplate(N, n_b, len(kinds) - n_b, slots, rows, infeasible)


def _atom_names(f):
    from .logic.formula import atoms
    return atoms(f)


# -- condensation onto policy parameters ----------------------------------------------

@dataclass(frozen=True)
class SampleMaps:
    """Trajectory of one sample as an affine map of the policy parameters ``theta``."""

    w: np.ndarray        # (N+1, n_w)
    piece: int
    inside: bool
    x_const: np.ndarray  # (N+1, n_x)
    x_theta: np.ndarray  # (N+1, n_x, d)
    u_theta: np.ndarray  # (N, n_u, d)


def stage_maps(sys: UncertainSystem, x0, spec: PolicySpec, w) -> SampleMaps:
    w = np.asarray(w, dtype=float).reshape(sys.N + 1, sys.n_w)
    kap, inside = spec.kappa(w.reshape(-1))
    piece = spec.partition.locate(w.reshape(-1))[0]
    d = spec.d
    U = np.zeros((sys.N * sys.n_u, d))
    cols = np.flatnonzero(kap)
    for c in cols:
        rows = np.flatnonzero(spec.mask[:, c])
        np.add.at(U, (rows, spec.param_index[rows, c]), kap[c])
    st = sys.stack(w)
    xc = (st.A @ np.asarray(x0, float) + st.c).reshape(sys.N + 1, sys.n_x)
    xt = (st.B @ U).reshape(sys.N + 1, sys.n_x, d)
    return SampleMaps(w, piece, inside, xc, xt, U.reshape(sys.N, sys.n_u, d))


@dataclass
class ConstraintBlock:
    """Rows ``theta_coef @ theta + rec_coef @ rec[rec_idx] <= rhs`` for one sample.

    ``rec_idx`` indexes the local recourse columns of the template; the block
    is mapped to global columns when added to a model.
    """

    theta_coef: np.ndarray  # (R, d)
    rec_idx: np.ndarray     # (R,) single recourse column per row, -1 if none
    rec_coef: np.ndarray    # (R,)
    rhs: np.ndarray         # (R,)
    tag: str

    def residual(self, theta, rec=None) -> np.ndarray:
        """``rhs - lhs``; nonnegative means satisfied."""
        lhs = self.theta_coef @ np.asarray(theta, dtype=float)
        if rec is not None:
            has = self.rec_idx >= 0
            lhs = lhs.copy()
            lhs[has] += self.rec_coef[has] * np.asarray(rec, dtype=float)[self.rec_idx[has]]
        return self.rhs - lhs

    @classmethod
    def concat(cls, blocks: Sequence["ConstraintBlock"], tag: str, d: int) -> "ConstraintBlock":
        if not blocks:
            return cls(np.zeros((0, d)), np.zeros(0, int), np.zeros(0), np.zeros(0), tag)
        return cls(np.vstack([b.theta_coef for b in blocks]), np.concatenate([b.rec_idx for b in blocks]),
                   np.concatenate([b.rec_coef for b in blocks]), np.concatenate([b.rhs for b in blocks]), tag)


def spec_block(template: FormulaTemplate, props: Mapping, bigm: BigMTable, maps: SampleMaps,
               tol: float, tag: str) -> ConstraintBlock:
    """Big-M atom rows of one sample (the formula part, without structural logic rows)."""
    parts = []
    d = maps.x_theta.shape[2]
    for s in template.slots:
        P, rho = props[s.atom].evaluate(maps.w[s.k])
        Mp, Mm = bigm[s.atom]
        Pc = P @ maps.x_const[s.k]
        Pt = P @ maps.x_theta[s.k]
        idx = s.start + np.arange(s.r)
        if s.upper:
            parts.append(ConstraintBlock(Pt, idx, Mp.copy(), rho + Mp - Pc, tag))
        if s.lower:
            parts.append(ConstraintBlock(-Pt, idx, Mm - tol, -rho - tol + Pc, tag))
    return ConstraintBlock.concat(parts, tag, d)


def state_input_block(X: Optional[Polyhedron], U: Optional[Polyhedron], maps: SampleMaps,
                      tag: str) -> ConstraintBlock:
    """State rows for stages 1..N and input rows for stages 0..N-1."""
    parts = []
    d = maps.x_theta.shape[2]
    N1 = maps.x_theta.shape[0]
    if X is not None:
        for k in range(1, N1):
            parts.append(_plain(X.A @ maps.x_theta[k], X.b - X.A @ maps.x_const[k], tag))
    if U is not None:
        for k in range(maps.u_theta.shape[0]):
            parts.append(_plain(U.A @ maps.u_theta[k], U.b, tag))
    return ConstraintBlock.concat(parts, tag, d)


def _plain(coef, rhs, tag) -> ConstraintBlock:
    R = len(rhs)
    return ConstraintBlock(coef, -np.ones(R, dtype=int), np.zeros(R), np.asarray(rhs, float), tag)


def condense(template: FormulaTemplate, props, bigm, problem, spec: PolicySpec, w, tag: str,
             kind: str = "spec", tol: Optional[float] = None) -> tuple:
    """Instantiate one sample: returns ``(block, maps)`` with rows tagged ``tag``."""
    maps = stage_maps(problem.system, problem.x0, spec, w)
    if kind == "spec":
        blk = spec_block(template, props, bigm, maps, problem.tol if tol is None else tol, tag)
    else:
        blk = state_input_block(problem.X, problem.U, maps, tag)
    return blk, maps


# -- decision layout --------------------------------------------------------------------

@dataclass
class DecisionLayout:
    d: int
    n_b: int
    n_c: int
    P_delta: int
    theta_start: int = 0
    rec_starts: List[int] = field(default_factory=list)
    epigraph: Optional[int] = None
    state_starts: Dict[str, int] = field(default_factory=dict)
    n_lambda: int = 0

    @property
    def n_rec(self) -> int:
        return self.n_b + self.n_c

    def theta(self, x) -> np.ndarray:
        return np.asarray(x)[self.theta_start:self.theta_start + self.d]

    def recourse(self, x, piece: int) -> np.ndarray:
        s = self.rec_starts[piece]
        return np.asarray(x)[s:s + self.n_rec]

    def to_dict(self) -> dict:
        return {"d": self.d, "n_b": self.n_b, "n_c": self.n_c, "P_delta": self.P_delta,
                "theta_start": self.theta_start, "rec_starts": list(self.rec_starts),
                "epigraph": self.epigraph, "n_lambda": self.n_lambda}
