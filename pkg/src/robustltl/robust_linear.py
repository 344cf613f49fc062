"""Robust counterpart for disturbances entering linearly: support boxes, dualization, assembly.

When ``A``, ``B`` are constant, ``c`` and every ``rho_i`` are affine in the
disturbance and the policy is piecewise affine, every constraint row is affine
in ``w`` on each policy piece. The worst case over a polyhedral piece
``{w : G w <= g}`` is then replaced by its LP dual: ``max_w a.w + b <= 0``
holds iff some ``lam >= 0`` satisfies ``G^T lam = a`` and ``g.lam + b <= 0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import affine_c_terms
from .encoder import BigMTable, DecisionLayout, FormulaTemplate, compute_bigm, encode_formula
from .logic.propositions import AffineProposition, RotatedBoxProposition
from .milp import MilpModel, ModelBuilder
from .policy import Partition, Piece, PolicySpec
from .problem import SynthesisProblem
from .scenario import add_template, binary_search_K, closed_form_K


class NonlinearityError(ValueError):
    pass


class EmptyPieceError(ValueError):
    pass


# -- support estimation -----------------------------------------------------------------

@dataclass(frozen=True)
class SupportPiece:
    lower: np.ndarray
    upper: np.ndarray
    halfspace: Optional[Tuple[np.ndarray, float]] = None  # a.w <= b

    @property
    def n_ineq(self) -> int:
        return 2 * len(self.lower) + (self.halfspace is not None)

    def contains(self, W, tol: float = 0.0) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        ok = np.all(W >= self.lower - tol, axis=1) & np.all(W <= self.upper + tol, axis=1)
        if self.halfspace is not None:
            a, b = self.halfspace
            ok &= W @ a <= b + tol
        return ok

    def to_dict(self) -> dict:
        d = {"lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.halfspace is not None:
            d["halfspace"] = {"a": np.asarray(self.halfspace[0]).tolist(), "b": float(self.halfspace[1])}
        return d

    @classmethod
    def from_dict(cls, d) -> "SupportPiece":
        hs = d.get("halfspace")
        return cls(np.asarray(d["lower"], float), np.asarray(d["upper"], float),
                   None if hs is None else (np.asarray(hs["a"], float), float(hs["b"])))


@dataclass(frozen=True)
class SupportEstimate:
    pieces: Tuple[SupportPiece, ...]

    @property
    def m(self) -> int:
        return sum(p.n_ineq for p in self.pieces)

    def contains(self, W, tol: float = 0.0) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        ok = np.zeros(len(W), dtype=bool)
        for p in self.pieces:
            ok |= p.contains(W, tol)
        return ok

    def to_json(self) -> str:
        return json.dumps({"pieces": [p.to_dict() for p in self.pieces], "m": self.m}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SupportEstimate":
        d = json.loads(text)
        return cls(tuple(SupportPiece.from_dict(p) for p in d["pieces"]))


@dataclass(frozen=True)
class SplitTemplate:
    """Two pieces separated by the fixed hyperplane ``a.w = b``: ``a.w <= b`` first."""

    a: np.ndarray
    b: float = 0.0

    @classmethod
    def stage_difference(cls, N: int, n_w: int, coord: int, later: int = 1, earlier: int = 0) -> "SplitTemplate":
        """``w[later, coord] - w[earlier, coord] <= 0`` against ``> 0``."""
        a = np.zeros((N + 1) * n_w)
        a[later * n_w + coord] = 1.0
        a[earlier * n_w + coord] = -1.0
        return cls(a, 0.0)


def estimate_support(W, template="single_box") -> SupportEstimate:
    """Tight coordinate boxes around the samples of each piece."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if len(W) == 0:
        raise EmptyPieceError("no samples")
    if isinstance(template, str):
        if template != "single_box":
            raise ValueError(f"unknown support template {template!r}")
        return SupportEstimate((SupportPiece(W.min(axis=0), W.max(axis=0)),))
    a, b = np.asarray(template.a, dtype=float), float(template.b)
    first = W @ a <= b
    pieces = []
    for sel, hs in ((first, (a, b)), (~first, (-a, -b))):
        if not sel.any():
            raise EmptyPieceError("a support piece received no samples")
        pieces.append(SupportPiece(W[sel].min(axis=0), W[sel].max(axis=0), hs))
    return SupportEstimate(tuple(pieces))


def partition_from_support(support: SupportEstimate, labels: Optional[Sequence[str]] = None) -> Partition:
    """One policy piece per support piece, carrying its box and halfspace."""
    pieces = []
    for i, sp in enumerate(support.pieces):
        D = len(sp.lower)
        if sp.halfspace is None:
            G, g = np.zeros((0, D)), np.zeros(0)
        else:
            G, g = sp.halfspace[0][None, :], np.array([sp.halfspace[1]])
        label = labels[i] if labels else str(i + 1)
        pieces.append(Piece(G, g, sp.lower.copy(), sp.upper.copy(), label))
    return Partition(pieces)


def tighten_to_samples(partition: Partition, W, pieces: Optional[Sequence[int]] = None) -> Partition:
    """Shrink piece boxes to the samples they contain; pieces without samples are kept."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    which = set(range(partition.P) if pieces is None else pieces)
    loc = partition.locate_batch(W)[0]
    out = []
    for i, p in enumerate(partition.pieces):
        sel = loc == i
        if i in which and sel.any():
            p = Piece(p.G, p.g, W[sel].min(axis=0), W[sel].max(axis=0), p.label)
        out.append(p)
    return Partition(out)


def partition_m(partition: Partition) -> int:
    """Inequality count of the support estimate formed by the boxed pieces."""
    return sum(2 * p.dim + len(p.g) for p in partition.pieces)


def K_w_bound(eps: float, beta: float, m: int, N: int, n_w: int, method: str = "closed_form") -> int:
    dims = m * (N + 1) * n_w + m
    if method == "closed_form":
        return closed_form_K(eps, beta, 0, dims)
    if method == "binary_search":
        return binary_search_K(eps, beta, dims, 0)
    raise ValueError(f"unknown method {method!r}")


# -- dualization ------------------------------------------------------------------------

@dataclass
class RobustRow:
    """``(a0 + A theta) . w + b0 + bvec . theta <= 0`` with ``theta = x[cols]``."""

    a0: np.ndarray            # (D,)
    A: np.ndarray             # (D, q)
    b0: float
    bvec: np.ndarray          # (q,)
    cols: np.ndarray          # (q,) global variable ids
    tag: str = "robust"

    def evaluate(self, x, W) -> np.ndarray:
        th = np.asarray(x, dtype=float)[self.cols] if len(self.cols) else np.zeros(0)
        a = self.a0 + self.A @ th
        return np.atleast_2d(W) @ a + self.b0 + self.bvec @ th


@dataclass(frozen=True)
class Cell:
    """Polyhedron ``{w : lower <= w <= upper, G w <= g}``."""

    lower: np.ndarray
    upper: np.ndarray
    G: np.ndarray
    g: np.ndarray

    @classmethod
    def from_piece(cls, piece: Piece) -> "Cell":
        if piece.lower is None or piece.upper is None:
            raise EmptyPieceError(f"piece {piece.label} has no bounding box")
        if np.any(piece.lower > piece.upper):
            raise EmptyPieceError(f"piece {piece.label} has an empty box")
        return cls(piece.lower, piece.upper, piece.G, piece.g)

    def worst_case(self, a: np.ndarray) -> tuple:
        """``max a.w`` over the cell and a maximizer."""
        from scipy.optimize import linprog

        if len(self.g) == 0:
            w = np.where(a >= 0, self.upper, self.lower)
            return float(a @ w), w
        r = linprog(-a, A_ub=self.G, b_ub=self.g, bounds=np.column_stack([self.lower, self.upper]),
                    method="highs")
        if r.status != 0:
            raise EmptyPieceError("cell is empty")
        return float(-r.fun), r.x


def dualize(mb: ModelBuilder, row: RobustRow, cell: Cell, lam_bound: float = np.inf) -> int:
    """Add the dual certificate of ``row`` over ``cell``; returns the number of multipliers.

    Coordinates whose coefficient is identically zero and that do not appear in
    ``cell.G`` are dropped; coordinates with a constant coefficient (or a
    degenerate box side) are folded into the right-hand side in closed form.
    """
    D = len(row.a0)
    in_G = np.any(cell.G != 0, axis=0) if len(cell.g) else np.zeros(D, dtype=bool)
    has_theta = np.any(row.A != 0, axis=1) if row.A.size else np.zeros(D, dtype=bool)
    const = float(row.b0)
    bvec = row.bvec.astype(float).copy()
    keep = []
    for j in range(D):
        if in_G[j]:
            keep.append(j)
        elif has_theta[j]:
            if cell.lower[j] == cell.upper[j]:
                const += row.a0[j] * cell.lower[j]
                bvec += cell.lower[j] * row.A[j]
            else:
                keep.append(j)
        elif row.a0[j] != 0:
            const += max(row.a0[j] * cell.lower[j], row.a0[j] * cell.upper[j])
    keep = np.array(keep, dtype=int)
    nk = len(keep)
    n_mu = len(cell.g)
    lam_p = mb.add_vars(nk, 0.0, lam_bound, name="lam+") if nk else np.zeros(0, int)
    lam_m = mb.add_vars(nk, 0.0, lam_bound, name="lam-") if nk else np.zeros(0, int)
    mu = mb.add_vars(n_mu, 0.0, lam_bound, name="mu") if n_mu and nk else np.zeros(0, int)
    q = len(row.cols)
    for t, j in enumerate(keep):
        idx = [lam_p[t], lam_m[t]]
        coef = [1.0, -1.0]
        if len(mu):
            idx += list(mu)
            coef += list(cell.G[:, j])
        idx += list(row.cols)
        coef += list(-row.A[j]) if q else []
        mb.add_row(idx, coef, "E", float(row.a0[j]), row.tag)
    idx = list(lam_p) + list(lam_m) + list(mu) + list(row.cols)
    coef = list(cell.upper[keep]) + list(-cell.lower[keep]) + (list(cell.g) if len(mu) else []) + list(bvec)
    mb.add_row(idx, coef, "L", -const, row.tag)
    return 2 * nk + len(mu)


# -- RP_lin assembly --------------------------------------------------------------------

def _affine_props(problem: SynthesisProblem) -> dict:
    out = {}
    for k, p in problem.props.items():
        if isinstance(p, AffineProposition):
            out[k] = p
        elif isinstance(p, RotatedBoxProposition) and p.is_affine:
            out[k] = p.as_affine()
        else:
            raise NonlinearityError(f"proposition {k!r} does not depend affinely on w; use the scenario path")
    return out


@dataclass
class RobustProgram:
    model: MilpModel
    layout: DecisionLayout
    template: FormulaTemplate
    bigm: BigMTable
    spec: PolicySpec
    rows: Dict[int, List[RobustRow]]  # per policy piece
    cells: Dict[int, Cell]
    train_pieces: np.ndarray

    def H(self, x) -> np.ndarray:
        return self.spec.H_from_theta(self.layout.theta(x))


def _policy_tensors(spec: PolicySpec, piece: int):
    """``u = (U0 + sum_j w_j Uw[j]) theta`` on the given piece."""
    nr = spec.N * spec.n_u
    U0 = np.zeros((nr, spec.d))
    Uw = np.zeros((spec.D, nr, spec.d))
    base = piece * (1 + spec.D)
    for r in range(nr):
        if spec.mask[r, base]:
            U0[r, spec.param_index[r, base]] = 1.0
        for j in range(spec.D):
            c = base + 1 + j
            if spec.mask[r, c]:
                Uw[j, r, spec.param_index[r, c]] = 1.0
    return U0, Uw


def assemble_robust_program(problem: SynthesisProblem, spec: PolicySpec, W_train,
                            bigm: Optional[BigMTable] = None, polarity: str = "both",
                            lam_bound: float = np.inf) -> RobustProgram:
    """Dualized robust program over the (boxed) pieces of ``spec.partition``.

    The recourse uses the same partition as the policy. The objective is the
    sample average over ``W_train``.
    """
    sys = problem.system
    if not sys.is_lti:
        raise NonlinearityError("A and B must be constant and c affine in w; use the scenario path")
    props = _affine_props(problem)
    N, nx, nu, nw = sys.N, sys.n_x, sys.n_u, sys.n_w
    D = (N + 1) * nw
    W_train = np.asarray(W_train, dtype=float).reshape(-1, D)
    cells = {i: Cell.from_piece(p) for i, p in enumerate(spec.partition.pieces)}
    template = encode_formula(problem.formula, props, N, polarity)
    if bigm is None:
        lo = np.min([c.lower.reshape(N + 1, nw).min(axis=0) for c in cells.values()], axis=0)
        hi = np.max([c.upper.reshape(N + 1, nw).max(axis=0) for c in cells.values()], axis=0)
        bigm = compute_bigm(props, problem.state_box, w_box=(lo, hi))
    st = sys.stack(np.zeros((N + 1, nw)))
    Ab, Bb = st.A, st.B
    c0, Cw = affine_c_terms(sys)
    xc_all = (Ab @ problem.x0 + c0).reshape(N + 1, nx)
    Cw_k = Cw.reshape(N + 1, nx, D)

    mb = ModelBuilder()
    P = spec.P
    layout = DecisionLayout(spec.d, template.n_b, template.n_c, P)
    theta_cols = mb.add_vars(spec.d, -problem.H_bound, problem.H_bound, name="theta")
    rec_cols = []
    for i in range(P):
        b = mb.add_vars(template.n_b, 0.0, 1.0, binary=True, name=f"delta{i}")
        z = mb.add_vars(template.n_c, 0.0, 1.0, name=f"z{i}")
        cols = np.concatenate([b, z]).astype(int)
        layout.rec_starts.append(int(cols[0]) if len(cols) else mb.n)
        rec_cols.append(cols)
        add_template(mb, template, cols)

    rows_by_piece: Dict[int, List[RobustRow]] = {}
    n_lam = 0
    for i in range(P):
        U0, Uw = _policy_tensors(spec, i)
        BU0 = (Bb @ U0).reshape(N + 1, nx, spec.d)
        BUw = np.einsum("ab,jbd->jad", Bb, Uw).reshape(D, N + 1, nx, spec.d)
        rows: List[RobustRow] = []
        rc = rec_cols[i]
        tag = f"piece:{i}"

        def state_rows(E, k, extra_w, const, rec_idx=None, rec_coef=None):
            """Rows ``E x_k + extra_w . w + const + rec_coef * rec <= 0``."""
            a0 = E @ Cw_k[k] + extra_w                       # (R, D)
            A = np.einsum("rx,jxd->rjd", E, BUw[:, k])       # (R, D, d)
            bt = E @ BU0[k]                                  # (R, d)
            b0 = E @ xc_all[k] + const
            for r in range(len(E)):
                cols, Ar, br = theta_cols, A[r], bt[r]
                if rec_idx is not None:
                    cols = np.append(theta_cols, rc[rec_idx[r]])
                    Ar = np.column_stack([Ar, np.zeros(D)])
                    br = np.append(br, rec_coef[r])
                rows.append(RobustRow(a0[r], Ar, float(b0[r]), br, cols, tag))

        for s in template.slots:
            p = props[s.atom]
            Mp, Mm = bigm[s.atom]
            ew = np.zeros((p.r, D))
            if p.n_w:
                ew[:, s.k * nw: s.k * nw + p.n_w] = p.rhoW
            idx = s.start + np.arange(s.r)
            if s.upper:
                state_rows(p.P, s.k, -ew, -p.rho0 - Mp, idx, Mp)
            if s.lower:
                state_rows(-p.P, s.k, ew, p.rho0 + problem.tol, idx, Mm - problem.tol)
        if problem.X is not None:
            for k in range(1, N + 1):
                state_rows(problem.X.A, k, np.zeros((len(problem.X.b), D)), -problem.X.b)
        if problem.U is not None:
            G, g = problem.U.A, problem.U.b
            U0k = U0.reshape(N, nu, spec.d)
            Uwk = Uw.reshape(D, N, nu, spec.d)
            for k in range(N):
                A = np.einsum("ru,jud->rjd", G, Uwk[:, k])
                bt = G @ U0k[k]
                for r in range(len(g)):
                    rows.append(RobustRow(np.zeros(D), A[r], float(-g[r]), bt[r], theta_cols, tag))
        for row in rows:
            n_lam += dualize(mb, row, cells[i], lam_bound)
        rows_by_piece[i] = rows
    layout.n_lambda = n_lam

    weights = problem.objective.weights
    if problem.objective.kind == "worst_case":
        t = mb.add_var(-1e6, 1e6, obj=1.0, name="t")
        layout.epigraph = t
        cols = np.append(theta_cols, t)
        for i in range(P):
            U0, Uw = _policy_tensors(spec, i)
            BN = Bb.reshape(N + 1, nx, N * nu)[N]
            A = np.column_stack([np.einsum("x,jxd->jd", weights, BN @ Uw), np.zeros(D)])
            row = RobustRow(weights @ Cw_k[N], A, float(weights @ xc_all[N]),
                            np.append(weights @ BN @ U0, -1.0), cols, f"piece:{i}")
            n_lam += dualize(mb, row, cells[i], lam_bound)
            rows_by_piece[i].append(row)
        layout.n_lambda = n_lam
        return RobustProgram(mb.build(), layout, template, bigm, spec, rows_by_piece, cells,
                             spec.partition.locate_batch(W_train)[0])
    if len(W_train) == 0:
        raise EmptyPieceError("no training samples for the objective")
    pieces = spec.partition.locate_batch(W_train)[0]
    # the sample average is linear in the per-piece means of kappa(w)
    BN = Bb.reshape(N + 1, nx, N * nu)[N]
    obj = np.zeros(spec.d)
    for i in range(P):
        sel = pieces == i
        if not sel.any():
            continue
        U0, Uw = _policy_tensors(spec, i)
        Ubar = U0 + np.tensordot(W_train[sel].mean(axis=0), Uw, axes=1)
        obj += sel.mean() * (weights @ BN @ Ubar)
    c0_obj = float(weights @ (xc_all[N] + Cw_k[N] @ W_train.mean(axis=0)))
    mb.add_obj(theta_cols, obj)
    mb.c0 = c0_obj
    return RobustProgram(mb.build(), layout, template, bigm, spec, rows_by_piece, cells, pieces)


def binding_scenarios(program: RobustProgram, x, piece: int, tol: float = 1e-6) -> np.ndarray:
    """Worst-case disturbances of the rows that are tight at ``x`` on one piece."""
    cell = program.cells[piece]
    pts = []
    for row in program.rows[piece]:
        th = np.asarray(x)[row.cols]
        a = row.a0 + row.A @ th
        val, w = cell.worst_case(a)
        if val + row.b0 + row.bvec @ th >= -tol * (1.0 + abs(row.b0)):
            pts.append(w)
    if not pts:
        return np.zeros((0, len(cell.lower)))
    return np.unique(np.round(np.array(pts), 12), axis=0)
