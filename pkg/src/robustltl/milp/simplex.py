"""Dense bounded-variable simplex for ``min c.x`` s.t. ``A x <= b``, ``E x = f``, ``l <= x <= u``.

The method works on the vertex representation: a basis is a set of ``n``
active constraints whose normals span R^n, the vertex ``x`` solves the active
rows with equality, and the multipliers ``y`` solve ``sum_i y_i a_i = -c``.
Starting from the bound rows chosen by the sign of ``c`` the multipliers are
nonnegative, so only primal feasibility has to be restored (no phase 1).
Each pivot brings in the most violated row and drops the basic row whose
multiplier hits zero first. Because changing a variable bound only moves a
right-hand side, a basis from a parent node stays dual feasible and is used
to warm start branch-and-bound children.

Every variable must have finite bounds.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as sla


PIVOT_TOL = 1e-7
HARRIS_TOL = 1e-10
SMALL_PIVOT = 1e-3


class SingularBasisError(RuntimeError):
    def __init__(self, row: int, col: int, what: str = "basis matrix is numerically singular"):
        super().__init__(f"{what} (constraint {row}, basis position {col})")
        self.row, self.col = row, col


@dataclass
class LPResult:
    status: str  # optimal | infeasible | iteration_limit
    x: Optional[np.ndarray]
    objective: float
    basis: List[int]
    iterations: int
    dual_bound: float = float("nan")
    min_multiplier: float = 0.0
    degenerate_pivots: int = 0


@dataclass
class LPProblem:
    """Row-normalized dense data; constraint ids index the stacked row set.

    ids ``[0, m)`` are inequality rows, ``[m, m+n)`` upper bounds,
    ``[m+n, m+2n)`` lower bounds and ``[m+2n, m+2n+p)`` equality rows.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    E: np.ndarray
    f: np.ndarray
    scale_A: np.ndarray = field(default=None)
    scale_E: np.ndarray = field(default=None)

    @classmethod
    def from_arrays(cls, c, A, b, E=None, f=None) -> "LPProblem":
        c = np.asarray(c, dtype=float)
        n = len(c)
        A = _dense(A, n)
        E = _dense(E, n)
        b = np.asarray(b, dtype=float).reshape(-1)
        f = np.zeros(0) if f is None else np.asarray(f, dtype=float).reshape(-1)
        sa = np.abs(A).max(axis=1, initial=0.0)
        se = np.abs(E).max(axis=1, initial=0.0)
        sa = np.where(sa > 0, sa, 1.0)
        se = np.where(se > 0, se, 1.0)
        return cls(c, A / sa[:, None], b / sa, E / se[:, None], f / se, sa, se)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def p(self) -> int:
        return len(self.f)


def _dense(M, n) -> np.ndarray:
    if M is None:
        return np.zeros((0, n))
    if hasattr(M, "toarray"):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    return M.reshape(M.shape[0] if M.ndim == 2 else -1, n) if n else M.reshape(len(M), 0)


class _Basis:
    """Explicit inverse of the basis matrix with product-form updates."""

    REFACTOR_EVERY = 64

    def __init__(self, prob: LPProblem, lb, ub, ids: Sequence[int]):
        self.prob, self.lb, self.ub = prob, lb, ub
        self.ids = list(ids)
        self.sign = np.ones(len(self.ids))
        self.updates = 0
        self.refactor()

    def normal(self, cid: int) -> np.ndarray:
        pr = self.prob
        m, n = pr.m, pr.n
        if cid < m:
            return pr.A[cid]
        if cid < m + n:
            v = np.zeros(n)
            v[cid - m] = 1.0
            return v
        if cid < m + 2 * n:
            v = np.zeros(n)
            v[cid - m - n] = -1.0
            return v
        return pr.E[cid - m - 2 * n]

    def rhs(self, cid: int) -> float:
        pr = self.prob
        m, n = pr.m, pr.n
        if cid < m:
            return pr.b[cid]
        if cid < m + n:
            return self.ub[cid - m]
        if cid < m + 2 * n:
            return -self.lb[cid - m - n]
        return pr.f[cid - m - 2 * n]

    def is_free(self, cid: int) -> bool:
        return cid >= self.prob.m + 2 * self.prob.n

    def refactor(self) -> None:
        n = self.prob.n
        M = np.empty((n, n))
        for k, cid in enumerate(self.ids):
            M[:, k] = self.sign[k] * self.normal(cid)
        try:
            # singular bases are detected from the diagonal below
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(M, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularBasisError(-1, -1, str(exc)) from exc
        d = np.abs(np.diag(lu))
        scale = max(1.0, float(np.abs(M).max())) if n else 1.0
        if n and d.min() < 1e-11 * scale:
            k = int(np.argmin(d))
            raise SingularBasisError(self.ids[k], k)
        self.Minv = sla.lu_solve((lu, piv), np.eye(n)) if n else np.zeros((0, 0))
        self.updates = 0

    def replace(self, pos: int, cid: int, sign: float, alpha: np.ndarray) -> None:
        piv = alpha[pos]
        row = self.Minv[pos] / piv
        self.Minv -= np.outer(alpha, row)
        self.Minv[pos] = row
        self.ids[pos] = cid
        self.sign[pos] = sign
        self.updates += 1
        if self.updates >= self.REFACTOR_EVERY:
            self.refactor()


def default_basis(prob: LPProblem) -> List[int]:
    m, n = prob.m, prob.n
    return [m + j if prob.c[j] <= 0 else m + n + j for j in range(n)]


def solve_lp(prob: LPProblem, lb, ub, basis: Optional[Sequence[int]] = None, feastol: float = 1e-9,
             max_iter: Optional[int] = None, degenerate_switch: int = 50) -> LPResult:
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n, m, p = prob.n, prob.m, prob.p
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("the reference simplex needs finite bounds on every variable")
    if np.any(lb > ub + feastol):
        return LPResult("infeasible", None, float("inf"), [], 0)
    if n == 0:
        ok = np.all(prob.b >= -feastol) and np.all(np.abs(prob.f) <= feastol)
        return LPResult("optimal" if ok else "infeasible", np.zeros(0), 0.0, [], 0, 0.0)
    ids = list(basis) if basis is not None else default_basis(prob)
    try:
        B = _Basis(prob, lb, ub, ids)
    except SingularBasisError:
        if basis is None:
            raise
        B = _Basis(prob, lb, ub, default_basis(prob))
    if max_iter is None:
        max_iter = 50 * (m + p + 2 * n) + 1000
    eq0 = m + 2 * n
    degen_run = 0
    degen_total = 0
    bland = False
    restarts = 0
    rejected = set()
    in_basis = np.zeros(m + 2 * n + p, dtype=bool)

    def cold_start() -> tuple:
        B = _Basis(prob, lb, ub, default_basis(prob))
        in_basis[:] = False
        in_basis[B.ids] = True
        rejected.clear()
        return B, np.array([B.sign[k] * B.rhs(cid) for k, cid in enumerate(B.ids)])

    in_basis[B.ids] = True
    bB = np.array([B.sign[k] * B.rhs(cid) for k, cid in enumerate(B.ids)])
    for it in range(max_iter + 1):
        x = B.Minv.T @ bB
        viol = np.concatenate([
            prob.A @ x - prob.b if m else np.zeros(0),
            x - ub,
            lb - x,
            np.abs(prob.E @ x - prob.f) if p else np.zeros(0),
        ])
        viol[in_basis] = 0.0
        cand = np.flatnonzero(viol > feastol)
        if rejected:
            keep = np.array([c not in rejected for c in cand], dtype=bool)
            if len(cand) and not keep.any():
                if restarts >= 3:
                    raise SingularBasisError(int(cand[0]), -1, "every violated row leads to a singular basis")
                restarts += 1
                B, bB = cold_start()
                continue
            cand = cand[keep]
        if len(cand) == 0:
            y = -(B.Minv @ prob.c)
            obj = float(prob.c @ x)
            free = np.array([B.is_free(cid) for cid in B.ids])
            ymin = float(y[~free].min()) if np.any(~free) else 0.0
            dual = float(-(y @ bB))
            return LPResult("optimal", x, obj, list(B.ids), it, dual, ymin, degen_total)
        if it == max_iter:
            break
        r = int(cand[0]) if bland else int(cand[np.argmax(viol[cand])])
        sign = 1.0
        if r >= eq0:
            sign = 1.0 if prob.E[r - eq0] @ x - prob.f[r - eq0] > 0 else -1.0
        a_r = sign * B.normal(r)
        alpha = B.Minv @ a_r
        y = -(B.Minv @ prob.c)
        free_mask = np.array([B.is_free(cid) for cid in B.ids])
        ok = ~free_mask & (alpha > PIVOT_TOL)
        pos = np.flatnonzero(ok)
        if len(pos) == 0:
            return LPResult("infeasible", None, float("inf"), list(B.ids), it)
        yp = np.maximum(y[pos], 0.0)
        ratios = yp / alpha[pos]
        t = ratios.min()
        if bland:
            ties = pos[ratios <= t + 1e-12 * (1.0 + t)]
            leave = int(min(ties, key=lambda k: B.ids[k]))
        else:
            # two-pass (Harris) choice: within a small dual tolerance prefer the largest pivot
            t_relaxed = ((yp + HARRIS_TOL) / alpha[pos]).min()
            ties = pos[ratios <= t_relaxed]
            leave = int(ties[np.argmax(alpha[ties])])
            t = float(np.maximum(y[leave], 0.0) / alpha[leave])
        if t <= 1e-12:
            degen_run += 1
            degen_total += 1
            if degen_run >= degenerate_switch:
                bland = True
        else:
            degen_run = 0
            bland = False
        small = alpha[leave] < SMALL_PIVOT * max(1.0, float(np.abs(alpha).max()))
        saved = (B.Minv.copy(), list(B.ids), B.sign.copy(), B.updates) if small else None
        old_id = B.ids[leave]
        try:
            B.replace(leave, r, sign, alpha)
            if small and B.updates:
                B.refactor()
        except SingularBasisError:
            if saved is not None:
                # the pivot would make the basis singular: undo it and try another row
                B.Minv, B.ids, B.sign, B.updates = saved
                rejected.add(r)
                continue
            if restarts >= 3:
                raise
            restarts += 1
            B, bB = cold_start()
            continue
        rejected.clear()
        in_basis[old_id] = False
        in_basis[r] = True
        bB[leave] = sign * B.rhs(r)
        if B.updates == 0:
            bB = np.array([B.sign[k] * B.rhs(cid) for k, cid in enumerate(B.ids)])
    return LPResult("iteration_limit", None, float("nan"), list(B.ids), max_iter)
