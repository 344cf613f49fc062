"""Sparse MILP container with named row groups, plus a line-based text format."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

STRUCTURAL = "structural"


@dataclass
class MilpModel:
    """``min c.x + c0`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``lb <= x <= ub``.

    ``tags_ub``/``tags_eq`` hold one group tag per row. ``binary`` flags the
    integer variables, which must have bounds inside ``[0, 1]``.
    """

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    tags_ub: List[str]
    tags_eq: List[str]
    c0: float = 0.0
    var_names: Optional[List[str]] = None

    def __post_init__(self):
        n = len(self.c)
        for name in ("lb", "ub", "binary"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.A_ub.shape != (len(self.b_ub), n) or self.A_eq.shape != (len(self.b_eq), n):
            raise ValueError("row blocks do not match the variable count")
        if len(self.tags_ub) != len(self.b_ub) or len(self.tags_eq) != len(self.b_eq):
            raise ValueError("one tag per row is required")
        b = self.binary
        if np.any(self.lb[b] < 0) or np.any(self.ub[b] > 1):
            raise ValueError("binary variables need bounds within [0, 1]")
        if np.any(self.lb > self.ub):
            j = int(np.flatnonzero(self.lb > self.ub)[0])
            raise ValueError(f"variable {j} has empty bounds [{self.lb[j]}, {self.ub[j]}]")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def n_binary(self) -> int:
        return int(self.binary.sum())

    @property
    def m_ub(self) -> int:
        return len(self.b_ub)

    @property
    def m_eq(self) -> int:
        return len(self.b_eq)

    def groups(self) -> Dict[str, tuple]:
        """tag -> (inequality row indices, equality row indices), in first-seen order."""
        out: Dict[str, tuple] = {}
        ub: Dict[str, list] = {}
        eq: Dict[str, list] = {}
        for i, t in enumerate(self.tags_ub):
            ub.setdefault(t, []).append(i)
            out.setdefault(t, None)
        for i, t in enumerate(self.tags_eq):
            eq.setdefault(t, []).append(i)
            out.setdefault(t, None)
        return {t: (np.array(ub.get(t, []), dtype=int), np.array(eq.get(t, []), dtype=int)) for t in out}

    def without_groups(self, tags: Iterable[str]) -> "MilpModel":
        drop = set(tags)
        keep_ub = np.array([t not in drop for t in self.tags_ub], dtype=bool)
        keep_eq = np.array([t not in drop for t in self.tags_eq], dtype=bool)
        return MilpModel(self.c, self.lb, self.ub, self.binary,
                         self.A_ub[keep_ub], self.b_ub[keep_ub], self.A_eq[keep_eq], self.b_eq[keep_eq],
                         [t for t, k in zip(self.tags_ub, keep_ub) if k],
                         [t for t, k in zip(self.tags_eq, keep_eq) if k], self.c0, self.var_names)

    def with_bounds(self, lb, ub) -> "MilpModel":
        return MilpModel(self.c, np.asarray(lb, float), np.asarray(ub, float), self.binary, self.A_ub,
                         self.b_ub, self.A_eq, self.b_eq, self.tags_ub, self.tags_eq, self.c0, self.var_names)

    def residuals(self, x) -> tuple:
        """``(b_ub - A_ub x, b_eq - A_eq x)``."""
        x = np.asarray(x, dtype=float)
        return self.b_ub - self.A_ub @ x, self.b_eq - self.A_eq @ x

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        s_ub, s_eq = self.residuals(x)
        v = 0.0
        if len(s_ub):
            v = max(v, float(-s_ub.min()))
        if len(s_eq):
            v = max(v, float(np.abs(s_eq).max()))
        v = max(v, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        return v

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.c0)


class ModelBuilder:
    """Incremental construction of a :class:`MilpModel` from sparse rows."""

    def __init__(self):
        self.lb: List[float] = []
        self.ub: List[float] = []
        self.binary: List[bool] = []
        self.c: List[float] = []
        self.names: List[str] = []
        self.c0 = 0.0
        self._rows = {"L": ([], [], [], [], []), "E": ([], [], [], [], [])}  # rowptr-free COO + rhs + tags
        self._count = {"L": 0, "E": 0}

    @property
    def n(self) -> int:
        return len(self.c)

    def add_var(self, lb: float = 0.0, ub: float = 1.0, binary: bool = False, obj: float = 0.0,
                name: str = "") -> int:
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self.c.append(float(obj))
        self.names.append(name or f"v{len(self.c) - 1}")
        return len(self.c) - 1

    def add_vars(self, count: int, lb=0.0, ub=1.0, binary=False, obj=0.0, name: str = "v") -> np.ndarray:
        lb = np.broadcast_to(np.asarray(lb, float), (count,))
        ub = np.broadcast_to(np.asarray(ub, float), (count,))
        obj = np.broadcast_to(np.asarray(obj, float), (count,))
        return np.array([self.add_var(lb[i], ub[i], binary, obj[i], f"{name}[{i}]") for i in range(count)],
                        dtype=int)

    def add_obj(self, idx, coef) -> None:
        for j, v in zip(np.atleast_1d(idx), np.atleast_1d(coef)):
            self.c[int(j)] += float(v)

    def add_row(self, idx, coef, sense: str, rhs: float, tag: str = STRUCTURAL) -> None:
        self.add_rows(np.atleast_1d(np.asarray(idx, dtype=int))[None, :],
                      np.atleast_1d(np.asarray(coef, dtype=float))[None, :], sense, [rhs], tag)

    def add_rows(self, idx, coef, sense: str, rhs, tag: str = STRUCTURAL) -> None:
        """Append dense-pattern rows: ``coef[r] . x[idx[r]]  (<=|=)  rhs[r]``.

        ``idx`` is either one column list shared by all rows or one per row.
        Zero coefficients are dropped.
        """
        if " " in tag:
            raise ValueError("group tags may not contain spaces")
        coef = np.atleast_2d(np.asarray(coef, dtype=float))
        idx = np.asarray(idx, dtype=int)
        if idx.ndim == 1:
            idx = np.broadcast_to(idx, coef.shape)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if coef.shape != idx.shape or len(rhs) != len(coef):
            raise ValueError("row data shapes disagree")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError("row references an undeclared variable")
        rows, cols, vals, b, tags = self._rows[sense]
        base = self._count[sense]
        nz = coef != 0
        r_ix = np.nonzero(nz)[0] + base
        rows.append(r_ix)
        cols.append(idx[nz])
        vals.append(coef[nz])
        b.append(rhs)
        tags.extend([tag] * len(rhs))
        self._count[sense] += len(rhs)

    def _matrix(self, sense: str):
        rows, cols, vals, b, tags = self._rows[sense]
        m = self._count[sense]
        if m == 0:
            return sp.csr_matrix((0, self.n)), np.zeros(0), []
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, self.n)).tocsr()
        A.sum_duplicates()
        return A, np.concatenate(b), list(tags)

    def build(self) -> MilpModel:
        A_ub, b_ub, t_ub = self._matrix("L")
        A_eq, b_eq, t_eq = self._matrix("E")
        return MilpModel(np.array(self.c), np.array(self.lb), np.array(self.ub),
                         np.array(self.binary, dtype=bool), A_ub, b_ub, A_eq, b_eq, t_ub, t_eq,
                         self.c0, list(self.names))


def write_model(model: MilpModel) -> str:
    """Serialize to the line format; floats use ``repr`` so the round trip is exact."""
    out = [f"milp 1 {model.n} {model.m_ub} {model.m_eq}", f"objconst {model.c0!r}"]
    for j in range(model.n):
        kind = "B" if model.binary[j] else "C"
        out.append(f"var {j} {float(model.lb[j])!r} {float(model.ub[j])!r} {kind} {float(model.c[j])!r}")
    for sense, A, b, tags in (("L", model.A_ub, model.b_ub, model.tags_ub),
                              ("E", model.A_eq, model.b_eq, model.tags_eq)):
        A = A.tocsr()
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            pairs = " ".join(f"{int(j)}:{float(v)!r}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            out.append(f"row {tags[i]} {sense} {float(b[i])!r} {hi - lo} {pairs}".rstrip())
    return "\n".join(out) + "\n"


class ModelFormatError(ValueError):
    pass


def read_model(text: str) -> MilpModel:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("milp "):
        raise ModelFormatError("missing 'milp' header")
    try:
        _, version, n, m_ub, m_eq = lines[0].split()
        n, m_ub, m_eq = int(n), int(m_ub), int(m_eq)
    except ValueError as exc:
        raise ModelFormatError(f"bad header: {lines[0]!r}") from exc
    c0 = 0.0
    lb, ub, c = np.zeros(n), np.zeros(n), np.zeros(n)
    binary = np.zeros(n, dtype=bool)
    data = {"L": ([], [], [], [], []), "E": ([], [], [], [], [])}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        try:
            if parts[0] == "objconst":
                c0 = float(parts[1])
            elif parts[0] == "var":
                j = int(parts[1])
                lb[j], ub[j] = float(parts[2]), float(parts[3])
                binary[j] = parts[4] == "B"
                c[j] = float(parts[5])
            elif parts[0] == "row":
                tag, sense, rhs, nnz = parts[1], parts[2], float(parts[3]), int(parts[4])
                rows, cols, vals, b, tags = data[sense]
                r = len(b)
                for pair in parts[5:5 + nnz]:
                    j, v = pair.split(":", 1)
                    rows.append(r)
                    cols.append(int(j))
                    vals.append(float(v))
                b.append(rhs)
                tags.append(tag)
            else:
                raise ModelFormatError(f"line {lineno}: unknown record {parts[0]!r}")
        except (IndexError, KeyError, ValueError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"line {lineno}: {exc}") from exc

    def mat(sense, m):
        rows, cols, vals, b, tags = data[sense]
        if len(b) != m:
            raise ModelFormatError(f"expected {m} rows of sense {sense}, found {len(b)}")
        A = sp.csr_matrix((np.array(vals, dtype=float), (np.array(rows, dtype=int), np.array(cols, dtype=int))),
                          shape=(m, n))
        return A, np.array(b, dtype=float), tags

    A_ub, b_ub, t_ub = mat("L", m_ub)
    A_eq, b_eq, t_eq = mat("E", m_eq)
    return MilpModel(c, lb, ub, binary, A_ub, b_ub, A_eq, b_eq, t_ub, t_eq, c0)
