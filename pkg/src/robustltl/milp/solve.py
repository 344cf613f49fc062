"""Branch-and-bound over the reference simplex, the HiGHS backend, and support analysis."""
from __future__ import annotations

import heapq
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .model import MilpModel
from .simplex import LPProblem, SingularBasisError, solve_lp

log = logging.getLogger(__name__)

BACKEND_ENV = "ROBUSTLTL_MILP_BACKEND"
AUTO_REFERENCE_MAX_VARS = 300


class NodeLimitError(RuntimeError):
    pass


class InfeasibleModelError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    feastol: float = 1e-6
    inttol: float = 1e-6
    node_limit: int = 100_000
    backend: Optional[str] = None  # reference | highs | auto; None reads the environment
    time_limit: Optional[float] = None
    mip_rel_gap: float = 1e-6


@dataclass
class MilpSolution:
    status: str  # optimal | infeasible | node_limit
    x: Optional[np.ndarray]
    objective: float
    stats: Dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def resolve_backend(model: MilpModel, options: SolveOptions) -> str:
    name = options.backend or os.environ.get(BACKEND_ENV, "auto")
    name = name.strip().lower()
    if name not in ("auto", "reference", "highs"):
        raise ValueError(f"unknown MILP backend {name!r}")
    if name == "auto":
        finite = bool(np.all(np.isfinite(model.lb)) and np.all(np.isfinite(model.ub)))
        name = "reference" if finite and model.n <= AUTO_REFERENCE_MAX_VARS else "highs"
    return name


def solve(model: MilpModel, options: Optional[SolveOptions] = None) -> MilpSolution:
    options = options or SolveOptions()
    backend = resolve_backend(model, options)
    t0 = time.perf_counter()
    if backend == "reference":
        sol = _solve_reference(model, options)
    else:
        sol = _solve_highs(model, options)
    sol.stats["backend"] = backend
    sol.stats["wall_time"] = time.perf_counter() - t0
    sol.stats.setdefault("n_vars", model.n)
    sol.stats.setdefault("n_binary", model.n_binary)
    sol.stats.setdefault("n_rows", model.m_ub + model.m_eq)
    return sol


# -- reference branch-and-bound ---------------------------------------------------------

def _solve_reference(model: MilpModel, opt: SolveOptions) -> MilpSolution:
    prob = LPProblem.from_arrays(model.c, model.A_ub, model.b_ub, model.A_eq, model.b_eq)
    bins = np.flatnonzero(model.binary)
    lp_iters = 0
    nodes = 0
    max_gap = 0.0
    incumbent = np.inf
    best_x = None
    deadline = None if opt.time_limit is None else time.perf_counter() + opt.time_limit

    def lp(lb, ub, basis):
        nonlocal lp_iters, max_gap
        try:
            res = solve_lp(prob, lb, ub, basis, feastol=1e-9)
        except SingularBasisError:
            if basis is None:
                raise
            res = solve_lp(prob, lb, ub, None, feastol=1e-9)
        lp_iters += res.iterations
        if res.status == "iteration_limit":
            raise RuntimeError("simplex iteration limit reached")
        if res.status == "optimal":
            max_gap = max(max_gap, abs(res.dual_bound - res.objective))
        return res

    lb0 = model.lb.copy()
    ub0 = model.ub.copy()
    # a binary with bounds inside (0, 1) cannot take any value
    lb0[bins] = np.ceil(lb0[bins] - opt.inttol)
    ub0[bins] = np.floor(ub0[bins] + opt.inttol)
    # node: (bound, id, lb, ub, basis)
    counter = 0
    stack = [(-np.inf, counter, lb0, ub0, None)]
    heap: list = []
    status = "optimal"
    while stack or heap:
        if stack:
            bound, _, lb, ub, basis = stack.pop()
        else:
            bound, _, lb, ub, basis = heapq.heappop(heap)
        if bound >= incumbent - 1e-9:
            continue
        if nodes >= opt.node_limit or (deadline is not None and time.perf_counter() > deadline):
            status = "node_limit"
            break
        nodes += 1
        res = lp(lb, ub, basis)
        if res.status != "optimal" or res.objective >= incumbent - 1e-9:
            continue
        xb = res.x[bins]
        frac = np.abs(xb - np.round(xb))
        j = int(np.argmax(frac)) if len(bins) else 0
        if len(bins) == 0 or frac[j] <= opt.inttol:
            incumbent, best_x = res.objective, res.x
            if stack:
                for node in stack:
                    heapq.heappush(heap, node)
                stack = []
            continue
        var = int(bins[j])
        down_ub = ub.copy()
        down_ub[var] = 0.0
        up_lb = lb.copy()
        up_lb[var] = 1.0
        down = (res.objective, 0, lb, down_ub, res.basis)
        up = (res.objective, 0, up_lb, ub, res.basis)
        order = [down, up] if res.x[var] >= 0.5 else [up, down]  # nearer child popped first
        for child in order:
            counter += 1
            node = (child[0], counter) + child[2:]
            if best_x is None:
                stack.append(node)
            else:
                heapq.heappush(heap, node)
    stats = {"nodes": nodes, "lp_iterations": lp_iters, "max_duality_gap": max_gap}
    if best_x is None:
        return MilpSolution("infeasible" if status == "optimal" else "node_limit", None, float("nan"), stats)
    x = _polish_reference(model, prob, best_x, opt)
    return MilpSolution(status, x, model.objective(x), stats)


def _polish_reference(model, prob, x, opt):
    """Round binaries and re-solve the LP in the remaining continuous variables."""
    bins = np.flatnonzero(model.binary)
    if len(bins) == 0:
        return x
    lb, ub = model.lb.copy(), model.ub.copy()
    lb[bins] = ub[bins] = np.round(x[bins])
    try:
        res = solve_lp(prob, lb, ub, None, feastol=1e-9)
    except SingularBasisError:
        res = None
    if res is None or res.status != "optimal" or model.max_violation(res.x) > model.max_violation(x) + opt.feastol:
        x = x.copy()
        x[bins] = np.round(x[bins])
        return x
    return res.x


# -- HiGHS via scipy --------------------------------------------------------------------

def _solve_highs(model: MilpModel, opt: SolveOptions) -> MilpSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    cons = []
    if model.m_ub:
        cons.append(LinearConstraint(model.A_ub, -np.inf, model.b_ub))
    if model.m_eq:
        cons.append(LinearConstraint(model.A_eq, model.b_eq, model.b_eq))
    options = {"disp": False, "node_limit": opt.node_limit, "mip_rel_gap": opt.mip_rel_gap}
    if opt.time_limit is not None:
        options["time_limit"] = opt.time_limit
    res = milp(model.c, integrality=model.binary.astype(int), bounds=Bounds(model.lb, model.ub),
               constraints=cons, options=options)
    stats = {"nodes": int(getattr(res, "mip_node_count", 0) or 0), "highs_status": int(res.status),
             "highs_message": str(res.message)}
    if res.x is None:
        status = "infeasible" if res.status == 2 else "node_limit"
        if res.status not in (1, 2):
            raise RuntimeError(f"HiGHS failed: {res.message}")
        return MilpSolution(status, None, float("nan"), stats)
    x = _polish_highs(model, np.asarray(res.x, dtype=float))
    status = "optimal" if res.status == 0 else "node_limit"
    return MilpSolution(status, x, model.objective(x), stats)


def _polish_highs(model: MilpModel, x: np.ndarray) -> np.ndarray:
    from scipy.optimize import linprog

    bins = np.flatnonzero(model.binary)
    if len(bins) == 0:
        return x
    lb, ub = model.lb.copy(), model.ub.copy()
    lb[bins] = ub[bins] = np.round(x[bins])
    res = linprog(model.c, A_ub=model.A_ub if model.m_ub else None, b_ub=model.b_ub if model.m_ub else None,
                  A_eq=model.A_eq if model.m_eq else None, b_eq=model.b_eq if model.m_eq else None,
                  bounds=np.column_stack([lb, ub]), method="highs")
    if res.status == 0 and model.max_violation(res.x) <= max(model.max_violation(x), 1e-7):
        return np.asarray(res.x, dtype=float)
    x = x.copy()
    x[bins] = np.round(x[bins])
    return x


# -- support analysis -------------------------------------------------------------------

def find_support_constraints(model: MilpModel, removable: Iterable[str],
                             options: Optional[SolveOptions] = None) -> set:
    """Groups whose removal strictly lowers the optimal cost by more than ``feastol``."""
    options = options or SolveOptions()
    base = solve(model, options)
    if not base.ok:
        raise InfeasibleModelError(f"base model is {base.status}")
    out = set()
    for tag in removable:
        sol = solve(model.without_groups([tag]), options)
        if sol.status == "node_limit":
            raise NodeLimitError(f"node limit while re-solving without group {tag!r}")
        if sol.ok and sol.objective < base.objective - options.feastol:
            out.add(tag)
    return out


def group_slacks(model: MilpModel, x, tags: Sequence[str]) -> np.ndarray:
    """Smallest inequality slack per group (``inf`` for groups without inequality rows)."""
    s_ub, _ = model.residuals(x)
    best: Dict[str, float] = {}
    for s, t in zip(s_ub, model.tags_ub):
        if s < best.get(t, np.inf):
            best[t] = float(s)
    return np.array([best.get(t, np.inf) for t in tags])


def most_binding_scenarios(model: MilpModel, solution: MilpSolution, tags: Sequence[str]) -> List[str]:
    """Tags ordered from most to least binding; equal slacks keep the given order."""
    if not solution.ok:
        raise InfeasibleModelError("solution is not optimal")
    sl = group_slacks(model, solution.x, tags)
    order = np.argsort(sl, kind="stable")
    return [tags[i] for i in order]
