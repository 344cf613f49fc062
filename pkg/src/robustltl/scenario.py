"""Sample-size bounds, scenario program assembly and empirical violation estimates."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .encoder import (BigMTable, ConstraintBlock, DecisionLayout, FormulaTemplate, compute_bigm,
                      encode_formula, spec_block, stage_maps, state_input_block)
from .logic.semantics import truth_table
from .milp import MilpModel, ModelBuilder, SolveOptions, find_support_constraints, solve
from .milp.model import STRUCTURAL
from .policy import PolicyParam, PolicySpec, RecourseSpec
from .problem import SynthesisProblem

E_FACTOR = math.e / (math.e - 1.0)


# -- sample-size bounds -----------------------------------------------------------------

def _check_unit(name, v):
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {v!r}")


def _log_multiplier(exponent: int, n_configs: Optional[int]) -> float:
    if n_configs is not None:
        if n_configs < 1:
            raise ValueError("the feasible-configuration count must be positive")
        return math.log(n_configs)
    if exponent < 0:
        raise ValueError("multiplier exponent must be nonnegative")
    return exponent * math.log(2.0)


def closed_form_K(eps: float, beta: float, multiplier_exponent: int, dims: int,
                  n_configs: Optional[int] = None) -> int:
    """``ceil(e/(e-1) / eps * (ln(2^exponent / beta) + dims - 1))``."""
    _check_unit("eps", eps)
    _check_unit("beta", beta)
    if dims < 1:
        raise ValueError("dims must be at least 1")
    val = E_FACTOR / eps * (_log_multiplier(multiplier_exponent, n_configs) - math.log(beta) + dims - 1)
    return max(1, math.ceil(val))


def binomial_tail(K: int, eps: float, zeta: int) -> float:
    """``sum_{i < zeta} C(K, i) eps^i (1 - eps)^(K - i)`` evaluated in the log domain."""
    if zeta <= 0:
        return 0.0
    if zeta > K:
        return 1.0
    if eps <= 0.0:
        return 1.0
    if eps >= 1.0:
        return 0.0
    le, l1e = math.log(eps), math.log1p(-eps)
    logs = [math.lgamma(K + 1) - math.lgamma(i + 1) - math.lgamma(K - i + 1) + i * le + (K - i) * l1e
            for i in range(zeta)]
    top = max(logs)
    return math.exp(top) * math.fsum(math.exp(v - top) for v in logs)


def binary_search_K(eps: float, beta: float, zeta: int, multiplier_exponent: int = 0,
                    n_configs: Optional[int] = None) -> int:
    """Smallest ``K`` with ``2^exponent * binomial_tail(K, eps, zeta) <= beta``."""
    _check_unit("eps", eps)
    _check_unit("beta", beta)
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    lm = _log_multiplier(multiplier_exponent, n_configs)
    log_beta = math.log(beta)

    def ok(K):
        t = binomial_tail(K, eps, zeta)
        return t == 0.0 or math.log(t) + lm <= log_beta

    lo = max(1, zeta)
    hi = closed_form_K(eps, beta, multiplier_exponent, max(zeta, 1), n_configs)
    while not ok(hi):
        hi *= 2
    if ok(lo):
        return lo
    while hi - lo > 1:  # invariant: not ok(lo), ok(hi)
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SampleBudget:
    eps_phi: float
    eps_s: float
    beta_phi: float
    beta_s: float
    d: int
    P_delta: int = 1
    n_c: int = 0
    n_b: int = 0
    n_configs: Optional[int] = None
    method: str = "closed_form"
    K_phi: int = field(init=False, default=0)
    K_s: int = field(init=False, default=0)

    def __post_init__(self):
        for name in ("eps_phi", "eps_s", "beta_phi", "beta_s"):
            _check_unit(name, getattr(self, name))
        if self.method not in ("closed_form", "binary_search"):
            raise ValueError(f"unknown method {self.method!r}")
        exp = self.P_delta * self.n_b
        dims_phi = self.d + self.P_delta * self.n_c
        dims_s = self.d
        if self.method == "closed_form":
            self.K_phi = closed_form_K(self.eps_phi, self.beta_phi, exp, max(dims_phi, 1), self.n_configs)
            self.K_s = closed_form_K(self.eps_s, self.beta_s, 0, max(dims_s, 1))
        else:
            self.K_phi = binary_search_K(self.eps_phi, self.beta_phi, dims_phi, exp, self.n_configs)
            self.K_s = binary_search_K(self.eps_s, self.beta_s, dims_s, 0)

    def to_dict(self) -> dict:
        return asdict(self)


def split_budget(K_total: int, budget: SampleBudget) -> tuple:
    if budget.K_phi + budget.K_s > K_total:
        raise ValueError(f"needs {budget.K_phi} + {budget.K_s} samples, only {K_total} available")
    return budget.K_phi, budget.K_s


# -- multisample ------------------------------------------------------------------------

class MultisampleFormatError(ValueError):
    pass


@dataclass
class Multisample:
    """Rows of stacked disturbance sequences ``(w_0, ..., w_N)``."""

    data: np.ndarray
    N: int
    n_w: int
    provenance: str = ""

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != (self.N + 1) * self.n_w:
            raise MultisampleFormatError(f"expected {(self.N + 1) * self.n_w} columns, got {self.data.shape[1]}")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def K(self) -> int:
        return len(self.data)

    def sequences(self) -> np.ndarray:
        return self.data.reshape(len(self.data), self.N + 1, self.n_w)

    def split(self, *counts) -> list:
        out, s = [], 0
        for c in counts:
            if s + c > len(self):
                raise ValueError(f"requested {sum(counts)} samples, only {len(self)} available")
            out.append(Multisample(self.data[s:s + c], self.N, self.n_w, f"{self.provenance}[{s}:{s + c}]"))
            s += c
        return out

    def header(self) -> list:
        return [f"w{k}_{i}" for k in range(self.N + 1) for i in range(self.n_w)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.header())
        for row in self.data:
            wr.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, N: int, n_w: int, provenance: str = "") -> "Multisample":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise MultisampleFormatError("empty sample file")
        expected = [f"w{k}_{i}" for k in range(N + 1) for i in range(n_w)]
        if [h.strip() for h in rows[0]] != expected:
            raise MultisampleFormatError(f"row 1: header must be {','.join(expected)}")
        data = []
        for r, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise MultisampleFormatError(f"row {r}: expected {len(expected)} columns, found {len(row)}")
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise MultisampleFormatError(f"row {r}, column {c}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise MultisampleFormatError(f"row {r}, column {c}: non-finite value")
                vals.append(v)
            data.append(vals)
        if not data:
            raise MultisampleFormatError("sample file has no data rows")
        return cls(np.array(data), N, n_w, provenance)


# -- scenario program -------------------------------------------------------------------

@dataclass
class ScenarioProgram:
    model: MilpModel
    layout: DecisionLayout
    template: FormulaTemplate
    bigm: BigMTable
    spec: PolicySpec
    recourse: RecourseSpec
    spec_tags: List[str]
    state_tags: List[str]
    spec_pieces: np.ndarray  # policy piece of every spec sample
    blocks: Dict[str, ConstraintBlock] = field(default_factory=dict)

    def theta(self, x) -> np.ndarray:
        return self.layout.theta(x)

    def H(self, x) -> np.ndarray:
        return self.spec.H_from_theta(self.layout.theta(x))


def add_template(mb: ModelBuilder, template: FormulaTemplate, rec_cols: np.ndarray) -> None:
    if template.infeasible:
        mb.add_row([], [], "L", -1.0, STRUCTURAL)
    for idx, coef, rhs in template.rows:
        mb.add_row(rec_cols[idx], coef, "L", rhs, STRUCTURAL)


def add_block(mb: ModelBuilder, blk: ConstraintBlock, theta_cols: np.ndarray, rec_cols: Optional[np.ndarray]) -> None:
    R = len(blk.rhs)
    if R == 0:
        return
    has = blk.rec_idx >= 0
    rc = np.zeros(R, dtype=int)  # placeholder column, zero coefficient is dropped
    if has.any():
        rc[has] = rec_cols[blk.rec_idx[has]]
    cols = np.column_stack([np.broadcast_to(theta_cols, (R, len(theta_cols))), rc])
    coef = np.column_stack([blk.theta_coef, np.where(has, blk.rec_coef, 0.0)])
    if mb.n == 0:
        cols, coef = cols[:, :0], coef[:, :0]
    mb.add_rows(cols, coef, "L", blk.rhs, blk.tag)


def assemble_scenario_program(problem: SynthesisProblem, spec: PolicySpec, W_phi, W_s,
                              recourse: Optional[RecourseSpec] = None, bigm: Optional[BigMTable] = None,
                              polarity: str = "both", keep_blocks: bool = False) -> ScenarioProgram:
    """Scenario MILP: spec rows for ``W_phi`` samples, state/input rows for ``W_s`` samples."""
    sys = problem.system
    recourse = recourse or RecourseSpec()
    W_phi = np.asarray(W_phi, dtype=float).reshape(-1, (sys.N + 1) * sys.n_w)
    W_s = np.asarray(W_s, dtype=float).reshape(-1, (sys.N + 1) * sys.n_w)
    if len(W_phi) == 0:
        raise ValueError("the scenario program needs at least one specification sample")
    if spec.N != sys.N or spec.n_u != sys.n_u or spec.n_w != sys.n_w:
        raise ValueError("policy structure does not match the system dimensions")
    template = encode_formula(problem.formula, problem.props, sys.N, polarity)
    if bigm is None:
        bigm = compute_bigm(problem.props, problem.state_box, W=W_phi.reshape(-1, sys.n_w))
    mb = ModelBuilder()
    layout = DecisionLayout(spec.d, template.n_b, template.n_c, recourse.P_delta)
    Hb = problem.H_bound
    theta_cols = mb.add_vars(spec.d, -Hb, Hb, name="theta")
    rec_cols = []
    for i in range(recourse.P_delta):
        b = mb.add_vars(template.n_b, 0.0, 1.0, binary=True, name=f"delta{i}")
        z = mb.add_vars(template.n_c, 0.0, 1.0, name=f"z{i}")
        cols = np.concatenate([b, z]).astype(int)
        layout.rec_starts.append(int(cols[0]) if len(cols) else mb.n)
        rec_cols.append(cols)
        add_template(mb, template, cols)
    weights = problem.objective.weights
    worst = problem.objective.kind == "worst_case"
    if worst:
        layout.epigraph = mb.add_var(-1e6, 1e6, obj=1.0, name="t")
    obj_theta = np.zeros(spec.d)
    obj_const = 0.0
    spec_tags, state_tags, pieces = [], [], []
    blocks = {}
    for k, w in enumerate(W_phi):
        maps = stage_maps(sys, problem.x0, spec, w)
        tag = f"spec:{k}"
        blk = spec_block(template, problem.props, bigm, maps, problem.tol, tag)
        add_block(mb, blk, theta_cols, rec_cols[recourse.piece(w)])
        cN_t = weights @ maps.x_theta[sys.N]
        cN_0 = float(weights @ maps.x_const[sys.N])
        if worst:
            mb.add_row(np.append(theta_cols, layout.epigraph), np.append(cN_t, -1.0), "L", -cN_0, tag)
        else:
            obj_theta += cN_t / len(W_phi)
            obj_const += cN_0 / len(W_phi)
        spec_tags.append(tag)
        pieces.append(maps.piece)
        if keep_blocks:
            blocks[tag] = blk
    for k, w in enumerate(W_s):
        maps = stage_maps(sys, problem.x0, spec, w)
        tag = f"state_input:{k}"
        blk = state_input_block(problem.X, problem.U, maps, tag)
        add_block(mb, blk, theta_cols, None)
        state_tags.append(tag)
        if keep_blocks:
            blocks[tag] = blk
    if not worst:
        mb.add_obj(theta_cols, obj_theta)
        mb.c0 = obj_const
    model = mb.build()
    return ScenarioProgram(model, layout, template, bigm, spec, recourse, spec_tags, state_tags,
                           np.array(pieces, dtype=int), blocks)


# -- closed-loop evaluation -------------------------------------------------------------

@dataclass
class ClosedLoop:
    X: np.ndarray  # (S, N+1, n_x)
    U: np.ndarray  # (S, N, n_u)
    W: np.ndarray  # (S, N+1, n_w)
    pieces: np.ndarray
    inside: np.ndarray


def closed_loop(problem: SynthesisProblem, spec: PolicySpec, H, W) -> ClosedLoop:
    sys = problem.system
    H = np.asarray(H, dtype=float)
    PolicyParam(H).check(spec)
    W = np.asarray(W, dtype=float).reshape(-1, sys.N + 1, sys.n_w)
    S = len(W)
    flat = W.reshape(S, -1)
    pieces, inside = spec.partition.locate_batch(flat)
    blk = 1 + spec.D
    Kap = np.zeros((S, spec.n_kappa))
    for s in range(S):
        Kap[s, pieces[s] * blk] = 1.0
        Kap[s, pieces[s] * blk + 1:(pieces[s] + 1) * blk] = flat[s]
    U = (Kap @ H.T).reshape(S, sys.N, sys.n_u)
    X = np.empty((S, sys.N + 1, sys.n_x))
    if sys.is_lti:
        A, B = sys.A.base, sys.B.base
        X[:, 0] = problem.x0
        for k in range(sys.N):
            cvec = np.array([sys.c(W[s, k]) for s in range(S)]) if sys.c.increments is not None else sys.c.base
            X[:, k + 1] = X[:, k] @ A.T + U[:, k] @ B.T + cvec
    else:
        for s in range(S):
            X[s] = sys.simulate(problem.x0, U[s], W[s]).x
    return ClosedLoop(X, U, W, pieces, inside)


@dataclass
class ViolationReport:
    eps_hat_phi: float
    eps_hat_s: float
    out_of_partition: int
    n_samples: int
    phi_violations: np.ndarray
    s_violations: np.ndarray

    def to_dict(self) -> dict:
        return {"eps_hat_phi": self.eps_hat_phi, "eps_hat_s": self.eps_hat_s,
                "out_of_partition": self.out_of_partition, "n_samples": self.n_samples}


def empirical_violation(problem: SynthesisProblem, spec: PolicySpec, H, W, tol: float = 1e-6,
                        loop: Optional[ClosedLoop] = None) -> ViolationReport:
    W = np.asarray(W, dtype=float)
    if W.size == 0:
        raise ValueError("empty evaluation set")
    cl = loop if loop is not None else closed_loop(problem, spec, H, W)
    sat = truth_table(problem.formula, cl.X, cl.W, problem.props, tol)[:, 0]
    s_bad = np.zeros(len(cl.X), dtype=bool)
    if problem.X is not None:
        s_bad |= np.any(problem.X.violation(cl.X[:, 1:]) > tol, axis=1)
    if problem.U is not None:
        s_bad |= np.any(problem.U.violation(cl.U) > tol, axis=1)
    n = len(cl.X)
    return ViolationReport(float((~sat).mean()), float(s_bad.mean()), int((~cl.inside).sum()), n, ~sat, s_bad)


# -- support-dimension counterexample ------------------------------------------------------

HELLY_BIGM = 10.0


def helly_samples(K: int, rng: np.random.Generator) -> np.ndarray:
    k = np.arange(1, K + 1)
    w1 = (4 * k - 5) / (4 * K) + rng.uniform(-1.0, 1.0, K) / (16 * K)
    w2 = 1.0 / K + rng.uniform(0.0, 1.0, K) / (8 * K)
    return np.column_stack([w1, w2])


def helly_model(W) -> MilpModel:
    """``min h2`` with ``h2 >= min(h1 - w1, w1 + 2 w2 - h1)`` for every sample, ``h1`` in [0, 1]."""
    mb = ModelBuilder()
    h1 = mb.add_var(0.0, 1.0, name="h1")
    h2 = mb.add_var(-HELLY_BIGM, HELLY_BIGM, obj=1.0, name="h2")
    M = HELLY_BIGM
    for k, (w1, w2) in enumerate(np.asarray(W, dtype=float)):
        b = mb.add_var(0.0, 1.0, binary=True, name=f"b{k}")
        tag = f"sample:{k}"
        # b = 1 selects the rising branch h1 - w1, b = 0 the falling branch
        mb.add_row([h1, h2, b], [1.0, -1.0, M], "L", w1 + M, tag)
        mb.add_row([h1, h2, b], [-1.0, -1.0, -M], "L", -w1 - 2 * w2, tag)
    return mb.build()


def helly_counterexample(K: int, seed: int = 0, options: Optional[SolveOptions] = None) -> tuple:
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(seed)
    W = helly_samples(K, rng)
    model = helly_model(W)
    tags = [f"sample:{k}" for k in range(K)]
    options = options or SolveOptions(backend="reference")
    base = solve(model, options)
    support = find_support_constraints(model, tags, options)
    verdict = {"K": K, "seed": seed, "objective": base.objective, "h": base.x[:2].tolist(),
               "supporting": sorted(support, key=lambda t: int(t.split(":")[1])),
               "n_supporting": len(support), "all_supporting": len(support) == K}
    return model, verdict
