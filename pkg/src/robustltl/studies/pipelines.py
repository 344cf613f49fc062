"""End-to-end pipelines for the two driving scenarios and their artifacts."""
from __future__ import annotations

import json
import logging
import os
import time
from typing import Dict, List, Optional

import numpy as np

from ..encoder import encode_formula
from ..io_utils import atomic_write_text, write_csv
from ..logic import Trajectory, eval_bounded
from ..milp import SolveOptions, solve
from ..policy import Partition, PolicySpec, SplitError, refine_partition, save_policy
from ..robust_linear import (SplitTemplate, assemble_robust_program, binding_scenarios, estimate_support,
                             K_w_bound, partition_from_support, partition_m, tighten_to_samples)
from ..scenario import SampleBudget, assemble_scenario_program, closed_loop, empirical_violation
from .car import build_car
from .config import CaseConfig
from .samplers import moves_left, sample_overtaking, sample_turning

log = logging.getLogger(__name__)


class SynthesisFailed(RuntimeError):
    def __init__(self, status: str, report: dict):
        super().__init__(f"synthesis failed: {status}")
        self.status, self.report = status, report


def _streams(seed: int) -> tuple:
    train, fresh = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train), np.random.default_rng(fresh)


def _stats(v) -> dict:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return {"mean": None, "p5": None, "p95": None, "n": 0}
    return {"mean": float(v.mean()), "p5": float(np.percentile(v, 5)), "p95": float(np.percentile(v, 95)),
            "min": float(v.min()), "max": float(v.max()), "n": int(v.size)}


def _options(config: CaseConfig) -> SolveOptions:
    return SolveOptions(feastol=config.feastol, backend=config.backend, time_limit=config.time_limit)


def _solver_stats(sol) -> dict:
    return {k: v for k, v in sol.stats.items() if isinstance(v, (int, float, str))}


def trajectory_rows(X, U, W, Ts: float) -> tuple:
    """Header and rows ``t, x1.., u1.., w1..`` for one closed-loop realization."""
    n_x, n_u, n_w = X.shape[1], U.shape[1], W.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n_x)] + [f"u{i + 1}" for i in range(n_u)] \
        + [f"w{i + 1}" for i in range(n_w)]
    rows = []
    for k in range(len(X)):
        u = U[k] if k < len(U) else [float("nan")] * n_u
        rows.append([k * Ts, *X[k], *u, *W[k]])
    return header, rows


def _replay(problem, loop, idx) -> dict:
    """Recompute replayed trajectories step by step and check the specification."""
    sys = problem.system
    gaps, sat = [], []
    for s in idx:
        traj = sys.simulate(problem.x0, loop.U[s], loop.W[s])
        gaps.append(float(np.abs(traj.x - loop.X[s]).max()))
        sat.append(bool(eval_bounded(problem.formula, Trajectory(loop.X[s], loop.W[s]), problem.props)))
    return {"indices": [int(i) for i in idx], "max_state_gap": max(gaps) if gaps else 0.0, "satisfied": sat}


def _write_artifacts(out_dir: str, name: str, report: dict, spec, H, loop, idx, Ts: float) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_policy(os.path.join(out_dir, f"{name}_policy.json"), spec, H)
    for s in idx:
        header, rows = trajectory_rows(loop.X[s], loop.U[s], loop.W[s], Ts)
        write_csv(os.path.join(out_dir, f"{name}_traj_{int(s)}.csv"), header, rows)
    atomic_write_text(os.path.join(out_dir, f"{name}_report.json"), json.dumps(report, indent=1))


# -- turning truck: sampled scenario program --------------------------------------------

def run_case_study_1(config: CaseConfig, out_dir: Optional[str] = None, u_set: str = "mirrored") -> dict:
    """Scenario synthesis against the turning truck, then evaluation on fresh samples."""
    if config.case != "turning":
        raise ValueError("case study 1 needs a turning configuration")
    car = build_car(config, u_set)
    problem = car.problem()
    N = config.N
    spec = PolicySpec(N, 2, car.n_w, memory=config.memory)
    template = encode_formula(problem.formula, problem.props, N, config.polarity)
    budget = SampleBudget(config.eps_phi, config.eps_s, config.beta_phi, config.beta_s, spec.d,
                          config.P_delta, template.n_c, template.n_b, method="binary_search")
    K_phi = config.K_phi if config.K_phi is not None else budget.K_phi
    K_s = config.K_s if config.K_s is not None else budget.K_s
    train_rng, fresh_rng = _streams(config.seed)
    W_phi, W_s = sample_turning(config, K_phi + K_s, train_rng).split(K_phi, K_s)
    fresh = sample_turning(config, config.n_eval, fresh_rng)

    t0 = time.perf_counter()
    prog = assemble_scenario_program(problem, spec, W_phi.data, W_s.data, polarity=config.polarity)
    t_assemble = time.perf_counter() - t0
    sol = solve(prog.model, _options(config))
    report = {"case": "turning", "config": config.to_dict(),
              "budget": {**budget.to_dict(), "K_phi_used": K_phi, "K_s_used": K_s},
              "model": {"n_vars": prog.model.n, "n_binary": prog.model.n_binary,
                        "n_rows": prog.model.m_ub + prog.model.m_eq, "assemble_time": t_assemble},
              "solver_stats": _solver_stats(sol), "status": sol.status}
    if not sol.ok:
        raise SynthesisFailed(sol.status, report)
    H = prog.H(sol.x)
    loop = closed_loop(problem, spec, H, fresh.data)
    viol = empirical_violation(problem, spec, H, fresh.data, loop=loop)
    idx = np.arange(min(config.n_replay, len(fresh)))
    outside_memory = ~spec.mask
    report.update({
        "objective": float(sol.objective),
        "eps_hat_phi": viol.eps_hat_phi, "eps_hat_s": viol.eps_hat_s,
        "out_of_partition": viol.out_of_partition,
        "objective_stats": _stats(loop.X[:, N, 0]),
        "replay": _replay(problem, loop, idx),
        "memory_mask_respected": bool(np.all(H[outside_memory] == 0.0)),
    })
    if out_dir:
        _write_artifacts(out_dir, f"turning_seed{config.seed}", report, spec, H, loop, idx, config.Ts)
    return report


# -- overtaking: robust program with linear disturbance dependence ----------------------

OVERTAKE_MARGIN = 6.75  # half of truck plus car length
OVERTAKE_TOL = 0.05


def overtook(X, W, N: int, tol: float = OVERTAKE_TOL) -> np.ndarray:
    """The car ends more than ``tol`` past the rear edge of the enlarged truck box."""
    W = np.asarray(W).reshape(len(X), N + 1, 2)
    return X[:, N, 0] > W[:, N, 0] - OVERTAKE_MARGIN + tol


def _refine_w2(partition: Partition, program, x, n_splits: int, W) -> Partition:
    """Split up to ``n_splits`` pieces that descend from the left-moving support piece.

    Cuts are axis-aligned on the initial-position coordinates only, so causality
    is preserved without extra constraints.
    """
    coords = [0, 1]
    leaves = [i for i, p in enumerate(partition.pieces) if p.label.startswith("2")][:n_splits]
    binding = {}
    for i in leaves:
        pts = binding_scenarios(program, x, i)
        piece = partition.pieces[i]
        fallback = np.vstack([piece.lower, piece.upper])
        if len(pts) < 2 or np.ptp(pts[:, coords], axis=0).max() <= 1e-9:
            pts = fallback
        binding[i] = pts
    try:
        new = refine_partition(partition, binding, coords)
    except SplitError:
        new = refine_partition(partition, {i: np.vstack([partition.pieces[i].lower, partition.pieces[i].upper])
                                           for i in leaves}, coords)
    old = {p.label for p in partition.pieces}
    return tighten_to_samples(new, W, [i for i, p in enumerate(new.pieces) if p.label not in old])


def run_case_study_2(config: CaseConfig, out_dir: Optional[str] = None, u_set: str = "mirrored") -> dict:
    """Robust synthesis for the overtaking manoeuvre over a sweep of partition sizes."""
    if config.case != "overtaking":
        raise ValueError("case study 2 needs an overtaking configuration")
    car = build_car(config, u_set)
    problem = car.problem()
    N, n_w = config.N, car.n_w
    split = SplitTemplate.stage_difference(N, n_w, coord=1, later=1, earlier=0)
    m = 2 * (2 * (N + 1) * n_w) + 2
    K_w_formula = K_w_bound(config.eps, config.beta, m, N, n_w, method="binary_search")
    K_w = config.K_w if config.K_w is not None else K_w_formula
    train_rng, fresh_rng = _streams(config.seed)
    W = sample_overtaking(config, K_w, train_rng).data
    fresh = sample_overtaking(config, config.n_eval, fresh_rng).data
    left = moves_left(fresh, N)
    t0 = time.perf_counter()
    support = estimate_support(W, split)
    hull = estimate_support(W, "single_box")
    t_support = time.perf_counter() - t0

    targets = sorted(set(int(p) for p in config.P_values))
    if not targets or targets[0] < 1:
        raise ValueError("partition sizes must be positive")
    per_P: Dict[int, dict] = {}

    def run(partition: Partition) -> tuple:
        P = partition.P
        spec = PolicySpec(N, 2, n_w, partition, memory=config.memory)
        t1 = time.perf_counter()
        program = assemble_robust_program(problem, spec, W, polarity=config.polarity)
        t_assemble = time.perf_counter() - t1
        sol = solve(program.model, _options(config))
        entry = {"P": P, "status": sol.status, "solver_stats": _solver_stats(sol),
                 "model": {"n_vars": program.model.n, "n_binary": program.model.n_binary,
                           "n_rows": program.model.m_ub + program.model.m_eq,
                           "n_lambda": program.layout.n_lambda, "assemble_time": t_assemble},
                 "labels": [p.label for p in partition.pieces]}
        if not sol.ok:
            raise SynthesisFailed(sol.status, {"per_P": {**per_P, P: entry}})
        H = program.H(sol.x)
        loop = closed_loop(problem, spec, H, fresh)
        viol = empirical_violation(problem, spec, H, fresh, loop=loop)
        x1N = loop.X[:, N, 0]
        ov = overtook(loop.X, fresh, N)
        idx = np.arange(min(config.n_replay, len(fresh)))
        entry.update({
            "objective": float(sol.objective),
            "eps_hat_phi": viol.eps_hat_phi, "eps_hat_s": viol.eps_hat_s,
            "out_of_partition": viol.out_of_partition,
            "objective_stats": _stats(x1N),
            "objective_stats_left": _stats(x1N[left]),
            "objective_stats_right": _stats(x1N[~left]),
            "overtake_rate_left": float(ov[left].mean()) if left.any() else None,
            "overtake_rate_right": float(ov[~left].mean()) if (~left).any() else None,
            "replay": _replay(problem, loop, idx),
            "partition": partition.to_dict(),
            "partition_m": partition_m(partition),
            "fresh_in_partition": 1.0 - viol.out_of_partition / viol.n_samples,
        })
        if P in targets:
            per_P[P] = entry
            if out_dir:
                _write_artifacts(out_dir, f"overtaking_P{P}_seed{config.seed}", entry, spec, H, loop, idx,
                                 config.Ts)
        return program, sol.x

    if 1 in targets:
        run(partition_from_support(hull))
    if targets[-1] >= 2:
        partition = partition_from_support(support)
        while True:
            program, x = run(partition)
            if partition.P >= targets[-1]:
                break
            n_w2 = sum(p.label.startswith("2") for p in partition.pieces)
            partition = _refine_w2(partition, program, x, min(n_w2, targets[-1] - partition.P), W)
    report = {"case": "overtaking", "config": config.to_dict(),
              "budget": {"m": m, "K_w_bound": K_w_formula, "K_w_used": K_w, "eps": config.eps, "beta": config.beta},
              "support": {"m": support.m, "time": t_support,
                          "fresh_containment": float(support.contains(fresh).mean())},
              "per_P": {str(k): v for k, v in per_P.items()}}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        atomic_write_text(os.path.join(out_dir, f"overtaking_seed{config.seed}_report.json"),
                          json.dumps(report, indent=1))
        atomic_write_text(os.path.join(out_dir, f"overtaking_seed{config.seed}_support.json"), support.to_json())
    return report

