import copy
import itertools
import json
from importlib import resources

import numpy as np
import pytest
from scipy.optimize import linprog

from robustltl.dynamics import UncertainSystem
from robustltl.logic import RotatedBoxProposition, Trajectory, eval_bounded, parse_formula, to_pnf
from robustltl.milp import ModelBuilder, SolveOptions, solve
from robustltl.policy import PolicySpec
from robustltl.problem import SynthesisProblem
from robustltl.problem_file import load_problem
from robustltl.robust_linear import (Cell, EmptyPieceError, NonlinearityError, RobustRow, SplitTemplate,
                                     SupportEstimate, K_w_bound, assemble_robust_program, binding_scenarios,
                                     dualize, estimate_support, partition_from_support, partition_m,
                                     tighten_to_samples)
from robustltl.scenario import Multisample, assemble_scenario_program, binary_search_K, closed_loop
from robustltl.studies import overtaking_config, sample_overtaking

from oracles import K_w_oracle, dualization_case


def toy_doc():
    return json.loads(resources.files("robustltl").joinpath("data/toy_problem.json").read_text())


def toy_samples():
    text = resources.files("robustltl").joinpath("data/toy_samples.csv").read_text()
    return Multisample.from_csv(text, 3, 1).data


def test_support_box_example():
    est = estimate_support([[0.0, 0.0], [1.0, 2.0]])
    assert len(est.pieces) == 1 and est.m == 4
    np.testing.assert_array_equal(est.pieces[0].lower, [0, 0])
    np.testing.assert_array_equal(est.pieces[0].upper, [1, 2])


def test_support_grows_monotonically():
    rng = np.random.default_rng(60)
    W = rng.normal(size=(40, 3))
    prev = estimate_support(W[:1]).pieces[0]
    for k in range(2, 41):
        cur = estimate_support(W[:k]).pieces[0]
        assert np.all(cur.lower <= prev.lower) and np.all(cur.upper >= prev.upper)
        assert estimate_support(W[:k]).contains(W[:k]).all()
        prev = cur


def test_split_support_separates_branches():
    cfg = overtaking_config("desk")
    W = sample_overtaking(cfg, 200, np.random.default_rng(61)).data
    N, n_w = cfg.N, 2
    est = estimate_support(W, SplitTemplate.stage_difference(N, n_w, 1))
    assert est.m == 2 * (2 * (N + 1) * n_w + 1)
    right, left = est.pieces
    Wk = W.reshape(-1, N + 1, n_w)
    trend = Wk[:, 1, 1] - Wk[:, 0, 1]
    assert np.array_equal(right.contains(W), trend <= 0)
    assert np.array_equal(left.contains(W) & ~right.contains(W), trend > 0)
    # right-moving trucks start right of the lane centre, so the lateral ranges are disjoint at every stage
    assert np.all(right.upper.reshape(N + 1, n_w)[:, 1] < left.lower.reshape(N + 1, n_w)[:, 1])
    with pytest.raises(EmptyPieceError):
        estimate_support(W[trend <= 0], SplitTemplate.stage_difference(N, n_w, 1))
    with pytest.raises(EmptyPieceError):
        estimate_support(np.zeros((0, 3)))


def test_support_json_round_trip():
    rng = np.random.default_rng(62)
    W = rng.normal(size=(30, 4))
    est = estimate_support(W, SplitTemplate(np.array([1.0, -1.0, 0.0, 0.0])))
    back = SupportEstimate.from_json(est.to_json())
    assert back.m == est.m == json.loads(est.to_json())["m"]
    for a, b in zip(est.pieces, back.pieces):
        np.testing.assert_array_equal(a.lower, b.lower)
        np.testing.assert_array_equal(a.halfspace[0], b.halfspace[0])
    part = partition_from_support(est)
    assert part.P == 2 and partition_m(part) == est.m
    assert [p.label for p in part.pieces] == ["1", "2"]


def test_tighten_to_samples():
    part = partition_from_support(estimate_support([[0.0, 0.0], [4.0, 4.0]]))
    tight = tighten_to_samples(part, [[1.0, 1.0], [2.0, 3.0]])
    np.testing.assert_array_equal(tight.pieces[0].lower, [1, 1])
    np.testing.assert_array_equal(tight.pieces[0].upper, [2, 3])


def _dual_feasible(a0, lo, hi, b0, G=None, g=None):
    """Dualize with a pinned theta column so that every coordinate is kept."""
    D = len(a0)
    mb = ModelBuilder()
    th = mb.add_var(0.0, 0.0)
    G = np.zeros((0, D)) if G is None else np.asarray(G, float)
    g = np.zeros(0) if g is None else np.asarray(g, float)
    row = RobustRow(np.asarray(a0, float), np.ones((D, 1)), b0, np.zeros(1), np.array([th]))
    n = dualize(mb, row, Cell(np.asarray(lo, float), np.asarray(hi, float), G, g))
    sol = solve(mb.build(), SolveOptions(backend="highs"))
    return sol, n


def test_dualize_examples():
    # max over [-1, 1] of 2w + 1 is 3 > 0
    sol, n = _dual_feasible([2.0], [-1.0], [1.0], 1.0)
    assert sol.status == "infeasible" and n == 2
    # max over [0, 1]^2 of w1 - w2 - 1 is 0: feasible with the upper bound of w1 and lower bound of w2 active
    sol, n = _dual_feasible([1.0, -1.0], [0.0, 0.0], [1.0, 1.0], -1.0)
    assert sol.ok and n == 4
    np.testing.assert_allclose(sol.x[1:], [1.0, 0.0, 0.0, 1.0], atol=1e-9)


def test_dualize_folds_constant_coordinates():
    mb = ModelBuilder()
    row = RobustRow(np.array([2.0, -1.0]), np.zeros((2, 0)), -1.5, np.zeros(0), np.zeros(0, int))
    assert dualize(mb, row, Cell(np.array([-1.0, 0.0]), np.array([0.5, 1.0]), np.zeros((0, 2)), np.zeros(0))) == 0
    model = mb.build()
    # 2 * 0.5 + 0 - 1.5 <= 0 is a constant row
    assert model.n == 0 and model.b_ub[0] == pytest.approx(0.5)


def test_dualize_matches_vertex_oracle():
    rng = np.random.default_rng(63)
    n = 0
    for t in range(300):
        feas, vert = dualization_case(rng, t)
        if abs(vert) < 1e-7:
            continue
        n += 1
        assert feas == (vert <= 0), (t, vert)
    assert n > 250


def test_dualize_with_halfspace_matches_lp():
    rng = np.random.default_rng(64)
    for _ in range(60):
        D = int(rng.integers(1, 4))
        lo = rng.uniform(-2, 0, D)
        hi = lo + rng.uniform(0.5, 2, D)
        G = rng.normal(size=(1, D))
        g = np.array([G[0] @ (lo + hi) / 2 + rng.uniform(0, 0.5)])
        a0 = rng.normal(size=D)
        r = linprog(-a0, A_ub=G, b_ub=g, bounds=list(zip(lo, hi)), method="highs")
        worst = -r.fun
        b0 = -worst + rng.choice([-0.3, 0.3])
        sol, _ = _dual_feasible(a0, lo, hi, b0, G, g)
        assert sol.ok == (worst + b0 <= 0)


def test_K_w_bound():
    assert K_w_bound(0.05, 1e-3, 4, 1, 1) == 567 == K_w_oracle(0.05, 1e-3, 4, 1, 1)
    assert K_w_bound(0.05, 1e-3, 8, 1, 1) > 567
    rng = np.random.default_rng(65)
    for _ in range(100):
        eps, beta = rng.uniform(0.02, 0.3), 10 ** rng.uniform(-6, -1)
        m, N, n_w = int(rng.integers(1, 10)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        closed = K_w_bound(eps, beta, m, N, n_w)
        assert closed == K_w_oracle(eps, beta, m, N, n_w)
        assert K_w_bound(eps, beta, m, N, n_w, "binary_search") <= closed
    assert K_w_bound(0.1, 0.01, 2, 1, 1, "binary_search") == binary_search_K(0.1, 0.01, 6, 0)
    with pytest.raises(ValueError):
        K_w_bound(0.1, 0.01, 2, 1, 1, "exact")


def _solve_toy_robust(doc=None, W=None):
    lp = load_problem(doc or toy_doc())
    W = toy_samples() if W is None else W
    sys_ = lp.problem.system
    spec = PolicySpec(sys_.N, sys_.n_u, sys_.n_w, partition_from_support(estimate_support(W)), lp.spec.memory)
    prog = assemble_robust_program(lp.problem, spec, W, polarity="auto")
    sol = solve(prog.model, SolveOptions(backend="highs"))
    return lp, spec, prog, sol


def test_toy_robust_holds_at_every_vertex():
    lp, spec, prog, sol = _solve_toy_robust()
    assert sol.ok
    H = prog.H(sol.x)
    cell = prog.cells[0]
    V = np.array(list(itertools.product(*zip(cell.lower, cell.upper))))
    loop = closed_loop(lp.problem, spec, H, V)
    for s in range(len(V)):
        assert eval_bounded(lp.problem.formula, Trajectory(loop.X[s], loop.W[s]), lp.problem.props, tol=1e-6)
        assert np.all(np.abs(loop.U[s]) <= 1.5 + 1e-7)
    pts = binding_scenarios(prog, sol.x, 0)
    assert len(pts) > 0 and np.all(pts >= cell.lower - 1e-9) and np.all(pts <= cell.upper + 1e-9)


def test_no_uncertainty_matches_center_scenario():
    doc = copy.deepcopy(toy_doc())
    doc["system"]["c"] = {"base": [0.0], "increments": [[0.0]]}
    del doc["propositions"]["wall"]["rhoW"]
    lo, hi = -0.2 * np.ones(4), 0.2 * np.ones(4)
    W = np.vstack([lo, hi])
    lp, spec, prog, sol = _solve_toy_robust(doc, W)
    center = (lo + hi)[None, :] / 2
    sc = assemble_scenario_program(lp.problem, lp.spec, center, center, polarity="auto")
    ref = solve(sc.model, SolveOptions(backend="highs"))
    assert sol.ok and ref.ok
    assert sol.objective == pytest.approx(ref.objective, abs=1e-6)


def test_rotated_box_is_rejected():
    sys_ = UncertainSystem(np.eye(2), np.eye(2), n_w=3, N=1)
    props = {"o": RotatedBoxProposition("o", (1.0, 1.0), 2, 3)}
    problem = SynthesisProblem(sys_, to_pnf(parse_formula("G !o", props)), props, np.zeros(2),
                               state_box=(-5 * np.ones(2), 5 * np.ones(2)))
    W = np.random.default_rng(66).uniform(size=(5, 6))
    spec = PolicySpec(1, 2, 3, partition_from_support(estimate_support(W)))
    with pytest.raises(NonlinearityError):
        assemble_robust_program(problem, spec, W)
    # the axis-aligned variant is affine and accepted
    props["o"] = RotatedBoxProposition("o", (1.0, 1.0), 2, 3, angle=None)
    problem = SynthesisProblem(sys_, problem.formula, props, np.zeros(2),
                               state_box=(-5 * np.ones(2), 5 * np.ones(2)))
    assert assemble_robust_program(problem, spec, W, polarity="auto").model.n > 0


def test_dualized_solutions_hold_on_random_disturbances():
    rng = np.random.default_rng(67)
    solved = 0
    for _ in range(20):
        D, q = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        lo = rng.uniform(-2, 0, D)
        hi = lo + rng.uniform(0.5, 2, D)
        mb = ModelBuilder()
        cols = mb.add_vars(q, -1.0, 1.0, obj=rng.normal(size=q))
        row = RobustRow(rng.normal(size=D), rng.normal(size=(D, q)), -2.0, rng.normal(size=q), cols)
        dualize(mb, row, Cell(lo, hi, np.zeros((0, D)), np.zeros(0)))
        sol = solve(mb.build(), SolveOptions(backend="highs"))
        if not sol.ok:
            continue
        solved += 1
        W = rng.uniform(lo, hi, size=(100_000, D))
        assert row.evaluate(sol.x, W).max() <= 1e-8
    assert solved >= 5
