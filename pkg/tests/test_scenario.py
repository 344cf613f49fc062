import json
from fractions import Fraction
from importlib import resources

import numpy as np
import pytest

from robustltl.dynamics import UncertainSystem
from robustltl.logic import TRUE, AffineProposition, Trajectory, eval_bounded, parse_formula, to_pnf
from robustltl.milp import SolveOptions, solve
from robustltl.policy import PolicySpec
from robustltl.problem import ObjectiveSpec, SynthesisProblem
from robustltl.problem_file import load_problem
from robustltl.scenario import (Multisample, MultisampleFormatError, SampleBudget, assemble_scenario_program,
                                binary_search_K, binomial_tail, closed_form_K, closed_loop, empirical_violation,
                                helly_counterexample, split_budget)

from oracles import K_w_oracle, binomial_tail_exact, closed_form_oracle


def toy():
    doc = json.loads(resources.files("robustltl").joinpath("data/toy_problem.json").read_text())
    return load_problem(doc)


def toy_samples():
    text = resources.files("robustltl").joinpath("data/toy_samples.csv").read_text()
    return Multisample.from_csv(text, 3, 1).data


def test_closed_form_examples():
    assert closed_form_K(0.05, 1e-3, 0, 1) == 219 == closed_form_oracle(0.05, 1e-3, 0, 1)
    assert closed_form_K(0.05, 1e-3, 1, 1) == 241 == closed_form_oracle(0.05, 1e-3, 1, 1)
    assert K_w_oracle(0.05, 1e-3, 4, 1, 1) == 567


def test_closed_form_matches_high_precision():
    rng = np.random.default_rng(50)
    for _ in range(100):
        eps, beta = rng.uniform(0.01, 0.5), 10 ** rng.uniform(-8, -1)
        e, d = int(rng.integers(0, 40)), int(rng.integers(1, 300))
        assert closed_form_K(eps, beta, e, d) == closed_form_oracle(eps, beta, e, d)


def test_binomial_tail_examples():
    assert binomial_tail(10, 0.3, 0) == 0.0
    assert binomial_tail(10, 0.5, 1) == pytest.approx(2 ** -10, rel=1e-14)
    for K in range(1, 31):
        for eps in (Fraction(1, 20), Fraction(1, 3), Fraction(7, 10)):
            for zeta in range(0, K + 1, 3):
                exact = float(binomial_tail_exact(K, eps, zeta))
                assert binomial_tail(K, float(eps), zeta) == pytest.approx(exact, rel=1e-11, abs=1e-300)


def test_binomial_tail_decreasing_in_K():
    for zeta in (1, 3, 10):
        vals = [binomial_tail(K, 0.1, zeta) for K in range(zeta, zeta + 200)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_binary_search_examples_and_dominance():
    assert binary_search_K(0.5, 0.5, 1) == 1
    rng = np.random.default_rng(51)
    for _ in range(100):
        eps, beta = rng.uniform(0.01, 0.5), 10 ** rng.uniform(-8, -1)
        e, zeta = int(rng.integers(0, 20)), int(rng.integers(1, 60))
        K = binary_search_K(eps, beta, zeta, e)
        assert K <= closed_form_K(eps, beta, e, zeta)
        # minimality: the criterion holds at K and fails at K - 1
        assert 2.0 ** e * binomial_tail(K, eps, zeta) <= beta
        if K > zeta:
            assert 2.0 ** e * binomial_tail(K - 1, eps, zeta) > beta


def test_binary_search_monotone():
    ks = [binary_search_K(eps, 1e-3, 5) for eps in (0.02, 0.05, 0.1, 0.2)]
    assert ks == sorted(ks, reverse=True)
    ks = [binary_search_K(0.05, 1e-3, z) for z in (1, 2, 5, 10, 20)]
    assert ks == sorted(ks)


def test_calculator_input_checks():
    with pytest.raises(ValueError):
        closed_form_K(0.0, 0.1, 0, 1)
    with pytest.raises(ValueError):
        binary_search_K(0.1, 1.5, 1)
    with pytest.raises(ValueError):
        closed_form_K(0.1, 0.1, 0, 0)
    assert closed_form_K(0.1, 0.1, 5, 2, n_configs=32) == closed_form_K(0.1, 0.1, 5, 2)
    b = SampleBudget(0.05, 0.3, 1e-3, 1e-3, d=1)
    assert (b.K_phi, b.K_s) == (219, closed_form_K(0.3, 1e-3, 0, 1))
    with pytest.raises(ValueError):
        split_budget(100, b)


def test_toy_replay_satisfies_all_training_samples():
    lp = toy()
    W = toy_samples()[:5]
    prog = assemble_scenario_program(lp.problem, lp.spec, W, W, lp.recourse)
    sol = solve(prog.model, SolveOptions(backend="reference"))
    assert sol.ok
    H = prog.H(sol.x)
    loop = closed_loop(lp.problem, lp.spec, H, W)
    for s in range(len(W)):
        traj = Trajectory(loop.X[s], loop.W[s])
        assert eval_bounded(lp.problem.formula, traj, lp.problem.props, tol=1e-6)
        np.testing.assert_allclose(loop.X[s].ravel(),
                                   lp.problem.system.simulate(lp.problem.x0, loop.U[s], loop.W[s]).x.ravel())


def test_layout_counts_match_template():
    lp = toy()
    W = toy_samples()[:3]
    prog = assemble_scenario_program(lp.problem, lp.spec, W, W[:0], lp.recourse)
    assert (prog.layout.n_b, prog.layout.n_c) == (prog.template.n_b, prog.template.n_c)
    assert prog.model.n_binary == prog.template.n_b * lp.recourse.P_delta
    assert prog.model.n == prog.layout.d + prog.template.n_rec


def test_trivial_formula_reduces_to_state_rows():
    lp = toy()
    pb = lp.problem
    problem = SynthesisProblem(pb.system, TRUE, pb.props, pb.x0, pb.X, pb.U, pb.state_box, pb.objective)
    W = toy_samples()[:4]
    prog = assemble_scenario_program(problem, lp.spec, W[:1], W)
    assert prog.model.n_binary == 0 and prog.template.n_rec == 0
    sol = solve(prog.model)
    assert sol.ok
    # with only input bounds |u| <= 1.5 the terminal position is pushed to 4.5 plus the disturbances
    assert sol.objective == pytest.approx(-(4.5 + W[0, :3].sum()), abs=1e-6)


def test_duplicated_samples_keep_objective():
    lp = toy()
    W = toy_samples()[:6]
    Wd = np.vstack([W, W[:3]])
    # the sample-average objective reweights duplicates, so compare with a worst-case objective
    pb = lp.problem
    worst = SynthesisProblem(pb.system, pb.formula, pb.props, pb.x0, pb.X, pb.U, pb.state_box,
                             ObjectiveSpec("worst_case", pb.objective.weights))
    a = solve(assemble_scenario_program(worst, lp.spec, W, W, lp.recourse).model)
    b = solve(assemble_scenario_program(worst, lp.spec, Wd, Wd, lp.recourse).model)
    assert a.ok and b.ok and a.objective == pytest.approx(b.objective, abs=1e-7)


def test_certain_collision_gives_full_violation():
    sys = UncertainSystem([[1.0]], [[1.0]], n_w=1, N=3)
    props = {"obs": AffineProposition("obs", [[1.0], [-1.0]], [10.0, -0.5])}
    problem = SynthesisProblem(sys, to_pnf(parse_formula("G !obs", props)), props, np.zeros(1),
                               state_box=(np.array([-20.0]), np.array([20.0])))
    spec = PolicySpec(3, 1, 1, memory=0)
    H = np.zeros(spec.mask.shape)
    H[:, 0] = 1.0
    rep = empirical_violation(problem, spec, H, np.zeros((50, 4)))
    assert rep.eps_hat_phi == 1.0 and rep.eps_hat_s == 0.0
    with pytest.raises(ValueError, match="empty evaluation set"):
        empirical_violation(problem, spec, H, np.zeros((0, 4)))


@pytest.mark.parametrize("K", [1, 3, 8])
def test_helly_counterexample(K):
    for seed in range(3):
        _, verdict = helly_counterexample(K, seed)
        assert verdict["all_supporting"] and verdict["n_supporting"] == K


def test_multisample_csv_round_trip_and_errors():
    rng = np.random.default_rng(52)
    ms = Multisample(rng.normal(size=(7, 6)), 2, 2)
    back = Multisample.from_csv(ms.to_csv(), 2, 2)
    np.testing.assert_array_equal(back.data, ms.data)
    assert ms.header()[:3] == ["w0_0", "w0_1", "w1_0"]
    with pytest.raises(MultisampleFormatError, match="row 1"):
        Multisample.from_csv("a,b\n1,2\n", 0, 2)
    with pytest.raises(MultisampleFormatError, match="row 3, column 2"):
        Multisample.from_csv("w0_0,w0_1\n1,2\n3,x\n", 0, 2)
    with pytest.raises(MultisampleFormatError, match="row 2: expected 2 columns"):
        Multisample.from_csv("w0_0,w0_1\n1\n", 0, 2)
    with pytest.raises(MultisampleFormatError, match="non-finite"):
        Multisample.from_csv("w0_0,w0_1\n1,nan\n", 0, 2)
    a, b = ms.split(3, 4)
    assert len(a) == 3 and len(b) == 4
    with pytest.raises(ValueError):
        ms.split(5, 5)
