import itertools

import numpy as np
import pytest

from robustltl.dynamics import MatrixFamily, UncertainSystem
from robustltl.encoder import (EncodingError, SampleMaps, compute_bigm, encode_formula, spec_block, stage_maps,
                               state_input_block)
from robustltl.logic import AffineProposition, Atom, NegAtom, Not, RotatedBoxProposition, always, truth_table
from robustltl.milp import ModelBuilder, SolveOptions, solve
from robustltl.policy import Partition, PolicyParam, PolicySpec, evaluate_policy
from robustltl.problem import Polyhedron
from robustltl.scenario import add_block, add_template
from robustltl.studies.car import input_set

from oracles import INTERVAL_PROPS, encoder_case


def _feasible(template, props, bigm, x, tol=1e-5):
    N = len(x) - 1
    mb = ModelBuilder()
    cols = np.concatenate([mb.add_vars(template.n_b, 0, 1, True), mb.add_vars(template.n_c, 0, 1)]).astype(int)
    add_template(mb, template, cols)
    maps = SampleMaps(np.zeros((N + 1, 0)), 0, True, np.asarray(x, float)[:, None],
                      np.zeros((N + 1, 1, 0)), np.zeros((N, 1, 0)))
    add_block(mb, spec_block(template, props, bigm, maps, tol, "s"), np.zeros(0, int), cols)
    return solve(mb.build(), SolveOptions(backend="reference")).ok


def test_bigm_exact_for_halfline():
    t = compute_bigm({"p": AffineProposition("p", [[1.0]], [0.0])}, ([-1.0], [1.0]), W=np.zeros((1, 0)))
    Mp, Mm = t["p"]
    assert Mp[0] == 1.0 and Mm[0] == -1.0


def test_bigm_rotated_box_dominates_samples():
    rng = np.random.default_rng(30)
    rb = RotatedBoxProposition("o", (13.5, 4.5), 2, 3, center=(0, 1), angle=2)
    W = np.column_stack([rng.uniform(20, 45, 200), rng.uniform(-3, 3, 200), rng.uniform(0, np.pi / 2, 200)])
    lo, hi = np.array([0.0, -5.0]), np.array([50.0, 5.0])
    Mp, Mm = compute_bigm({"o": rb}, (lo, hi), W=W)["o"]
    verts = np.array(list(itertools.product(*zip(lo, hi))))
    for w in W:
        P, rho = rb.evaluate(w)
        r = verts @ P.T - rho
        assert np.all(r <= Mp + 1e-9) and np.all(r >= Mm - 1e-9)


def test_bigm_needs_bounded_domain():
    p = {"p": AffineProposition("p", [[1.0]], [0.0])}
    with pytest.raises(EncodingError):
        compute_bigm(p, ([-np.inf], [1.0]), W=np.zeros((1, 0)))
    with pytest.raises(EncodingError):
        compute_bigm(p, ([-1.0], [1.0]))


def test_single_atom_at_n0():
    props = {"p": AffineProposition("p", [[1.0], [-1.0]], [0.7, 0.2])}
    bigm = compute_bigm(props, ([-3.0], [3.0]), W=np.zeros((1, 0)))
    for pol in ("both", "auto"):
        T = encode_formula(Atom("p"), props, 0, pol)
        for x in np.linspace(-1, 1, 41):
            assert _feasible(T, props, bigm, [x]) == (-0.2 - 1e-9 <= x <= 0.7 + 1e-9)


def test_always_avoid_matches_semantics_on_grid():
    props = {"box": AffineProposition("box", [[1.0], [-1.0]], [0.6, -0.3])}
    f = always(NegAtom("box"))
    bigm = compute_bigm(props, ([-1.0], [2.0]), W=np.zeros((1, 0)))
    grid = np.linspace(0.0, 0.9, 10)
    for pol in ("both", "auto"):
        T = encode_formula(f, props, 3, pol)
        for xs in itertools.product(grid, repeat=3):
            x = np.array([0.0, *xs])
            truth = truth_table(f, x[:, None], np.zeros((4, 0)), props)[0, 0]
            assert _feasible(T, props, bigm, x) == truth


def test_random_formulas_match_semantics():
    rng = np.random.default_rng(31)
    n = 0
    while n < 80:
        r = encoder_case(rng, "both" if n % 2 else "auto")
        if r is None:
            continue
        n += 1
        f, x, truth, bb, brute = r
        assert truth == bb == brute, (f, x)


def test_widening_keeps_answers():
    rng = np.random.default_rng(32)
    from oracles import random_pnf
    base = compute_bigm(INTERVAL_PROPS, ([-3.0], [3.0]), W=np.zeros((1, 0)))
    for _ in range(40):
        f = random_pnf(rng, 2)
        N = int(rng.integers(0, 4))
        x = rng.choice([-0.5, 0.2, 0.5, 0.8, 1.5], size=N + 1)
        T = encode_formula(f, INTERVAL_PROPS, N)
        assert _feasible(T, INTERVAL_PROPS, base, x) == _feasible(T, INTERVAL_PROPS, base.widened(3.0), x)


def test_requires_pnf_and_known_atoms():
    with pytest.raises(EncodingError):
        encode_formula(Not(Atom("p")), INTERVAL_PROPS, 2)
    with pytest.raises(EncodingError):
        encode_formula(Atom("zz"), INTERVAL_PROPS, 2)


def _two_path_setup():
    rng = np.random.default_rng(33)
    N, n_w = 3, 2
    c = MatrixFamily.affine(np.zeros(2), rng.normal(size=(n_w, 2)) * 0.1)
    sys = UncertainSystem([[1.0, 0.4], [0.0, 1.0]], [[0.08], [0.4]], c, n_w=n_w, N=N)
    props = {"o": AffineProposition("o", [[1.0, 0.0], [-1.0, 0.0]], [1.0, 0.5], [[1.0, 0.0], [0.0, 1.0]])}
    part = Partition.halfspace_split((N + 1) * n_w, [-1.0, 0, 1.0, 0, 0, 0, 0, 0], 0.0)
    spec = PolicySpec(N, 1, n_w, part, memory=2)
    return rng, sys, props, spec


def test_spec_rows_equal_direct_evaluation():
    rng, sys, props, spec = _two_path_setup()
    f = always(NegAtom("o"))
    T = encode_formula(f, props, sys.N)
    bigm = compute_bigm(props, ([-20.0, -20.0], [20.0, 20.0]), w_box=(-np.ones(2), np.ones(2)))
    x0 = np.array([0.2, 0.1])
    tol = 1e-5
    for _ in range(20):
        w = rng.uniform(-1, 1, size=(sys.N + 1, sys.n_w))
        theta = rng.normal(size=spec.d)
        rec = rng.integers(0, 2, size=T.n_rec).astype(float)
        maps = stage_maps(sys, x0, spec, w)
        blk = spec_block(T, props, bigm, maps, tol, "s")
        # direct path: simulate the closed loop and evaluate the raw big-M rows
        H = spec.H_from_theta(theta)
        u = evaluate_policy(PolicyParam(H), spec, w.ravel())
        x = sys.simulate(x0, u, w).x
        direct = []
        for s in T.slots:
            P, rho = props[s.atom].evaluate(w[s.k])
            Mp, Mm = bigm[s.atom]
            dlt = rec[s.start:s.start + s.r]
            g = P @ x[s.k] - rho
            if s.upper:
                direct.append(Mp * (1 - dlt) - g)
            if s.lower:
                direct.append(g - tol - (Mm - tol) * dlt)
        np.testing.assert_allclose(blk.residual(theta, rec), np.concatenate(direct), atol=1e-9)


def test_masked_columns_never_enter():
    rng, sys, props, spec = _two_path_setup()
    theta = rng.normal(size=spec.d)
    H = spec.H_from_theta(theta)
    assert not H[~spec.mask].any()
    maps = stage_maps(sys, np.zeros(2), spec, rng.uniform(-1, 1, size=(sys.N + 1, sys.n_w)))
    u_direct = evaluate_policy(PolicyParam(H), spec, maps.w.ravel()).reshape(sys.N, 1)
    np.testing.assert_allclose(maps.u_theta @ theta, u_direct, atol=1e-12)


def test_input_ball_gives_four_rows_per_stage():
    sys = UncertainSystem(np.eye(4), np.vstack([np.eye(2), np.eye(2)]), n_w=1, N=3)
    spec = PolicySpec(3, 2, 1)
    maps = stage_maps(sys, np.zeros(4), spec, np.zeros(4))
    blk = state_input_block(None, input_set("literal"), maps, "s")
    assert blk.theta_coef.shape[0] == 4 * sys.N
    X = Polyhedron.box(-np.ones(4), np.ones(4))
    assert state_input_block(X, None, maps, "s").theta_coef.shape[0] == 8 * sys.N
