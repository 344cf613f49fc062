"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary (see conftest.py) and by
``python tests/test_acceptance.py``.
"""
import contextlib
import io
import json
import sys
import time

import numpy as np

from robustltl.cli import main as cli_main
from robustltl.milp import SolveOptions, solve
from robustltl.robust_linear import K_w_bound, SplitTemplate, estimate_support
from robustltl.scenario import binary_search_K, closed_form_K
from robustltl.studies import (overtaking_config, run_case_study_1, run_case_study_2, sample_overtaking,
                               sample_turning, turning_config)

from oracles import (K_w_oracle, closed_form_oracle, dualization_case, encoder_case, enumerate_milp, random_milp,
                     stacked_error)

RESULTS = {}


def record(n: int, ok: bool, detail: str, t0: float) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail}; {time.perf_counter() - t0:.1f} s)"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_1_stacked_dynamics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1001)
    err = max(stacked_error(rng) for _ in range(200))
    record(1, err <= 1e-9, f"200 systems, max error {err:.2e}", t0)


def test_criterion_2_encoder_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1002)
    n = bad = 0
    while n < 500:
        r = encoder_case(rng, "both" if n % 2 else "auto")
        if r is None:
            continue
        n += 1
        _, _, truth, bb, brute = r
        bad += not (truth == bb == brute)
    record(2, bad == 0, f"{n} formulas, {bad} mismatches", t0)


def test_criterion_3_bound_calculators():
    t0 = time.perf_counter()
    tuples = [(0.05, 1e-3, 0, 1), (0.05, 1e-3, 0, K_w_dims(4, 1, 1))]
    rng = np.random.default_rng(1003)
    while len(tuples) < 50:
        tuples.append((float(rng.uniform(0.01, 0.5)), float(10 ** rng.uniform(-8, -1)),
                       int(rng.integers(0, 30)), int(rng.integers(1, 200))))
    exact = all(closed_form_K(*t) == closed_form_oracle(*t) for t in tuples)
    named = closed_form_K(0.05, 1e-3, 0, 1) == 219 and K_w_bound(0.05, 1e-3, 4, 1, 1) == 567 \
        == K_w_oracle(0.05, 1e-3, 4, 1, 1)
    dominated = all(binary_search_K(e, b, d, x) <= closed_form_K(e, b, x, d) for e, b, x, d in tuples)
    record(3, exact and named and dominated,
           f"50 tuples exact={exact}, 219/567={named}, binary<=closed={dominated}", t0)


def K_w_dims(m, N, n_w):
    return m * (N + 1) * n_w + m


def test_criterion_4_counterexample():
    t0 = time.perf_counter()
    failures = []
    for K in range(1, 9):
        for seed in range(20):
            buf = io.StringIO()
            with contextlib.redirect_stdout(buf):
                code = cli_main(["counterexample", "--k", str(K), "--seed", str(seed), "--json"])
            v = json.loads(buf.getvalue())
            if code != 0 or not v["all_supporting"] or v["n_supporting"] != K:
                failures.append((K, seed))
    record(4, not failures, f"160 runs, {len(failures)} not all supporting", t0)


def test_criterion_5_dualization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1005)
    bad = borderline = 0
    for t in range(300):
        feas, vert = dualization_case(rng, t)
        if abs(vert) <= 1e-8:
            borderline += 1
            continue
        bad += feas != (vert <= 0)
    record(5, bad == 0, f"300 rows, {bad} mismatches, {borderline} within 1e-8 of zero", t0)


def test_criterion_6_case_study_1():
    t0 = time.perf_counter()
    eps, replay_ok, gaps = [], True, []
    for seed in range(15):
        rep = run_case_study_1(turning_config("desk", seed=seed))
        eps.append(rep["eps_hat_phi"])
        replay_ok &= all(rep["replay"]["satisfied"])
        gaps.append(rep["replay"]["max_state_gap"])
    good = sum(e <= 0.05 for e in eps)
    record(6, good >= 14 and replay_ok and max(gaps) <= 1e-9,
           f"eps_hat_phi <= 0.05 in {good}/15 seeds (max {max(eps):.4f}), replay avoids truck={replay_ok}", t0)


def test_criterion_7_case_study_2():
    t0 = time.perf_counter()
    rep = run_case_study_2(overtaking_config("desk"))
    per = {int(k): v for k, v in rep["per_P"].items()}
    means = [per[P]["objective_stats"]["mean"] for P in (1, 2, 3, 5)]
    p1 = per[1]["overtake_rate_left"] == 0.0 and per[1]["overtake_rate_right"] == 0.0
    p2 = per[2]["overtake_rate_right"] > 0.5 and means[1] > means[0]
    mono = all(b >= a for a, b in zip(means, means[1:]))
    viol = max(max(v["eps_hat_phi"], v["eps_hat_s"]) for v in per.values())
    record(7, p1 and p2 and mono and viol <= 0.05,
           f"means {', '.join(f'{m:.2f}' for m in means)}; P=1 never overtakes={p1}; "
           f"P=2 right-branch rate {per[2]['overtake_rate_right']:.2f}; max eps_hat {viol:.4f}", t0)


def test_criterion_8_solver_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1008)
    cases = [random_milp(rng) for _ in range(200)]
    bad = nondet = 0
    t_solver = t_oracle = 0.0
    opts = SolveOptions(backend="reference")
    for model, data in cases:
        t1 = time.perf_counter()
        a = solve(model, opts)
        b = solve(model, opts)
        t2 = time.perf_counter()
        best = enumerate_milp(data)
        t_oracle += time.perf_counter() - t2
        t_solver += t2 - t1
        if a.status != b.status or (a.ok and (not np.array_equal(a.x, b.x) or a.stats["nodes"] != b.stats["nodes"])):
            nondet += 1
        if np.isinf(best):
            bad += a.status != "infeasible"
        else:
            bad += not (a.ok and abs(a.objective - best) <= 1e-8 * (1 + abs(best)))
    record(8, bad == 0 and nondet == 0,
           f"200 MILPs, {bad} mismatches, {nondet} nondeterministic; solver {t_solver:.1f} s, oracle {t_oracle:.1f} s",
           t0)


def test_criterion_9_support_containment():
    t0 = time.perf_counter()
    eps, beta = 0.05, 1e-3
    tc = turning_config("desk")
    m_t = 2 * (tc.N + 1) * 3
    K_t = K_w_bound(eps, beta, m_t, tc.N, 3)
    Wt = sample_turning(tc, K_t, np.random.default_rng(1009)).data
    ft = sample_turning(tc, 10_000, np.random.default_rng(2009)).data
    rate_t = float(estimate_support(Wt).contains(ft).mean())
    oc = overtaking_config("desk")
    m_o = 2 * (2 * (oc.N + 1) * 2) + 2
    K_o = K_w_bound(eps, beta, m_o, oc.N, 2)
    Wo = sample_overtaking(oc, K_o, np.random.default_rng(1010)).data
    fo = sample_overtaking(oc, 10_000, np.random.default_rng(2010)).data
    rate_o = float(estimate_support(Wo, SplitTemplate.stage_difference(oc.N, 2, 1)).contains(fo).mean())
    record(9, min(rate_t, rate_o) >= 1 - eps,
           f"turning K_w={K_t} rate {rate_t:.4f}; overtaking K_w={K_o} rate {rate_o:.4f}", t0)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in list(globals().items()) if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
