"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 infeasible problem, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .io_utils import atomic_write_text

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4

log = logging.getLogger("robustltl")


class InputError(Exception):
    pass


def _unit(name: str):
    def parse(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not 0.0 < v < 1.0:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1), got {v}")
        return v
    return parse


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _load_problem(path: str):
    from .problem_file import ProblemFileError, load_problem
    try:
        return load_problem(_read_json(path))
    except ProblemFileError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_samples(path: str, N: int, n_w: int):
    from .scenario import Multisample, MultisampleFormatError
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return Multisample.from_csv(text, N, n_w, provenance=path)
    except MultisampleFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _solve_options(args):
    from .milp import SolveOptions
    return SolveOptions(backend=args.backend, time_limit=args.time_limit)


def _status_exit(status: str) -> int:
    return EXIT_INFEASIBLE if status == "infeasible" else EXIT_SOLVER


# -- commands -----------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    from .robust_linear import K_w_bound
    from .scenario import binary_search_K, closed_form_K

    method = "closed_form" if args.method == "closed" else "binary_search"
    if args.theorem == "48":
        missing = [f for f in ("eps", "beta", "m", "N", "n_w") if getattr(args, f) is None]
        if missing:
            raise InputError("theorem 48 needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        K = K_w_bound(args.eps, args.beta, args.m, args.N, args.n_w, method)
        _emit({"theorem": "48", "method": method, "K_w": K})
        return EXIT_OK
    missing = [f for f in ("eps_phi", "beta_phi", "d", "p_delta", "nc", "nb") if getattr(args, f) is None]
    if missing:
        raise InputError("theorem 45 needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if args.p_delta < 1:
        raise InputError("--p-delta must be at least 1")
    exp = args.p_delta * args.nb
    dims = args.d + args.p_delta * args.nc
    if method == "closed_form":
        K_phi = closed_form_K(args.eps_phi, args.beta_phi, exp, max(dims, 1), args.n_configs)
    else:
        K_phi = binary_search_K(args.eps_phi, args.beta_phi, dims, exp, args.n_configs)
    out = {"theorem": "45", "method": method, "K_phi": K_phi}
    if args.eps_s is not None and args.beta_s is not None:
        out["K_s"] = (closed_form_K(args.eps_s, args.beta_s, 0, max(args.d, 1)) if method == "closed_form"
                      else binary_search_K(args.eps_s, args.beta_s, args.d, 0))
    _emit(out)
    return EXIT_OK


def _split_samples(lp, W, args):
    from .encoder import encode_formula
    from .scenario import SampleBudget

    K = len(W)
    if args.k_phi is not None or args.k_s is not None:
        K_phi = args.k_phi if args.k_phi is not None else K - (args.k_s or 0)
        K_s = args.k_s if args.k_s is not None else K - K_phi
        budget = None
    else:
        g = lp.guarantees
        if "eps_phi" not in g:
            raise InputError("give --k-phi/--k-s or eps_phi/eps_s/beta_phi/beta_s guarantees in the problem file")
        t = encode_formula(lp.problem.formula, lp.problem.props, lp.problem.system.N, args.polarity)
        budget = SampleBudget(g["eps_phi"], g["eps_s"], g["beta_phi"], g["beta_s"], lp.spec.d,
                              lp.recourse.P_delta, t.n_c, t.n_b, method="binary_search")
        K_phi, K_s = budget.K_phi, budget.K_s
    if K_phi < 1 or K_s < 0 or K_phi + K_s > K:
        raise InputError(f"sample file has {K} rows; {K_phi} specification and {K_s} state samples requested")
    return W[:K_phi], W[K_phi:K_phi + K_s], budget


def cmd_synthesize(args) -> int:
    from .milp import solve
    from .policy import save_policy
    from .scenario import assemble_scenario_program

    lp = _load_problem(args.problem)
    sys_ = lp.problem.system
    W = _load_samples(args.samples, sys_.N, sys_.n_w).data
    W_phi, W_s, budget = _split_samples(lp, W, args)
    prog = assemble_scenario_program(lp.problem, lp.spec, W_phi, W_s, lp.recourse, polarity=args.polarity)
    sol = solve(prog.model, _solve_options(args))
    metrics = {"status": sol.status, "K_phi": len(W_phi), "K_s": len(W_s),
               "budget": None if budget is None else budget.to_dict(),
               "n_vars": prog.model.n, "n_binary": prog.model.n_binary,
               "solver_stats": {k: v for k, v in sol.stats.items() if isinstance(v, (int, float, str))}}
    if not sol.ok:
        _emit(metrics)
        return _status_exit(sol.status)
    metrics["objective"] = sol.objective
    save_policy(args.out, lp.spec, prog.H(sol.x), {"metrics": metrics, "problem": lp.doc})
    if args.metrics:
        atomic_write_text(args.metrics, json.dumps(metrics, indent=1, sort_keys=True))
    _emit(metrics)
    return EXIT_OK


def cmd_synthesize_linear(args) -> int:
    from .milp import solve
    from .policy import PolicySpec, save_policy
    from .robust_linear import (EmptyPieceError, NonlinearityError, SplitTemplate, assemble_robust_program,
                                estimate_support, partition_from_support)

    lp = _load_problem(args.problem)
    sys_ = lp.problem.system
    W = _load_samples(args.samples, sys_.N, sys_.n_w).data
    try:
        if args.split_coord is None:
            support = estimate_support(W, "single_box")
        else:
            support = estimate_support(W, SplitTemplate.stage_difference(sys_.N, sys_.n_w, args.split_coord))
        spec = PolicySpec(sys_.N, sys_.n_u, sys_.n_w, partition_from_support(support), lp.spec.memory)
        prog = assemble_robust_program(lp.problem, spec, W, polarity=args.polarity)
    except (NonlinearityError, EmptyPieceError) as exc:
        raise InputError(str(exc)) from None
    sol = solve(prog.model, _solve_options(args))
    metrics = {"status": sol.status, "K_w": len(W), "m": support.m, "P": spec.P,
               "n_vars": prog.model.n, "n_binary": prog.model.n_binary,
               "solver_stats": {k: v for k, v in sol.stats.items() if isinstance(v, (int, float, str))}}
    if not sol.ok:
        _emit(metrics)
        return _status_exit(sol.status)
    metrics["objective"] = sol.objective
    save_policy(args.out, spec, prog.H(sol.x), {"metrics": metrics, "support": json.loads(support.to_json()),
                                                   "problem": lp.doc})
    if args.metrics:
        atomic_write_text(args.metrics, json.dumps(metrics, indent=1, sort_keys=True))
    _emit(metrics)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .policy import MaskViolation, load_policy
    from .scenario import empirical_violation

    try:
        spec, H, doc = load_policy(args.policy)
    except (OSError, KeyError, ValueError, MaskViolation) as exc:
        raise InputError(f"{args.policy}: {exc}") from None
    if args.problem is not None:
        lp = _load_problem(args.problem)
    elif "problem" in doc:
        from .problem_file import ProblemFileError, load_problem
        try:
            lp = load_problem(doc["problem"])
        except ProblemFileError as exc:
            raise InputError(f"{args.policy}: embedded problem: {exc}") from None
    else:
        raise InputError("policy file carries no problem; pass --problem")
    sys_ = lp.problem.system
    if (spec.N, spec.n_u, spec.n_w) != (sys_.N, sys_.n_u, sys_.n_w):
        raise InputError("policy dimensions do not match the problem")
    W = _load_samples(args.samples, sys_.N, sys_.n_w).data
    rep = empirical_violation(lp.problem, spec, H, W, tol=args.tol)
    _emit(rep.to_dict())
    return EXIT_OK


def cmd_case_study(args) -> int:
    from .studies.config import overtaking_config, turning_config
    from .studies.pipelines import SynthesisFailed, run_case_study_1, run_case_study_2

    kw = {"seed": args.seed, "backend": args.backend, "time_limit": args.time_limit}
    if args.n_eval is not None:
        kw["n_eval"] = args.n_eval
    if args.N is not None:
        kw["N"] = args.N
    try:
        if args.which == "turning":
            cfg = turning_config(args.scale, **kw)
            report = run_case_study_1(cfg, args.out)
        else:
            if args.P:
                kw["P_values"] = tuple(args.P)
            cfg = overtaking_config(args.scale, **kw)
            report = run_case_study_2(cfg, args.out)
    except SynthesisFailed as exc:
        _emit({"status": exc.status, **exc.report})
        return _status_exit(exc.status)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _emit(report)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    from .scenario import helly_counterexample

    if args.k < 1:
        raise InputError("--k must be at least 1")
    _, verdict = helly_counterexample(args.k, args.seed)
    if args.json:
        _emit(verdict)
    else:
        print(f"{verdict['n_supporting']}/{args.k} constraints supporting")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustltl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--backend", choices=["auto", "reference", "highs"], default=None,
                        help="MILP backend (default: $ROBUSTLTL_MILP_BACKEND or auto)")
        sp.add_argument("--time-limit", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bounds", help="sample counts for the scenario and support guarantees")
    b.add_argument("--theorem", choices=["45", "48"], default="45",
                   help="45: sampled-program counts K_phi/K_s; 48: support-sample count K_w")
    b.add_argument("--method", choices=["closed", "binary"], default="closed")
    b.add_argument("--eps-phi", type=_unit("eps-phi"))
    b.add_argument("--beta-phi", type=_unit("beta-phi"))
    b.add_argument("--eps-s", type=_unit("eps-s"))
    b.add_argument("--beta-s", type=_unit("beta-s"))
    b.add_argument("--d", type=_nonneg_int)
    b.add_argument("--p-delta", type=_nonneg_int)
    b.add_argument("--nc", type=_nonneg_int)
    b.add_argument("--nb", type=_nonneg_int)
    b.add_argument("--n-configs", type=_nonneg_int, default=None)
    b.add_argument("--eps", type=_unit("eps"))
    b.add_argument("--beta", type=_unit("beta"))
    b.add_argument("--m", type=_nonneg_int)
    b.add_argument("--N", type=_nonneg_int)
    b.add_argument("--n-w", type=_nonneg_int)
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("synthesize", help="sampled scenario synthesis")
    s.add_argument("problem")
    s.add_argument("samples")
    s.add_argument("--out", required=True)
    s.add_argument("--metrics")
    s.add_argument("--k-phi", type=_nonneg_int)
    s.add_argument("--k-s", type=_nonneg_int)
    s.add_argument("--polarity", choices=["both", "auto"], default="auto")
    solver_flags(s)
    s.set_defaults(func=cmd_synthesize)

    sl = sub.add_parser("synthesize-linear", help="robust synthesis for linear disturbance dependence")
    sl.add_argument("problem")
    sl.add_argument("samples")
    sl.add_argument("--out", required=True)
    sl.add_argument("--metrics")
    sl.add_argument("--split-coord", type=_nonneg_int, default=None,
                    help="split the support by the sign of w[1, c] - w[0, c]")
    sl.add_argument("--polarity", choices=["both", "auto"], default="auto")
    solver_flags(sl)
    sl.set_defaults(func=cmd_synthesize_linear)

    e = sub.add_parser("evaluate", help="empirical violation of a stored policy")
    e.add_argument("--problem", help="defaults to the problem stored in the policy file")
    e.add_argument("--policy", required=True)
    e.add_argument("--samples", required=True)
    e.add_argument("--tol", type=float, default=1e-6)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("case-study", help="run a driving case study")
    c.add_argument("which", choices=["turning", "overtake"])
    c.add_argument("--scale", choices=["desk", "paper"], default="desk")
    c.add_argument("--P", type=int, nargs="+", default=None)
    c.add_argument("--N", type=int, default=None)
    c.add_argument("--n-eval", type=int, default=None)
    c.add_argument("--out", default=None)
    solver_flags(c)
    c.set_defaults(func=cmd_case_study)

    x = sub.add_parser("counterexample", help="sampled program whose constraints are all supporting")
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--json", action="store_true")
    solver_flags(x)
    x.set_defaults(func=cmd_counterexample)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"robustltl: error: {exc}\n")
        return EXIT_INPUT
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # solver internals
        from .milp import InfeasibleModelError, NodeLimitError
        if isinstance(exc, InfeasibleModelError):
            sys.stderr.write(f"robustltl: infeasible: {exc}\n")
            return EXIT_INFEASIBLE
        if isinstance(exc, NodeLimitError):
            sys.stderr.write(f"robustltl: solver stopped: {exc}\n")
            return EXIT_SOLVER
        raise


if __name__ == "__main__":
    sys.exit(main())
