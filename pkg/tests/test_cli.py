import json
from importlib import resources

import numpy as np
import pytest

from robustltl.cli import main
from robustltl.policy import load_policy
from robustltl.scenario import closed_form_K


def data_file(name):
    return str(resources.files("robustltl").joinpath(f"data/{name}"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--eps-phi", 0.05, "--beta-phi", 1e-3, "--d", 1, "--p-delta", 1,
                       "--nc", 0, "--nb", 0)
    assert code == 0 and json.loads(out)["K_phi"] == 219
    code, out, _ = run(capsys, "bounds", "--eps-phi", 0.05, "--beta-phi", 1e-3, "--d", 1, "--p-delta", 1,
                       "--nc", 0, "--nb", 0, "--method", "binary")
    assert code == 0 and json.loads(out)["K_phi"] <= 219
    code, out, _ = run(capsys, "bounds", "--theorem", 48, "--eps", 0.05, "--beta", 1e-3, "--m", 4, "--N", 1,
                       "--n-w", 1)
    assert json.loads(out)["K_w"] == 567
    code, out, _ = run(capsys, "bounds", "--eps-phi", 0.1, "--beta-phi", 1e-2, "--d", 3, "--p-delta", 1,
                       "--nc", 2, "--nb", 2, "--eps-s", 0.3, "--beta-s", 0.01)
    assert json.loads(out)["K_phi"] == closed_form_K(0.1, 1e-2, 2, 5)


def test_bounds_input_errors(capsys):
    code, _, err = run(capsys, "bounds", "--eps-phi", 0.05, "--beta-phi", 1e-3, "--d", 1)
    assert code == 2 and "--p-delta" in err
    with pytest.raises(SystemExit) as exc:
        main(["bounds", "--eps-phi", "2", "--d", "1"])
    assert exc.value.code == 2


def test_synthesize_and_evaluate(tmp_path, capsys):
    out = tmp_path / "policy.json"
    metrics = tmp_path / "metrics.json"
    code, stdout, _ = run(capsys, "synthesize", data_file("toy_problem.json"), data_file("toy_samples.csv"),
                          "--out", out, "--metrics", metrics, "--k-phi", 20, "--k-s", 5, "--backend", "reference")
    assert code == 0
    m = json.loads(stdout)
    assert m["status"] == "optimal" and json.loads(metrics.read_text())["objective"] == m["objective"]
    spec, H, doc = load_policy(str(out))
    assert not H[~spec.mask].any() and "problem" in doc
    code, stdout, _ = run(capsys, "evaluate", "--policy", out, "--samples", data_file("toy_samples.csv"))
    rep = json.loads(stdout)
    assert code == 0 and 0.0 <= rep["eps_hat_phi"] <= 1.0
    code, stdout2, _ = run(capsys, "evaluate", "--policy", out, "--samples", data_file("toy_samples.csv"),
                           "--problem", data_file("toy_problem.json"))
    assert json.loads(stdout2) == rep


def test_synthesize_is_deterministic(tmp_path, capsys):
    Hs = []
    for i in range(2):
        out = tmp_path / f"p{i}.json"
        assert run(capsys, "synthesize", data_file("toy_problem.json"), data_file("toy_samples.csv"),
                   "--out", out, "--k-phi", 10, "--k-s", 5)[0] == 0
        Hs.append(load_policy(str(out))[1])
    np.testing.assert_array_equal(*Hs)


def test_synthesize_linear(tmp_path, capsys):
    out = tmp_path / "robust.json"
    code, stdout, _ = run(capsys, "synthesize-linear", data_file("toy_problem.json"), data_file("toy_samples.csv"),
                          "--out", out)
    assert code == 0 and json.loads(stdout)["m"] == 8
    code, stdout, _ = run(capsys, "evaluate", "--policy", out, "--samples", data_file("toy_samples.csv"))
    assert code == 0 and json.loads(stdout)["eps_hat_phi"] == 0.0


def test_bad_inputs_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("w0_0,w1_0,w2_0,w3_0\n1,2,x,4\n")
    code, _, err = run(capsys, "synthesize", data_file("toy_problem.json"), bad, "--out", tmp_path / "p.json")
    assert code == 2 and "row 2, column 3" in err
    doc = json.loads(open(data_file("toy_problem.json")).read())
    doc["horizon"] = -1
    prob = tmp_path / "prob.json"
    prob.write_text(json.dumps(doc))
    code, _, err = run(capsys, "synthesize", prob, data_file("toy_samples.csv"), "--out", tmp_path / "p.json")
    assert code == 2 and "horizon" in err
    code, _, err = run(capsys, "evaluate", "--policy", tmp_path / "missing.json", "--samples", bad)
    assert code == 2


def test_infeasible_exit_3(tmp_path, capsys):
    doc = json.loads(open(data_file("toy_problem.json")).read())
    doc["input"]["b"] = [0.1, 0.1]   # the goal at x >= 2 is out of reach in three steps
    prob = tmp_path / "prob.json"
    prob.write_text(json.dumps(doc))
    out = tmp_path / "p.json"
    code, _, _ = run(capsys, "synthesize", prob, data_file("toy_samples.csv"), "--out", out, "--k-phi", 5,
                     "--k-s", 2)
    assert code == 3 and not out.exists()


def test_counterexample(capsys):
    code, out, _ = run(capsys, "counterexample", "--k", 3)
    assert code == 0 and out.strip() == "3/3 constraints supporting"
    code, out, _ = run(capsys, "counterexample", "--k", 2, "--json", "--seed", 5)
    assert json.loads(out)["n_supporting"] == 2


def test_case_study_turning(tmp_path, capsys):
    code, out, _ = run(capsys, "case-study", "turning", "--n-eval", 500, "--out", tmp_path)
    rep = json.loads(out)
    assert code == 0 and rep["status"] == "optimal" and rep["eps_hat_phi"] <= 0.05
    assert (tmp_path / "turning_seed0_report.json").exists()
