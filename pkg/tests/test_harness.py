import json

import numpy as np
import pytest
import yaml

from hybrid_mor.errors import AlignmentError, ValidationError
from hybrid_mor.harness.cli import main
from hybrid_mor.harness.config import builtin_scenario_path, load_builtin, load_scenario, parse_scenario
from hybrid_mor.harness.runner import emit_error_decay, plan, run
from hybrid_mor.signal import HybridSignal, Segment

PERIODIC = {
    "name": "scalar_periodic",
    "system": {"A_c": [[-1.0]], "A_d": [[0.5]], "B_c": [[1.0]], "B_d": [[1.0]], "C": [[1.0]]},
    "generator": {"S": [[0.0]], "J": [[1.0]], "L_c": [[1.0]], "L_d": [[1.0]], "omega0": [1.0]},
    "filter": {"Q_c": [[0.0]], "Q_d": [[1.0]], "R_c": [[1.0]], "R_d": [[1.0]]},
    "domain": {"rule": "periodic", "period": 1.0},
    "window": [0.0, 20.0],
    "x0": [2.0],
    "inputs": {"u_c": {"kind": "exponential", "rates": [0.5]}, "u_d": {"kind": "exponential", "rates": [0.5]}},
    "tasks": ["steady_state_pi", "steady_state_upsilon", "direct_rom", "swapped_rom", "validate"],
    "settings": {"warmup": 20.0, "horizon": 40.0, "checkpoints": [0.5, 19.0]},
}


def _write(tmp_path, data, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_builtin_scenario_loads_matrices_verbatim():
    sc = load_builtin()
    assert sc.system.A_c.shape == (6, 6) and sc.system.B_c.shape == (6, 2)
    assert sc.system.A_c[0, 0] == -1.280 and sc.system.C[1, 5] == 1.653
    assert sc.system.B_c[3, 0] == -1.740 and sc.system.B_d[2, 1] == -1.337
    assert sc.generator.S[0, 0] == 2.0 and sc.generator.J[0, 0] == 0.01
    np.testing.assert_array_equal(sc.generator.L_c, [[0.2], [0.15]])
    np.testing.assert_array_equal(sc.filter.R_c, [[0.2, 0.16]])
    assert sc.filter.Q_c[0, 0] == 1.0 and sc.filter.Q_d[0, 0] == 0.1
    assert sc.window == (0.0, 30.0)
    assert sc.domain.t_start <= -80.0 and sc.domain.t_end >= 110.0
    assert builtin_scenario_path().exists()


def test_singular_generator_jump_is_rejected(tmp_path):
    data = json.loads(json.dumps(PERIODIC))
    data["generator"]["J"] = [[0.0]]
    with pytest.raises(ValidationError, match="generator"):
        load_scenario(_write(tmp_path, data))


def test_non_square_flow_matrix_is_rejected(tmp_path):
    data = json.loads(json.dumps(PERIODIC))
    data["system"]["A_c"] = [[-1.0, 0.0]]
    with pytest.raises(ValidationError, match="square"):
        load_scenario(_write(tmp_path, data))


def test_parse_errors_report_location(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("system:\n  A_c: [[1.0, 2.0]\n")
    with pytest.raises(ValidationError, match="line"):
        load_scenario(path)


def test_unknown_task_and_missing_field():
    data = json.loads(json.dumps(PERIODIC))
    data["tasks"] = ["bogus"]
    with pytest.raises(ValidationError, match="unknown task"):
        parse_scenario(data)
    del data["window"]
    data["tasks"] = []
    with pytest.raises(ValidationError, match="window"):
        parse_scenario(data)


def test_empty_task_list(tmp_path):
    data = dict(PERIODIC, tasks=[])
    report = run(parse_scenario(data), tmp_path)
    assert report.tasks == {} and report.exit_code == 0
    assert json.loads((tmp_path / "report.json").read_text())["exit_code"] == 0


def test_plan_adds_prerequisites():
    assert plan(["two_sided_i"]) == ["steady_state_pi", "steady_state_upsilon", "two_sided_i"]


def test_periodic_scenario_reports_route_residuals(tmp_path):
    report = run(parse_scenario(PERIODIC), tmp_path)
    assert report.exit_code == 0, {k: (v.status, v.error) for k, v in report.tasks.items()}
    pi = report.tasks["steady_state_pi"].metrics
    assert pi["route_residuals"]["periodic_exact"] < 1e-5
    assert pi["route_residuals"]["series"] < 1e-5
    assert report.tasks["steady_state_upsilon"].metrics["route_residuals"]["periodic_exact"] < 1e-5
    assert report.tasks["direct_rom"].metrics["channels"]["direct"]["passed"]
    assert report.tasks["swapped_rom"].metrics["identities"]["Y_identity"] < 1e-6
    assert (tmp_path / "Pi_hat.csv").exists()


def test_numeric_failure_exit_code(tmp_path):
    data = json.loads(json.dumps(PERIODIC))
    data["tasks"] = ["direct_rom"]
    data["gains"] = {"direct": {"G_c": [[0.0]], "G_d": [[0.0]]}}  # neutral model
    report = run(parse_scenario(data), tmp_path)
    assert report.tasks["direct_rom"].status == "numeric_failed"
    assert report.exit_code == 3


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, dict(PERIODIC, tasks=["steady_state_pi"]))
    assert main(["validate", str(good)]) == 0
    assert main(["run", str(good), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "report.json").exists()
    bad = json.loads(json.dumps(PERIODIC))
    bad["generator"]["J"] = [[0.0]]
    assert main(["validate", str(_write(tmp_path, bad, "bad.yaml"))]) == 2
    assert "validation error" in capsys.readouterr().err


def test_cli_overrides(tmp_path):
    good = _write(tmp_path, dict(PERIODIC, tasks=["steady_state_pi", "steady_state_upsilon", "direct_rom"]))
    out = tmp_path / "o"
    assert main(["run", str(good), "--out", str(out), "--task", "steady_state_pi", "--seed", "7", "--tol-attract", "1e-7"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["seed"] == 7 and list(rep["tasks"]) == ["steady_state_pi"]


def test_runs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(parse_scenario(PERIODIC), a)
    run(parse_scenario(PERIODIC), b)
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_error_decay_helper(tmp_path):
    t = np.linspace(0, 10, 101)
    a = HybridSignal([Segment(0, t, np.exp(-t)[:, None])])
    zero = HybridSignal([Segment(0, t, np.zeros((t.size, 1)))])
    same = emit_error_decay(a, a, tmp_path / "same.csv")
    assert same["initial"] == same["final"] == 0.0 and same["slope"] is None
    dec = emit_error_decay(a, zero, tmp_path / "e.csv", checkpoints=(1.0,))
    assert dec["slope"] == pytest.approx(-1.0, rel=0.02)
    assert dec["at"]["1"] == pytest.approx(np.exp(-1))
    other = HybridSignal([Segment(0, t[::2], np.zeros((t[::2].size, 1)))])
    with pytest.raises(AlignmentError):
        emit_error_decay(a, other, tmp_path / "x.csv")
