import json
import subprocess
import sys

import pytest

from rhfedmtl.cli import main

SMALL = ["--n-tasks", "3", "--n-terminals", "3", "--samples-per-task", "84", "--d", "10"]


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_plan_table(capsys):
    code, out, _ = _run(capsys, ["plan"])
    lines = out.strip().splitlines()
    assert code == 0
    assert lines[0] == "h,theta,k_bound,f"
    assert len(lines) == 72
    assert lines[-1] == "# plan: H=33 K=10 regime=2 feasible=True"


def test_plan_json_and_strict_infeasible(capsys):
    code, out, _ = _run(capsys, ["plan", "--budget", "50", "--format", "json", "--strict"])
    assert code == 3
    rep = json.loads(out)
    assert rep["plan"]["regime"] == 1 and rep["plan"]["feasible"] is False


def test_run_writes_artifacts(capsys, tmp_path):
    code, out, _ = _run(capsys, ["run", *SMALL, "--out", str(tmp_path)])
    assert code == 0
    assert json.loads(out)["consumed"][0] <= 1400
    assert (tmp_path / "metrics.csv").exists() and (tmp_path / "summary.json").exists()


def test_config_file_overrides_flags(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": {"budget": "inf"}}))
    code, out, _ = _run(capsys, ["plan", "--budget", "50", "--config", str(cfg)])
    assert code == 0
    assert out.strip().splitlines()[-1].startswith("# plan: H=1 K=1000 regime=3")


def test_flags_override_defaults(capsys):
    _, out, _ = _run(capsys, ["plan", "--budget", "inf"])
    assert "regime=3" in out.strip().splitlines()[-1]


def test_synth_then_run_csv(capsys, tmp_path):
    p = tmp_path / "s.csv"
    assert _run(capsys, ["synth", "--out", str(p), "--n-tasks", "2", "--samples-per-task", "40", "--d", "3"])[0] == 0
    code, out, _ = _run(capsys, ["run", "--csv", str(p), "--positive-label", "1", "--n-tasks", "2",
                                 "--n-terminals", "2", "--algorithm", "fedavg"])
    assert code == 0 and json.loads(out)["algorithm"] == "fedavg"


def test_sweep_prints_aggregate(capsys, tmp_path):
    code, out, _ = _run(capsys, ["sweep", *SMALL, "--axis", "budget=300,600", "--algorithms", "rhfedmtl,fedavg",
                                 "--seeds", "0,1", "--out", str(tmp_path)])
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("budget,algorithm,n_seeds")
    assert len(lines) == 1 + 2 * 2


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["frobnicate"],
    ["sweep", "--axis", "gamma=1"],
    ["sweep", "--axis", "budget"],
    ["run", "--lambda1", "0"],
    ["run", "--algorithm", "sgd"],
])
def test_usage_errors_exit_1(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        code = main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_runtime_error_exit_2(capsys, tmp_path):
    code, _, err = _run(capsys, ["run", "--csv", str(tmp_path / "missing.csv")])
    assert code == 2 and "runtime error" in err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rhfedmtl", "plan", "--table-max", "3"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.splitlines()[0] == "h,theta,k_bound,f"
