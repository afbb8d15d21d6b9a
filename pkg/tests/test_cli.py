import json
import subprocess
import sys

import pytest

from aoiregion.cli import build_parser, main

SMALL = ["--n", "3", "--horizon", "3000", "--traces", "2", "--starts", "3"]


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("cmd", ["solve", "simulate", "sweep", "region", "cdf"])
def test_help_for_every_subcommand(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "--seed" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "aoiregion", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "solve" in proc.stdout


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["solve", "--bogus"],
                                  ["solve", "--q", "a,b"], ["sweep"]])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_input_errors_exit_1(capsys, tmp_path):
    assert _run(capsys, ["solve", "--n", "2", "--m", "3"])[0] == 1
    (tmp_path / "bad.json").write_text("{")
    code, _, err = _run(capsys, ["solve", "--scenario-file", str(tmp_path / "bad.json")])
    assert code == 1 and "not valid JSON" in err
    assert _run(capsys, ["sweep", "--family", "example1", "--policies", "rr"])[0] == 1


def test_solve_outputs_json(capsys):
    code, out, _ = _run(capsys, ["solve", "--scenario", "ex1", *SMALL])
    data = json.loads(out)
    assert code == 0 and data["converged"] and data["problem"] == "min_aoi_hard"
    assert data["scenario"]["network"]["n_devices"] == 3


def test_infeasible_exits_2(capsys):
    code, _, err = _run(capsys, ["solve", "--n", "2", "--p", "1,1", "--q", "0.9,0.9"])
    assert code == 2 and "infeasible" in err
    code, out, _ = _run(capsys, ["solve", "--scenario", "ex4", "--f", "1", "--g", "1"])
    assert code == 2 and json.loads(out)["feasible"] is False


def test_outputs_are_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert _run(capsys, ["simulate", *SMALL, "--seed", "4", "--out", str(path)])[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("device,throughput_mean")
    code, out, _ = _run(capsys, ["simulate", *SMALL, "--traces", "1", "--policy", "random",
                                 "--format", "json"])
    assert code == 0 and json.loads(out)["horizon"] == 3000


def test_simulate_with_targets_file(capsys, tmp_path):
    t = tmp_path / "t.json"
    t.write_text(json.dumps({"mu": [0.05, 0.1, 0.3], "sigma2": [0.001, 0.002, 0.01]}))
    code, out, _ = _run(capsys, ["simulate", *SMALL, "--targets", str(t)])
    assert code == 0 and len(out.splitlines()) == 4


def test_sweep_writes_csv_and_sidecar(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = _run(capsys, ["sweep", "--family", "example1", "--grid", "1", "--ratio", "3",
                               "--horizon", "3000", "--traces", "2", "--starts", "3",
                               "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "sweep_var,policy,objective_mean,objective_se,status" and len(lines) == 4
    side = json.loads((tmp_path / "sweep.csv.json").read_text())
    assert side["family"] == "example1" and len(side["rows"]) == 3


def test_region_with_point_and_pairs(capsys, tmp_path):
    point, pairs = tmp_path / "point.json", tmp_path / "pairs.json"
    s2 = 0.5 / 4
    point.write_text(json.dumps({"mu": [0.25, 0.5], "sigma2": [0.25 * s2, s2]}))
    pairs.write_text(json.dumps({"m": [0.2, 0.4], "h": [10.0, 10.0]}))
    base = ["region", "--point", str(point), "--pairs", str(pairs), "--p", "0.5,1", "--m", "1"]
    code, out, _ = _run(capsys, base)
    assert code == 0 and json.loads(out)["feasible"] is True
    pairs.write_text(json.dumps({"m": [0.3, 0.4], "h": [10.0, 10.0]}))
    code, out, err = _run(capsys, [*base, "--bound", "outer"])
    assert code == 0 and json.loads(out)["feasible"] is False and "throughput[0]" in err
    assert _run(capsys, ["region", "--point", str(point), "--pairs", str(pairs)])[0] == 1


def test_region_accepts_solve_output(capsys, tmp_path):
    solved = tmp_path / "solved.json"
    assert _run(capsys, ["solve", *SMALL, "--out", str(solved)])[0] == 0
    data = json.loads(solved.read_text())
    pairs = tmp_path / "pairs.json"
    pairs.write_text(json.dumps({"m": data["scenario"]["params"]["q"], "h": [100.0] * 3}))
    code, out, _ = _run(capsys, ["region", "--point", str(solved), "--pairs", str(pairs),
                                 "--network", str(_network(tmp_path, data))])
    assert code == 0 and json.loads(out)["feasible"] is True


def _network(tmp_path, data):
    path = tmp_path / "net.json"
    path.write_text(json.dumps(data["scenario"]["network"]))
    return path


def test_cdf_command(capsys):
    code, out, _ = _run(capsys, ["cdf", "--n", "3", "--horizon", "50000", "--starts", "3",
                                 "--device", "2", "--x-max", "20"])
    lines = out.splitlines()
    assert code == 0 and lines[0] == "k,empirical_cdf,inverse_gaussian_cdf" and len(lines) == 21
    code, out, _ = _run(capsys, ["cdf", "--n", "3", "--horizon", "50000", "--starts", "3",
                                 "--fit", "moments", "--format", "json"])
    assert code == 0 and json.loads(out)["fit"] == "moments"
    assert _run(capsys, ["cdf", "--n", "3", "--horizon", "5000", "--starts", "3",
                         "--device", "7"])[0] == 1


def test_parser_builds():
    assert build_parser().prog == "aoiregion"
