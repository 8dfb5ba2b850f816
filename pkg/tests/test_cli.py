import csv
import io
import json
import subprocess
import sys

import pytest

from localspin.bench import load_records_csv, load_report_json
from localspin.cli import main
from localspin.instance import parse_biqmac


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def t2g5(tmp_path, capsys):
    path = tmp_path / "t2g5.txt"
    code, _, _ = cli(capsys, "generate", "--family", "torus", "--dim", "2", "--side", "5", "--seed", "7",
                     "-o", str(path))
    assert code == 0
    return path


def test_generate_torus_file(t2g5):
    inst = parse_biqmac(t2g5.read_text())
    assert inst.n == 25 and inst.num_edges == 50
    assert t2g5.read_text().splitlines()[0] == "25 50"


def test_generate_json_and_stdout(capsys):
    code, out, _ = cli(capsys, "generate", "--family", "w", "--n", "8", "--density", "0.5", "--format", "json",
                       "--seed", "3")
    assert code == 0
    data = json.loads(out)
    assert data["n"] == 8 and data["seed"] == 3


def test_solve_summary(t2g5, capsys):
    code, out, _ = cli(capsys, "solve", str(t2g5), "--algo", "lt", "--eta", "1", "--beta", "0.5",
                       "--restarts", "30", "--seed", "1")
    assert code == 0
    data = json.loads(out)
    assert data["best_cut"] == data["best"]["cut"]
    assert data["hyperparams"]["eta"] == 1.0 and data["hyperparams"]["beta"] == 0.5
    assert len(data["best"]["spins"]) == 25
    assert "trace" not in data["best"]


def test_solve_trace_flag(t2g5, capsys):
    code, out, _ = cli(capsys, "solve", str(t2g5), "--restarts", "2", "--trace")
    assert code == 0
    best = json.loads(out)["best"]
    assert len(best["trace"]) == best["rounds"]


def test_oracle_then_target(t2g5, tmp_path, capsys):
    oracle_json = tmp_path / "oracle.json"
    code, _, _ = cli(capsys, "oracle", str(t2g5), "-o", str(oracle_json))
    assert code == 0
    sol = json.loads(oracle_json.read_text())
    assert set(sol) == {"max_cut", "spins", "num_optima"}
    code, out, _ = cli(capsys, "solve", str(t2g5), "--restarts", "10", "--target-from", str(oracle_json))
    assert code == 0
    data = json.loads(out)
    assert "time_to_solution" in data
    assert data["target"] == sol["max_cut"]


def test_solve_csv(t2g5, capsys):
    code, out, _ = cli(capsys, "solve", str(t2g5), "--restarts", "4", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 4 and "wall_time_s" in rows[0]


@pytest.mark.parametrize("algo,extra", [("gd", []), ("imag", ["--dtau", "0.05"])])
def test_solve_variants(t2g5, capsys, algo, extra):
    code, out, _ = cli(capsys, "solve", str(t2g5), "--algo", algo, "--restarts", "3", *extra)
    assert code == 0
    assert json.loads(out)["hyperparams"]["variant"] == algo


def test_imag_requires_dtau(t2g5, capsys):
    code, _, err = cli(capsys, "solve", str(t2g5), "--algo", "imag")
    assert code == 2 and "dtau" in err


def test_stats_and_tune(t2g5, capsys):
    code, out, _ = cli(capsys, "stats", str(t2g5))
    assert code == 0 and json.loads(out)["n"] == 25
    code, out, _ = cli(capsys, "tune", str(t2g5), "--etas", "0.5", "1", "2", "--betas", "0.3", "0.6",
                       "--restarts", "5")
    assert code == 0
    data = json.loads(out)
    assert len(data["grid"]) == 6 and "fit" in data
    code, out, _ = cli(capsys, "tune", str(t2g5), "--etas", "1", "--betas", "0.3", "0.6", "--restarts", "3",
                       "--format", "csv")
    assert code == 0 and out.startswith("eta,beta_opt,median_energy")


def test_usage_errors_exit_1(capsys):
    assert cli(capsys, "solve")[0] == 1
    assert cli(capsys, "frobnicate")[0] == 1
    assert cli(capsys, "generate", "--family", "torus", "--dim", "2", "--side", "5", "--bogus")[0] == 1
    assert cli(capsys, "generate", "--family", "g05")[0] == 1
    assert cli(capsys, "generate", "--family", "w", "--n", "5")[0] == 1
    code, _, err = cli(capsys, "generate", "--family", "nope")
    assert code == 1 and "usage:" in err


def test_runtime_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("3 2\n1 2 1\n")
    assert cli(capsys, "solve", str(bad))[0] == 2
    assert cli(capsys, "solve", str(tmp_path / "missing.txt"))[0] == 2


def test_oracle_cap_exit_3(tmp_path, capsys):
    big = tmp_path / "big.txt"
    assert cli(capsys, "generate", "--family", "g05", "--n", "40", "-o", str(big))[0] == 0
    code, out, err = cli(capsys, "oracle", str(big))
    assert code == 3 and out == "" and "28" in err


def test_config_file(t2g5, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"restarts": 3, "beta": 0.4, "seed": 9}))
    code, out, _ = cli(capsys, "solve", str(t2g5), "--config", str(cfg))
    data = json.loads(out)
    assert code == 0 and data["restarts"] == 3 and data["seed"] == 9 and data["hyperparams"]["beta"] == 0.4
    # flags win over the file
    code, out, _ = cli(capsys, "solve", str(t2g5), "--config", str(cfg), "--restarts", "5")
    assert json.loads(out)["restarts"] == 5
    cfg.write_text(json.dumps({"not_a_flag": 1}))
    assert cli(capsys, "solve", str(t2g5), "--config", str(cfg))[0] == 1


def test_seed_from_environment(t2g5, capsys, monkeypatch):
    monkeypatch.setenv("LOCALSPIN_SEED", "42")
    code, out, _ = cli(capsys, "solve", str(t2g5), "--restarts", "2")
    assert json.loads(out)["seed"] == 42
    code, out, _ = cli(capsys, "solve", str(t2g5), "--restarts", "2", "--seed", "5")
    assert json.loads(out)["seed"] == 5
    monkeypatch.setenv("LOCALSPIN_SEED", "abc")
    assert cli(capsys, "solve", str(t2g5), "--restarts", "2")[0] == 1


def test_no_timing_output_is_byte_identical(t2g5, capsys):
    argv = ["solve", str(t2g5), "--restarts", "20", "--seed", "3", "--no-timing", "--threads"]
    _, a, _ = cli(capsys, *argv, "1")
    _, b, _ = cli(capsys, *argv, "4")
    assert a == b
    assert "wall_time_s" not in a


def test_bench_output_round_trips(capsys):
    argv = ["bench", "--family", "torus", "--dim", "2", "--side", "3", "--count", "2", "--trials", "2",
            "--restarts", "5", "--seed", "1"]
    code, out, _ = cli(capsys, *argv)
    assert code == 0
    rep = load_report_json(out)
    assert len(rep.records) == 2 and rep.entropy is not None
    code, out, _ = cli(capsys, *argv, "--format", "csv", "--no-timing")
    assert code == 0
    recs = load_records_csv(out)
    assert [r.instance_id for r in recs] == ["t2g3#1", "t2g3#2"]
    assert "time_to_solution" not in out.splitlines()[0]


def test_bench_instance_files(t2g5, capsys):
    code, out, _ = cli(capsys, "bench", str(t2g5), "--trials", "2", "--restarts", "5", "--no-timing")
    assert code == 0
    data = json.loads(out)
    assert data["records"][0]["n"] == 25 and "entropy" not in data


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "localspin", "generate", "--family", "g05", "--n", "5",
                           "--seed", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert parse_biqmac(proc.stdout).n == 5
