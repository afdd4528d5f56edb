import json
import subprocess
import sys

import pytest

from cellroute import data_path
from cellroute.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_then_bnb(tmp_path, capsys):
    inst = tmp_path / "i.json"
    code, out, _ = run(capsys, "gen", data_path("eil51.tsp"), "--groups", 8, "-o", inst)
    assert code == 0 and "8eil51" in out
    code, out, _ = run(capsys, "bnb", inst, "--approach", 1)
    rep = json.loads(out)
    assert code == 0 and rep["approach"] == 1 and rep["optimal"] and len(rep["tours"]) == 4


def test_sync_with_smoothing(capsys):
    code, out, _ = run(capsys, "sync", data_path("crossing.json"), "--smooth")
    doc = json.loads(out)
    assert code == 0
    assert doc["cycle_cost"] == pytest.approx(6.0) and doc["smoothed_makespan"] == pytest.approx(4.0)


def test_sync_infeasible_exit_code(capsys, tmp_path):
    tours = tmp_path / "t.json"
    tours.write_text(json.dumps({"a1": [1, 3], "a2": [2, 4, 5]}))
    code, out, _ = run(capsys, "sync", data_path("unsyncable.json"), "--tours", tours)
    assert code == 2 and json.loads(out)["feasible"] is False


def test_schedule_and_plot(tmp_path, capsys):
    sched = tmp_path / "s.json"
    code, _, _ = run(capsys, "schedule", data_path("crossing.json"), "-o", sched)
    assert code == 0 and json.loads(sched.read_text())["makespan"] == pytest.approx(6.8)
    svg = tmp_path / "f.svg"
    code, out, err = run(capsys, "plot", data_path("crossing.json"), "--schedule", sched, "-o", svg)
    assert code == 0 and svg.read_text().startswith("<svg") and "warning" not in err


def test_solve(tmp_path, capsys):
    out_file = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", data_path("crossing.json"), "-o", out_file, "--max-iterations", 3)
    rep = json.loads(out_file.read_text())
    assert code == 0 and rep["best_makespan"] == pytest.approx(4.0) and rep["stop"] == "gap"


def test_errors_exit_one(tmp_path, capsys):
    code, _, err = run(capsys, "bnb", tmp_path / "missing.json")
    assert code == 1 and "error" in err
    with pytest.raises(SystemExit) as e:
        main(["bnb", "x.json", "--approach", "7"])
    assert e.value.code == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cellroute.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "solve" in proc.stdout
