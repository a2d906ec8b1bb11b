import csv
import io
import json

import pytest

from gpumux.cli import main, resolve_scenario, shipped_scenarios
from gpumux.report import _flat, emit_report, to_csv, to_json, to_text
from gpumux.scenario import load_scenario
from gpumux.sim import run


@pytest.fixture(scope="module")
def single():
    return run(load_scenario(resolve_scenario("single_app")))


SMALL = {
    "name": "small", "seed": 2, "horizon": 6, "warmup": 0.5,
    "hardware": {"gpu": "16GiB", "pinned": "8GiB"},
    "apps": [
        {"name": "ui", "footprint": "6GiB",
         "generator": {"kind": "interactive", "interval": 1.0, "burst_kernels": 3, "kernel_ms": 20}},
        {"name": "job", "footprint": "12GiB", "generator": {"kind": "batch", "kernel_ms": 40}},
    ],
}


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.scn"
    p.write_text(json.dumps(SMALL, indent=2))
    return str(p)


def test_emit_is_byte_identical(single, tmp_path):
    for fmt in ("json", "csv", "text"):
        a = emit_report(single, fmt, tmp_path / f"a.{fmt}")
        b = emit_report(single, fmt)
        assert a == b == (tmp_path / f"a.{fmt}").read_text()


def test_json_round_trips(single):
    assert json.loads(to_json(single)) == json.loads(json.dumps(single))


def test_csv_row_count(single):
    rows = list(csv.reader(io.StringIO(to_csv(single))))
    assert rows[0] == ["run", "scope", "metric", "value"]
    per_app = sum(len(list(_flat(a))) for a in single["apps"].values())
    assert len(rows) == 1 + per_app + len(list(_flat(single["global"])))


def test_text_has_headline_metrics(single):
    text = to_text(single)
    for word in ("p50", "p95", "pinned peak", "norm. throughput", "app s"):
        assert word in text


def test_list_command(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.split()
    assert out == shipped_scenarios()
    assert "two_llms.scn" in out


def test_run_to_file(tmp_path, single):
    out = tmp_path / "r.json"
    assert main(["run", "--scenario", "single_app", "--out", str(out)]) == 0
    assert out.read_text() == to_json(single)


def test_run_stdout_text(capsys, small):
    assert main(["run", "--scenario", small, "--format", "text", "--check"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("scenario small")
    assert "app ui" in out and "app job" in out


def test_run_writes_logs(tmp_path, small):
    out = tmp_path / "r.csv"
    assert main(["run", "--scenario", small, "--format", "csv", "--out", str(out),
                 "--log", "transfers,sched"]) == 0
    transfers = (tmp_path / "r.transfers.csv").read_text().splitlines()
    assert transfers[0] == "time,block,src,dst,direction,bytes"
    assert len(transfers) > 1
    assert (tmp_path / "r.sched.csv").read_text().startswith("time,app,event")


def test_bad_log_kind(capsys, small):
    assert main(["run", "--scenario", small, "--log", "gpu"]) == 1
    assert "--log" in capsys.readouterr().err


def test_seed_override(tmp_path, small):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["run", "--scenario", small, "--seed", "9", "--out", str(a)])
    main(["run", "--scenario", small, "--seed", "9", "--out", str(b)])
    assert a.read_text() == b.read_text()
    assert json.loads(a.read_text())["seed"] == 9


def test_footprint_error_exit_code(tmp_path, capsys):
    d = json.loads(json.dumps(SMALL))
    d["apps"][1]["footprint"] = "40GiB"
    p = tmp_path / "bad.scn"
    p.write_text(json.dumps(d, indent=2))
    assert main(["run", "--scenario", str(p)]) == 1
    assert "apps[1].footprint" in capsys.readouterr().err


def test_malformed_json_exit_code(tmp_path, capsys):
    p = tmp_path / "broken.scn"
    p.write_text('{\n  "apps": [\n    {"name": "a",,}\n  ]\n}\n')
    assert main(["run", "--scenario", str(p)]) == 1
    err = capsys.readouterr().err
    assert "line 3" in err


def test_missing_scenario_exit_code(capsys):
    assert main(["run", "--scenario", "no_such_thing"]) == 1


def test_compare_matches_separate_runs(tmp_path, small):
    cmp_out = tmp_path / "cmp.json"
    assert main(["compare", "--scenario", small, "--policies", "nixie,uvm_rr_2",
                 "--out", str(cmp_out)]) == 0
    merged = json.loads(cmp_out.read_text())
    for token in ("nixie", "uvm_rr_2"):
        one = tmp_path / f"{token}.json"
        assert main(["run", "--scenario", small, "--policy", token, "--out", str(one)]) == 0
        assert merged["runs"][token] == json.loads(one.read_text())


def test_compare_parallel_same_as_serial(tmp_path, small):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["compare", "--scenario", small, "--policies", "nixie,uvm_rr_2", "--out", str(a)])
    main(["compare", "--scenario", small, "--policies", "nixie,uvm_rr_2", "--jobs", "2",
          "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_compare_text_has_one_column_per_policy(capsys, small):
    assert main(["compare", "--scenario", small, "--policies", "nixie,uvm_rr_2",
                 "--format", "text"]) == 0
    header = capsys.readouterr().out.splitlines()[2].split()
    assert header == ["metric", "nixie", "uvm_rr_2"]


def test_sweep(tmp_path, small):
    out = tmp_path / "sw.json"
    assert main(["sweep", "--scenario", small, "--sweep", "hardware.pinned=4GiB,8GiB",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert list(rep["runs"]) == ["hardware.pinned=4GiB", "hardware.pinned=8GiB"]


def test_sweep_bad_param(capsys, small):
    assert main(["sweep", "--scenario", small, "--sweep", "hardware.colour=1"]) == 1
    assert main(["sweep", "--scenario", small, "--sweep", "nothing"]) == 1


def test_validate_prints_defaults(capsys, small):
    assert main(["validate", "--scenario", small]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["policy"]["mlfq"]["levels"] == 4
    assert d["hardware"]["ipc_latency"] == 50e-6
