"""Command-line behavior: exit codes, config merging, reproducible output."""

import json

import pytest

from bsdelattice.cli import main


def run(argv):
    return main(argv)


def test_solve_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "sol.csv"
    code = run(
        ["solve", "--steps", "2", "--driver", "quadratic", "--terminal", "endpoint", "--out", str(out)]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "time_index,node_id,Y,Z_1,dM"
    assert len(lines) == 8
    summary = json.loads(capsys.readouterr().out)
    assert summary["y0"] == pytest.approx(0.5, abs=1e-14)
    assert summary["driver"] == "quadratic"


def test_solve_without_out_streams_csv(capsys):
    code = run(["solve", "--steps", "2"])
    assert code == 0
    captured = capsys.readouterr().out
    assert captured.startswith("time_index,node_id,Y,Z_1,dM\n")


def test_identical_runs_are_bitwise_identical(tmp_path, monkeypatch):
    args = [
        "solve",
        "--steps",
        "6",
        "--driver",
        "exp",
        "--terminal",
        "maxpath",
        "--seed",
        "3",
    ]
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    monkeypatch.setenv("BSDELATTICE_WORKERS", "1")
    assert run(args + ["--out", str(first)]) == 0
    monkeypatch.setenv("BSDELATTICE_WORKERS", "7")
    assert run(args + ["--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_invalid_workers_variable_is_an_input_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BSDELATTICE_WORKERS", "many")
    assert run(["solve", "--steps", "2"]) == 2
    monkeypatch.setenv("BSDELATTICE_WORKERS", "0")
    assert run(["solve", "--steps", "2"]) == 2
    capsys.readouterr()


def test_config_file_supplies_options_and_flags_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"steps": 3, "driver": "abs", "terminal": "endpoint"}))
    out = tmp_path / "c.csv"
    assert run(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(out.read_text().strip().split("\n")) == 1 + 1 + 2 + 4 + 8
    out2 = tmp_path / "d.csv"
    assert run(["solve", "--config", str(cfg), "--steps", "2", "--out", str(out2)]) == 0
    assert len(out2.read_text().strip().split("\n")) == 1 + 1 + 2 + 4
    capsys.readouterr()


def test_unknown_config_key_is_an_input_error(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"stepz": 3}))
    assert run(["solve", "--config", str(cfg)]) == 2
    cfg2 = tmp_path / "worse.json"
    cfg2.write_text(json.dumps([1, 2]))
    assert run(["solve", "--config", str(cfg2)]) == 2
    capsys.readouterr()


def test_unknown_driver_is_an_input_error(capsys):
    assert run(["solve", "--driver", "cubic"]) == 2
    capsys.readouterr()


def test_duality_roundtrip_and_samples(tmp_path, capsys):
    out = tmp_path / "dual.csv"
    code = run(
        [
            "duality",
            "--steps",
            "2",
            "--driver",
            "quadratic",
            "--terminal",
            "endpoint",
            "--samples",
            "8",
            "--seed",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert out.read_text().startswith("node_id,primal,dual,gap,margin\n")
    summary = json.loads(capsys.readouterr().out)
    assert summary["samples"] == 8
    assert summary["sampled_min_gap"] >= -1e-9
    assert abs(summary["root_gap"]) <= 1e-9


def test_inadmissible_subgradient_control_is_a_property_failure(capsys):
    code = run(["duality", "--steps", "1", "--driver", "quadratic", "--terminal", "endpoint"])
    assert code == 1
    assert "property failure" in capsys.readouterr().err


def test_picard_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code = run(
        ["picard", "--steps", "4", "--driver", "linear:1,1", "--terminal", "endpoint", "--out", str(out)]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "p,dY_sup,dZ_l2,dM_sup"
    assert len(lines) > 2
    summary = json.loads(capsys.readouterr().out)
    assert summary["iterations"] == len(lines) - 1


def test_converge_requires_reference(tmp_path, capsys):
    assert run(["converge", "--steps-list", "4,8"]) == 2
    out = tmp_path / "conv.csv"
    code = run(
        [
            "converge",
            "--driver",
            "linear:1,1",
            "--terminal",
            "const:1",
            "--steps-list",
            "10,50,100",
            "--mode",
            "recombining",
            "--reference",
            "4.43656365691809",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "N,Y0,error,fitted_order"
    assert [row.split(",")[0] for row in lines[1:]] == ["10", "50", "100"]
    summary = json.loads(capsys.readouterr().out)
    assert summary["errors_decreasing"] is True


def test_approx_ladder(tmp_path, capsys):
    out = tmp_path / "ladder.csv"
    code = run(
        [
            "approx",
            "--steps",
            "6",
            "--driver",
            "quadratic",
            "--terminal",
            "digital",
            "--levels",
            "1,2,4",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "level,Y0,sup_increment,bmo,cauchy_bound_ok"
    assert len(lines) == 4
    summary = json.loads(capsys.readouterr().out)
    assert summary["monotone"] is True


def test_verify_reports_all_checks(tmp_path, capsys):
    code = run(["verify", "--steps", "4", "--driver", "exp"])
    assert code == 0
    text = capsys.readouterr().out
    assert "walk:moments PASS" in text
    assert "driver:convex-z PASS" in text
    assert "FAIL" not in text
