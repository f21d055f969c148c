import csv

import pytest

from imcflow.cli import main

SYNTH = ["synth", "--d1", "60", "--d2", "50", "--n1", "6", "--n2", "5", "--r", "2", "--seed", "7"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_config_is_usage_error(tmp_path, capsys):
    missing = tmp_path / "missing.cfg"
    assert main(["solve", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("d1 = 10\nstep_size = 3\n")
    assert main(["solve", "--config", str(cfg)]) == 2
    assert "step_size" in capsys.readouterr().err


def test_invalid_solver_value_is_usage_error(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path)]) == 0
    assert main(["solve", "--in", str(tmp_path), "--p", "0.5", "--lam", "-1"]) == 2
    assert main(["solve", "--in", str(tmp_path), "--p", "0.5", "--phase3-iters", "x"]) == 2


def test_smoke_pipeline(tmp_path):
    w = tmp_path / "w"
    assert main(SYNTH + ["--out", str(w)]) == 0
    for name in ("x_left.csv", "x_right.csv", "u_star.csv", "v_star.csv"):
        assert (w / name).is_file()
    assert main(["solve", "--in", str(w), "--p", "0.5", "--seed", "7"]) == 0
    report = read_rows(w / "report.csv")[0]
    assert float(report["final_rel_error"]) < 1e-6
    assert (w / "trace.csv").is_file() and (w / "u_hat.csv").is_file()


def test_solve_from_saved_observations(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path), "--m", "1500"]) == 0
    assert (tmp_path / "obs.txt").is_file()
    assert main(["solve", "--in", str(tmp_path), "--out", str(tmp_path / "o")]) == 0
    assert read_rows(tmp_path / "o" / "report.csv")[0]["success"] == "1"


def test_flags_override_config(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"in = {tmp_path}\np = 0.5\nphase3-iters = 3\nseed = 1\n")
    assert main(["solve", "--config", str(cfg), "--phase3-iters", "5", "--out", str(tmp_path / "o")]) == 0
    assert read_rows(tmp_path / "o" / "report.csv")[0]["phase3_iters"] == "5"
    echo = (tmp_path / "o" / "config.echo").read_text()
    assert "phase3_iters = 5" in echo


def test_rank_alias_in_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("d1 = 30\nd2 = 30\nn1 = 4\nn2 = 4\nrank = 2\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "w")]) == 0
    cfg.write_text("d1 = 30\nr = 2\nrank = 2\n")
    assert main(["synth", "--config", str(cfg)]) == 2


def test_data_errors_exit_3(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path)]) == 0
    (tmp_path / "x_left.csv").write_text("# imc-dense v1 rows=2 cols=2\n1.0,2.0\n")
    assert main(["solve", "--in", str(tmp_path), "--p", "0.5"]) == 3
    assert main(["solve", "--in", str(tmp_path / "nowhere"), "--p", "0.5"]) == 3


def test_solver_error_exit_4(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path)]) == 0
    assert main(["solve", "--in", str(tmp_path), "--p", "0.5", "--tau", "1e6", "--phase3-iters", "200"]) == 4


def test_solve_rerun_is_byte_identical_and_echo_reproduces(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path)]) == 0
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    args = ["solve", "--in", str(tmp_path), "--p", "0.4", "--seed", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("trace.csv", "report.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["solve", "--config", str(a / "config.echo"), "--out", str(c)]) == 0
    assert (a / "trace.csv").read_bytes() == (c / "trace.csv").read_bytes()


def test_phase_transition_smoke_grid_twice_identical(tmp_path):
    args = ["phase-transition", "--d1", "40", "--d2", "40", "--n1", "6", "--n2", "6", "--r", "2",
            "--ratios", "2,8", "--trials", "2", "--seed", "1", "--workers", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    pa = (tmp_path / "a" / "phase_transition.csv").read_bytes()
    assert pa == (tmp_path / "b" / "phase_transition.csv").read_bytes()
    rows = read_rows(tmp_path / "a" / "phase_transition.csv")
    assert [r["m_over_nr"] for r in rows] == ["2.0", "8.0"]


@pytest.mark.slow
def test_phase_transition_smoke_preset_twice_identical(tmp_path):
    args = ["phase-transition", "--preset", "smoke", "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "phase_transition.csv").read_bytes() == \
        (tmp_path / "b" / "phase_transition.csv").read_bytes()


def test_convergence_and_init_sweep_commands(tmp_path):
    conv = ["convergence", "--d1", "50", "--d2", "50", "--n1", "6", "--n2", "6", "--r", "2", "--p", "0.5",
            "--out", str(tmp_path / "c")]
    assert main(conv) == 0
    rows = read_rows(tmp_path / "c" / "convergence.csv")
    assert float(rows[-1]["relative_error"]) < 1e-6
    sweep = ["init-sweep", "--d1", "30", "--d2", "30", "--n1", "5", "--n2", "5", "--r", "2",
             "--sizes", "100,400", "--trials", "2", "--workers", "1", "--out", str(tmp_path / "s")]
    assert main(sweep) == 0
    assert len(read_rows(tmp_path / "s" / "init_sweep.csv")) == 2


def test_missing_required_setting(capsys):
    assert main(["convergence", "--d1", "50"]) == 2
    assert "missing" in capsys.readouterr().err


def test_unknown_preset():
    assert main(["phase-transition", "--preset", "huge"]) == 2
