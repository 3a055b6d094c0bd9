import os
import subprocess
import sys

import pytest

from aeroarm.cli import main

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
REF = os.path.join(CONFIGS, "reference.cfg")


def test_plan_ok(tmp_path, capsys):
    assert main(["plan", "--config", REF, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "plan.csv").exists() and (tmp_path / "corridor.csv").exists()
    assert "min TTC" in capsys.readouterr().out


def test_plan_with_obstacles(tmp_path):
    cfg = os.path.join(CONFIGS, "obstacles.cfg")
    assert main(["plan", "--config", cfg, "--out", str(tmp_path)]) == 0


def test_blocked_mission_exits_3(tmp_path, capsys):
    cfg = os.path.join(CONFIGS, "blocked.cfg")
    assert main(["plan", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "blocking index 0" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("arm.wings = 2\n")
    assert main(["plan", "--config", str(bad)]) == 2
    assert main(["plan", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["train", "--config", REF, "--lr", "5", "--out", str(tmp_path)]) == 2
    assert main(["train", "--config", REF, "--seed", "-1", "--out", str(tmp_path)]) == 2
    # eval without a trained table
    assert main(["eval", "--config", REF, "--out", str(tmp_path / "empty")]) == 2


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--config", REF, "--axis", "nope"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["plan"])
    assert exc.value.code == 2


def test_train_one_episode_then_eval(tmp_path):
    args = ["--config", REF, "--episodes", "1", "--out", str(tmp_path)]
    assert main(["train", *args]) == 0
    for name in ("qtable.bin", "learning_curve.csv", "episode_report.csv"):
        assert (tmp_path / name).exists()
    assert len((tmp_path / "learning_curve.csv").read_text().splitlines()) == 2
    assert main(["eval", *args]) == 0
    assert (tmp_path / "eval_report.csv").read_text() == \
        (tmp_path / "episode_report.csv").read_text()


def test_train_is_byte_deterministic(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--config", REF, "--episodes", "50", "--seed", "7",
                     "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "aeroarm", "plan", "--config", REF,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
