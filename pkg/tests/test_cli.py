import json
import subprocess
import sys
from pathlib import Path

import pytest

from dlpa.cli import main
from dlpa.config import ConfigError, parse_config


def test_defaults_per_env():
    cfg = parse_config()
    assert cfg["env"] == "hard_move"
    assert cfg["horizon"] == 5
    assert cfg["population"] == 1000
    assert cfg["elites"] == 400
    assert cfg["iterations"] == 6
    assert cfg["temperature"] == 0.5
    assert cfg["gamma"] == 0.99
    assert cfg["lr"] == 3e-4
    assert cfg["lam1"] == 1.0 and cfg["lam2"] == 0.5 and cfg["lam3"] == 1.0
    assert cfg["batch_size"] == 128
    assert cfg["steps_per_update"] == 1
    assert cfg["buffer_capacity"] == 1_000_000
    cfg_p = parse_config(overrides=["env=platform"])
    assert cfg_p["horizon"] == 10


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("# nothing here\n")
    cfg = parse_config(str(p))
    assert cfg["population"] == 1000


def test_override_echoed(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("[env]\nenv = platform\n")
    cfg = parse_config(str(p), overrides=["horizon=8"])
    assert cfg["horizon"] == 8
    assert "horizon = 8" in cfg.echo_text()


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("warp_speed = 9\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config(str(p))


def test_type_error_rejected():
    with pytest.raises(ConfigError, match="bad value"):
        parse_config(overrides=["population=many"])


def test_constraint_violation_rejected():
    with pytest.raises(ConfigError):
        parse_config(overrides=["elites=2000", "population=1000"])


def test_bad_env_choice_rejected():
    with pytest.raises(ConfigError):
        parse_config(overrides=["env=half_field_offense"])


TINY = [
    "--set", "population=16", "--set", "elites=4", "--set", "iterations=2",
    "--set", "horizon=2", "--set", "warmup_steps=5", "--set", "batch_size=8",
    "--set", "eval_interval=10", "--set", "eval_episodes=1",
    "--set", "hidden=8", "--set", "latent_dim=4",
]


def test_train_zero_steps_header_only(tmp_path):
    rc = main(["train", "--out", str(tmp_path), "--seed", "1",
               "--set", "total_steps=0"] + TINY)
    assert rc == 0
    lines = (tmp_path / "train.csv").read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("step,")
    assert (tmp_path / "config_resolved.cfg").exists()
    assert (tmp_path / "model_final.npz").exists()


def test_train_deterministic_csv(tmp_path):
    def run(sub):
        out = tmp_path / sub
        rc = main(["train", "--out", str(out), "--seed", "7",
                   "--set", "total_steps=25"] + TINY)
        assert rc == 0
        return out

    def strip_wall(path):
        rows = (path / "train.csv").read_text().splitlines()
        return ["," .join(r.split(",")[:-1]) for r in rows]

    a, b = run("a"), run("b")
    assert strip_wall(a) == strip_wall(b)
    assert (a / "eval.csv").read_text() == (b / "eval.csv").read_text()


def test_plan_emits_one_row_per_iteration(tmp_path):
    rc = main(["plan", "--out", str(tmp_path), "--seed", "3",
               "--set", "iterations=6", "--set", "population=32",
               "--set", "elites=8", "--set", "checkpoint=oracle"])
    assert rc == 0
    lines = (tmp_path / "plan_iterations.csv").read_text().splitlines()
    assert lines[0] == "iteration,best_return,mean_return,entropy,sigma_mean"
    assert len(lines) == 7


def test_eval_oracle_summary(tmp_path):
    rc = main(["eval", "--out", str(tmp_path), "--seed", "2",
               "--set", "checkpoint=oracle", "--set", "episodes=2",
               "--set", "population=64", "--set", "elites=16",
               "--set", "iterations=3"])
    assert rc == 0
    stats = json.loads((tmp_path / "eval_summary.json").read_text())
    assert set(stats) == {"episodes", "mean_return", "std_return", "success_rate"}
    assert stats["episodes"] == 2


def test_eval_checkpoint_roundtrip(tmp_path):
    out1 = tmp_path / "train"
    rc = main(["train", "--out", str(out1), "--seed", "5",
               "--set", "total_steps=15", "--set", "save_checkpoints=false"] + TINY)
    assert rc == 0
    out2 = tmp_path / "eval"
    rc = main(["eval", "--out", str(out2), "--seed", "5",
               "--set", f"checkpoint={out1 / 'model_final.npz'}",
               "--set", "episodes=1"] + TINY)
    assert rc == 0


def test_eval_checkpoint_env_mismatch(tmp_path, capsys):
    out1 = tmp_path / "train"
    rc = main(["train", "--out", str(out1), "--seed", "5",
               "--set", "total_steps=15", "--set", "save_checkpoints=false"] + TINY)
    assert rc == 0
    rc = main(["eval", "--out", str(tmp_path / "e"), "--set", "env=platform",
               "--set", f"checkpoint={out1 / 'model_final.npz'}"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_diagnose_oracle_all_pass(tmp_path):
    rc = main(["diagnose", "--out", str(tmp_path), "--seed", "4",
               "--set", "env=linear", "--set", "checkpoint=oracle",
               "--set", "horizon=3", "--set", "diag_rollouts=64",
               "--set", "diag_lipschitz_samples=64", "--set", "diag_error_samples=128",
               "--set", "diag_pool_states=128", "--set", "diag_regret_rollouts=64",
               "--set", "population=32", "--set", "elites=8"])
    assert rc == 0
    report = (tmp_path / "bound_report.txt").read_text()
    assert "overall: pass" in report
    assert (tmp_path / "bound_report.csv").read_text().startswith("kind,n,")


def test_ablate_unknown_axis(tmp_path, capsys):
    rc = main(["ablate", "gravity", "--out", str(tmp_path)])
    assert rc == 1
    assert "unknown ablation axis" in capsys.readouterr().err


def test_ablate_shooting_tiny(tmp_path):
    rc = main(["ablate", "shooting", "--out", str(tmp_path), "--seed", "1",
               "--set", "total_steps=12", "--set", "ablate_seeds=1",
               "--set", "eval_interval=6", "--set", "eval_episodes=1"] + TINY[:-8] + TINY[8:])
    assert rc == 0
    csv = (tmp_path / "ablate_shooting.csv").read_text().splitlines()
    assert csv[0] == "axis,variant,seed,step,mean_return,std_return,success_rate"
    variants = {line.split(",")[1] for line in csv[1:]}
    assert variants == {"mppi", "random_shooting"}


def test_ablate_reward_heads_tiny(tmp_path):
    rc = main(["ablate", "reward_heads", "--out", str(tmp_path), "--seed", "2",
               "--set", "env=catch_point", "--set", "total_steps=12",
               "--set", "ablate_seeds=1", "--set", "eval_interval=6",
               "--set", "eval_episodes=1"] + TINY)
    assert rc == 0
    csv = (tmp_path / "ablate_reward_heads.csv").read_text().splitlines()
    variants = {line.split(",")[1] for line in csv[1:]}
    assert variants == {"two_predictors", "unified"}


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "dlpa.cli", "train", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "--config" in proc.stdout
