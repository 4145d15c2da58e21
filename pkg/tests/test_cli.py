import json

from rein2.cli import main


def test_selftest_passes():
    assert main(["selftest"]) == 0


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"env": "CartPole-v1", "mode": "rein2-ppo", "rbv_fraction": 0}))
    assert main(["train-rein2", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_train_rein2_writes_artifacts(tmp_path):
    code = main(
        [
            "train-rein2",
            "--algo", "ppo",
            "--env", "CartPole-v1",
            "--outer-budget", "5",
            "--n-eval-episodes", "2",
            "--seeds", "0,1",
            "--segment-length", "4",
            "--out", str(tmp_path / "runs"),
        ]
    )
    assert code == 0
    out = tmp_path / "runs"
    assert (out / "CartPole-v1_rein2-ppo_seed0.csv").exists()
    assert (out / "CartPole-v1_rein2-ppo_seed1.csv").exists()
    assert (out / "CartPole-v1_rein2-ppo.config.json").exists()
    assert (out / "CartPole-v1_rein2-ppo.curve.tsv").exists()


def test_report_renders_table(tmp_path, capsys):
    out = tmp_path / "runs"
    main(
        [
            "train-baseline",
            "--algo", "a2c",
            "--env", "MountainCar-v0",
            "--outer-budget", "50",
            "--eval-cadence", "25",
            "--n-eval-episodes", "2",
            "--seeds", "0",
            "--out", str(out),
        ]
    )
    capsys.readouterr()
    code = main(
        [
            "report",
            str(out / "MountainCar-v0_baseline-a2c_seed0.csv"),
            "--steps", "25,50",
            "--out-tsv", str(tmp_path / "table.tsv"),
        ]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "step 25" in text and "step 50" in text
    assert (tmp_path / "table.tsv").exists()
