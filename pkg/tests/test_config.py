import json

import pytest

from rein2.config import (
    ConfigError,
    Mode,
    config_from_dict,
    load_config,
    with_updates,
)
from rein2.envs import EnvName


def test_minimal_config_gets_documented_defaults():
    cfg = config_from_dict({"env": "CartPole-v1", "mode": "rein2-ppo"})
    assert cfg.n_eval_episodes == 10
    assert cfg.rbv_fraction == 0.01
    assert cfg.seeds == (0, 1, 2)
    assert cfg.snapshot_steps == (75, 1000, 2500)
    assert cfg.outer_budget == 2500
    assert cfg.a_max == 5.0
    assert cfg.hyperparams.learning_rate == 3e-4
    assert cfg.hyperparams.entropy_coef == 0.0
    assert cfg.hyperparams.segment_length == 16


def test_algo_dependent_hyperparam_defaults():
    a2c = config_from_dict({"env": "CartPole-v1", "mode": "rein2-a2c"})
    assert a2c.hyperparams.learning_rate == 7e-4
    assert a2c.hyperparams.entropy_coef == 0.01
    override = config_from_dict(
        {"env": "CartPole-v1", "mode": "rein2-a2c", "hyperparams": {"learning_rate": 0.1}}
    )
    assert override.hyperparams.learning_rate == 0.1


def test_snapshot_defaults_per_env():
    acro = config_from_dict({"env": "Acrobot-v1", "mode": "rein2-ppo"})
    assert acro.snapshot_steps == (700, 3500, 10000)
    mc = config_from_dict({"env": "MountainCar-v0", "mode": "baseline-ppo"})
    assert mc.snapshot_steps == (250, 70000, 150000)
    assert mc.outer_budget == 150000


def test_inner_spec_and_mask_size():
    cfg = config_from_dict({"env": "CartPole-v1", "mode": "rein2-ppo"})
    assert cfg.inner_spec().layer_sizes == (4, 64, 64, 2)
    assert cfg.mask_size() == 47
    mc = config_from_dict({"env": "MountainCar-v0", "mode": "rein2-ppo"})
    assert mc.inner_spec().layer_sizes == (2, 64, 64, 3)
    assert mc.mask_size() == 46


def test_rejected_values():
    base = {"env": "CartPole-v1", "mode": "rein2-ppo"}
    with pytest.raises(ConfigError, match="rbv_fraction"):
        config_from_dict({**base, "rbv_fraction": 0.0})
    with pytest.raises(ConfigError, match="duplicates"):
        config_from_dict({**base, "seeds": [1, 1, 2]})
    with pytest.raises(ConfigError, match="nonempty"):
        config_from_dict({**base, "seeds": []})
    with pytest.raises(ConfigError, match="unknown config keys"):
        config_from_dict({**base, "rbv_frac": 0.01})
    with pytest.raises(ConfigError, match="hyperparams"):
        config_from_dict({**base, "hyperparams": {"lr": 1e-3}})
    with pytest.raises(ConfigError, match="env"):
        config_from_dict({"env": "Pong-v0", "mode": "rein2-ppo"})
    with pytest.raises(ConfigError, match="mode"):
        config_from_dict({"env": "CartPole-v1", "mode": "dqn"})
    with pytest.raises(ConfigError, match="required"):
        config_from_dict({"env": "CartPole-v1"})


def test_load_config_and_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"env": "CartPole-v1", "mode": "rein2-ppo", "outer_budget": 100}))
    cfg = load_config(path)
    assert cfg.outer_budget == 100
    cfg2 = load_config(path, overrides={"outer_budget": 7, "hyperparams": {"segment_length": 4}})
    assert cfg2.outer_budget == 7
    assert cfg2.hyperparams.segment_length == 4
    with pytest.raises(ConfigError, match="JSON"):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_with_updates_revalidates():
    cfg = config_from_dict({"env": "CartPole-v1", "mode": "rein2-ppo"})
    tweaked = with_updates(cfg, rbv_fraction=0.5)
    assert tweaked.rbv_fraction == 0.5
    assert tweaked.env is EnvName.CARTPOLE_V1
    with pytest.raises(ConfigError):
        with_updates(cfg, rbv_fraction=2.0)


def test_mode_predicates():
    assert Mode.REIN2_PPO.is_rein2 and Mode.REIN2_PPO.is_ppo
    assert Mode.REIN2_A2C.is_rein2 and not Mode.REIN2_A2C.is_ppo
    assert not Mode.BASELINE_PPO.is_rein2 and Mode.BASELINE_PPO.is_ppo
    assert not Mode.BASELINE_A2C.is_rein2 and not Mode.BASELINE_A2C.is_ppo
