"""
Tests for experiment config parsing and validation
"""
from pathlib import Path

import pytest

from app.config.loader import apply_overrides, config_from_dict, parse_config, read_ini, serialize_config, write_config
from app.errors import ConfigError
from app.models.config import AlternativesSource, ExperimentConfig, Method, PurifierLoss

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_file_gets_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, "[experiment]\nmethod = ricl\n"))
    assert cfg.method == Method.RICL
    assert cfg.seeds == [0, 1, 2]
    assert cfg.stream.num_tasks == 5
    assert cfg.stream.delay_buffer_size == 200
    assert cfg.purifier.loss == PurifierLoss.GCE
    assert cfg.buffers.replay_clean_capacity == 800
    assert cfg.train.num_alternatives == 5
    assert cfg.model.init_scale == 0.2
    assert (cfg.purifier.lr, cfg.train.lr_ncl, cfg.train.lr_sft, cfg.train.lr_ipo) == (0.2, 0.02, 0.1, 0.1)
    assert cfg.train.alternatives_source == AlternativesSource.PRIMARY
    assert cfg.ablation.replay


def test_out_of_range_value_names_the_key(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, "[stream]\nnoise_rate = 1.5\n"))
    assert "noise_rate" in str(exc.value)
    assert exc.value.key == "stream.noise_rate"


def test_unknown_key_and_section_are_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, "[purifier]\nepochs = 2\nlearning_rate = 0.1\n"))
    assert "learning_rate" in str(exc.value)
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "[optimizer]\nlr = 0.1\n"))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "no section header\n"))


def test_serialized_config_parses_back_equal(tmp_path):
    cfg = config_from_dict({
        "method": "ricl",
        "seeds": "3,4",
        "task_order": "reverse",
        "ablation": {"ipo": False},
        "stream": {"num_tasks": 3, "classes_per_task": 2, "noise_rate": 0.4},
        "buffers": {"profile": "fewrel", "noisy_capacity": 10},
        "augment": {"alpha": 0.2},
    })
    path = write_config(cfg, tmp_path / "config.ini")
    assert parse_config(path) == cfg
    assert "task_order = 2,1,0" in serialize_config(cfg)


def test_bundled_configs_parse():
    for name in ("ricl_tacred", "ricl_fewrel", "seqft", "er", "finetune_rates"):
        cfg = parse_config(CONFIG_DIR / f"{name}.ini")
        assert isinstance(cfg, ExperimentConfig)


def test_task_order_keywords_and_permutations():
    assert ExperimentConfig(task_order="original").resolved_task_order() == [0, 1, 2, 3, 4]
    assert ExperimentConfig(task_order="reverse").resolved_task_order() == [4, 3, 2, 1, 0]
    assert ExperimentConfig(task_order="1,0,2,3,4").task_order == [1, 0, 2, 3, 4]
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"task_order": "0,0,1,2,3"})
    assert exc.value.key == "experiment.task_order"


def test_bad_task_order_in_a_file_names_the_key(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, "[experiment]\ntask_order = 0,1,2\n"))
    assert exc.value.key == "experiment.task_order"


@pytest.mark.parametrize("flag", ["tcp", "ncl", "ipo", "replay"])
def test_ablation_flags_require_ricl(flag):
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"method": "seqft", "ablation": {flag: False}})
    assert exc.value.key == f"ablation.{flag}"
    # leaving every flag on is allowed for any method
    assert config_from_dict({"method": "er", "ablation": {flag: True}}).method == Method.ER


def test_pipeline_flags_per_method():
    seqft = ExperimentConfig(method="seqft").pipeline_flags()
    assert not (seqft.purify or seqft.contrastive or seqft.preference or seqft.replay)
    er = ExperimentConfig(method="er").pipeline_flags()
    assert er.replay and not er.purify
    no_tcp = ExperimentConfig(ablation={"tcp": False}).pipeline_flags()
    assert not no_tcp.purify and no_tcp.contrastive and no_tcp.preference and no_tcp.replay
    no_replay = ExperimentConfig(ablation={"replay": False}).pipeline_flags()
    assert no_replay.purify and not no_replay.replay
    all_off = ExperimentConfig(ablation={"tcp": False, "ncl": False, "ipo": False, "replay": False})
    assert all_off.pipeline_flags() == ExperimentConfig(method="seqft").pipeline_flags()


def test_buffer_profiles_fill_unset_capacities():
    cfg = ExperimentConfig(buffers={"profile": "fewrel", "clean_capacity": 5})
    assert cfg.buffers.clean_capacity == 5
    assert cfg.buffers.noisy_capacity == 2000
    with pytest.raises(ConfigError):
        config_from_dict({"buffers": {"profile": "imagenet"}})


def test_apply_overrides():
    cfg = apply_overrides(ExperimentConfig(), {"stream.noise_rate": "0.4", "seeds": [7], "method": "er"})
    assert cfg.stream.noise_rate == 0.4
    assert cfg.seeds == [7]
    assert cfg.method == Method.ER
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"nonsense.key": 1})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"stream.noise_rate": -0.1})


def test_read_ini_keeps_key_case():
    data = read_ini("[experiment]\nmethod = er\n[train]\nlr_sft = 0.2\n")
    assert data == {"method": "er", "train": {"lr_sft": "0.2"}}
