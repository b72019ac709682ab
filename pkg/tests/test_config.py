import pytest

from pxgan import config as config_mod
from pxgan.config import (
    ConfigError,
    ExperimentConfig,
    LossConfig,
    ModelConfig,
    num_resolution_stages,
    validate,
    violations,
)


def test_default_config_is_valid():
    cfg = ExperimentConfig()
    assert violations(cfg) == []


def test_accepts_desk_scale_values():
    cfg = ExperimentConfig(model=ModelConfig(image_size=32, ch=16, num_classes=0))
    assert validate(cfg) is cfg


def test_rejects_non_power_of_two_image_size():
    cfg = ExperimentConfig(model=ModelConfig(image_size=48))
    errs = violations(cfg)
    assert any("not power of two" in e for e in errs)


def test_consistency_requires_cutmix():
    cfg = ExperimentConfig(loss=LossConfig(use_consistency=True, use_cutmix=False))
    errs = violations(cfg)
    assert any("consistency requires cutmix" in e for e in errs)


def test_collects_all_violations_not_just_first():
    cfg = ExperimentConfig()
    cfg.model.image_size = 48
    cfg.model.ch = 0
    cfg.train.lr_g = -1.0
    cfg.loss.use_consistency = True
    cfg.loss.use_cutmix = False
    errs = violations(cfg)
    assert len(errs) >= 4
    with pytest.raises(ConfigError) as exc_info:
        validate(cfg)
    assert len(exc_info.value.violations) == len(errs)


def test_validate_is_idempotent():
    cfg = ExperimentConfig()
    assert validate(validate(cfg)) is cfg


def test_num_resolution_stages_values():
    assert num_resolution_stages(256) == 6
    assert num_resolution_stages(32) == 3
    assert num_resolution_stages(16) == 2
    with pytest.raises(ValueError):
        num_resolution_stages(48)
    with pytest.raises(ValueError):
        num_resolution_stages(4)


def test_num_resolution_stages_doubling_property():
    for size in (16, 32, 64, 128, 256, 512):
        assert num_resolution_stages(2 * size) == num_resolution_stages(size) + 1


def test_ini_round_trip():
    cfg = ExperimentConfig()
    cfg.model.image_size = 64
    cfg.model.latent_distribution = "standard_normal"
    cfg.loss.adversarial_variant = "hinge"
    cfg.train.lr_d = 3e-4
    cfg.data.num_classes = 3
    cfg.model.num_classes = 3
    text = config_mod.to_text(cfg)
    assert config_mod.from_text(text) == cfg
    # canonical text is stable under a second round trip
    assert config_mod.to_text(config_mod.from_text(text)) == text


def test_overrides():
    cfg = ExperimentConfig()
    config_mod.apply_overrides(cfg, ["model.image_size=64", "train.lr_g=0.002",
                                     "loss.use_cutmix=false"])
    assert cfg.model.image_size == 64
    assert cfg.train.lr_g == 0.002
    assert cfg.loss.use_cutmix is False
    with pytest.raises(ConfigError):
        config_mod.apply_overrides(cfg, ["model.bogus=1"])
    with pytest.raises(ConfigError):
        config_mod.apply_overrides(cfg, ["nonsense"])


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_mod.from_text("[model]\nbogus = 3\n")
    with pytest.raises(ConfigError):
        config_mod.from_text("[mystery]\nx = 1\n")
