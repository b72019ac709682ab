import dataclasses

import pytest
import torch

from pxgan.config import (
    DataConfig,
    EvalConfig,
    ExperimentConfig,
    LossConfig,
    ModelConfig,
    TrainConfig,
)


def tiny_config(**overrides) -> ExperimentConfig:
    """Small, fast experiment config for trainer-level tests."""
    cfg = ExperimentConfig(
        model=ModelConfig(image_size=16, ch=2, latent_dim=8, num_classes=0),
        loss=LossConfig(),
        train=TrainConfig(batch_size=4, total_iterations=3, pmix_warmup_epochs=2,
                          eval_every=2, checkpoint_every=2, seed=7),
        data=DataConfig(source="synth", n_samples=32, num_classes=0),
        eval=EvalConfig(fid_samples=16, eval_batch_size=8),
    )
    for key, value in overrides.items():
        section, field = key.split("__")
        group = getattr(cfg, section)
        if not any(f.name == field for f in dataclasses.fields(group)):
            raise KeyError(key)
        setattr(group, field, value)
    return cfg


@pytest.fixture
def rng() -> torch.Generator:
    return torch.Generator().manual_seed(1234)
