"""GAN training with a two-headed U-Net discriminator.

The discriminator scores every image twice: once globally (one logit per
image, from the encoder head) and once locally (one logit per pixel, from
the decoder head). CutMix mixing of real and generated images supervises
and consistency-regularizes the per-pixel head.
"""

from pxgan.config import (
    DataConfig,
    EvalConfig,
    ExperimentConfig,
    LossConfig,
    ModelConfig,
    TrainConfig,
    num_resolution_stages,
    validate,
)

__all__ = [
    "DataConfig",
    "EvalConfig",
    "ExperimentConfig",
    "LossConfig",
    "ModelConfig",
    "TrainConfig",
    "num_resolution_stages",
    "validate",
]

__version__ = "0.1.0"
