"""Central validated configuration.

Every other module reads its hyperparameters from the dataclasses defined
here. Configs are plain dataclasses; nothing is checked at construction
time so tests can build deliberately off-contract instances. ``validate``
collects *all* invariant violations instead of stopping at the first one.

The on-disk format is an INI file with one section per config group
(``[model]``, ``[loss]``, ``[train]``, ``[data]``, ``[eval]``). CLI
overrides use ``section.key=value`` strings. The fully resolved text is
embedded verbatim in every checkpoint and metrics file so a run can always
be reproduced from its artifacts.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

LATENT_DISTRIBUTIONS = ("uniform_pm1", "standard_normal")
ADVERSARIAL_VARIANTS = ("non_saturating", "hinge")
DATA_SOURCES = ("synth", "folder")


class ConfigError(ValueError):
    """Raised by validate(); carries the complete list of violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class ModelConfig:
    """Network shapes shared by the generator and the discriminator.

    ``ch`` is the base channel multiplier: every stage width is a small
    integer multiple of it. ``num_classes == 0`` means unconditional
    (no class embeddings are built anywhere).
    """

    image_size: int = 32
    channels: int = 3
    ch: int = 16
    latent_dim: int = 64
    num_classes: int = 0
    use_spectral_norm: bool = True
    latent_distribution: str = "uniform_pm1"


@dataclass
class LossConfig:
    """Objective selection and term weighting.

    ``use_consistency`` requires both ``use_cutmix`` and
    ``use_decoder_head``: the consistency penalty is defined on decoder
    outputs of CutMix batches. The hinge/non-saturating pairing with the
    regularizers is advisory, not enforced.
    """

    adversarial_variant: str = "non_saturating"
    lambda_consistency: float = 1.0
    use_decoder_head: bool = True
    use_cutmix: bool = True
    use_consistency: bool = True


@dataclass
class TrainConfig:
    """Optimization loop hyperparameters."""

    batch_size: int = 32
    lr_g: float = 1e-4
    lr_d: float = 5e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.999
    total_iterations: int = 2000
    ema_decay: float = 0.9999
    pmix_max: float = 0.5
    pmix_warmup_epochs: int = 10
    seed: int = 0
    eval_every: int = 500
    checkpoint_every: int = 1000


@dataclass
class DataConfig:
    """Dataset selection: a procedurally generated shapes set or an image folder."""

    source: str = "synth"
    root: str = ""
    n_samples: int = 2000
    num_classes: int = 0


@dataclass
class EvalConfig:
    """Evaluation protocol knobs (sample counts for the proxy metrics)."""

    fid_samples: int = 512
    eval_batch_size: int = 64
    is_classes: int = 10


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def num_resolution_stages(image_size: int) -> int:
    """Number of 2x resolution stages between ``image_size`` and the 4x4 bottleneck.

    Accepts any power of two >= 8 (8 is the smallest size with one stage;
    config validation enforces the stricter >= 16 floor for training runs).
    """
    if not _is_power_of_two(image_size) or image_size < 8:
        raise ValueError(f"invalid image_size {image_size}: need a power of two >= 8")
    return image_size.bit_length() - 3  # log2(image_size) - 2


def violations(cfg: ExperimentConfig) -> list[str]:
    """Collect every broken invariant; empty list means the config is valid."""
    errs: list[str] = []
    m, l, t, d, e = cfg.model, cfg.loss, cfg.train, cfg.data, cfg.eval

    if not _is_power_of_two(m.image_size):
        errs.append(f"model.image_size not power of two: {m.image_size}")
    elif m.image_size < 16:
        errs.append(f"model.image_size must be >= 16, got {m.image_size}")
    if m.channels < 1:
        errs.append(f"model.channels must be >= 1, got {m.channels}")
    if m.ch < 1:
        errs.append(f"model.ch must be >= 1, got {m.ch}")
    if m.latent_dim < 1:
        errs.append(f"model.latent_dim must be >= 1, got {m.latent_dim}")
    if m.num_classes < 0:
        errs.append(f"model.num_classes must be >= 0, got {m.num_classes}")
    if m.latent_distribution not in LATENT_DISTRIBUTIONS:
        errs.append(
            f"model.latent_distribution must be one of {LATENT_DISTRIBUTIONS}, "
            f"got {m.latent_distribution!r}"
        )

    if l.adversarial_variant not in ADVERSARIAL_VARIANTS:
        errs.append(
            f"loss.adversarial_variant must be one of {ADVERSARIAL_VARIANTS}, "
            f"got {l.adversarial_variant!r}"
        )
    if l.lambda_consistency < 0:
        errs.append(f"loss.lambda_consistency must be >= 0, got {l.lambda_consistency}")
    if l.use_consistency and not l.use_cutmix:
        errs.append("loss.use_consistency requires loss.use_cutmix (consistency requires cutmix)")
    if l.use_consistency and not l.use_decoder_head:
        errs.append("loss.use_consistency requires loss.use_decoder_head")

    if t.batch_size < 1:
        errs.append(f"train.batch_size must be >= 1, got {t.batch_size}")
    if t.lr_g <= 0:
        errs.append(f"train.lr_g must be > 0, got {t.lr_g}")
    if t.lr_d <= 0:
        errs.append(f"train.lr_d must be > 0, got {t.lr_d}")
    if not 0.0 <= t.ema_decay < 1.0:
        errs.append(f"train.ema_decay must be in [0, 1), got {t.ema_decay}")
    if not 0.0 <= t.pmix_max <= 1.0:
        errs.append(f"train.pmix_max must be in [0, 1], got {t.pmix_max}")
    if t.pmix_warmup_epochs < 1:
        errs.append(f"train.pmix_warmup_epochs must be >= 1, got {t.pmix_warmup_epochs}")
    if t.total_iterations < 0:
        errs.append(f"train.total_iterations must be >= 0, got {t.total_iterations}")
    if t.eval_every < 1:
        errs.append(f"train.eval_every must be >= 1, got {t.eval_every}")
    if t.checkpoint_every < 1:
        errs.append(f"train.checkpoint_every must be >= 1, got {t.checkpoint_every}")

    if d.source not in DATA_SOURCES:
        errs.append(f"data.source must be one of {DATA_SOURCES}, got {d.source!r}")
    if d.source == "folder" and not d.root:
        errs.append("data.root is required when data.source is 'folder'")
    if d.source == "synth" and d.n_samples < 1:
        errs.append(f"data.n_samples must be >= 1, got {d.n_samples}")
    if d.num_classes != m.num_classes:
        errs.append(
            f"data.num_classes ({d.num_classes}) must match model.num_classes ({m.num_classes})"
        )

    if e.fid_samples < 2:
        errs.append(f"eval.fid_samples must be >= 2, got {e.fid_samples}")
    if e.eval_batch_size < 1:
        errs.append(f"eval.eval_batch_size must be >= 1, got {e.eval_batch_size}")
    if e.is_classes < 2:
        errs.append(f"eval.is_classes must be >= 2, got {e.is_classes}")

    return errs


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Return ``cfg`` unchanged iff valid; otherwise raise ConfigError with all violations.

    Idempotent: validating an already validated config is a no-op.
    """
    errs = violations(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


# ---------------------------------------------------------------------------
# INI serialization

_SECTIONS = ("model", "loss", "train", "data", "eval")


def to_text(cfg: ExperimentConfig) -> str:
    """Render the config as canonical INI text (stable key order)."""
    parser = configparser.ConfigParser()
    for section in _SECTIONS:
        group = getattr(cfg, section)
        parser[section] = {
            f.name: _format_value(getattr(group, f.name)) for f in dataclasses.fields(group)
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse_value(text: str, target_type: type):
    if target_type is bool:
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def from_text(text: str) -> ExperimentConfig:
    """Parse INI text; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError([f"unknown config section [{section}]"])
        group = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(group)}
        for key, raw in parser[section].items():
            if key not in names:
                raise ConfigError([f"unknown config key {section}.{key}"])
            setattr(group, key, _parse_value(raw, type(getattr(group, key))))
    return cfg


def load(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` strings in place; returns cfg for chaining."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError([f"override must look like section.key=value, got {item!r}"])
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError([f"unknown config section {section!r} in override {item!r}"])
        group = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(group)}
        if key not in names:
            raise ConfigError([f"unknown config key {section}.{key}"])
        setattr(group, key, _parse_value(raw, type(getattr(group, key))))
    return cfg
