"""Alternating generator/discriminator optimization with Adam and EMA weights.

Determinism contract: given the same config, seed, and dataset, two runs
produce bit-identical state, and resuming from a checkpoint continues the
uninterrupted trajectory exactly. All stochastic draws in the training
path go through one explicit torch.Generator whose state is checkpointed;
evaluation draws from throwaway generators seeded by (seed, iteration) so
it never perturbs the training stream. Data order is a pure function of
(seed, epoch).
"""

from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path

import torch
from torch.optim import Adam

from pxgan import config as config_mod
from pxgan.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from pxgan.config import ExperimentConfig
from pxgan.cutmix import build_cutmix_batch, pmix_schedule
from pxgan.data import Batch, Dataset, epoch_permutation
from pxgan.discriminator import UNetDiscriminator
from pxgan.evaluation import FeatureExtractor, compute_fid, inception_style_score
from pxgan.generator import Generator, LatentBatch, sample_latent
from pxgan.losses import (
    DiscriminatorLossBreakdown,
    GeneratorLossBreakdown,
    consistency_loss,
    cutmix_supervision_loss,
    dec_d_loss,
    enc_d_loss,
    g_loss,
)

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """A loss term went NaN/inf; a diagnostic snapshot is written before raising."""


def ema_update(ema: dict[str, torch.Tensor], current: dict[str, torch.Tensor],
               decay: float) -> None:
    """In-place decay*ema + (1-decay)*current on float entries; others are copied."""
    if set(ema) != set(current):
        raise ValueError("EMA and current state have different tensor names")
    with torch.no_grad():
        for name, target in current.items():
            slot = ema[name]
            if slot.shape != target.shape:
                raise ValueError(f"shape mismatch for {name}: {slot.shape} vs {target.shape}")
            if slot.is_floating_point():
                slot.mul_(decay).add_(target, alpha=1.0 - decay)
            else:
                slot.copy_(target)


def _sample_z(n: int, cfg, rng: torch.Generator) -> torch.Tensor:
    if cfg.latent_distribution == "uniform_pm1":
        return torch.rand(n, cfg.latent_dim, generator=rng) * 2.0 - 1.0
    return torch.randn(n, cfg.latent_dim, generator=rng)


class Trainer:
    def __init__(self, cfg: ExperimentConfig, dataset: Dataset):
        config_mod.validate(cfg)
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        if cfg.train.batch_size > len(dataset):
            raise ValueError("batch_size exceeds dataset size")
        self.cfg = cfg
        self.dataset = dataset
        self.iteration = 0

        torch.manual_seed(cfg.train.seed)  # weight init stream
        self.g = Generator(cfg.model)
        self.d = UNetDiscriminator(cfg.model)
        self.ema = {k: v.detach().clone() for k, v in self.g.state_dict().items()}
        self.opt_g = Adam(self.g.parameters(), lr=cfg.train.lr_g,
                          betas=(cfg.train.adam_beta1, cfg.train.adam_beta2))
        self.opt_d = Adam(self.d.parameters(), lr=cfg.train.lr_d,
                          betas=(cfg.train.adam_beta1, cfg.train.adam_beta2))
        self.rng = torch.Generator().manual_seed(cfg.train.seed)

        self._epoch_index: int | None = None
        self._epoch_order = None

    # ------------------------------------------------------------------
    # data order

    @property
    def batches_per_epoch(self) -> int:
        return len(self.dataset) // self.cfg.train.batch_size

    def epoch_float(self, iteration: int | None = None) -> float:
        it = self.iteration if iteration is None else iteration
        return it * self.cfg.train.batch_size / len(self.dataset)

    def _batch_for_iteration(self, iteration: int) -> Batch:
        bs = self.cfg.train.batch_size
        epoch = iteration // self.batches_per_epoch
        pos = iteration % self.batches_per_epoch
        if self._epoch_index != epoch:
            self._epoch_order = epoch_permutation(len(self.dataset), self.cfg.train.seed, epoch)
            self._epoch_index = epoch
        idx = torch.from_numpy(self._epoch_order[pos * bs:(pos + 1) * bs].copy())
        images = self.dataset.images[idx]
        y = self.dataset.labels[idx] if self.dataset.labels is not None else None
        return Batch(images=images, y=y, class_groups=None)

    # ------------------------------------------------------------------
    # one optimization step

    def train_step(self, batch: Batch) -> tuple[DiscriminatorLossBreakdown, GeneratorLossBreakdown]:
        cfg = self.cfg
        loss_cfg = cfg.loss
        variant = loss_cfg.adversarial_variant
        x, y = batch.images, batch.y
        n = x.shape[0]

        # --- discriminator update ---
        z = _sample_z(n, cfg.model, self.rng)
        y_fake = y  # conditional mode mixes within class, so fakes reuse the real labels
        with torch.no_grad():
            fake = self.g(LatentBatch(z=z, y=y_fake))
        score_real = self.d(x, y)
        score_fake = self.d(fake, y_fake)

        zero = torch.zeros(())
        enc_term = enc_d_loss(score_real.enc_logit, score_fake.enc_logit, variant)
        dec_term = (dec_d_loss(score_real.dec_logits, score_fake.dec_logits, variant)
                    if loss_cfg.use_decoder_head else zero)

        cm_enc = cm_dec = cons = zero
        trigger = torch.rand((), generator=self.rng).item()  # drawn every step to keep streams aligned
        p_mix = pmix_schedule(self.epoch_float(), cfg.train.pmix_warmup_epochs,
                              cfg.train.pmix_max)
        if loss_cfg.use_cutmix and trigger < p_mix:
            cm = build_cutmix_batch(x, fake, self.rng, y_real=y, y_fake=y_fake)
            score_mixed = self.d(cm.images, y)
            cm_enc, cm_dec_full = cutmix_supervision_loss(
                score_mixed.enc_logit, score_mixed.dec_logits, cm.masks, variant)
            cm_dec = cm_dec_full if loss_cfg.use_decoder_head else zero
            if loss_cfg.use_consistency:
                cons = consistency_loss(score_mixed.dec_logits, score_real.dec_logits,
                                        score_fake.dec_logits, cm.masks)

        total_d = enc_term + dec_term + cm_enc + cm_dec + loss_cfg.lambda_consistency * cons
        d_breakdown = DiscriminatorLossBreakdown(
            enc_term=enc_term.item(), dec_term=dec_term.item(),
            cutmix_enc_term=cm_enc.item(), cutmix_dec_term=cm_dec.item(),
            consistency_term=cons.item(), lambda_weight=loss_cfg.lambda_consistency)
        self._check_finite(total_d, "discriminator", d_breakdown)
        self.opt_d.zero_grad(set_to_none=True)
        total_d.backward()
        self.opt_d.step()

        # --- generator update ---
        latents = sample_latent(n, cfg.model, self.rng)
        fake2 = self.g(latents)
        score_fake2 = self.d(fake2, latents.y)
        g_enc, g_dec = g_loss(score_fake2.enc_logit, score_fake2.dec_logits, variant,
                              include_decoder=loss_cfg.use_decoder_head)
        total_g = g_enc + g_dec
        g_breakdown = GeneratorLossBreakdown(enc_term=g_enc.item(), dec_term=g_dec.item())
        self._check_finite(total_g, "generator", g_breakdown)
        self.opt_g.zero_grad(set_to_none=True)
        total_g.backward()  # also writes D grads; the next D update zeroes them
        self.opt_g.step()

        # --- EMA ---
        ema_update(self.ema, self.g.state_dict(), cfg.train.ema_decay)

        self.iteration += 1
        return d_breakdown, g_breakdown

    def _check_finite(self, loss: torch.Tensor, which: str, breakdown) -> None:
        if not math.isfinite(loss.item()):
            snapshot = Path(self.out_dir) / "diagnostic_nonfinite.ckpt" \
                if getattr(self, "out_dir", None) else None
            if snapshot is not None:
                self.save(str(snapshot))
            raise NonFiniteLossError(
                f"non-finite {which} loss at iteration {self.iteration}: {breakdown}"
                + (f"; snapshot written to {snapshot}" if snapshot else ""))

    # ------------------------------------------------------------------
    # evaluation

    def ema_generator(self) -> Generator:
        gen = Generator(self.cfg.model)
        gen.load_state_dict(self.ema)
        return gen

    def _fake_batches(self, gen: Generator, total: int, batch_size: int, seed_tag: int):
        rng = torch.Generator().manual_seed(
            hash((self.cfg.train.seed, seed_tag)) & 0x7FFFFFFF)
        remaining = total
        while remaining > 0:
            n = min(batch_size, remaining)
            latents = sample_latent(n, self.cfg.model, rng)
            with torch.no_grad():
                yield gen(latents)
            remaining -= n

    def _real_batches(self, total: int, batch_size: int):
        total = min(total, len(self.dataset))
        for start in range(0, total, batch_size):
            yield self.dataset.images[start:start + batch_size]

    def evaluate(self, extractor: FeatureExtractor) -> dict:
        e = self.cfg.eval
        gen = self.ema_generator()
        fid = compute_fid(extractor,
                          self._real_batches(e.fid_samples, e.eval_batch_size),
                          self._fake_batches(gen, e.fid_samples, e.eval_batch_size,
                                             seed_tag=self.iteration),
                          e.fid_samples)
        probs = []
        for fake in self._fake_batches(gen, e.fid_samples, e.eval_batch_size,
                                       seed_tag=self.iteration + 1):
            probs.append(extractor.class_probs(fake))
        is_value = inception_style_score(torch.cat(probs).numpy())
        return {"fid": fid, "is": is_value}

    # ------------------------------------------------------------------
    # checkpointing

    def _state_tensors(self) -> dict[str, torch.Tensor]:
        tensors: dict[str, torch.Tensor] = {}
        for name, t in self.g.state_dict().items():
            tensors[f"g/{name}"] = t
        for name, t in self.d.state_dict().items():
            tensors[f"d/{name}"] = t
        for name, t in self.ema.items():
            tensors[f"ema/{name}"] = t
        for tag, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            for idx, state in opt.state_dict()["state"].items():
                for key, value in state.items():
                    tensors[f"{tag}/{idx}/{key}"] = value
        return tensors

    def _opt_meta(self) -> dict:
        return {
            "opt_g_groups": self.opt_g.state_dict()["param_groups"],
            "opt_d_groups": self.opt_d.state_dict()["param_groups"],
        }

    def save(self, path: str, metrics_tail: list[dict] | None = None) -> None:
        ckpt = Checkpoint(
            iteration=self.iteration,
            config_text=config_mod.to_text(self.cfg),
            tensors=self._state_tensors(),
            rng_state=bytes(self.rng.get_state().numpy().tobytes()),
            metrics_tail=metrics_tail or [],
            meta=self._opt_meta(),
        )
        save_checkpoint(path, ckpt)

    @classmethod
    def from_checkpoint(cls, path: str, dataset: Dataset) -> "Trainer":
        ckpt = load_checkpoint(path)
        cfg = config_mod.from_text(ckpt.config_text)
        trainer = cls(cfg, dataset)
        trainer.iteration = ckpt.iteration

        g_state, d_state, ema_state = {}, {}, {}
        opt_states: dict[str, dict[int, dict[str, torch.Tensor]]] = {"opt_g": {}, "opt_d": {}}
        for name, t in ckpt.tensors.items():
            scope, rest = name.split("/", 1)
            if scope == "g":
                g_state[rest] = t
            elif scope == "d":
                d_state[rest] = t
            elif scope == "ema":
                ema_state[rest] = t
            else:
                idx_str, key = rest.split("/", 1)
                opt_states[scope].setdefault(int(idx_str), {})[key] = t
        trainer.g.load_state_dict(g_state)
        trainer.d.load_state_dict(d_state)
        trainer.ema = ema_state
        for tag, opt, params in (("opt_g", trainer.opt_g, trainer.g.parameters()),
                                 ("opt_d", trainer.opt_d, trainer.d.parameters())):
            groups = ckpt.meta[f"{tag}_groups"]
            opt.load_state_dict({"state": opt_states[tag], "param_groups": groups})
        rng_state = torch.tensor(bytearray(ckpt.rng_state), dtype=torch.uint8)
        trainer.rng.set_state(rng_state)
        return trainer

    # ------------------------------------------------------------------
    # full run

    def run(self, out_dir: str) -> str:
        """Train for total_iterations; returns the final checkpoint path."""
        from pxgan.visualize import render_decoder_heatmaps  # deferred: pulls in matplotlib

        out = Path(out_dir)
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        (out / "samples").mkdir(parents=True, exist_ok=True)
        self.out_dir = str(out)
        metrics_path = out / "metrics.ndjson"
        extractor = FeatureExtractor(channels=self.cfg.model.channels,
                                     num_classes=self.cfg.eval.is_classes)
        start_time = time.time()
        recent: list[dict] = []

        def log_record(record: dict) -> None:
            recent.append(record)
            del recent[:-5]
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

        if not metrics_path.exists():  # resume appends to the existing log
            with open(metrics_path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"type": "config",
                                     "config_text": config_mod.to_text(self.cfg)},
                                    sort_keys=True) + "\n")

        def do_eval() -> None:
            scores = self.evaluate(extractor)
            log_record({"type": "eval", "iteration": self.iteration,
                        "fid": scores["fid"], "is": scores["is"],
                        "wall_time": time.time() - start_time})
            render_decoder_heatmaps(self.ema_generator(), self.d,
                                    _sample_z(8, self.cfg.model,
                                              torch.Generator().manual_seed(self.cfg.train.seed)),
                                    str(out / "samples" / f"heatmap_{self.iteration:07d}.png"),
                                    y_classes=self.cfg.model.num_classes)
            logger.info("iteration %d: proxy-FID %.3f", self.iteration, scores["fid"])

        if self.iteration == 0:  # fresh run: baseline eval and initial checkpoint
            do_eval()
            self.save(str(out / "checkpoints" / f"ckpt_{self.iteration:08d}.ckpt"), recent)

        total = self.cfg.train.total_iterations
        while self.iteration < total:
            batch = self._batch_for_iteration(self.iteration)
            d_losses, g_losses = self.train_step(batch)
            log_record({
                "type": "train", "iteration": self.iteration,
                "losses": {
                    "d_total": d_losses.total, "d_enc": d_losses.enc_term,
                    "d_dec": d_losses.dec_term, "d_cutmix_enc": d_losses.cutmix_enc_term,
                    "d_cutmix_dec": d_losses.cutmix_dec_term,
                    "d_consistency": d_losses.consistency_term,
                    "lambda": d_losses.lambda_weight,
                    "g_total": g_losses.total, "g_enc": g_losses.enc_term,
                    "g_dec": g_losses.dec_term,
                },
                "fid": None, "is": None,
                "wall_time": time.time() - start_time,
            })
            if self.iteration % self.cfg.train.eval_every == 0:
                do_eval()
            if self.iteration % self.cfg.train.checkpoint_every == 0:
                self.save(str(out / "checkpoints" / f"ckpt_{self.iteration:08d}.ckpt"), recent)

        final_path = out / "checkpoints" / f"ckpt_{self.iteration:08d}.ckpt"
        if not final_path.exists():
            self.save(str(final_path), recent)
        return str(final_path)


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    from pxgan.data import load_image_folder, synth_shapes_dataset

    d = cfg.data
    if d.source == "synth":
        return synth_shapes_dataset(d.n_samples, cfg.model.image_size, d.num_classes,
                                    seed=cfg.train.seed, channels=cfg.model.channels)
    return load_image_folder(d.root, cfg.model.image_size, conditional=d.num_classes > 0,
                             channels=cfg.model.channels)
