"""Training loop, evaluation runner, and checkpointing."""
from __future__ import annotations

import random
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .config import RunConfig
from .model import FasModel, build_model
from .protocol import Sample, leave_one_out, load_images, load_manifest

CHECKPOINT_FORMAT_VERSION = 1


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


class NonFiniteLossError(RuntimeError):
    pass


def train(config: RunConfig, log=None) -> tuple[FasModel, torch.optim.Optimizer, list[float]]:
    """Optimize the total loss on the leave-one-out training split.

    Returns the trained model, its optimizer (for checkpointing), and the
    per-epoch mean loss history. Deterministic given the config seed.
    """
    config.validate()
    seed_everything(config.seed)
    model = build_model(config)
    domains = load_manifest(Path(config.data_root) / "manifest.csv")
    train_samples, _ = leave_one_out(domains, config.target)
    pixels, labels = load_images(train_samples, config.image_size)

    optimizer = torch.optim.Adam(model.trainable_parameters(),
                                 lr=config.learning_rate,
                                 betas=(0.9, 0.999),
                                 weight_decay=config.weight_decay)
    frozen_checksum = model.text_encoder_checksum()
    shuffler = torch.Generator().manual_seed(config.seed)
    history = []
    model.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(train_samples), generator=shuffler)
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            out = model(pixels[idx], labels[idx])
            loss = out.loss_total
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} step {start // config.batch_size}: "
                    f"cls={out.loss_cls.item()} align={out.loss_align.item()}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
            if model.text_encoder_checksum() != frozen_checksum:
                raise RuntimeError("frozen text encoder was modified during training")
        mean_loss = float(np.mean(epoch_losses))
        history.append(mean_loss)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} loss {mean_loss:.4f}")
    return model, optimizer, history


@torch.no_grad()
def score_samples(model: FasModel, samples: list[Sample],
                  batch_size: int = 64) -> list[dict]:
    """One score row per sample: real-class probability plus identifiers."""
    model.eval()
    pixels, _ = load_images(samples, model.config.image_size)
    rows = []
    for start in range(0, len(samples), batch_size):
        batch = pixels[start:start + batch_size]
        scores = model(batch).prediction.real_score
        for sample, score in zip(samples[start:start + batch_size], scores):
            rows.append({
                "sample_id": sample.sample_id,
                "score": f"{score.item():.10f}",
                "label": sample.label,
                "domain": sample.domain,
            })
    return rows


def evaluate(model: FasModel, samples: list[Sample], scenario: str,
             threshold_rule: str | None = None) -> tuple[list[dict], str]:
    """Score a dataset and format a metrics report.

    Single-class datasets get scores only; the report notes the metrics are
    undefined.
    """
    rows = score_samples(model, samples)
    labels = np.array([s.label for s in samples])
    if len(set(labels.tolist())) < 2:
        return rows, f"{scenario}: metrics undefined (single-class dataset)\n"
    score_set = metrics.ScoreSet(np.array([float(r["score"]) for r in rows]), labels)
    rule = threshold_rule or model.config.threshold_rule
    report = metrics.summarize(score_set, scenario, rule)
    return rows, metrics.format_report([report])


def save_checkpoint(path: str | Path, model: FasModel,
                    optimizer: torch.optim.Optimizer, epoch: int) -> None:
    torch.save({
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict(),
        "epoch": epoch,
    }, path)


def load_checkpoint(path: str | Path) -> tuple[FasModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    config = RunConfig.from_dict(payload["config"])
    model = build_model(config)
    model.load_state_dict(payload["model_state"])
    return model, payload
