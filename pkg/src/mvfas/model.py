"""Full model: encoders, slot attention, alignment head, classification head.

Class index convention throughout: column 0 = spoof, column 1 = real, so an
integer label (1=real, 0=spoof) indexes the probability row directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ConfigurationError, RunConfig
from .encoders import (GlobalAwareProjector, HashTextEncoder, ProjectedFeatures,
                       VisionTransformer, load_pretrained_weights)
from .patch_alignment import PatchAlignmentHead, cross_entropy_from_probs
from .slot_attention import MultiViewSlotAttention
from .text_bank import (PromptContext, TextPairBank, build_prompts, compute_anchors)


@dataclass
class Prediction:
    logits: torch.Tensor         # [B, 2]
    probabilities: torch.Tensor  # [B, 2], rows sum to 1
    real_score: torch.Tensor     # [B], probability of the real class


@dataclass
class ModelOutput:
    prediction: Prediction
    loss_total: torch.Tensor | None = None
    loss_cls: torch.Tensor | None = None
    loss_align: torch.Tensor | None = None
    attention: torch.Tensor | None = None  # first-iteration pre-renorm scores


def make_prediction(logits: torch.Tensor) -> Prediction:
    probs = torch.softmax(logits, dim=-1)
    return Prediction(logits=logits, probabilities=probs, real_score=probs[:, 1])


def cls_loss(pred: Prediction, labels: torch.Tensor) -> torch.Tensor:
    return cross_entropy_from_probs(pred.probabilities, labels)


def total_loss(cls: torch.Tensor, align: torch.Tensor) -> torch.Tensor:
    return cls + align


class ClassificationHead(nn.Module):
    """Mean pooling over patches, two-layer MLP, linear classifier."""

    def __init__(self, dim: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim),
            nn.GELU(),
            nn.Linear(dim, dim),
        )
        self.fc = nn.Linear(dim, 2)

    def forward(self, features: torch.Tensor) -> Prediction:
        pooled = features.mean(dim=1)
        return make_prediction(self.fc(self.mlp(pooled)))


class CrossAttentionHead(nn.Module):
    """Ablation variant: texts query the patches (single head)."""

    def __init__(self, dim: int):
        super().__init__()
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(dim, dim)
        self.to_v = nn.Linear(dim, dim)
        self.scale = dim ** -0.5

    def forward(self, text_embeddings: torch.Tensor, patches: torch.Tensor) -> torch.Tensor:
        """text_embeddings [2M, D], patches [B, L, D] -> tokens [B, 2M, D]."""
        q = self.to_q(text_embeddings).unsqueeze(0).expand(patches.shape[0], -1, -1)
        k = self.to_k(patches)
        v = self.to_v(patches)
        attn = torch.softmax(torch.bmm(q, k.transpose(1, 2)) * self.scale, dim=-1)
        return torch.bmm(attn, v)


class FasModel(nn.Module):
    """Assembled anti-spoofing model driven by a RunConfig."""

    def __init__(self, config: RunConfig):
        super().__init__()
        config.validate()
        self.config = config
        m = config.num_views
        self.bank = TextPairBank(tuple(config.positive_texts[:m]),
                                 tuple(config.negative_texts[:m]))
        dim = config.embed_dim
        self.context = PromptContext(config.ctx_len, dim)
        self.text_encoder = HashTextEncoder(dim, depth=config.text_depth)
        self.image_encoder = VisionTransformer(
            config.image_size, config.patch_size, config.vit_dim,
            config.vit_depth, config.vit_heads,
        )
        self.projector = GlobalAwareProjector(config.vit_dim, dim)
        self.mvs = MultiViewSlotAttention(dim, i_max=config.i_max, epsilon=config.epsilon)
        self.align = PatchAlignmentHead(dim, alpha=config.alpha,
                                        anchor_type=config.anchor_type)
        self.head = ClassificationHead(dim)
        self.cross = CrossAttentionHead(dim) if config.variant == "cross_attention" else None
        if config.weights_path:
            load_pretrained_weights(self, config.weights_path)

    def encode_texts(self) -> torch.Tensor:
        prompts = build_prompts(self.bank, self.context)
        return self.text_encoder(prompts)

    def extract_features(self, pixels: torch.Tensor) -> ProjectedFeatures:
        return self.projector(self.image_encoder(pixels))

    def forward(self, pixels: torch.Tensor, labels: torch.Tensor | None = None,
                return_attention: bool = False) -> ModelOutput:
        cfg = self.config
        text_emb = self.encode_texts()
        feats = self.extract_features(pixels)
        s_q = feats.global_aware if cfg.gape else feats.patches_proj

        attention = None
        if cfg.variant == "mvs":
            if cfg.use_mvs:
                f_mv, attention = self.mvs(s_q, text_emb, return_attention=True)
            else:
                f_mv = s_q
            pred = self.head(f_mv)
        elif cfg.variant == "similarity":
            anchors = compute_anchors(text_emb)
            mean_patch = s_q.mean(dim=1)
            mean_n = mean_patch / mean_patch.norm(dim=-1, keepdim=True).clamp_min(1e-12)
            neg = anchors.negative_anchor / anchors.negative_anchor.norm().clamp_min(1e-12)
            pos = anchors.positive_anchor / anchors.positive_anchor.norm().clamp_min(1e-12)
            logits = torch.stack([mean_n @ neg, mean_n @ pos], dim=1)
            pred = make_prediction(logits)
        elif cfg.variant == "cross_attention":
            tokens = self.cross(text_emb, s_q)
            pred = self.head(tokens)
        else:
            raise ConfigurationError(f"unknown variant {cfg.variant!r}")

        out = ModelOutput(prediction=pred,
                          attention=attention if return_attention else None)
        if labels is not None:
            out.loss_cls = cls_loss(pred, labels)
            if cfg.use_mtpa:
                e = feats.patches_proj if cfg.e_source == "pre_fusion" else feats.global_aware
                out.loss_align = self.align(e, labels, text_emb)
            else:
                out.loss_align = torch.zeros((), dtype=out.loss_cls.dtype,
                                             device=out.loss_cls.device)
            out.loss_total = total_loss(out.loss_cls, out.loss_align)
        return out

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def text_encoder_checksum(self) -> torch.Tensor:
        with torch.no_grad():
            return torch.cat([p.detach().double().flatten()
                              for p in self.text_encoder.parameters()]).sum()


def build_model(config: RunConfig) -> FasModel:
    """Construct a model with all weights drawn from the config seed."""
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        return FasModel(config)
