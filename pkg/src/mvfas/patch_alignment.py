"""Patch-anchor alignment: soft-mask patches by anchor similarity and
supervise the masked sum with an auxiliary classifier."""
from __future__ import annotations

import torch
from torch import nn

from .text_bank import Anchors, compute_anchors

NORM_FLOOR = 1e-12
LOG_FLOOR = 1e-12


def cross_entropy_from_probs(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean -log p[true class] over the batch; probabilities, not logits."""
    picked = probs.gather(1, labels.view(-1, 1).long()).clamp_min(LOG_FLOOR)
    return -picked.log().mean()


def select_anchor(labels: torch.Tensor, anchors: Anchors) -> torch.Tensor:
    """Per-sample anchor row: positive for real (label 1), negative for spoof."""
    if not torch.all((labels == 0) | (labels == 1)):
        raise ValueError(f"labels must be 0/1, got {labels.tolist()}")
    mask = (labels == 1).view(-1, 1).to(anchors.positive_anchor.dtype)
    return mask * anchors.positive_anchor + (1.0 - mask) * anchors.negative_anchor


def patch_similarity(e: torch.Tensor, anchor_rows: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of every patch with its sample's anchor, [B, L, 1]."""
    e_norm = e / e.norm(dim=-1, keepdim=True).clamp_min(NORM_FLOOR)
    a_norm = anchor_rows / anchor_rows.norm(dim=-1, keepdim=True).clamp_min(NORM_FLOOR)
    return (e_norm * a_norm.unsqueeze(1)).sum(dim=-1, keepdim=True)


def soft_mask(c: torch.Tensor, alpha: float) -> torch.Tensor:
    """Sigmoid of scaled similarity; strictly increasing in c."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return torch.sigmoid(alpha * c)


def mtpa_probability(mask: torch.Tensor, e: torch.Tensor,
                     classifier: nn.Linear) -> torch.Tensor:
    """Masked patch sum through the auxiliary classifier, softmaxed to [B, 2]."""
    pooled = (mask * e).sum(dim=1)
    return torch.softmax(classifier(pooled), dim=-1)


def mtpa_loss(p: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return cross_entropy_from_probs(p, labels)


class PatchAlignmentHead(nn.Module):
    """Auxiliary classifier over soft-masked patches.

    anchor_type selects the alignment target: "mean" uses the mean text
    embedding per polarity, "single" the first text pair only, and
    "individual" averages one loss per text pair.
    """

    def __init__(self, dim: int, alpha: float = 10.0, anchor_type: str = "mean"):
        super().__init__()
        if anchor_type not in ("mean", "single", "individual"):
            raise ValueError(f"unknown anchor_type {anchor_type!r}")
        self.alpha = alpha
        self.anchor_type = anchor_type
        self.classifier = nn.Linear(dim, 2)

    def _anchor_sets(self, text_embeddings: torch.Tensor) -> list[Anchors]:
        m = text_embeddings.shape[0] // 2
        if self.anchor_type == "mean":
            return [compute_anchors(text_embeddings)]
        if self.anchor_type == "single":
            return [Anchors(text_embeddings[0], text_embeddings[m])]
        return [Anchors(text_embeddings[j], text_embeddings[m + j]) for j in range(m)]

    def forward(self, e: torch.Tensor, labels: torch.Tensor,
                text_embeddings: torch.Tensor) -> torch.Tensor:
        """Alignment loss for patch features e [B, L, D]."""
        losses = []
        for anchors in self._anchor_sets(text_embeddings):
            rows = select_anchor(labels, anchors)
            c = patch_similarity(e, rows)
            mask = soft_mask(c, self.alpha)
            p = mtpa_probability(mask, e, self.classifier)
            losses.append(mtpa_loss(p, labels))
        return torch.stack(losses).mean()
