"""Paraphrased class-text bank, learnable prompt context, and alignment anchors."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


class InvalidBankError(ValueError):
    """Raised when the positive/negative text lists are malformed."""


@dataclass(frozen=True)
class TextPairBank:
    """M positive texts describing real faces and M negative texts for spoofs."""

    positive_texts: tuple[str, ...]
    negative_texts: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "positive_texts", tuple(self.positive_texts))
        object.__setattr__(self, "negative_texts", tuple(self.negative_texts))
        if len(self.positive_texts) != len(self.negative_texts):
            raise InvalidBankError("positive and negative text lists must have equal length")
        if len(self.positive_texts) < 1:
            raise InvalidBankError("text bank needs at least one positive/negative pair")
        for polarity, texts in [("positive", self.positive_texts),
                                ("negative", self.negative_texts)]:
            if any(not t or not t.strip() for t in texts):
                raise InvalidBankError(f"empty {polarity} class text")
            if len(set(texts)) != len(texts):
                raise InvalidBankError(f"duplicate {polarity} class texts")

    @property
    def num_views(self) -> int:
        return len(self.positive_texts)

    @property
    def all_texts(self) -> tuple[str, ...]:
        """Positives first, then negatives; this ordering is contractual."""
        return self.positive_texts + self.negative_texts


class PromptContext(nn.Module):
    """Learnable context vectors shared by every class text."""

    def __init__(self, ctx_len: int, dim: int, init_std: float = 0.02):
        super().__init__()
        if ctx_len < 1:
            raise ValueError("ctx_len must be >= 1")
        self.ctx_len = ctx_len
        self.dim = dim
        self.context_vectors = nn.Parameter(torch.randn(ctx_len, dim) * init_std)


@dataclass
class PromptSpec:
    """Context vectors followed by one class text; input unit of the text encoder."""

    context: torch.Tensor  # [ctx_len, dim], shared across all prompts
    class_text: str


@dataclass
class Anchors:
    positive_anchor: torch.Tensor  # [D]
    negative_anchor: torch.Tensor  # [D]


def build_prompts(bank: TextPairBank, context: PromptContext) -> list[PromptSpec]:
    """Assemble the 2M prompts, ordered positives then negatives.

    The same learnable context tensor object is shared by all prompts, so
    gradients accumulate into one parameter.
    """
    return [PromptSpec(context.context_vectors, text) for text in bank.all_texts]


def compute_anchors(text_embeddings: torch.Tensor) -> Anchors:
    """Mean positive / negative text embedding from a [2M x D] matrix.

    Rows must be ordered positives then negatives.
    """
    if text_embeddings.dim() != 2 or text_embeddings.shape[0] % 2 != 0:
        raise ValueError(f"expected [2M x D] embeddings, got {tuple(text_embeddings.shape)}")
    if not torch.isfinite(text_embeddings).all():
        raise ValueError("non-finite text embeddings")
    m = text_embeddings.shape[0] // 2
    return Anchors(
        positive_anchor=text_embeddings[:m].mean(dim=0),
        negative_anchor=text_embeddings[m:].mean(dim=0),
    )
