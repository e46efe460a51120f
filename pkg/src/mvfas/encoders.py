"""Image and text encoders plus the projection layers producing global-aware patches.

The vision transformer is trainable end to end. The text encoder is frozen:
class-text tokens are embedded by deterministic hashing and the transformer
blocks never receive gradient updates, so only the prompt context vectors
adapt during training. Both encoders are interface-compatible with loading
externally pretrained weights via ``load_pretrained_weights``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import torch
from torch import nn

from .config import ConfigurationError
from .text_bank import PromptSpec

# per-channel normalization applied to [0,1] pixels before patchification
PIXEL_MEAN = (0.5, 0.5, 0.5)
PIXEL_STD = (0.5, 0.5, 0.5)


@dataclass
class EncoderOutput:
    cls_token: torch.Tensor    # [B, D_v]
    patch_tokens: torch.Tensor  # [B, L, D_v]


@dataclass
class ProjectedFeatures:
    cls_proj: torch.Tensor      # [B, D]
    patches_proj: torch.Tensor  # [B, L, D]
    global_aware: torch.Tensor  # [B, L, D] = patches_proj + broadcast cls_proj


class ProjectionMlp(nn.Module):
    """Two-layer perceptron mapping encoder features to the shared dimension."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, out_dim),
            nn.GELU(),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, x):
        return self.net(x)


def _sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div[: (dim + 1) // 2])
    return pe.to(torch.get_default_dtype())


class VisionTransformer(nn.Module):
    """Small ViT returning a CLS token and patch embeddings."""

    def __init__(self, image_size: int, patch_size: int, dim: int,
                 depth: int, heads: int):
        super().__init__()
        if image_size % patch_size != 0:
            raise ConfigurationError(
                f"image size {image_size} not divisible by patch size {patch_size}"
            )
        self.image_size = image_size
        self.patch_size = patch_size
        self.dim = dim
        self.num_patches = (image_size // patch_size) ** 2

        self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos_embed = nn.Parameter(torch.randn(1, self.num_patches + 1, dim) * 0.02)
        self.blocks = nn.ModuleList([
            nn.TransformerEncoderLayer(
                d_model=dim, nhead=heads, dim_feedforward=dim * 4,
                dropout=0.0, activation="gelu", batch_first=True, norm_first=True,
            )
            for _ in range(depth)
        ])
        self.norm = nn.LayerNorm(dim)
        mean = torch.tensor(PIXEL_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(PIXEL_STD).view(1, 3, 1, 1)
        self.register_buffer("pixel_mean", mean)
        self.register_buffer("pixel_std", std)

    def forward(self, pixels: torch.Tensor) -> EncoderOutput:
        """pixels: [B, H, W, 3] in [0,1]."""
        if pixels.dim() != 4 or pixels.shape[-1] != 3:
            raise ConfigurationError(f"expected [B,H,W,3] pixels, got {tuple(pixels.shape)}")
        if pixels.shape[1] != self.image_size or pixels.shape[2] != self.image_size:
            raise ConfigurationError(
                f"resolution {pixels.shape[1]}x{pixels.shape[2]} does not match the "
                f"configured {self.image_size}x{self.image_size} patch grid"
            )
        x = pixels.permute(0, 3, 1, 2)
        x = (x - self.pixel_mean) / self.pixel_std
        x = self.patch_embed(x)                      # [B, D, H/p, W/p]
        x = x.flatten(2).transpose(1, 2)             # [B, L, D]
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        return EncoderOutput(cls_token=x[:, 0], patch_tokens=x[:, 1:])


class PromptTooLongError(ValueError):
    pass


class HashTextEncoder(nn.Module):
    """Frozen toy text encoder.

    Class-text words are embedded by seeding an RNG from a SHA-256 hash of the
    word, giving a fixed deterministic vocabulary-free embedding. The learnable
    context vectors are prepended, and the sequence runs through frozen
    transformer blocks followed by masked mean pooling and a frozen output
    projection.
    """

    def __init__(self, dim: int, depth: int = 2, heads: int = 4,
                 max_len: int = 77, seed: int = 1234):
        super().__init__()
        self.dim = dim
        self.max_len = max_len
        self._token_cache: dict[str, torch.Tensor] = {}
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.blocks = nn.ModuleList([
                nn.TransformerEncoderLayer(
                    d_model=dim, nhead=heads, dim_feedforward=dim * 4,
                    dropout=0.0, activation="gelu", batch_first=True, norm_first=True,
                )
                for _ in range(depth)
            ])
            self.norm = nn.LayerNorm(dim)
            self.out_proj = nn.Linear(dim, dim)
        self.register_buffer("pos_embed", _sinusoidal_positions(max_len, dim))
        for p in self.parameters():
            p.requires_grad_(False)

    def token_vector(self, word: str) -> torch.Tensor:
        cached = self._token_cache.get(word)
        if cached is None:
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            gen = torch.Generator().manual_seed(int.from_bytes(digest[:8], "big"))
            cached = torch.randn(self.dim, generator=gen) / math.sqrt(self.dim)
            self._token_cache[word] = cached
        return cached

    def forward(self, prompts: list[PromptSpec]) -> torch.Tensor:
        """Encode a list of prompts into a [len(prompts) x D] matrix."""
        sequences = []
        for prompt in prompts:
            words = prompt.class_text.lower().split()
            if not words:
                raise ValueError("empty class text")
            tokens = torch.stack([self.token_vector(w) for w in words])
            seq = torch.cat([prompt.context, tokens.to(prompt.context)], dim=0)
            if seq.shape[0] > self.max_len:
                raise PromptTooLongError(
                    f"prompt has {seq.shape[0]} tokens, encoder maximum is {self.max_len}"
                )
            sequences.append(seq)

        longest = max(s.shape[0] for s in sequences)
        batch = torch.zeros(len(sequences), longest, self.dim,
                            dtype=sequences[0].dtype, device=sequences[0].device)
        padding = torch.ones(len(sequences), longest, dtype=torch.bool,
                             device=sequences[0].device)
        for i, seq in enumerate(sequences):
            batch[i, : seq.shape[0]] = seq
            padding[i, : seq.shape[0]] = False
        x = batch + self.pos_embed[:longest].unsqueeze(0)
        for block in self.blocks:
            x = block(x, src_key_padding_mask=padding)
        x = self.norm(x)
        keep = (~padding).unsqueeze(-1).to(x.dtype)
        pooled = (x * keep).sum(dim=1) / keep.sum(dim=1)
        return self.out_proj(pooled)


class GlobalAwareProjector(nn.Module):
    """Separate two-layer projections for CLS and patches, fused by broadcast add."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.cls_proj = ProjectionMlp(in_dim, out_dim)
        self.patch_proj = ProjectionMlp(in_dim, out_dim)

    def forward(self, enc: EncoderOutput) -> ProjectedFeatures:
        cls_proj = self.cls_proj(enc.cls_token)
        patches_proj = self.patch_proj(enc.patch_tokens)
        global_aware = patches_proj + cls_proj.unsqueeze(1)
        return ProjectedFeatures(cls_proj=cls_proj, patches_proj=patches_proj,
                                 global_aware=global_aware)


def load_pretrained_weights(module: nn.Module, path: str) -> None:
    """Load a state dict produced elsewhere (e.g. a converted pretrained CLIP)."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    module.load_state_dict(state)
