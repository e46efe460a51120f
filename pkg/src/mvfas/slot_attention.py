"""Multi-view slot attention: text embeddings compete for patches.

Patches act as queries; the 2M class-text embeddings are keys and values.
Softmax runs along the patch (query) axis so each text distributes itself
across patches, and each patch then renormalizes over the texts assigned
to it. The recurrent state update keeps local patch information intact.
"""
from __future__ import annotations

import math

import torch
from torch import nn


class GRUCell(nn.Module):
    """Minimal gated recurrent unit cell.

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    n = tanh(W_n x + r * (U_n h) + b_n)
    h' = (1 - z) * n + z * h

    Biases live on the input-side map only, so the candidate's recurrent term
    is gated before any bias is added.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.x2h = nn.Linear(dim, 3 * dim)
        self.h2h = nn.Linear(dim, 3 * dim, bias=False)

    def forward(self, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        if x.shape != h.shape:
            raise ValueError(f"input {tuple(x.shape)} and hidden {tuple(h.shape)} differ")
        xz, xr, xn = self.x2h(x).chunk(3, dim=-1)
        hz, hr, hn = self.h2h(h).chunk(3, dim=-1)
        z = torch.sigmoid(xz + hz)
        r = torch.sigmoid(xr + hr)
        n = torch.tanh(xn + r * hn)
        return (1.0 - z) * n + z * h


def attention_scores(q: torch.Tensor, k: torch.Tensor,
                     epsilon: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Query-axis softmax followed by per-patch renormalization over texts.

    q: [B, L, D], k: [B, 2M, D]. Returns (attn, attn_pre), both [B, L, 2M];
    attn_pre columns each sum to 1 over L, attn rows sum to s/(s+epsilon).
    """
    if q.dim() != 3 or k.dim() != 3 or q.shape[0] != k.shape[0] or q.shape[2] != k.shape[2]:
        raise ValueError(f"incompatible shapes q={tuple(q.shape)} k={tuple(k.shape)}")
    if min(q.shape) == 0 or min(k.shape) == 0:
        raise ValueError("zero-sized attention input")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    logits = torch.bmm(q, k.transpose(1, 2)) / math.sqrt(q.shape[-1])
    attn_pre = torch.softmax(logits, dim=1)
    attn = attn_pre / (attn_pre.sum(dim=2, keepdim=True) + epsilon)
    return attn, attn_pre


def aggregate_views(attn: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Weighted sum of text values per patch: [B,L,2M] x [B,2M,D] -> [B,L,D]."""
    return torch.bmm(attn, v)


class MultiViewSlotAttention(nn.Module):
    """Iterative assignment of text embeddings to global-aware patches."""

    def __init__(self, dim: int, i_max: int = 3, epsilon: float = 1e-8):
        super().__init__()
        self.dim = dim
        self.i_max = i_max
        self.epsilon = epsilon
        self.norm_texts = nn.LayerNorm(dim)
        self.norm_state = nn.LayerNorm(dim)
        self.norm_resid = nn.LayerNorm(dim)
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(dim, dim)
        self.to_v = nn.Linear(dim, dim)
        self.gru = GRUCell(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim),
            nn.GELU(),
            nn.Linear(dim, dim),
        )

    def forward(self, s_q: torch.Tensor, s_kv: torch.Tensor,
                return_attention: bool = False):
        """Run i_max assignment iterations; i_max <= 0 is the identity.

        s_q: [B, L, D] patch state; s_kv: [2M, D] (or pre-repeated [B, 2M, D]).
        With return_attention, also returns the pre-renormalization scores of
        the first iteration, [B, L, 2M].
        """
        if self.i_max <= 0:
            return (s_q, None) if return_attention else s_q
        batch = s_q.shape[0]
        if s_kv.dim() == 2:
            s_kv = s_kv.unsqueeze(0).expand(batch, -1, -1)
        s_kv = self.norm_texts(s_kv)
        k = self.to_k(s_kv)
        v = self.to_v(s_kv)

        first_attn_pre = None
        for i in range(self.i_max):
            q = self.to_q(self.norm_state(s_q))
            attn, attn_pre = attention_scores(q, k, self.epsilon)
            if i == 0:
                first_attn_pre = attn_pre
            updates = aggregate_views(attn, v)
            flat = s_q.shape[0] * s_q.shape[1]
            s_q = self.gru(updates.reshape(flat, self.dim),
                           s_q.reshape(flat, self.dim)).view_as(s_q)
            s_q = s_q + self.mlp(self.norm_resid(s_q))
        if return_attention:
            return s_q, first_attn_pre
        return s_q
