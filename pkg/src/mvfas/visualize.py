"""Export per-view attention heatmaps from the first slot-attention iteration."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .model import FasModel

POSITIVE_TINT = (255, 255, 0)  # yellow for real-class views
NEGATIVE_TINT = (255, 0, 0)    # red for spoof-class views


@torch.no_grad()
def first_stage_attention(model: FasModel, pixels: torch.Tensor) -> torch.Tensor:
    """Pre-renormalization attention of iteration 1, [L, 2M], for one image."""
    model.eval()
    out = model(pixels, return_attention=True)
    if out.attention is None:
        raise RuntimeError("model variant/configuration exposes no slot attention")
    return out.attention[0]


def attention_grids(attn: torch.Tensor) -> np.ndarray:
    """Reshape [L, 2M] scores into [2M, g, g] patch grids; L must be square."""
    num_patches = attn.shape[0]
    grid = math.isqrt(num_patches)
    if grid * grid != num_patches:
        raise ValueError(f"patch count {num_patches} is not a perfect square")
    return attn.T.reshape(attn.shape[1], grid, grid).numpy()


def _overlay(image: Image.Image, grid: np.ndarray, tint: tuple[int, int, int]) -> Image.Image:
    heat = grid / max(grid.max(), 1e-12)
    heat_img = Image.fromarray((heat * 255).astype(np.uint8)).resize(
        image.size, Image.BILINEAR)
    heat = np.asarray(heat_img, dtype=float)[:, :, None] / 255.0
    base = np.asarray(image.convert("RGB"), dtype=float)
    color = np.array(tint, dtype=float)[None, None, :]
    blended = base * (1 - 0.6 * heat) + color * 0.6 * heat
    return Image.fromarray(blended.clip(0, 255).astype(np.uint8))


def export_heatmaps(model: FasModel, image_path: str | Path,
                    out_dir: str | Path) -> list[Path]:
    """Write one numeric grid file and one overlay per view plus a composite.

    Grid files are plain-text matrices (np.savetxt); each view's grid sums to
    1 since pre-renormalization scores are exported.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = Image.open(image_path).convert("RGB")
    size = model.config.image_size
    pixels = torch.from_numpy(
        np.asarray(image.resize((size, size), Image.BILINEAR), dtype=np.float32) / 255.0
    ).unsqueeze(0)

    attn = first_stage_attention(model, pixels)
    grids = attention_grids(attn)
    m = grids.shape[0] // 2
    written = []
    pos_total = np.zeros_like(grids[0])
    neg_total = np.zeros_like(grids[0])
    for j, grid in enumerate(grids):
        polarity, index = ("positive", j) if j < m else ("negative", j - m)
        stem = f"view_{polarity}_{index}"
        grid_path = out_dir / f"{stem}.txt"
        np.savetxt(grid_path, grid, fmt="%.10e")
        tint = POSITIVE_TINT if j < m else NEGATIVE_TINT
        overlay_path = out_dir / f"{stem}.png"
        _overlay(image, grid, tint).save(overlay_path)
        (pos_total if j < m else neg_total).__iadd__(grid)
        written += [grid_path, overlay_path]

    # composite: strongest polarity per patch, tinted accordingly
    base = np.asarray(image, dtype=float)
    composite = Image.fromarray(base.astype(np.uint8))
    composite = _overlay(composite, pos_total, POSITIVE_TINT)
    composite = _overlay(composite, neg_total, NEGATIVE_TINT)
    composite_path = out_dir / "composite.png"
    composite.save(composite_path)
    written.append(composite_path)
    return written
