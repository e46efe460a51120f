"""Dataset manifests and leave-one-out protocol assembly."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image


@dataclass
class Sample:
    path: Path
    label: int
    domain: str

    @property
    def sample_id(self) -> str:
        return f"{self.domain}/{self.path.stem}"


def load_manifest(manifest_path: str | Path) -> dict[str, list[Sample]]:
    """Parse `path,label,domain` lines; paths are relative to the manifest."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    domains: dict[str, list[Sample]] = {}
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{manifest_path}:{lineno}: expected path,label,domain")
            rel, label, domain = parts
            domains.setdefault(domain, []).append(
                Sample(root / rel, int(label), domain))
    return domains


def leave_one_out(domains: dict[str, list[Sample]],
                  target: str) -> tuple[list[Sample], list[Sample]]:
    """Train on every domain except the target; test on the target only."""
    if target not in domains:
        raise ValueError(f"target domain {target!r} not in manifest "
                         f"(have {sorted(domains)})")
    if len(domains) < 2:
        raise ValueError("leave-one-out needs at least two domains")
    train = [s for name, samples in sorted(domains.items())
             for s in samples if name != target]
    test = list(domains[target])
    return train, test


def load_images(samples: list[Sample], image_size: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Eagerly load samples into ([N,H,W,3] float in [0,1], [N] int labels)."""
    pixels = np.empty((len(samples), image_size, image_size, 3), dtype=np.float32)
    labels = np.empty(len(samples), dtype=np.int64)
    for i, sample in enumerate(samples):
        img = Image.open(sample.path).convert("RGB")
        if img.size != (image_size, image_size):
            img = img.resize((image_size, image_size), Image.BILINEAR)
        pixels[i] = np.asarray(img, dtype=np.float32) / 255.0
        labels[i] = sample.label
    return torch.from_numpy(pixels), torch.from_numpy(labels)
