"""Synthetic multi-domain face dataset generator.

Desk-scale stand-in for the licensed benchmark datasets: each domain renders
face-like blob composites over a domain-specific background hue with its own
noise level. Spoof samples take the real rendering and add a periodic grid
artifact, blur, and a specular highlight patch, parameterized per domain.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter


@dataclass(frozen=True)
class DomainRecipe:
    name: str
    hue: tuple[float, float, float]     # background base color, [0,1]
    noise_sigma: float                  # additive pixel noise
    grid_period: int                    # spoof artifact spatial period (px)
    grid_strength: float
    blur_sigma: float
    highlight_strength: float


# Domain shift lives in background hue and noise level; the spoof artifact
# parameters overlap across domains so the cue transfers under leave-one-out.
DEFAULT_RECIPES = (
    DomainRecipe("alpha", (0.35, 0.37, 0.46), 0.030, 4, 0.28, 1.0, 0.60),
    DomainRecipe("beta", (0.43, 0.38, 0.33), 0.040, 5, 0.32, 1.2, 0.65),
    DomainRecipe("gamma", (0.36, 0.43, 0.35), 0.035, 4, 0.26, 0.9, 0.55),
    DomainRecipe("delta", (0.41, 0.33, 0.42), 0.045, 5, 0.30, 1.1, 0.70),
)


def recipe_by_name(name: str) -> DomainRecipe:
    for recipe in DEFAULT_RECIPES:
        if recipe.name == name:
            return recipe
    raise KeyError(f"no built-in domain recipe named {name!r}")


def _render_real(rng: np.random.Generator, size: int, recipe: DomainRecipe) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(float) / size
    img = np.empty((size, size, 3))
    # per-image hue jitter keeps color from becoming a domain shortcut
    hue = np.clip(np.array(recipe.hue) + rng.uniform(-0.06, 0.06, 3), 0.0, 1.0)
    for c, base in enumerate(hue):
        img[:, :, c] = base + 0.1 * (yy - 0.5)  # gentle vertical gradient

    # face blob: smooth elliptical falloff with slight per-sample jitter
    cx = 0.5 + rng.uniform(-0.06, 0.06)
    cy = 0.5 + rng.uniform(-0.06, 0.06)
    rx = 0.28 + rng.uniform(-0.03, 0.03)
    ry = 0.36 + rng.uniform(-0.03, 0.03)
    d2 = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
    face = np.exp(-(d2 ** 2))
    skin = np.array([0.85, 0.66, 0.55]) + rng.uniform(-0.05, 0.05, size=3)
    img = img * (1 - face[:, :, None]) + skin[None, None, :] * face[:, :, None]

    # eyes and mouth as dark blobs
    for ex in (cx - 0.10, cx + 0.10):
        e2 = ((xx - ex) / 0.035) ** 2 + ((yy - (cy - 0.08)) / 0.025) ** 2
        img *= (1 - 0.7 * np.exp(-e2))[:, :, None]
    m2 = ((xx - cx) / 0.09) ** 2 + ((yy - (cy + 0.14)) / 0.03) ** 2
    img *= (1 - 0.5 * np.exp(-m2))[:, :, None]

    img += rng.normal(0.0, recipe.noise_sigma, img.shape)
    return np.clip(img, 0.0, 1.0)


def _render_spoof(real: np.ndarray, rng: np.random.Generator,
                  recipe: DomainRecipe) -> np.ndarray:
    size = real.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    img = gaussian_filter(real, sigma=(recipe.blur_sigma, recipe.blur_sigma, 0))

    phase = rng.uniform(0, 2 * np.pi)
    grid = np.sin(2 * np.pi * xx / recipe.grid_period + phase) \
        * np.sin(2 * np.pi * yy / recipe.grid_period + phase)
    img += recipe.grid_strength * grid[:, :, None] * 0.5

    hx = rng.uniform(0.25, 0.75) * size
    hy = rng.uniform(0.25, 0.75) * size
    h2 = ((xx - hx) ** 2 + (yy - hy) ** 2) / (0.08 * size) ** 2
    img += recipe.highlight_strength * np.exp(-h2)[:, :, None]

    # replayed/printed images lose contrast; this cue is domain-independent
    img = 0.8 * img + 0.2 * img.mean()
    return np.clip(img, 0.0, 1.0)


def generate_domain(root: Path, recipe: DomainRecipe, n_real: int, n_spoof: int,
                    size: int, seed: int) -> list[tuple[str, int, str]]:
    """Write PNGs for one domain; returns manifest rows (relpath, label, domain)."""
    if n_real <= 0 or n_spoof <= 0:
        raise ValueError("per-class sample counts must be positive")
    domain_dir = root / recipe.name
    domain_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n_real + n_spoof):
        # per-sample generator keyed by (seed, domain, index) for determinism
        name_key = int.from_bytes(hashlib.sha256(recipe.name.encode()).digest()[:2], "big")
        rng = np.random.default_rng([seed, name_key, i])
        real = _render_real(rng, size, recipe)
        if i < n_real:
            img, label, stem = real, 1, f"real_{i:04d}"
        else:
            img, label, stem = _render_spoof(real, rng, recipe), 0, f"spoof_{i - n_real:04d}"
        rel = f"{recipe.name}/{stem}.png"
        Image.fromarray((img * 255).round().astype(np.uint8)).save(root / rel)
        rows.append((rel, label, recipe.name))
    return rows


def generate_protocol(root: str | Path, recipes=DEFAULT_RECIPES, per_class: int = 100,
                      size: int = 64, seed: int = 0) -> Path:
    """Generate all domains plus a manifest file; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for recipe in recipes:
        rows += generate_domain(root, recipe, per_class, per_class, size, seed)
    manifest = root / "manifest.csv"
    with open(manifest, "w") as fh:
        for rel, label, domain in rows:
            fh.write(f"{rel},{label},{domain}\n")
    return manifest
