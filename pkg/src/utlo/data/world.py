"""Procedural long-tailed image world.

Every image is a textured foreground object on a gradient background. The
class decides only the object's shape and its one-pixel texture; background
colours, gradient direction, object colour, position and scale are drawn from
distributions shared by all classes. After an 8x8 bilinear reduction the
texture averages out, so classes look alike at low resolution and differ at
full resolution.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .profile import LongTailProfile

SHAPES = ("disk", "square", "triangle", "cross", "ring")
TEXTURES = ("hstripe", "vstripe", "checker", "dots")


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticWorldSpec:
    image_size: int = 32
    num_classes: int = 10
    class_feature_seed: int = 0
    nuisance_palette_size: int = 8
    shape_kinds: tuple = SHAPES
    texture_amplitude: float = 0.28
    pixel_noise: float = 0.02

    def __post_init__(self):
        if self.image_size < 16:
            raise WorldError(f"image_size {self.image_size} < 16: foreground texture unresolvable")
        if self.image_size & (self.image_size - 1):
            raise WorldError(f"image_size must be a power of two, got {self.image_size}")
        unknown = set(self.shape_kinds) - set(SHAPES)
        if unknown:
            raise WorldError(f"unknown shapes {sorted(unknown)}")
        if self.num_classes > len(self.shape_kinds) * len(TEXTURES):
            raise WorldError(
                f"{self.num_classes} classes exceed {len(self.shape_kinds) * len(TEXTURES)} "
                "distinct (shape, texture) combinations"
            )
        if self.nuisance_palette_size < 2:
            raise WorldError("nuisance palette needs at least two colours")

    @cached_property
    def class_features(self) -> list[tuple[str, str]]:
        """(shape, texture) per class, a seeded permutation of all combinations."""
        combos = list(itertools.product(self.shape_kinds, TEXTURES))
        order = np.random.default_rng(self.class_feature_seed).permutation(len(combos))
        return [combos[i] for i in order[: self.num_classes]]

    @cached_property
    def palette(self) -> np.ndarray:
        rng = np.random.default_rng([self.class_feature_seed, 1])
        return rng.uniform(0.1, 0.9, size=(self.nuisance_palette_size, 3))


@dataclass
class Dataset:
    """uint8 images (N, 3, H, H) with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    profile: LongTailProfile
    seed: int

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_size(self) -> int:
        return self.images.shape[-1]

    @property
    def num_classes(self) -> int:
        return self.profile.num_classes

    @cached_property
    def class_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(self.num_classes)]

    def as_float(self, idx=None) -> np.ndarray:
        """Images mapped to float32 in [-1, 1]."""
        imgs = self.images if idx is None else self.images[idx]
        return imgs.astype(np.float32) / np.float32(127.5) - np.float32(1.0)


def _shape_mask(kind: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if kind == "disk":
        return u * u + v * v <= 1.0
    if kind == "square":
        return np.maximum(np.abs(u), np.abs(v)) <= 0.82
    if kind == "triangle":
        return (v >= -0.95) & (v <= 0.8) & (np.abs(u) <= (v + 0.95) * 0.62)
    if kind == "cross":
        return ((np.abs(u) <= 0.32) & (np.abs(v) <= 1.0)) | ((np.abs(v) <= 0.32) & (np.abs(u) <= 1.0))
    if kind == "ring":
        r2 = u * u + v * v
        return (r2 <= 1.0) & (r2 >= 0.36)
    raise WorldError(f"unknown shape {kind!r}")


def _texture(kind: str, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Zero-mean one-pixel pattern."""
    if kind == "hstripe":
        return np.where(ys % 2 == 0, 1.0, -1.0)
    if kind == "vstripe":
        return np.where(xs % 2 == 0, 1.0, -1.0)
    if kind == "checker":
        return np.where((xs + ys) % 2 == 0, 1.0, -1.0)
    if kind == "dots":
        return np.where((xs % 2 == 0) & (ys % 2 == 0), 1.5, -0.5)
    raise WorldError(f"unknown texture {kind!r}")


def render_image(spec: SyntheticWorldSpec, label: int, rng: np.random.Generator) -> np.ndarray:
    """One uint8 image (3, H, H). Consumes a fixed number of draws from ``rng``."""
    h = spec.image_size
    ys, xs = np.mgrid[0:h, 0:h].astype(np.float64)
    pal = spec.palette
    # nuisance: identical distributions for every class
    c1, c2, cf = rng.choice(len(pal), size=3, replace=False)
    angle = rng.uniform(0, 2 * np.pi)
    cx, cy = rng.uniform(0.3 * h, 0.7 * h, size=2)
    radius = rng.uniform(0.2 * h, 0.3 * h)
    noise = rng.uniform(-spec.pixel_noise, spec.pixel_noise, size=(3, h, h))

    t = ((xs - h / 2) * np.cos(angle) + (ys - h / 2) * np.sin(angle)) / h + 0.5
    t = np.clip(t, 0, 1)
    bg = pal[c1][:, None, None] * (1 - t) + pal[c2][:, None, None] * t

    shape, texture = spec.class_features[label]
    mask = _shape_mask(shape, (xs + 0.5 - cx) / radius, (ys + 0.5 - cy) / radius)
    fg_base = 0.3 + 0.4 * pal[cf]
    fg = fg_base[:, None, None] + spec.texture_amplitude * _texture(texture, xs, ys)[None]
    img = np.where(mask[None], fg, bg) + noise
    return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)


def generate_synthetic_dataset(spec: SyntheticWorldSpec, profile: LongTailProfile, seed: int) -> Dataset:
    """Render ``profile.class_counts[c]`` images of each class, deterministically."""
    if profile.num_classes != spec.num_classes:
        raise WorldError(
            f"profile has {profile.num_classes} classes, world has {spec.num_classes}"
        )
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(profile.num_classes), profile.class_counts)
    images = np.empty((len(labels), 3, spec.image_size, spec.image_size), dtype=np.uint8)
    for i, y in enumerate(labels):
        images[i] = render_image(spec, int(y), rng)
    return Dataset(images, labels.astype(np.int64), profile, seed)
