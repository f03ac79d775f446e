"""Feature embedders standing in for a pretrained image network.

All embedders map images (N, 3, H, H) in [-1, 1] to float64 features and are
pure functions of their input: weights come from fixed seeds.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Protocol

import numpy as np

from ..autodiff import Parameter, Tensor, adam_step, backward, no_grad, ops
from ..data.profile import balanced_profile
from ..data.resample import downsample_bilinear
from ..data.world import SyntheticWorldSpec, generate_synthetic_dataset

EMBEDDERS = ("pool-flatten", "random-conv", "probe-classifier")


class FeatureEmbedder(Protocol):
    name: str
    dim: int

    def embed(self, images: np.ndarray) -> np.ndarray: ...


def _check_images(images) -> np.ndarray:
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"expected images (N, 3, H, W), got {images.shape}")
    return images.astype(np.float32, copy=False)


class PoolFlattenEmbedder:
    """Bilinear reduction to 8x8 followed by flattening (dim 192)."""

    name = "pool-flatten"

    def __init__(self, size: int = 8):
        self.size = size
        self.dim = 3 * size * size

    def embed(self, images) -> np.ndarray:
        images = _check_images(images)
        if images.shape[-1] != self.size:
            images = downsample_bilinear(images, self.size)
        return images.reshape(len(images), -1).astype(np.float64)


def _conv_stack(x: Tensor, weights, slope: float = 0.2) -> Tensor:
    """3x3 conv + leaky relu per stage, 2x average pooling between stages."""
    for i, w in enumerate(weights):
        if i:
            x = ops.avg_pool2d(x, 2)
        x = ops.leaky_relu(ops.conv2d(x, w, stride=1, pad=1), slope)
    return x


class RandomConvEmbedder:
    """Fixed-seed random conv net with global average pooling (dim 128).

    Three 3x3 stages (32, 64, 128 channels) with He-scaled Gaussian weights.
    The first stage sees one-pixel texture at full resolution.
    """

    name = "random-conv"

    def __init__(self, seed: int = 1234, widths=(32, 64, 128), batch: int = 256):
        rng = np.random.default_rng(seed)
        self.weights = []
        c_in = 3
        for c_out in widths:
            std = np.sqrt(2.0 / (c_in * 9))
            self.weights.append(Tensor((rng.standard_normal((c_out, c_in, 3, 3)) * std).astype(np.float32)))
            c_in = c_out
        self.dim = widths[-1]
        self.batch = batch

    def embed(self, images) -> np.ndarray:
        images = _check_images(images)
        out = np.empty((len(images), self.dim), dtype=np.float64)
        with no_grad():
            for start in range(0, len(images), self.batch):
                h = _conv_stack(Tensor(images[start : start + self.batch]), self.weights)
                out[start : start + self.batch] = h.data.mean(axis=(2, 3))
        return out


class ProbeClassifierEmbedder:
    """Penultimate features of a small classifier trained on the balanced world.

    Training happens once per (world spec, seed) and is cached in-process.
    """

    name = "probe-classifier"

    def __init__(self, world: SyntheticWorldSpec | None = None, seed: int = 4321, per_class: int = 200,
                 steps: int = 400, batch: int = 64):
        self.world = world or SyntheticWorldSpec()
        self.params = _train_probe(self.world, seed, per_class, steps, batch)
        self.dim = self.params["fc.weight"].shape[0]

    def _features(self, x: Tensor) -> Tensor:
        return _probe_features(self.params, x)

    def embed(self, images) -> np.ndarray:
        images = _check_images(images)
        out = []
        with no_grad():
            for start in range(0, len(images), 256):
                out.append(self._features(Tensor(images[start : start + 256])).data)
        return np.concatenate(out).astype(np.float64) if out else np.zeros((0, self.dim))

    def logits(self, images) -> np.ndarray:
        with no_grad():
            h = self._features(Tensor(_check_images(images)))
            return ops.linear(h, self.params["head.weight"].tensor, self.params["head.bias"].tensor).data


@lru_cache(maxsize=4)
def _train_probe(world: SyntheticWorldSpec, seed: int, per_class: int, steps: int, batch: int):
    rng = np.random.default_rng(seed)
    profile = balanced_profile(per_class * world.num_classes, world.num_classes, frozenset({world.num_classes - 1}))
    data = generate_synthetic_dataset(world, profile, seed)
    images = data.as_float()
    size = world.image_size
    widths = (16, 32, 64)
    params = {}
    c_in = 3
    for i, c_out in enumerate(widths):
        params[f"conv{i}"] = Parameter(f"conv{i}", rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / (c_in * 9)))
        c_in = c_out
    flat = widths[-1] * (size // 8) ** 2
    params["fc.weight"] = Parameter("fc.weight", rng.standard_normal((64, flat)) * np.sqrt(2.0 / flat))
    params["fc.bias"] = Parameter("fc.bias", np.zeros(64))
    params["head.weight"] = Parameter("head.weight", rng.standard_normal((world.num_classes, 64)) * np.sqrt(1.0 / 64))
    params["head.bias"] = Parameter("head.bias", np.zeros(world.num_classes))
    for _ in range(steps):
        idx = rng.integers(0, len(images), size=batch)
        x, y = Tensor(images[idx]), data.labels[idx]
        logits = ops.linear(_probe_features(params, x), params["head.weight"].tensor, params["head.bias"].tensor)
        loss = _cross_entropy(logits, y)
        backward(loss)
        adam_step(list(params.values()), 1e-3, 0.9, 0.999, 1e-8)
    for p in params.values():
        p.tensor.requires_grad = False
    return params


def _probe_features(params, x: Tensor) -> Tensor:
    convs = [params[f"conv{i}"].tensor for i in range(3)]
    h = ops.avg_pool2d(_conv_stack(x, convs), 2)
    h = ops.reshape(h, (h.shape[0], -1))
    return ops.leaky_relu(ops.linear(h, params["fc.weight"].tensor, params["fc.bias"].tensor), 0.2)


def _cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    n, c = logits.shape
    onehot = np.zeros((n, c), dtype=logits.data.dtype)
    onehot[np.arange(n), labels] = 1.0
    picked = ops.sum(ops.mul(logits, Tensor(onehot)), axis=1)
    return ops.mean(ops.sub(ops.logsumexp(logits), picked))


@lru_cache(maxsize=8)
def _cached_embedder(name: str, image_size: int):
    if name == "pool-flatten":
        return PoolFlattenEmbedder()
    if name == "random-conv":
        return RandomConvEmbedder()
    if name == "probe-classifier":
        return ProbeClassifierEmbedder(SyntheticWorldSpec(image_size=image_size))
    raise ValueError(f"unknown embedder {name!r}; choose one of {EMBEDDERS}")


def get_embedder(name: str, image_size: int = 32) -> FeatureEmbedder:
    return _cached_embedder(name, image_size)
