"""Evaluation protocol: FID/KID on the full sets and on the few-shot subset."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import no_grad
from .embedders import FeatureEmbedder
from .stats import MetricError, frechet_distance, gaussian_fit, kid_mmd

CSV_COLUMNS = ("iter", "fid", "fid_fs", "kid_x1000", "kid_fs_x1000", "embedder", "gen_count", "real_count", "seed")


@dataclass
class LabeledImages:
    """Float images in [-1, 1] with labels; the generated side of a report."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def _float_images(obj) -> np.ndarray:
    images = obj.images
    if images.dtype == np.uint8:
        return images.astype(np.float32) / 127.5 - 1.0
    return images.astype(np.float32, copy=False)


@dataclass
class MetricsReport:
    """KID values are stored raw; ``csv_row`` renders them x1000."""

    fid: float
    fid_fs: float
    kid: float
    kid_fs: float
    embedder: str
    gen_count: int
    real_count: int
    few_shot_classes: list
    fs_real_counts: dict
    fs_gen_count: int
    seed: int
    iteration: int = 0
    balanced_fs: bool = True

    def csv_row(self) -> dict:
        return {
            "iter": self.iteration,
            "fid": f"{self.fid:.6f}",
            "fid_fs": f"{self.fid_fs:.6f}",
            "kid_x1000": f"{self.kid * 1000:.6f}",
            "kid_fs_x1000": f"{self.kid_fs * 1000:.6f}",
            "embedder": self.embedder,
            "gen_count": self.gen_count,
            "real_count": self.real_count,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fs_real_counts"] = {str(k): v for k, v in self.fs_real_counts.items()}
        return d


def append_csv(path, report: MetricsReport) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow(report.csv_row())


def write_json(path, payload) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def balanced_real_indices(labels: np.ndarray, classes, rng: np.random.Generator, balanced: bool = True):
    """Indices of the real few-shot subset and the per-class counts used.

    With ``balanced`` every class is subsampled (without replacement) to the
    smallest class count among ``classes``.
    """
    labels = np.asarray(labels)
    pools = {}
    for c in sorted(classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            raise MetricError(f"few-shot class {c} has {len(idx)} real images; need at least 2")
        pools[c] = idx
    if not balanced:
        return np.concatenate(list(pools.values())), {c: len(v) for c, v in pools.items()}
    m = min(len(v) for v in pools.values())
    chosen = [np.sort(rng.choice(v, size=m, replace=False)) for v in pools.values()]
    counts = {c: m for c in pools}
    if len(set(counts.values())) != 1:
        raise AssertionError("few-shot real counts are not equal")
    return np.concatenate(chosen), counts


def _kid(a, b, block):
    return kid_mmd(a, b, block=min(block, len(a), len(b)))


def compute_report(
    generated,
    real,
    few_shot,
    embedder: FeatureEmbedder,
    gen_count: int | None = None,
    *,
    generated_fs=None,
    seed: int = 0,
    iteration: int = 0,
    kid_block: int = 1000,
    balanced_fs: bool = True,
    real_features: np.ndarray | None = None,
) -> MetricsReport:
    """FID/KID of ``generated`` against ``real`` plus the few-shot variants.

    ``generated_fs`` is the generated sample for the few-shot metrics; when
    omitted, the rows of ``generated`` with few-shot labels are used.
    ``real_features`` may carry precomputed embeddings of ``real``.
    """
    few_shot = sorted(int(c) for c in few_shot)
    if not few_shot:
        raise MetricError("few-shot class set is empty")
    gen_images = _float_images(generated)
    gen_labels = np.asarray(generated.labels)
    if gen_count is not None:
        if gen_count > len(gen_labels):
            raise MetricError(f"requested {gen_count} generated images, only {len(gen_labels)} given")
        gen_images, gen_labels = gen_images[:gen_count], gen_labels[:gen_count]
    real_images = _float_images(real)
    real_labels = np.asarray(real.labels)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    fs_idx, fs_counts = balanced_real_indices(real_labels, few_shot, rng, balanced=balanced_fs)

    f_real = embedder.embed(real_images) if real_features is None else np.asarray(real_features)
    if len(f_real) != len(real_labels):
        raise MetricError("real_features rows do not match the real set")
    f_gen = embedder.embed(gen_images)
    if generated_fs is None:
        mask = np.isin(gen_labels, few_shot)
        f_gen_fs = f_gen[mask]
    else:
        f_gen_fs = embedder.embed(_float_images(generated_fs))
    f_real_fs = f_real[fs_idx]
    if len(f_gen_fs) < 2:
        raise MetricError("fewer than 2 generated few-shot images")

    fid = frechet_distance(gaussian_fit(f_gen), gaussian_fit(f_real))
    fid_fs = frechet_distance(gaussian_fit(f_gen_fs), gaussian_fit(f_real_fs))
    kid = _kid(f_gen, f_real, kid_block)
    kid_fs = _kid(f_gen_fs, f_real_fs, kid_block)
    return MetricsReport(
        fid=fid,
        fid_fs=fid_fs,
        kid=kid,
        kid_fs=kid_fs,
        embedder=embedder.name,
        gen_count=len(gen_labels),
        real_count=len(real_labels),
        few_shot_classes=few_shot,
        fs_real_counts=fs_counts,
        fs_gen_count=len(f_gen_fs),
        seed=int(seed),
        iteration=int(iteration),
        balanced_fs=balanced_fs,
    )


# -- generation helpers -------------------------------------------------------

def generate_images(model, z: np.ndarray, labels: np.ndarray, batch: int = 250) -> np.ndarray:
    """Full-resolution samples from ``model`` without recording a graph."""
    out = []
    with no_grad():
        for start in range(0, len(labels), batch):
            img, _ = model.generate(z[start : start + batch], labels[start : start + batch])
            out.append(img.data)
    return np.concatenate(out) if out else np.zeros((0, 3, model.cfg.resolution, model.cfg.resolution), np.float32)


def generate_low_images(model, z: np.ndarray, batch: int = 250) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(z), batch):
            out.append(model.generate_low(z[start : start + batch]).data)
    return np.concatenate(out)


def sample_generated(model, class_probabilities, count: int, rng: np.random.Generator) -> LabeledImages:
    """``count`` samples with labels drawn from ``class_probabilities``."""
    probs = np.asarray(class_probabilities, dtype=np.float64)
    labels = rng.choice(len(probs), size=count, p=probs / probs.sum())
    z = rng.standard_normal((count, model.cfg.z_dim)).astype(np.float32)
    return LabeledImages(generate_images(model, z, labels), labels)


def sample_generated_balanced(model, classes, per_class: int, rng: np.random.Generator) -> LabeledImages:
    labels = np.repeat(np.asarray(sorted(classes)), per_class)
    z = rng.standard_normal((len(labels), model.cfg.z_dim)).astype(np.float32)
    return LabeledImages(generate_images(model, z, labels), labels)


# -- class-pair similarity ----------------------------------------------------

@dataclass
class PairSimilarityReport:
    """Mean feature distance between classes generated from the same latents.

    The diagonal is the within-class baseline: a class against itself under a
    resampled (cyclically shifted) set of latents.
    """

    class_pair_matrix: np.ndarray
    num_latents: int
    embedder: str
    pairing: str = "shared"
    extra: dict = field(default_factory=dict)

    def off_diagonal_mean(self) -> float:
        m = self.class_pair_matrix
        mask = ~np.eye(len(m), dtype=bool)
        return float(m[mask].mean())

    def to_dict(self) -> dict:
        return {
            "class_pair_matrix": self.class_pair_matrix.tolist(),
            "num_latents": self.num_latents,
            "embedder": self.embedder,
            "pairing": self.pairing,
            "off_diagonal_mean": self.off_diagonal_mean(),
        }


def class_pair_similarity(
    model, num_latents: int, embedder: FeatureEmbedder, seed: int = 0, pairing: str = "shared"
) -> PairSimilarityReport:
    """Feature-space L2 distances between classes over shared latent draws.

    ``pairing="shared"`` compares classes under the same latent, with the
    diagonal taken across resampled latents. ``pairing="independent"``
    compares every pair, including a class with itself, across resampled
    latents, so a label-blind generator gives a constant matrix.
    """
    if num_latents < 2:
        raise MetricError("num_latents must be >= 2")
    if pairing not in ("shared", "independent"):
        raise MetricError(f"unknown pairing {pairing!r}")
    c = model.cfg.num_classes
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    z = rng.standard_normal((num_latents, model.cfg.z_dim)).astype(np.float32)
    z_all = np.tile(z, (c, 1))
    labels = np.repeat(np.arange(c), num_latents)
    feats = embedder.embed(generate_images(model, z_all, labels)).reshape(c, num_latents, -1)
    shifted = np.roll(feats, 1, axis=1)

    matrix = np.zeros((c, c))
    for a in range(c):
        for b in range(a, c):
            if a == b or pairing == "independent":
                d = 0.5 * (
                    np.linalg.norm(feats[a] - shifted[b], axis=1).mean()
                    + np.linalg.norm(feats[b] - shifted[a], axis=1).mean()
                )
            else:
                d = np.linalg.norm(feats[a] - feats[b], axis=1).mean()
            matrix[a, b] = matrix[b, a] = d
    return PairSimilarityReport(matrix, num_latents, embedder.name, pairing)
