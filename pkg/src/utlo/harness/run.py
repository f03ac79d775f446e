"""Run directories: training with periodic evaluation, selection, sweeps, reports."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..autodiff import no_grad
from ..data.io import load_dataset, save_dataset
from ..data.profile import balanced_profile
from ..data.world import Dataset, generate_synthetic_dataset
from ..gan.config import ConfigError
from ..gan.train import NumericalAbort, TrainState, checkpoint_load, checkpoint_save, train_step
from ..metrics import (
    MetricsReport,
    append_csv,
    class_pair_similarity,
    compute_report,
    generate_images,
    get_embedder,
    read_csv,
    sample_generated,
    sample_generated_balanced,
    write_json,
)
from .config import ExperimentConfig, save_config
from .png import heat_map, image_grid, line_plot, write_png

SWEEP_AXES = {
    "res_uc": "model__res_uc",
    "lambda": "model__lambda_uc",
    "beta": "training__sampler_beta",
    "mode": "model__mode",
}


class HarnessError(RuntimeError):
    pass


# -- manifest -----------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    seed: int
    code_version: str = __version__
    start: float = field(default_factory=time.time)
    end: float | None = None
    status: str = "running"
    checkpoints: list = field(default_factory=list)
    metrics_csv: str = "metrics.csv"
    dataset: str = ""

    def save(self, run_dir: Path) -> None:
        write_json(run_dir / "manifest.json", self.__dict__)

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        return cls(**json.loads((Path(run_dir) / "manifest.json").read_text()))


# -- data ---------------------------------------------------------------------

def build_dataset(cfg: ExperimentConfig) -> Dataset:
    return generate_synthetic_dataset(cfg.dataset.world(), cfg.dataset.profile(), cfg.dataset.seed)


def reference_set(cfg: ExperimentConfig, train: Dataset) -> Dataset:
    """Real side of the metrics: the training set or a held-out balanced render."""
    if cfg.eval.reference == "train":
        return train
    c = cfg.dataset.num_classes
    profile = balanced_profile(cfg.eval.reference_per_class * c, c, train.profile.few_shot_classes)
    return generate_synthetic_dataset(cfg.dataset.world(), profile, cfg.eval.reference_seed)


def _check_compatible(cfg: ExperimentConfig, data: Dataset) -> None:
    h = data.images.shape[-1]
    if h != cfg.dataset.image_size or data.profile.num_classes != cfg.dataset.num_classes:
        raise ConfigError(
            f"dataset ({data.profile.num_classes} classes, {h}px) does not match config "
            f"({cfg.dataset.num_classes} classes, {cfg.dataset.image_size}px)"
        )


# -- evaluation ---------------------------------------------------------------

def evaluate_model(model, cfg: ExperimentConfig, train: Dataset, reference: Dataset, seed: int,
                   iteration: int = 0) -> MetricsReport:
    """Metrics for one snapshot. The latent draws depend on ``seed`` only, so
    every checkpoint of a run is scored on the same latents."""
    _check_compatible(cfg, reference)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    real_total = train.profile.total
    few_shot = sorted(train.profile.few_shot_classes)
    gen = sample_generated(model, train.profile.class_counts, cfg.gen_count(real_total), rng)
    gen_fs = sample_generated_balanced(model, few_shot, cfg.fs_per_class(real_total), rng)
    embedder = get_embedder(cfg.eval.embedder, cfg.dataset.image_size)
    return compute_report(
        gen,
        reference,
        few_shot,
        embedder,
        generated_fs=gen_fs,
        seed=seed,
        iteration=iteration,
        kid_block=cfg.eval.kid_block,
        balanced_fs=cfg.eval.balanced_fs,
        real_features=reference_features(embedder, reference),
    )


_FEATURE_CACHE: dict = {}


def reference_features(embedder, reference: Dataset) -> np.ndarray:
    """Embeddings of the real set, memoised on the image bytes."""
    key = (embedder.name, hashlib.sha1(reference.images.tobytes()).hexdigest())
    if key not in _FEATURE_CACHE:
        if len(_FEATURE_CACHE) >= 8:
            _FEATURE_CACHE.clear()
        _FEATURE_CACHE[key] = embedder.embed(reference.as_float())
    return _FEATURE_CACHE[key]


def checkpoint_name(iteration: int) -> str:
    return f"iter_{iteration:06d}.ckpt"


# -- training -----------------------------------------------------------------

@dataclass
class RunResult:
    run_dir: Path
    state: TrainState
    reports: list


def train_run(cfg: ExperimentConfig, run_dir, dataset: Dataset | None = None, resume=None, log=print) -> RunResult:
    """Train per ``cfg`` inside ``run_dir``; evaluate and checkpoint every
    ``eval_every`` iterations and once at the end."""
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run_dir / "reports").mkdir(exist_ok=True)
    save_config(cfg, run_dir / "config.yaml")
    if dataset is None:
        dataset = build_dataset(cfg)
    _check_compatible(cfg, dataset)
    data_path = run_dir / "dataset.ltds"
    save_dataset(dataset, data_path)
    reference = reference_set(cfg, dataset)

    manifest = RunManifest(cfg.config_hash(), cfg.seed, dataset=data_path.name)
    manifest.save(run_dir)
    csv_path = run_dir / manifest.metrics_csv
    if resume is None:
        state = TrainState.create(cfg.model_config(), cfg.train_config(), cfg.seed)
        if csv_path.exists():
            csv_path.unlink()
    else:
        state = checkpoint_load(resume)

    total = cfg.training.iterations
    every = cfg.training.eval_every
    reports = []
    start = time.time()
    try:
        while state.iteration < total:
            train_step(state, dataset)
            it = state.iteration
            if (every and it % every == 0) or it == total:
                report = evaluate_model(state.model, cfg, dataset, reference, cfg.seed, it)
                state.history.append(report.csv_row())
                ckpt = run_dir / "checkpoints" / checkpoint_name(it)
                checkpoint_save(state, ckpt)
                append_csv(csv_path, report)
                write_json(run_dir / "reports" / f"iter_{it:06d}.json", report.to_dict())
                manifest.checkpoints.append(str(ckpt.relative_to(run_dir)))
                manifest.save(run_dir)
                reports.append(report)
                log(
                    f"[{cfg.model.mode} seed={cfg.seed}] iter {it}: fid={report.fid:.4f} "
                    f"fid_fs={report.fid_fs:.4f} ({time.time() - start:.0f}s)"
                )
    except NumericalAbort as exc:
        write_json(run_dir / "abort.json", {"message": str(exc), **exc.snapshot})
        manifest.status = "aborted"
        manifest.save(run_dir)
        raise

    write_sample_grid(state.model, run_dir / "samples.png", cfg.eval.grid_latents, cfg.seed)
    manifest.status = "complete"
    manifest.end = time.time()
    manifest.save(run_dir)
    return RunResult(run_dir, state, reports)


def write_sample_grid(model, path: Path, num_latents: int, seed: int) -> dict:
    """Class x latent grid (rows = classes); the latent seeds go to a sidecar."""
    c = model.cfg.num_classes
    seeds = [int(seed) * 1000 + k for k in range(num_latents)]
    z = np.stack([np.random.default_rng(s).standard_normal(model.cfg.z_dim) for s in seeds]).astype(np.float32)
    images = generate_images(model, np.tile(z, (c, 1)), np.repeat(np.arange(c), num_latents))
    write_png(path, image_grid(images, c, num_latents, scale=2))
    meta = {"rows": "class", "cols": "latent", "latent_seeds": seeds, "classes": list(range(c))}
    write_json(Path(path).with_suffix(".json"), meta)
    return meta


# -- selection ----------------------------------------------------------------

def select_best(run_dir) -> tuple[dict, Path]:
    """Row of metrics.csv with the lowest FID-FS and its checkpoint path."""
    run_dir = Path(run_dir)
    csv_path = run_dir / "metrics.csv"
    if not csv_path.exists():
        raise HarnessError(f"{csv_path} not found")
    rows = read_csv(csv_path)
    if not rows:
        raise HarnessError(f"{csv_path} has no evaluations")
    best = min(rows, key=lambda r: (float(r["fid_fs"]), int(r["iter"])))
    return best, run_dir / "checkpoints" / checkpoint_name(int(best["iter"]))


# -- sweeps -------------------------------------------------------------------

def derive_seed(seed: int, axis: str, value) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{axis}:{value}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFF


def _parse_value(axis: str, raw):
    if axis == "mode":
        return str(raw)
    if axis == "res_uc":
        return int(raw)
    return float(raw)


def sweep_configs(cfg: ExperimentConfig, axis: str, values, seed_rule: str = "shared"):
    """Validated child configs, one per value; raises before anything runs."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if seed_rule not in ("shared", "derived"):
        raise ConfigError(f"seed rule must be 'shared' or 'derived', got {seed_rule!r}")
    children = []
    for raw in values:
        value = _parse_value(axis, raw)
        child = cfg.with_overrides(**{SWEEP_AXES[axis]: value})
        if seed_rule == "derived":
            child = child.with_overrides(seed=derive_seed(cfg.seed, axis, value))
        children.append((value, child))
    return children


def run_sweep(cfg: ExperimentConfig, axis: str, values, out_dir, seed_rule: str = "shared", log=print) -> list[dict]:
    out_dir = Path(out_dir)
    children = sweep_configs(cfg, axis, values, seed_rule)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    save_dataset(dataset, out_dir / "dataset.ltds")
    rows = []
    for value, child in children:
        child_dir = out_dir / f"{axis}={value}"
        train_run(child, child_dir, dataset=dataset, log=log)
        best, ckpt = select_best(child_dir)
        rows.append({"axis": axis, "value": value, "seed": child.seed, **best, "checkpoint": str(ckpt.relative_to(out_dir))})
    rows.sort(key=lambda r: float(r["fid_fs"]))
    write_sweep_table(out_dir / "sweep.csv", rows)
    return rows


def write_sweep_table(path: Path, rows: list[dict]) -> None:
    import csv

    cols = ["axis", "value", "seed", "iter", "fid", "fid_fs", "kid_x1000", "kid_fs_x1000", "embedder", "checkpoint"]
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# -- reports ------------------------------------------------------------------

def low_resolution_column(model, z_row: np.ndarray, first_class: int) -> np.ndarray:
    """x_hat_l for one latent, nearest-upsampled to full resolution.

    UTLO models use the label-free path; the conditional baseline has none,
    so its low-resolution output under ``first_class`` is shown instead.
    """
    z = z_row[None].astype(np.float32)
    with no_grad():
        if model.cfg.split:
            low = model.generate_low(z).data
        else:
            low = model.generate(z, np.array([first_class]))[1].data
    factor = model.cfg.resolution // low.shape[-1]
    return low.repeat(factor, axis=2).repeat(factor, axis=3)


def knowledge_sharing_grid(model, z: np.ndarray, classes) -> np.ndarray:
    """Rows share one latent: column 0 is x_hat_l upsampled, then x_hat per class."""
    rows = []
    with no_grad():
        for zi in z:
            zz = np.repeat(zi[None], len(classes), axis=0)
            img, _ = model.generate(zz, np.asarray(classes))
            rows.append(np.concatenate([low_resolution_column(model, zi, classes[0]), img.data]))
    return np.concatenate(rows)


def emit_report(run_dir, num_latents: int | None = None, log=print) -> dict:
    """Curves, sample grids, the knowledge-sharing grid and the class-pair heat map."""
    run_dir = Path(run_dir)
    csv_path = run_dir / "metrics.csv"
    if not csv_path.exists() or not read_csv(csv_path):
        raise HarnessError(f"no evaluations recorded in {csv_path}")
    rows = read_csv(csv_path)
    its = [int(r["iter"]) for r in rows]
    write_png(run_dir / "curve_fid.png", line_plot({
        "fid": (its, [float(r["fid"]) for r in rows]),
        "fid_fs": (its, [float(r["fid_fs"]) for r in rows]),
    }))
    write_png(run_dir / "curve_kid.png", line_plot({
        "kid_x1000": (its, [float(r["kid_x1000"]) for r in rows]),
        "kid_fs_x1000": (its, [float(r["kid_fs_x1000"]) for r in rows]),
    }))

    from .config import load_config

    cfg = load_config(run_dir / "config.yaml")
    _, ckpt = select_best(run_dir)
    state = checkpoint_load(ckpt)
    model = state.model
    write_sample_grid(model, run_dir / "best_samples.png", cfg.eval.grid_latents, cfg.seed)

    data = load_dataset(run_dir / "dataset.ltds", cfg.dataset.profile().few_shot_classes, cfg.dataset.rho)
    counts = np.asarray(data.profile.class_counts)
    head = [int(c) for c in np.argsort(-counts, kind="stable")[:2]]
    tail = sorted(data.profile.few_shot_classes)[-2:]
    classes = head + tail
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 5]))
    z = rng.standard_normal((4, model.cfg.z_dim)).astype(np.float32)
    grid = knowledge_sharing_grid(model, z, classes)
    write_png(run_dir / "knowledge_sharing.png", image_grid(grid, len(z), len(classes) + 1, scale=2))
    write_json(run_dir / "knowledge_sharing.json", {"z": z.tolist(), "classes": classes, "checkpoint": ckpt.name})

    n_lat = num_latents or cfg.eval.num_latents
    sim = class_pair_similarity(model, n_lat, get_embedder(cfg.eval.embedder, cfg.dataset.image_size), seed=cfg.seed)
    write_json(run_dir / "pair_similarity.json", sim.to_dict())
    np.savetxt(run_dir / "pair_similarity.csv", sim.class_pair_matrix, delimiter=",", fmt="%.8f")
    write_png(run_dir / "pair_similarity.png", heat_map(sim.class_pair_matrix))
    log(f"report written to {run_dir} (best checkpoint {ckpt.name}, off-diagonal {sim.off_diagonal_mean():.4f})")
    return {"checkpoint": str(ckpt), "off_diagonal_mean": sim.off_diagonal_mean()}


def emit_sweep_report(sweep_dir, log=print) -> None:
    sweep_dir = Path(sweep_dir)
    series = {}
    for child in sorted(p for p in sweep_dir.iterdir() if (p / "metrics.csv").exists()):
        rows = read_csv(child / "metrics.csv")
        if rows:
            series[child.name] = ([int(r["iter"]) for r in rows], [float(r["fid_fs"]) for r in rows])
    if not series:
        raise HarnessError(f"no child runs with metrics under {sweep_dir}")
    write_png(sweep_dir / "curve_fid_fs.png", line_plot(series))
    write_json(sweep_dir / "curve_fid_fs.json", {"legend": list(series)})
    log(f"sweep curves written to {sweep_dir}")


def is_sweep_dir(path) -> bool:
    return (Path(path) / "sweep.csv").exists()


__all__ = [
    "HarnessError",
    "RunManifest",
    "RunResult",
    "SWEEP_AXES",
    "build_dataset",
    "checkpoint_name",
    "derive_seed",
    "emit_report",
    "emit_sweep_report",
    "evaluate_model",
    "knowledge_sharing_grid",
    "low_resolution_column",
    "reference_set",
    "run_sweep",
    "select_best",
    "sweep_configs",
    "train_run",
    "write_sample_grid",
]
