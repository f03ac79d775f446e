"""Paired UTLO-vs-baseline study on the toy world.

Each seed trains both modes on the same dataset bytes with the same seed,
selects each run's checkpoint by lowest FID-FS and records the class-pair
distance statistic at that checkpoint.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from ..gan.train import checkpoint_load
from ..metrics import class_pair_similarity, get_embedder, write_json
from .config import ExperimentConfig
from .run import build_dataset, select_best, train_run

MODES = ("utlo", "conditional")


def desk_config(iterations: int = 1200, eval_every: int = 400) -> ExperimentConfig:
    """The toy world (C=10, rho=100, 32px, res_uc=8, lambda=1) with a desk-sized budget."""
    cfg = ExperimentConfig()
    return cfg.with_overrides(
        training__iterations=iterations,
        training__eval_every=eval_every,
        eval__gen_count=2000,
        eval__fs_per_class=250,
        eval__reference="balanced",
        eval__num_latents=200,
    )


@dataclass
class PairOutcome:
    seed: int
    fid_fs: dict = field(default_factory=dict)
    selected_iter: dict = field(default_factory=dict)
    off_diagonal: dict = field(default_factory=dict)

    @property
    def utlo_wins_fid_fs(self) -> bool:
        return self.fid_fs["utlo"] < self.fid_fs["conditional"]

    @property
    def utlo_wins_similarity(self) -> bool:
        return self.off_diagonal["utlo"] < self.off_diagonal["conditional"]


@dataclass
class StudyResult:
    pairs: list
    elapsed_s: float

    @property
    def fid_fs_wins(self) -> int:
        return sum(p.utlo_wins_fid_fs for p in self.pairs)

    @property
    def similarity_wins(self) -> int:
        return sum(p.utlo_wins_similarity for p in self.pairs)

    def to_dict(self) -> dict:
        return {
            "elapsed_s": self.elapsed_s,
            "fid_fs_wins": self.fid_fs_wins,
            "similarity_wins": self.similarity_wins,
            "pairs": [
                {
                    "seed": p.seed,
                    "fid_fs": p.fid_fs,
                    "selected_iter": p.selected_iter,
                    "off_diagonal": p.off_diagonal,
                }
                for p in self.pairs
            ],
        }


def run_study(cfg: ExperimentConfig, seeds, out_dir, log=print) -> StudyResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    dataset = build_dataset(cfg)
    embedder = get_embedder(cfg.eval.embedder, cfg.dataset.image_size)
    pairs = []
    for seed in seeds:
        outcome = PairOutcome(int(seed))
        for mode in MODES:
            child = cfg.with_overrides(seed=int(seed), model__mode=mode)
            run_dir = out_dir / f"seed{seed}_{mode}"
            train_run(child, run_dir, dataset=dataset, log=log)
            best, ckpt = select_best(run_dir)
            model = checkpoint_load(ckpt).model
            sim = class_pair_similarity(model, cfg.eval.num_latents, embedder, seed=int(seed))
            write_json(run_dir / "pair_similarity.json", sim.to_dict())
            outcome.fid_fs[mode] = float(best["fid_fs"])
            outcome.selected_iter[mode] = int(best["iter"])
            outcome.off_diagonal[mode] = sim.off_diagonal_mean()
        log(
            f"seed {seed}: FID-FS utlo={outcome.fid_fs['utlo']:.4f} cond={outcome.fid_fs['conditional']:.4f}; "
            f"pair distance utlo={outcome.off_diagonal['utlo']:.4f} cond={outcome.off_diagonal['conditional']:.4f}"
        )
        pairs.append(outcome)
    result = StudyResult(pairs, time.time() - start)
    write_json(out_dir / "study.json", result.to_dict())
    return result
