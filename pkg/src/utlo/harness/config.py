"""Experiment configuration: one YAML tree, validated, with unknown keys rejected."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..data.profile import LongTailProfile, balanced_profile, make_exponential_profile
from ..data.world import SyntheticWorldSpec
from ..gan.config import ConfigError, TrainConfig, UTLOConfig
from ..metrics.embedders import EMBEDDERS


def _from_dict(cls, d: dict, section: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    return cls(**d)


@dataclass
class DatasetSection:
    num_classes: int = 10
    n_max: int = 500
    rho: float = 100.0
    image_size: int = 32
    seed: int = 1
    few_shot_rule: str = "fraction"
    few_shot_fraction: float = 0.4
    few_shot_threshold: int = 50
    balanced: bool = False

    def __post_init__(self):
        if self.few_shot_rule not in ("fraction", "threshold"):
            raise ConfigError(f"few_shot_rule must be 'fraction' or 'threshold', got {self.few_shot_rule!r}")

    def world(self) -> SyntheticWorldSpec:
        return SyntheticWorldSpec(image_size=self.image_size, num_classes=self.num_classes)

    def profile(self) -> LongTailProfile:
        lt = make_exponential_profile(
            self.num_classes,
            self.n_max,
            self.rho,
            few_shot_fraction=self.few_shot_fraction,
            few_shot_rule=self.few_shot_rule,
            few_shot_threshold=self.few_shot_threshold,
        )
        if not self.balanced:
            return lt
        return balanced_profile(lt.total, self.num_classes, lt.few_shot_classes)


@dataclass
class ModelSection:
    mode: str = "utlo"
    res_uc: int = 8
    lambda_uc: float = 1.0
    z_dim: int = 32
    w_dim: int = 64
    embed_dim: int = 32
    d_feature_dim: int = 64
    g_channels: dict = field(default_factory=lambda: {4: 64, 8: 64, 16: 32, 32: 16, 64: 16})
    d_channels: dict = field(default_factory=lambda: {64: 16, 32: 16, 16: 32, 8: 64, 4: 64})


@dataclass
class TrainingSection:
    iterations: int = 20000
    batch_size: int = 16
    eval_every: int = 2000
    sampler_beta: float = 0.0
    lr_g: float = 2e-3
    lr_d: float = 2e-3
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    fake_labels: str = "data"
    r1_weight: float = 0.0
    r1_eps: float = 1e-2
    reuse_real_for_uc: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0")


@dataclass
class EvalSection:
    embedder: str = "random-conv"
    gen_count: int | None = None  # default: 4x the real count, capped at 50k
    fs_per_class: int | None = None  # default: gen_count // num_classes
    kid_block: int = 1000
    num_latents: int = 1000
    reference: str = "train"  # "train" or "balanced" (held-out render)
    reference_per_class: int = 200
    reference_seed: int = 777
    balanced_fs: bool = True
    grid_latents: int = 8

    def __post_init__(self):
        if self.embedder not in EMBEDDERS:
            raise ConfigError(f"unknown embedder {self.embedder!r}; choose from {EMBEDDERS}")
        if self.reference not in ("train", "balanced"):
            raise ConfigError(f"eval.reference must be 'train' or 'balanced', got {self.reference!r}")
        if self.num_latents < 2:
            raise ConfigError("eval.num_latents must be >= 2")


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/mini"
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        # constructing the model/train configs runs their validation
        self.model_config()
        self.train_config()

    # -- derived configs --------------------------------------------------
    def model_config(self) -> UTLOConfig:
        m = self.model
        return UTLOConfig(
            resolution=self.dataset.image_size,
            res_uc=m.res_uc,
            lambda_uc=m.lambda_uc,
            z_dim=m.z_dim,
            w_dim=m.w_dim,
            embed_dim=m.embed_dim,
            num_classes=self.dataset.num_classes,
            g_channels=dict(m.g_channels),
            d_channels=dict(m.d_channels),
            d_feature_dim=m.d_feature_dim,
            batch_size=self.training.batch_size,
            mode=m.mode,
        )

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(
            lr_g=t.lr_g,
            lr_d=t.lr_d,
            beta1=t.beta1,
            beta2=t.beta2,
            eps=t.eps,
            sampler_beta=t.sampler_beta,
            fake_labels=t.fake_labels,
            r1_weight=t.r1_weight,
            r1_eps=t.r1_eps,
            reuse_real_for_uc=t.reuse_real_for_uc,
        )

    def gen_count(self, real_total: int) -> int:
        if self.eval.gen_count is not None:
            return self.eval.gen_count
        return min(4 * real_total, 50_000)

    def fs_per_class(self, real_total: int) -> int:
        if self.eval.fs_per_class is not None:
            return self.eval.fs_per_class
        return max(2, self.gen_count(real_total) // self.dataset.num_classes)

    # -- (de)serialisation ------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("g_channels", "d_channels"):
            d["model"][key] = {int(k): int(v) for k, v in sorted(d["model"][key].items())}
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        sections = {"dataset": DatasetSection, "model": ModelSection, "training": TrainingSection, "eval": EvalSection}
        known = set(sections) | {"seed", "out_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        kwargs = {k: _from_dict(cls_, d.get(k), k) for k, cls_ in sections.items()}
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        if "out_dir" in d:
            kwargs["out_dir"] = str(d["out_dir"])
        return cls(**kwargs)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section.key=value`` style overrides (``model__lambda_uc``)."""
        d = self.to_dict()
        for key, value in dotted.items():
            parts = key.split("__")
            node = d
            for p in parts[:-1]:
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {'.'.join(parts)}")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return ExperimentConfig.from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.to_yaml())
