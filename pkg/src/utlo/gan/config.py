"""Model and optimisation settings for a UTLO run."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields


class ConfigError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _default_g_channels():
    return {4: 64, 8: 64, 16: 32, 32: 16, 64: 16}


def _default_d_channels():
    return {64: 16, 32: 16, 16: 32, 8: 64, 4: 64}


@dataclass
class UTLOConfig:
    """Network shape and the unconditional/conditional split.

    ``mode="conditional"`` is the plain cGAN baseline: every generator block
    sees the class-conditional style and the unconditional objective is off.
    """

    resolution: int = 32
    res_uc: int = 8
    lambda_uc: float = 1.0
    z_dim: int = 32
    w_dim: int = 64
    embed_dim: int = 32
    num_classes: int = 10
    g_channels: dict = field(default_factory=_default_g_channels)
    d_channels: dict = field(default_factory=_default_d_channels)
    d_feature_dim: int = 64
    batch_size: int = 16
    mode: str = "utlo"

    def __post_init__(self):
        self.g_channels = {int(k): int(v) for k, v in self.g_channels.items()}
        self.d_channels = {int(k): int(v) for k, v in self.d_channels.items()}
        self.validate()

    def validate(self) -> None:
        h, l = self.resolution, self.res_uc
        if not (_is_pow2(h) and _is_pow2(l)):
            raise ConfigError(f"resolution {h} and res_uc {l} must be powers of two")
        if l < 4:
            raise ConfigError(f"res_uc must be >= 4, got {l}")
        if l >= h:
            raise ConfigError(f"res_uc ({l}) must be below resolution ({h})")
        if self.lambda_uc < 0:
            raise ConfigError(f"lambda_uc must be >= 0, got {self.lambda_uc}")
        if self.mode not in ("utlo", "conditional"):
            raise ConfigError(f"mode must be 'utlo' or 'conditional', got {self.mode!r}")
        if self.num_classes < 1 or self.batch_size < 1:
            raise ConfigError("num_classes and batch_size must be positive")
        for res in self.resolutions:
            if res not in self.g_channels or res not in self.d_channels:
                raise ConfigError(f"missing channel width for resolution {res}")

    @property
    def resolutions(self) -> list[int]:
        """4, 8, ..., resolution."""
        out, r = [], 4
        while r <= self.resolution:
            out.append(r)
            r *= 2
        return out

    @property
    def split(self) -> bool:
        return self.mode == "utlo"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g_channels"] = {int(k): v for k, v in sorted(self.g_channels.items())}
        d["d_channels"] = {int(k): v for k, v in sorted(self.d_channels.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UTLOConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainConfig:
    lr_g: float = 2e-3
    lr_d: float = 2e-3
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    sampler_beta: float = 0.0
    # "data": D fakes reuse the real batch labels and G draws fresh labels from
    # the training label law; "uniform": labels uniform over classes
    fake_labels: str = "data"
    r1_weight: float = 0.0
    r1_eps: float = 1e-2
    reuse_real_for_uc: bool = True

    def __post_init__(self):
        if not 0 <= self.sampler_beta <= 1:
            raise ConfigError(f"sampler_beta must lie in [0, 1], got {self.sampler_beta}")
        if self.fake_labels not in ("data", "uniform"):
            raise ConfigError(f"fake_labels must be 'data' or 'uniform', got {self.fake_labels!r}")
        if self.r1_weight < 0:
            raise ConfigError("r1_weight must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)
