"""The UTLO generator/discriminator pair behind one object."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from .config import UTLOConfig
from .networks import ParamStore, SplitDiscriminator, SplitGenerator, StyleMapper


class UTLOModel:
    def __init__(self, cfg: UTLOConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
        self.g_store = ParamStore()
        self.d_store = ParamStore()
        self.mapper = StyleMapper(cfg, self.g_store, rng)
        self.generator = SplitGenerator(cfg, self.g_store, rng)
        self.discriminator = SplitDiscriminator(cfg, self.d_store, rng)

    # -- generator side ---------------------------------------------------
    def generate(self, z, labels) -> tuple[Tensor, Tensor]:
        """(x_hat at full resolution, x_hat_l at res_uc) from one pass."""
        z = z if isinstance(z, Tensor) else Tensor(z)
        labels = np.asarray(labels, dtype=np.int64)
        if self.cfg.split:
            w_z, w_zy = self.mapper.map_styles(z, labels)
        else:
            w_zy = self.mapper.map_conditional(z, labels)
            w_z = w_zy
        return self.generator.synthesize(w_z, w_zy)

    def generate_low(self, z) -> Tensor:
        """x_hat_l without labels (utlo mode only)."""
        if not self.cfg.split:
            raise ValueError("the conditional baseline has no label-free low-resolution output")
        z = z if isinstance(z, Tensor) else Tensor(z)
        w_z = self.mapper.map_unconditional(z)
        return self.generator.synthesize(w_z, None)[1]

    # -- discriminator side -----------------------------------------------
    def d_logits(self, x, labels) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return self.discriminator.logits(x, np.asarray(labels, dtype=np.int64))

    def d_logits_uncond(self, x_low) -> Tensor:
        x_low = x_low if isinstance(x_low, Tensor) else Tensor(x_low)
        return self.discriminator.logits_uncond(x_low)

    # -- parameter groups -------------------------------------------------
    def g_parameters(self):
        return self.g_store.parameters()

    def d_parameters(self, with_uncond: bool = True):
        params = self.d_store.parameters()
        if with_uncond:
            return params
        skip = {id(p) for p in self.discriminator.uncond_only_parameters()}
        return [p for p in params if id(p) not in skip]

    def all_parameters(self):
        return self.g_store.parameters() + self.d_store.parameters()

    def uses_uncond(self) -> bool:
        return self.cfg.split and self.cfg.lambda_uc > 0
