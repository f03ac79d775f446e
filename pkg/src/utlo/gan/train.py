"""Alternating D/G optimisation and checkpointing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import Tensor, adam_step, backward, no_grad, ops
from ..autodiff.checkpoint import (
    CheckpointFormatError,
    bytes_to_f32,
    decode_records,
    encode_records,
    f32_to_bytes,
    f32_to_words,
    words_to_f32,
)
from ..data.resample import downsample_bilinear
from ..data.sampler import SamplerWeights, sample_batch, sampler_weights
from ..data.world import Dataset
from .config import TrainConfig, UTLOConfig
from .losses import combine, d_loss_from_logits, g_loss_from_logits
from .model import UTLOModel


class NumericalAbort(RuntimeError):
    """A loss went non-finite; ``snapshot`` holds the diagnostic state."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


@dataclass
class TrainState:
    model: UTLOModel
    train_cfg: TrainConfig
    seed: int
    data_rng: np.random.Generator
    latent_rng: np.random.Generator
    iteration: int = 0
    history: list = field(default_factory=list)
    last_losses: dict = field(default_factory=dict)
    dataset: Dataset | None = field(default=None, repr=False)
    weights: SamplerWeights | None = field(default=None, repr=False)

    @classmethod
    def create(cls, model_cfg: UTLOConfig, train_cfg: TrainConfig, seed: int) -> "TrainState":
        model = UTLOModel(model_cfg, seed)
        return cls(model, train_cfg, int(seed), _stream(seed, 1), _stream(seed, 2))

    @property
    def cfg(self) -> UTLOConfig:
        return self.model.cfg

    def d_train_parameters(self):
        return self.model.d_parameters(with_uncond=self.model.uses_uncond())

    def g_train_parameters(self):
        return self.model.g_parameters()


def _fake_labels(state: TrainState, real_labels: np.ndarray) -> np.ndarray:
    if state.train_cfg.fake_labels == "data":
        return real_labels
    return state.latent_rng.integers(0, state.cfg.num_classes, size=len(real_labels))


def _latents(state: TrainState, n: int) -> np.ndarray:
    return state.latent_rng.standard_normal((n, state.cfg.z_dim)).astype(np.float32)


def _check_finite(state: TrainState, name: str, loss: Tensor, extra: dict) -> None:
    if not np.isfinite(loss.data).all():
        snapshot = {
            "iteration": state.iteration,
            "loss": name,
            "losses": {k: float(v) for k, v in extra.items()},
            "param_norms": {
                p.name: float(np.linalg.norm(p.data)) for p in state.model.all_parameters()
            },
        }
        raise NumericalAbort(f"non-finite {name} at iteration {state.iteration}", snapshot)


def _r1_estimate(model: UTLOModel, real: np.ndarray, labels, rng, eps: float) -> Tensor:
    """Finite-difference estimate of E||grad_x D(x|y)||^2.

    For v ~ N(0, I), E[(v . grad)^2] = ||grad||^2, and the directional
    derivative is taken by central differences, which keeps the penalty
    first-order differentiable in the discriminator parameters.
    """
    v = rng.standard_normal(real.shape).astype(np.float32)
    up = model.d_logits(real + eps * v, labels)
    down = model.d_logits(real - eps * v, labels)
    slope = ops.scale(ops.sub(up, down), 1.0 / (2 * eps))
    return ops.mean(ops.mul(slope, slope))


def discriminator_step(state: TrainState, real: np.ndarray, labels: np.ndarray) -> dict:
    model, tcfg = state.model, state.train_cfg
    z = _latents(state, len(labels))
    fake_labels = _fake_labels(state, labels)
    model.g_store.set_requires_grad(False)
    model.d_store.set_requires_grad(True)
    with no_grad():
        fake, fake_low = model.generate(z, fake_labels)
    fake, fake_low = fake.detach(), fake_low.detach()

    l_c = d_loss_from_logits(model.d_logits(real, labels), model.d_logits(fake, fake_labels))
    losses = {"D_c": float(l_c.data)}
    l_uc = None
    if model.uses_uncond():
        if tcfg.reuse_real_for_uc:
            real_uc = real
        else:
            real_uc, _ = sample_batch(state.dataset, state.weights, len(labels), state.data_rng)
        real_lo = downsample_bilinear(real_uc, state.cfg.res_uc)
        l_uc = d_loss_from_logits(model.d_logits_uncond(real_lo), model.d_logits_uncond(fake_low))
        losses["D_uc"] = float(l_uc.data)
    total = combine(l_c, l_uc, state.cfg.lambda_uc)
    if tcfg.r1_weight > 0:
        r1 = _r1_estimate(model, real, labels, state.latent_rng, tcfg.r1_eps)
        losses["R1"] = float(r1.data)
        total = ops.add(total, ops.scale(r1, tcfg.r1_weight / 2))
    losses["D"] = float(total.data)
    _check_finite(state, "D loss", total, losses)
    backward(total)
    params = state.d_train_parameters()
    adam_step(params, tcfg.lr_d, tcfg.beta1, tcfg.beta2, tcfg.eps)
    return losses


def generator_step(state: TrainState, batch: int) -> dict:
    model, tcfg = state.model, state.train_cfg
    z = _latents(state, batch)
    if tcfg.fake_labels == "data":
        # fresh labels from the training label law
        _, fake_labels = sample_batch(state.dataset, state.weights, batch, state.data_rng)
    else:
        fake_labels = _fake_labels(state, np.zeros(batch, dtype=np.int64))
    model.g_store.set_requires_grad(True)
    model.d_store.set_requires_grad(False)
    fake, fake_low = model.generate(z, fake_labels)
    l_c = g_loss_from_logits(model.d_logits(fake, fake_labels))
    losses = {"G_c": float(l_c.data)}
    l_uc = None
    if model.uses_uncond():
        l_uc = g_loss_from_logits(model.d_logits_uncond(fake_low))
        losses["G_uc"] = float(l_uc.data)
    total = combine(l_c, l_uc, state.cfg.lambda_uc)
    losses["G"] = float(total.data)
    _check_finite(state, "G loss", total, losses)
    backward(total)
    adam_step(state.g_train_parameters(), tcfg.lr_g, tcfg.beta1, tcfg.beta2, tcfg.eps)
    model.d_store.set_requires_grad(True)
    return losses


def train_step(state: TrainState, dataset: Dataset, weights: SamplerWeights | None = None) -> TrainState:
    """One discriminator update followed by one generator update."""
    if weights is None:
        weights = sampler_weights(dataset.profile, state.train_cfg.sampler_beta)
    state.dataset, state.weights = dataset, weights
    real, labels = sample_batch(dataset, weights, state.cfg.batch_size, state.data_rng)
    losses = discriminator_step(state, real, labels)
    losses.update(generator_step(state, state.cfg.batch_size))
    state.iteration += 1
    state.last_losses = losses
    return state


# -- checkpoints --------------------------------------------------------------

def _u64_words(x: int) -> list[int]:
    return [x & 0xFFFFFFFF, (x >> 32) & 0xFFFFFFFF]


def _words_u64(w) -> int:
    return int(w[0]) | (int(w[1]) << 32)


def _rng_words(rng: np.random.Generator) -> np.ndarray:
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise TypeError("only PCG64 streams can be checkpointed")
    words = []
    for v in (st["state"]["state"], st["state"]["inc"]):
        words += [(v >> (32 * i)) & 0xFFFFFFFF for i in range(4)]
    words += [int(st["has_uint32"]), int(st["uinteger"])]
    return words_to_f32(words)


def _rng_from_words(arr) -> np.random.Generator:
    w = [int(x) for x in f32_to_words(arr)]
    state = sum(w[i] << (32 * i) for i in range(4))
    inc = sum(w[4 + i] << (32 * i) for i in range(4))
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": state, "inc": inc},
        "has_uint32": w[8],
        "uinteger": w[9],
    }
    return rng


def state_records(state: TrainState) -> dict[str, np.ndarray]:
    records: dict[str, np.ndarray] = {}
    for p in state.model.all_parameters():
        records[p.name] = p.data
    for p in state.model.all_parameters():
        records[f"{p.name}.adam_m"] = p.adam_m
        records[f"{p.name}.adam_v"] = p.adam_v
        records[f"{p.name}.step"] = words_to_f32([p.step_count])
    meta = {"model": state.cfg.to_dict(), "train": state.train_cfg.to_dict()}
    records["__meta__.config"] = bytes_to_f32(json.dumps(meta, sort_keys=True).encode())
    records["__meta__.history"] = bytes_to_f32(json.dumps(state.history, sort_keys=True).encode())
    records["__meta__.iteration"] = words_to_f32(_u64_words(state.iteration))
    records["__meta__.seed"] = words_to_f32(_u64_words(state.seed))
    records["__rng__.data"] = _rng_words(state.data_rng)
    records["__rng__.latent"] = _rng_words(state.latent_rng)
    return records


def checkpoint_save(state: TrainState, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_records(state_records(state)))
    tmp.replace(path)


def state_from_records(records: dict[str, np.ndarray]) -> TrainState:
    try:
        meta = json.loads(f32_to_bytes(records["__meta__.config"]))
        model_cfg = UTLOConfig.from_dict(meta["model"])
        train_cfg = TrainConfig.from_dict(meta["train"])
        seed = _words_u64(f32_to_words(records["__meta__.seed"]))
        state = TrainState(
            UTLOModel(model_cfg, seed),
            train_cfg,
            seed,
            _rng_from_words(records["__rng__.data"]),
            _rng_from_words(records["__rng__.latent"]),
            iteration=_words_u64(f32_to_words(records["__meta__.iteration"])),
            history=json.loads(f32_to_bytes(records["__meta__.history"])),
        )
        for p in state.model.all_parameters():
            if records[p.name].shape != p.shape:
                raise CheckpointFormatError(
                    f"shape mismatch for {p.name}: file {records[p.name].shape}, model {p.shape}"
                )
            p.tensor.data = records[p.name].copy()
            p.adam_m = records[f"{p.name}.adam_m"].copy()
            p.adam_v = records[f"{p.name}.adam_v"].copy()
            p.step_count = int(f32_to_words(records[f"{p.name}.step"])[0])
    except KeyError as exc:
        raise CheckpointFormatError(f"checkpoint is missing record {exc}") from exc
    return state


def checkpoint_load(path) -> TrainState:
    return state_from_records(decode_records(Path(path).read_bytes()))
