"""Style mapper, split generator and split discriminator.

Weights are stored with unit-variance initialisation and scaled by
1/sqrt(fan_in) at run time (equalised learning rate), so Adam sees every
layer at the same scale.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import DimensionError, Parameter, Tensor, ops
from .config import UTLOConfig

LRELU = 0.2


class ParamStore:
    """Ordered name -> Parameter mapping shared by one network."""

    def __init__(self):
        self.params: dict[str, Parameter] = {}

    def add(self, name: str, data) -> Parameter:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        p = Parameter(name, data)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def t(self, name: str) -> Tensor:
        return self.params[name].tensor

    def parameters(self, prefix: str = "") -> list[Parameter]:
        return [p for n, p in self.params.items() if n.startswith(prefix)]

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.tensor.requires_grad = flag


def _add_fc(store, name, fan_in, fan_out, rng, bias_init=0.0):
    store.add(f"{name}.weight", rng.standard_normal((fan_out, fan_in)))
    store.add(f"{name}.bias", np.full(fan_out, bias_init))


def _fc(store, name, x):
    w = store.t(f"{name}.weight")
    w = ops.scale(w, 1.0 / np.sqrt(w.shape[1]))
    return ops.linear(x, w, store.t(f"{name}.bias"))


def _add_conv(store, name, c_in, c_out, k, rng):
    store.add(f"{name}.weight", rng.standard_normal((c_out, c_in, k, k)))
    store.add(f"{name}.bias", np.zeros(c_out))


def _conv(store, name, x, pad=None):
    w = store.t(f"{name}.weight")
    k = w.shape[-1]
    w = ops.scale(w, 1.0 / np.sqrt(w.shape[1] * k * k))
    y = ops.conv2d(x, w, stride=1, pad=k // 2 if pad is None else pad)
    b = ops.reshape(store.t(f"{name}.bias"), (1, -1, 1, 1))
    return ops.add(y, b)


class StyleMapper:
    """z (+ class embedding) -> w through a two-layer MLP.

    The unconditional style w_z feeds the same MLP with the embedding slot
    set to the zero vector, so it cannot depend on the label.
    """

    def __init__(self, cfg: UTLOConfig, store: ParamStore, rng):
        self.cfg = cfg
        self.store = store
        store.add("G_map.class_embed", rng.standard_normal((cfg.num_classes, cfg.embed_dim)))
        _add_fc(store, "G_map.fc0", cfg.z_dim + cfg.embed_dim, cfg.w_dim, rng)
        _add_fc(store, "G_map.fc1", cfg.w_dim, cfg.w_dim, rng)

    def _mlp(self, h):
        h = ops.leaky_relu(_fc(self.store, "G_map.fc0", h), LRELU)
        return ops.leaky_relu(_fc(self.store, "G_map.fc1", h), LRELU)

    def embed(self, labels) -> Tensor:
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.cfg.num_classes):
            raise IndexError(f"class label out of range [0, {self.cfg.num_classes})")
        return ops.embedding(self.store.t("G_map.class_embed"), labels)

    def map_conditional(self, z: Tensor, labels) -> Tensor:
        return self._mlp(ops.concat([z, self.embed(labels)], axis=1))

    def map_unconditional(self, z: Tensor) -> Tensor:
        zeros = Tensor(np.zeros((z.shape[0], self.cfg.embed_dim), dtype=z.dtype))
        return self._mlp(ops.concat([z, zeros], axis=1))

    def map_styles(self, z: Tensor, labels) -> tuple[Tensor, Tensor]:
        """(w_z, w_{z,y}) from one batched pass of the shared MLP."""
        n = z.shape[0]
        cond = self.embed(labels)
        zeros = Tensor(np.zeros_like(cond.data))
        h = ops.concat([ops.concat([z, zeros], axis=1), ops.concat([z, cond], axis=1)], axis=0)
        w = self._mlp(h)
        return ops.index_rows(w, np.arange(n)), ops.index_rows(w, np.arange(n, 2 * n))


def map_styles(mapper: StyleMapper, z, y: int):
    """Single-sample convenience form: z is (z_dim,), y a class index."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    w_z, w_zy = mapper.map_styles(ops.reshape(z, (1, -1)), np.array([y]))
    return ops.reshape(w_z, (-1,)), ops.reshape(w_zy, (-1,))


class SplitGenerator:
    """Synthesis network cut at ``res_uc`` into G_l (w_z) and G_h (w_{z,y}).

    Each block upsamples, convolves, applies a per-channel style affine and
    emits a toRGB skip image; the running RGB sum at ``res_uc`` is the
    low-resolution output and the sum at full resolution the final image.
    """

    def __init__(self, cfg: UTLOConfig, store: ParamStore, rng):
        self.cfg = cfg
        self.store = store
        ch = cfg.g_channels
        store.add("G_l.const", rng.standard_normal((1, ch[4], 4, 4)))
        prev = ch[4]
        for res in cfg.resolutions:
            name = self.block_name(res)
            _add_conv(store, f"{name}.conv", prev, ch[res], 3, rng)
            # style affine -> per-channel (scale - 1, shift)
            _add_fc(store, f"{name}.style", cfg.w_dim, 2 * ch[res], rng)
            _add_conv(store, f"{name}.torgb", ch[res], 3, 1, rng)
            prev = ch[res]

    def block_name(self, res: int) -> str:
        part = "G_l" if res <= self.cfg.res_uc else "G_h"
        return f"{part}.b{res}"

    def low_parameters(self) -> list[Parameter]:
        return self.store.parameters("G_l.")

    def high_parameters(self) -> list[Parameter]:
        return self.store.parameters("G_h.")

    def _block(self, name, x, w):
        c = self.store.t(f"{name}.conv.bias").shape[0]
        x = _conv(self.store, f"{name}.conv", x)
        style = _fc(self.store, f"{name}.style", w)
        n = style.shape[0]
        scale = ops.reshape(ops.index_cols(style, 0, c), (n, c, 1, 1))
        shift = ops.reshape(ops.index_cols(style, c, 2 * c), (n, c, 1, 1))
        x = ops.add(ops.mul(x, ops.add(scale, 1.0)), shift)
        return ops.leaky_relu(x, LRELU)

    def synthesize(self, w_low: Tensor, w_high: Tensor | None) -> tuple[Tensor, Tensor | None]:
        """(x_hat, x_hat_l). With ``w_high=None`` only G_l runs: (None, x_hat_l)."""
        n = w_low.shape[0]
        const = self.store.t("G_l.const")
        x = ops.mul(Tensor(np.ones((n, 1, 1, 1), dtype=const.dtype)), const)
        img = None
        img_low = None
        for res in self.cfg.resolutions:
            if w_high is None and res > self.cfg.res_uc:
                return None, ops.tanh(img_low)
            name = self.block_name(res)
            if res > 4:
                x = ops.upsample_nearest(x, 2)
                img = ops.upsample_nearest(img, 2)
            x = self._block(name, x, w_low if res <= self.cfg.res_uc else w_high)
            rgb = _conv(self.store, f"{name}.torgb", x)
            img = rgb if img is None else ops.add(img, rgb)
            if res == self.cfg.res_uc:
                img_low = img
        return ops.tanh(img), ops.tanh(img_low)


class SplitDiscriminator:
    """D = D_l o D_h with a fromRGB entry at ``res_uc`` and two heads."""

    def __init__(self, cfg: UTLOConfig, store: ParamStore, rng):
        self.cfg = cfg
        self.store = store
        ch = cfg.d_channels
        h, l = cfg.resolution, cfg.res_uc
        _add_conv(store, "D_h.fromrgb", 3, ch[h], 1, rng)
        for res in reversed(cfg.resolutions):
            if res == 4:
                break
            part = "D_h" if res > l else "D_l"
            _add_conv(store, f"{part}.b{res}.conv", ch[res], ch[res // 2], 3, rng)
        _add_conv(store, "D_l.b4.conv", ch[4], ch[4], 3, rng)
        _add_fc(store, "D_l.fc", ch[4] * 16, cfg.d_feature_dim, rng)
        _add_conv(store, "D.fromrgb_low", 3, ch[l], 1, rng)
        _add_fc(store, "D.head_uncond", cfg.d_feature_dim, 1, rng)
        _add_fc(store, "D.head_cond", cfg.d_feature_dim, 1, rng)
        store.add("D.class_embed", rng.standard_normal((cfg.num_classes, cfg.d_feature_dim)))

    def high(self, x: Tensor) -> Tensor:
        """D_h: full-resolution image -> features at res_uc."""
        self._check_res(x, self.cfg.resolution)
        h = ops.leaky_relu(_conv(self.store, "D_h.fromrgb", x), LRELU)
        for res in reversed(self.cfg.resolutions):
            if res <= self.cfg.res_uc:
                break
            h = ops.leaky_relu(_conv(self.store, f"D_h.b{res}.conv", h), LRELU)
            h = ops.avg_pool2d(h, 2)
        return h

    def low(self, h: Tensor) -> Tensor:
        """D_l: res_uc features -> feature vector (shared by both pathways)."""
        for res in reversed(self.cfg.resolutions):
            if res > self.cfg.res_uc:
                continue
            h = ops.leaky_relu(_conv(self.store, f"D_l.b{res}.conv", h), LRELU)
            if res > 4:
                h = ops.avg_pool2d(h, 2)
        h = ops.reshape(h, (h.shape[0], -1))
        return ops.leaky_relu(_fc(self.store, "D_l.fc", h), LRELU)

    def from_rgb_low(self, x_low: Tensor) -> Tensor:
        self._check_res(x_low, self.cfg.res_uc)
        return ops.leaky_relu(_conv(self.store, "D.fromrgb_low", x_low), LRELU)

    def logits(self, x: Tensor, labels) -> Tensor:
        """Conditional logit: head_cond(phi) + <class_embed[y], phi> / sqrt(d)."""
        phi = self.low(self.high(x))
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.cfg.num_classes):
            raise IndexError(f"class label out of range [0, {self.cfg.num_classes})")
        base = _fc(self.store, "D.head_cond", phi)
        emb = ops.embedding(self.store.t("D.class_embed"), labels)
        proj = ops.sum(ops.mul(emb, phi), axis=1, keepdims=True)
        proj = ops.scale(proj, 1.0 / np.sqrt(self.cfg.d_feature_dim))
        return ops.reshape(ops.add(base, proj), (-1,))

    def logits_uncond(self, x_low: Tensor) -> Tensor:
        phi = self.low(self.from_rgb_low(x_low))
        return ops.reshape(_fc(self.store, "D.head_uncond", phi), (-1,))

    def uncond_only_parameters(self) -> list[Parameter]:
        return [self.store[n] for n in self.store.params if n.startswith(("D.fromrgb_low", "D.head_uncond"))]

    def shared_parameters(self) -> list[Parameter]:
        return self.store.parameters("D_l.")

    @staticmethod
    def _check_res(x: Tensor, res: int) -> None:
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != res or x.shape[3] != res:
            raise DimensionError(f"expected images (N, 3, {res}, {res}), got {x.shape}")
