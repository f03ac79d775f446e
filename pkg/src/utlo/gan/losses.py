"""Adversarial objectives.

Both f_D and f_G are softplus (the non-saturating logistic loss):

    L_c^D  = E[softplus(-D(x|y))] + E[softplus(D(G(z, y)|y))]
    L_c^G  = E[softplus(-D(G(z, y)|y))]

The unconditional pair has the same form with the label-free head applied to
bilinearly reduced real images and to the generator's res_uc output. The
final objective adds the unconditional pair weighted by lambda.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..data.resample import downsample_bilinear
from .model import UTLOModel


def d_loss_from_logits(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    return ops.add(ops.mean(ops.softplus(ops.scale(real_logits, -1.0))), ops.mean(ops.softplus(fake_logits)))


def g_loss_from_logits(fake_logits: Tensor) -> Tensor:
    return ops.mean(ops.softplus(ops.scale(fake_logits, -1.0)))


def combine(conditional: Tensor, unconditional: Tensor | None, lam: float) -> Tensor:
    """L = L_c + lambda * L_uc. lambda = 0 returns L_c itself."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if unconditional is None or lam == 0:
        return conditional
    return ops.add(conditional, ops.scale(unconditional, lam))


def loss_total(l_c, l_uc, lam: float):
    """Apply ``combine`` to a (D, G) pair of conditional and unconditional losses."""
    return combine(l_c[0], l_uc[0], lam), combine(l_c[1], l_uc[1], lam)


def loss_conditional(model: UTLOModel, real, labels, z, fake_labels=None):
    """(L_c^D, L_c^G) for one batch. Fake labels default to the real labels."""
    fake_labels = labels if fake_labels is None else fake_labels
    fake, _ = model.generate(z, fake_labels)
    d_real = model.d_logits(real, labels)
    d_fake = model.d_logits(fake, fake_labels)
    return d_loss_from_logits(d_real, d_fake), g_loss_from_logits(d_fake)


def real_low(model: UTLOModel, real) -> np.ndarray:
    real = real.data if isinstance(real, Tensor) else np.asarray(real)
    return downsample_bilinear(real, model.cfg.res_uc)


def loss_unconditional(model: UTLOModel, real_lowres, z):
    """(L_uc^D, L_uc^G): label-free head on reduced reals and on x_hat_l."""
    fake_low = model.generate_low(z)
    d_real = model.d_logits_uncond(real_lowres)
    d_fake = model.d_logits_uncond(fake_low)
    return d_loss_from_logits(d_real, d_fake), g_loss_from_logits(d_fake)
