"""Training objectives for the generator and the patch discriminator."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossWeights:
    rec: float = 100.0
    adv: float = 1.0
    fm: float = 10.0
    reg: float = 10.0

    def __post_init__(self):
        for name in ("rec", "adv", "fm", "reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


def loss_discriminator(logits_real: Tensor, logits_fake: Tensor) -> Tensor:
    """Hinge loss: mean(max(0, 1 - D(real))) + mean(max(0, 1 + D(fake)))."""
    if logits_real.shape != logits_fake.shape:
        raise ValueError(f"logit shapes differ: {logits_real.shape} vs {logits_fake.shape}")
    return ad.mean(ad.relu(1.0 - logits_real)) + ad.mean(ad.relu(1.0 + logits_fake))


def loss_reconstruction(fake: Tensor, real) -> Tensor:
    """L1 error per target image, averaged over the N_t target channels."""
    real = ad.as_tensor(real)
    if fake.shape != real.shape:
        raise ValueError(f"shape mismatch: {fake.shape} vs {real.shape}")
    err = ad.abs(fake - real)
    if err.ndim == 4:
        return ad.mean(ad.mean(err, axis=(0, 2, 3)))
    return ad.mean(err)


def loss_adversarial_gen(logits_fake: Tensor, variant: str = "hinge", eps: float = 1e-8) -> Tensor:
    """Generator adversarial term.

    ``hinge``: -mean(D(fake)). ``log``: -mean(log(sigmoid(D(fake)) + eps)).
    """
    if variant == "hinge":
        return -ad.mean(logits_fake)
    if variant == "log":
        return -ad.mean(ad.log(ad.sigmoid(logits_fake) + eps))
    raise ValueError(f"unknown adversarial loss variant {variant!r} (expected 'hinge' or 'log')")


def loss_feature_matching(features_real, features_fake) -> Tensor:
    """Sum over taps of the mean absolute feature difference; the real branch is a constant."""
    if len(features_real) != len(features_fake):
        raise ValueError(f"feature lists differ in length: {len(features_real)} vs {len(features_fake)}")
    if not features_real:
        raise ValueError("feature lists are empty")
    total = None
    for fr, ff in zip(features_real, features_fake):
        fr = fr.detach() if isinstance(fr, Tensor) else ad.as_tensor(fr)
        ff = ad.as_tensor(ff)
        if fr.shape != ff.shape:
            raise ValueError(f"feature shapes differ: {fr.shape} vs {ff.shape}")
        term = ad.mean(ad.abs(fr - ff))
        total = term if total is None else total + term
    return total


def loss_latent_reg(latent: Tensor) -> Tensor:
    """Mean of squared latent values."""
    return ad.mean(ad.square(ad.as_tensor(latent)))


def total_generator_loss(parts: dict, weights: LossWeights = LossWeights()):
    """lambda_rec*rec + lambda_adv*adv + lambda_fm*fm + lambda_reg*reg.

    ``parts`` maps ``rec``/``adv``/``fm``/``reg`` to Tensors or floats.
    """
    total = 0.0
    for name in ("rec", "adv", "fm", "reg"):
        value = parts[name]
        v = value.item() if isinstance(value, Tensor) else float(value)
        if not math.isfinite(v):
            raise NonFiniteLossError(f"loss term {name!r} is not finite ({v})")
        total = total + getattr(weights, name) * value
    return total
