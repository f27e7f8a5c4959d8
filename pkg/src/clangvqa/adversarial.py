"""Discriminator and adversarial losses pulling node representations toward N(0, I)."""
from __future__ import annotations

import numpy as np

from . import numkit as nk
from .errors import ContractError

PROB_CLAMP = 1e-7


class Discriminator(nk.Module):
    """MLP d -> d -> d -> 1 with ReLU hidden layers and a sigmoid output."""

    def __init__(self, rng: np.random.Generator, d: int):
        self.body = nk.MLP(rng, [d, d, d, 1])

    def logits(self, x, frozen: bool = False) -> nk.Tensor:
        if not frozen:
            return self.body(x)
        # constant copies of the weights: gradients reach x but not D
        h = nk.as_tensor(x)
        layers = self.body.layers
        for i, layer in enumerate(layers):
            h = h @ layer.weight.detach() + layer.bias.detach()
            if i < len(layers) - 1:
                h = nk.relu(h)
        return h

    def __call__(self, x, frozen: bool = False) -> nk.Tensor:
        return nk.sigmoid(self.logits(x, frozen))


class PriorSampler:
    """Seeded standard-normal source for the discriminator's positive samples."""

    def __init__(self, d: int, seed: int = 0):
        self.d = d
        self.rng = np.random.default_rng(seed)

    def sample(self, n: int) -> nk.Tensor:
        return nk.Tensor(self.rng.standard_normal((n, self.d)).astype(nk.get_dtype()))


def _rows(x) -> nk.Tensor:
    x = nk.as_tensor(x)
    if x.ndim > 2:
        x = x.reshape(-1, x.shape[-1])
    if x.shape[0] == 0:
        raise ContractError("adversarial losses need a nonempty batch")
    return x


def _clamped(p: nk.Tensor) -> nk.Tensor:
    return nk.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def loss_discriminator(D: Discriminator, real, fake) -> nk.Tensor:
    """-mean log D(real) - mean log(1 - D(fake)); ``fake`` is detached."""
    real = _rows(real)
    fake = _rows(fake).detach()
    p_real = _clamped(D(real))
    p_fake = _clamped(D(fake))
    return -nk.log(p_real).mean() - nk.log(1.0 - p_fake).mean()


def loss_generator(D: Discriminator, fake) -> nk.Tensor:
    """-0.5 * mean log D(fake), differentiable in ``fake`` only."""
    fake = _rows(fake)
    return -0.5 * nk.log(_clamped(D(fake, frozen=True))).mean()
