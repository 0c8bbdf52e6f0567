"""Loss terms for all six adversarial training regimes.

Everything returns 0-dim torch tensors so the terms can sit on the autograd
graph; ``float()`` them for logging. Functions preserve the input dtype, so
oracle tests can run them in float64.

The vanilla GAN generator term uses the non-saturating form
``-E[log D(G(.))]`` rather than the literal minimax term, which carries no
gradient once the discriminator saturates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .data import ImageSlice
from .errors import CapabilityError, ConfigError, InvalidInputError, ShapeError

LOG_EPS = 1e-7  # clamp inside logs; inputs are still validated to lie in (0, 1)


@dataclass
class AdvConfig:
    """Adversarial training constants: clip range, penalty weight, critic steps."""

    clip_c: float = 0.01
    gp_lambda: float = 10.0
    n_critic: int = 5

    def __post_init__(self):
        if self.clip_c <= 0:
            raise ConfigError(f"clip_c must be positive, got {self.clip_c}")
        if self.gp_lambda <= 0:
            raise ConfigError(f"gp_lambda must be positive, got {self.gp_lambda}")
        if self.n_critic < 1:
            raise ConfigError(f"n_critic must be >= 1, got {self.n_critic}")


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    if isinstance(x, ImageSlice):
        return torch.from_numpy(x.pixels)
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def mse_loss(a, b) -> torch.Tensor:
    """Pixel-wise mean squared error over all elements."""
    ta, tb = _as_tensor(a), _as_tensor(b)
    if ta.shape != tb.shape:
        raise ShapeError(f"shape mismatch {tuple(ta.shape)} vs {tuple(tb.shape)}")
    return ((ta - tb) ** 2).mean()


def masked_mse(a, b, mask) -> torch.Tensor:
    """Per-sample MSE over valid (mask=1) pixels, averaged over the batch.

    Used when variable-size ROI crops are zero-padded to a common canvas;
    reduces to ``mse_loss`` when the mask covers everything.
    """
    ta, tb, tm = _as_tensor(a), _as_tensor(b), _as_tensor(mask)
    if ta.shape != tb.shape:
        raise ShapeError(f"shape mismatch {tuple(ta.shape)} vs {tuple(tb.shape)}")
    se = ((ta - tb) ** 2) * tm
    if ta.ndim < 3:  # single unbatched image
        return se.sum() / tm.sum()
    per_sample = se.flatten(1).sum(dim=1) / tm.expand_as(ta).flatten(1).sum(dim=1)
    return per_sample.mean()


class FixedRandomExtractor(nn.Module):
    """Frozen random conv stack; a deterministic stand-in for pretrained features.

    Smooth (tanh) activations keep finite-difference gradient checks clean.
    """

    def __init__(self, n_layers: int = 2, channels: int = 4, seed: int = 0):
        super().__init__()
        # Dedicated generator: constructing the extractor must not disturb
        # the global RNG stream of a training run.
        g = torch.Generator().manual_seed(seed)
        layers = []
        c_in = 1
        for _ in range(n_layers):
            conv = nn.Conv2d(c_in, channels, 3, 1, 1)
            with torch.no_grad():
                fan_in = c_in * 9
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) / fan_in**0.5)
                conv.bias.copy_(torch.randn(conv.bias.shape, generator=g) * 0.1)
            layers += [conv, nn.Tanh()]
            c_in = channels
        self.net = nn.Sequential(*layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        if self.net[0].weight.dtype != x.dtype:
            self.net.to(x.dtype)
        return self.net(x)


def identity_extractor():
    return lambda x: x


def vgg_extractor(layer_index: int = 36):
    """Features of a pretrained 19-layer classifier (needs downloadable weights)."""
    try:
        from torchvision.models import VGG19_Weights, vgg19

        net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features[:layer_index].eval()
    except Exception as e:  # no torchvision or no weight cache
        raise CapabilityError(f"pretrained feature extractor unavailable: {e}") from e
    for p in net.parameters():
        p.requires_grad_(False)

    def extract(x):
        return net(x.expand(-1, 3, -1, -1) if x.shape[1] == 1 else x)

    return extract


@dataclass
class PerceptualConfig:
    """Feature-space loss configuration with a pluggable extractor."""

    weights_source: str = "fixed_random"  # identity | fixed_random | vgg19
    layer_index: int = 2
    seed: int = 0
    extractor: object = field(default=None, repr=False)

    def extractor_fn(self):
        if self.extractor is None:
            # fork_rng: module constructors draw from the global RNG, and lazy
            # construction must not perturb a seeded training run's stream.
            with torch.random.fork_rng():
                if self.weights_source == "identity":
                    self.extractor = identity_extractor()
                elif self.weights_source == "fixed_random":
                    self.extractor = FixedRandomExtractor(n_layers=self.layer_index, seed=self.seed)
                elif self.weights_source == "vgg19":
                    self.extractor = vgg_extractor(self.layer_index)
                else:
                    raise ConfigError(f"unknown weights_source {self.weights_source!r}")
        return self.extractor


def _to_bchw(t: torch.Tensor) -> torch.Tensor:
    if t.ndim == 2:
        return t.reshape(1, 1, *t.shape)
    if t.ndim == 3:
        return t.unsqueeze(1)
    return t


def perceptual_loss(sr, hr, cfg: PerceptualConfig) -> torch.Tensor:
    """MSE between extractor feature maps of the two images."""
    tsr, thr = _as_tensor(sr), _as_tensor(hr)
    if tsr.shape != thr.shape:
        raise ShapeError(f"shape mismatch {tuple(tsr.shape)} vs {tuple(thr.shape)}")
    extract = cfg.extractor_fn()
    try:
        fa = extract(_to_bchw(tsr))
        fb = extract(_to_bchw(thr))
    except Exception as e:
        raise CapabilityError(f"feature extractor failed: {e}") from e
    return mse_loss(fa, fb)


def _validate_probs(name, t):
    if t.numel() == 0:
        raise InvalidInputError(f"{name} is empty")
    if not torch.all((t > 0) & (t < 1)):
        raise InvalidInputError(f"{name} values must lie strictly in (0, 1)")


def vanilla_d_loss(d_real, d_fake) -> torch.Tensor:
    """Discriminator loss: -mean(log D(real)) - mean(log(1 - D(fake)))."""
    tr, tf = _as_tensor(d_real), _as_tensor(d_fake)
    _validate_probs("d_real", tr)
    _validate_probs("d_fake", tf)
    return -torch.log(tr.clamp(min=LOG_EPS)).mean() - torch.log((1 - tf).clamp(min=LOG_EPS)).mean()


def vanilla_g_loss(d_fake) -> torch.Tensor:
    """Non-saturating generator loss: -mean(log D(fake))."""
    tf = _as_tensor(d_fake)
    _validate_probs("d_fake", tf)
    return -torch.log(tf.clamp(min=LOG_EPS)).mean()


def wgan_critic_loss(d_real, d_fake) -> torch.Tensor:
    """Critic loss (minimized): mean(D(fake)) - mean(D(real))."""
    return _as_tensor(d_fake).mean() - _as_tensor(d_real).mean()


def wgan_g_loss(d_fake) -> torch.Tensor:
    return -_as_tensor(d_fake).mean()


def clip_weights(critic: nn.Module, c: float) -> None:
    """Clamp every critic parameter into [-c, c] in place."""
    if c <= 0:
        raise ConfigError(f"clip range must be positive, got {c}")
    with torch.no_grad():
        for p in critic.parameters():
            p.clamp_(-c, c)


def gradient_penalty(critic, real_batch, fake_batch, gp_lambda: float, seed=None) -> torch.Tensor:
    """Two-sided penalty on the critic's input-gradient norm at interpolates.

    x_hat = eps*real + (1-eps)*fake with eps ~ U(0,1) per sample; returns
    lambda * mean((||grad_x_hat D(x_hat)||_2 - 1)^2).
    """
    real = _to_bchw(_as_tensor(real_batch))
    fake = _to_bchw(_as_tensor(fake_batch))
    if real.shape != fake.shape:
        raise ShapeError(f"shape mismatch {tuple(real.shape)} vs {tuple(fake.shape)}")
    b = real.shape[0]
    gen = None
    if seed is not None:
        gen = torch.Generator().manual_seed(seed)
    eps = torch.rand(b, *([1] * (real.ndim - 1)), dtype=real.dtype, generator=gen)
    x_hat = eps * real + (1 - eps) * fake
    if not x_hat.requires_grad:
        x_hat.requires_grad_(True)
    out = critic(x_hat)
    try:
        grads = torch.autograd.grad(
            outputs=out.sum(), inputs=x_hat, create_graph=True, retain_graph=True
        )[0]
    except RuntimeError as e:
        raise CapabilityError(f"critic is not differentiable w.r.t. its input: {e}") from e
    norms = grads.reshape(b, -1).norm(2, dim=1)
    return gp_lambda * ((norms - 1) ** 2).mean()


def composite_ms_loss(out, dr, hr, d_fake_x4, cfg: PerceptualConfig, weights=None, masks=None):
    """Composite multi-scale generator loss with its term breakdown.

    total = mse(sr_x2, dr) + mse(sr_x4, hr) + perceptual(sr_x4, hr) - mean(D(fake_x4)).
    Returns (total tensor, breakdown dict); breakdown["total"] is the exact sum
    of the reported per-term floats. ``masks`` is an optional (mask_x2, mask_x4)
    pair restricting the pixel and feature terms to valid (unpadded) regions.
    """
    w = {"mse_x2": 1.0, "mse_x4": 1.0, "vgg_x4": 1.0, "adv_x4": 1.0}
    if weights:
        w.update(weights)
    sr_x2, sr_x4 = _as_tensor(out.sr_x2), _as_tensor(out.sr_x4)
    tdr, thr = _as_tensor(dr), _as_tensor(hr)
    if sr_x2.shape != tdr.shape:
        raise ShapeError(f"mse_x2: sr_x2 {tuple(sr_x2.shape)} vs dr {tuple(tdr.shape)}")
    if sr_x4.shape != thr.shape:
        raise ShapeError(f"mse_x4: sr_x4 {tuple(sr_x4.shape)} vs hr {tuple(thr.shape)}")
    if masks is None:
        terms = {
            "mse_x2": w["mse_x2"] * mse_loss(sr_x2, tdr),
            "mse_x4": w["mse_x4"] * mse_loss(sr_x4, thr),
            "vgg_x4": w["vgg_x4"] * perceptual_loss(sr_x4, thr, cfg),
        }
    else:
        m2, m4 = (_as_tensor(m) for m in masks)
        terms = {
            "mse_x2": w["mse_x2"] * masked_mse(sr_x2, tdr, m2),
            "mse_x4": w["mse_x4"] * masked_mse(sr_x4, thr, m4),
            "vgg_x4": w["vgg_x4"] * perceptual_loss(sr_x4 * m4, thr * m4, cfg),
        }
    terms["adv_x4"] = w["adv_x4"] * wgan_g_loss(d_fake_x4)
    total = terms["mse_x2"] + terms["mse_x4"] + terms["vgg_x4"] + terms["adv_x4"]
    breakdown = {k: float(v.detach()) for k, v in terms.items()}
    breakdown["total"] = sum(breakdown.values())
    return total, breakdown
