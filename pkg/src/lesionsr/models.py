"""Generator and critic architectures.

Two generators: a plain residual SR network with sub-pixel upsampling, and a
multi-scale variant that produces the X2 image first and grows the X4 image
out of the X2 feature stream. Critics come in three flavours: a vanilla
discriminator with a probability head, and Wasserstein critics with linear
heads (the gradient-penalty critic carries no batch normalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .data import ImageSlice
from .errors import ConfigError, InvalidInputError, ShapeError

GENERATOR_KINDS = ("srresnet", "multiscale")
CRITIC_KINDS = ("vanilla_d", "wgan_critic", "wgangp_critic")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "srresnet"
    scale: int = 4
    channels: int = 64
    n_res_blocks_trunk: int = 16
    n_res_blocks_stage2: int = 4  # multiscale only

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.scale not in (2, 4):
            raise ConfigError(f"scale must be 2 or 4, got {self.scale}")
        if self.kind == "multiscale" and self.scale != 4:
            raise ConfigError("multiscale generator requires scale 4")
        if self.channels < 1 or self.n_res_blocks_trunk < 1 or self.n_res_blocks_stage2 < 1:
            raise ConfigError("channel and block counts must be >= 1")


@dataclass(frozen=True)
class CriticSpec:
    kind: str = "wgangp_critic"
    base_channels: int = 64
    input_size: int = 64

    def __post_init__(self):
        if self.kind not in CRITIC_KINDS:
            raise ConfigError(f"unknown critic kind {self.kind!r}")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if self.input_size < 8:
            raise ConfigError("input_size must be >= 8")


class MultiScaleOutput(NamedTuple):
    sr_x2: object  # tensor or ImageSlice depending on the calling layer
    sr_x4: object


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1),
            nn.BatchNorm2d(channels),
            nn.PReLU(),
            nn.Conv2d(channels, channels, 3, 1, 1),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


def _upsample_x2(channels):
    return nn.Sequential(
        nn.Conv2d(channels, 4 * channels, 3, 1, 1),
        nn.PixelShuffle(2),
        nn.PReLU(),
    )


class SRResNet(nn.Module):
    """Residual SR generator: trunk with a global skip, then x2 sub-pixel stages."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        c = spec.channels
        self.spec = spec
        self.head = nn.Sequential(nn.Conv2d(1, c, 9, 1, 4), nn.PReLU())
        self.trunk = nn.Sequential(*[ResidualBlock(c) for _ in range(spec.n_res_blocks_trunk)])
        self.post = nn.Sequential(nn.Conv2d(c, c, 3, 1, 1), nn.BatchNorm2d(c))
        self.upsample = nn.Sequential(*[_upsample_x2(c) for _ in range(int(math.log2(spec.scale)))])
        self.tail = nn.Conv2d(c, 1, 9, 1, 4)  # linear output, images are z-scored

    def forward(self, x):
        feat = self.head(x)
        x = feat + self.post(self.trunk(feat))
        return self.tail(self.upsample(x))


class MultiScaleGenerator(nn.Module):
    """Sequential X2 then X4 generation; the X4 stage consumes X2 features."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        c = spec.channels
        self.spec = spec
        self.head = nn.Sequential(nn.Conv2d(1, c, 9, 1, 4), nn.PReLU())
        self.trunk = nn.Sequential(*[ResidualBlock(c) for _ in range(spec.n_res_blocks_trunk)])
        self.post = nn.Sequential(nn.Conv2d(c, c, 3, 1, 1), nn.BatchNorm2d(c))
        self.up_x2 = _upsample_x2(c)
        self.head_x2 = nn.Conv2d(c, 1, 9, 1, 4)
        self.stage2 = nn.Sequential(*[ResidualBlock(c) for _ in range(spec.n_res_blocks_stage2)])
        self.up_x4 = _upsample_x2(c)
        self.head_x4 = nn.Conv2d(c, 1, 9, 1, 4)

    def forward(self, x) -> MultiScaleOutput:
        feat = self.head(x)
        feat = feat + self.post(self.trunk(feat))
        feat_x2 = self.up_x2(feat)
        sr_x2 = self.head_x2(feat_x2)
        feat_x4 = self.up_x4(self.stage2(feat_x2))
        return MultiScaleOutput(sr_x2=sr_x2, sr_x4=self.head_x4(feat_x4))


class Critic(nn.Module):
    """Strided conv stack with a global-average-pooled scalar head.

    The vanilla flavour ends in a sigmoid; Wasserstein flavours are linear.
    The gradient-penalty flavour carries no batch normalization.
    """

    def __init__(self, spec: CriticSpec):
        super().__init__()
        k = spec.base_channels
        self.spec = spec
        use_bn = spec.kind != "wgangp_critic"
        layers = [nn.Conv2d(1, k, 3, 1, 1), nn.LeakyReLU(0.2, inplace=True)]
        for c_in, c_out in ((k, 2 * k), (2 * k, 4 * k), (4 * k, 8 * k)):
            layers.append(nn.Conv2d(c_in, c_out, 3, 2, 1))
            if use_bn:
                layers.append(nn.BatchNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(8 * k, 1)

    def forward(self, x):
        out = self.fc(torch.flatten(self.pool(self.features(x)), 1))
        if self.spec.kind == "vanilla_d":
            out = torch.sigmoid(out)
        return out


def build_generator(spec: GeneratorSpec, seed: int) -> nn.Module:
    """Construct a generator with deterministic per-seed initialization."""
    torch.manual_seed(seed)
    if spec.kind == "srresnet":
        return SRResNet(spec)
    return MultiScaleGenerator(spec)


def build_critic(spec: CriticSpec, seed: int) -> Critic:
    torch.manual_seed(seed)
    return Critic(spec)


def _conv(c_in, c_out, k):
    return c_in * c_out * k * k + c_out


def _res_block(c):
    return 2 * _conv(c, c, 3) + 2 * (2 * c) + 1  # two conv+BN, one PReLU


def _upsample_params(c):
    return _conv(c, 4 * c, 3) + 1


def expected_param_count(spec) -> int:
    """Closed-form parameter count for each architecture (verified by tests)."""
    if isinstance(spec, GeneratorSpec):
        c = spec.channels
        head = _conv(1, c, 9) + 1
        trunk = spec.n_res_blocks_trunk * _res_block(c)
        post = _conv(c, c, 3) + 2 * c
        tail = _conv(c, 1, 9)
        if spec.kind == "srresnet":
            ups = int(math.log2(spec.scale)) * _upsample_params(c)
            return head + trunk + post + ups + tail
        stage2 = spec.n_res_blocks_stage2 * _res_block(c)
        return head + trunk + post + 2 * _upsample_params(c) + 2 * tail + stage2
    if isinstance(spec, CriticSpec):
        k = spec.base_channels
        total = _conv(1, k, 3)
        for c_in, c_out in ((k, 2 * k), (2 * k, 4 * k), (4 * k, 8 * k)):
            total += _conv(c_in, c_out, 3)
            if spec.kind != "wgangp_critic":
                total += 2 * c_out
        return total + (8 * k * 1 + 1)
    raise ConfigError(f"unknown spec type {type(spec)!r}")


def _to_tensor(img, dtype) -> torch.Tensor:
    if isinstance(img, ImageSlice):
        arr = img.pixels
    else:
        arr = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("input contains non-finite values")
    return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype).reshape(1, 1, *arr.shape)


def _like(reference, tensor) -> ImageSlice:
    pixels = tensor.detach().cpu().numpy().astype(np.float64).squeeze(0).squeeze(0)
    if isinstance(reference, ImageSlice):
        return ImageSlice(
            pixels,
            normalized=reference.normalized,
            norm_mean=reference.norm_mean,
            norm_std=reference.norm_std,
        )
    return ImageSlice(pixels)


def generator_forward(gen: nn.Module, lr):
    """Run a single LR slice through a generator; preserves norm metadata.

    Returns an ImageSlice for plain generators and a MultiScaleOutput of
    ImageSlices for the multi-scale generator.
    """
    dtype = next(gen.parameters()).dtype
    x = _to_tensor(lr, dtype)
    if x.shape[-2] < 4 or x.shape[-1] < 4:
        raise ShapeError(f"LR input must be at least 4x4, got {tuple(x.shape[-2:])}")
    was_training = gen.training
    gen.eval()
    try:
        with torch.no_grad():
            out = gen(x)
    finally:
        gen.train(was_training)
    if isinstance(out, MultiScaleOutput):
        return MultiScaleOutput(sr_x2=_like(lr, out.sr_x2), sr_x4=_like(lr, out.sr_x4))
    return _like(lr, out)


def critic_forward(critic: Critic, img) -> float:
    """Score a single image; enforces the critic's fixed input size."""
    dtype = next(critic.parameters()).dtype
    x = _to_tensor(img, dtype)
    size = critic.spec.input_size
    if tuple(x.shape[-2:]) != (size, size):
        raise ShapeError(f"critic expects {size}x{size} input, got {tuple(x.shape[-2:])}")
    was_training = critic.training
    critic.eval()
    try:
        with torch.no_grad():
            out = critic(x)
    finally:
        critic.train(was_training)
    return float(out.reshape(-1)[0])
