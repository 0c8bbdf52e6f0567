"""Lesion-focused single-image super-resolution with multi-scale adversarial training."""

__version__ = "0.1.0"

from .data import (
    ImageSlice,
    RoiBox,
    RoiPair,
    SegMask,
    SlicePair,
    crop_pair,
    downsample,
    mask_detector,
    normalize,
    roi_from_mask,
)
from .losses import (
    AdvConfig,
    PerceptualConfig,
    clip_weights,
    composite_ms_loss,
    gradient_penalty,
    mse_loss,
    perceptual_loss,
    vanilla_d_loss,
    vanilla_g_loss,
    wgan_critic_loss,
    wgan_g_loss,
)
from .metrics import MetricsReport, MosRecord, bilinear_upsample, mos_aggregate, psnr, ssim
from .models import (
    CriticSpec,
    GeneratorSpec,
    MultiScaleOutput,
    build_critic,
    build_generator,
    critic_forward,
    generator_forward,
)
from .phantom import synth_phantom_corpus
from .training import (
    RunHistory,
    TrainingConfig,
    Variant,
    default_config,
    infer,
    lr_schedule,
    pretrain_generator,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
