import pytest

from lesionsr.corpus import prepare_corpus
from lesionsr.losses import AdvConfig, PerceptualConfig
from lesionsr.models import CriticSpec, GeneratorSpec
from lesionsr.phantom import synth_phantom_corpus
from lesionsr.training import TrainingConfig, Variant


def phantom_roi_pairs(n, seed=0, size=48, scale=4, margin=2):
    corpus = synth_phantom_corpus(n, size, seed=seed)
    items = [
        type("Item", (), {"slice_id": f"s{i:04d}", "hr": s, "mask": m, "patient": f"p{i}", "lr": None})()
        for i, (s, m) in enumerate(corpus)
    ]
    pairs, excluded = prepare_corpus(items, scale=scale, margin=margin)
    assert not excluded
    return pairs


@pytest.fixture(scope="session")
def roi_pairs_16():
    return phantom_roi_pairs(16, seed=11)


@pytest.fixture(scope="session")
def roi_pairs_4():
    return phantom_roi_pairs(4, seed=23)


def tiny_config(variant, **overrides) -> TrainingConfig:
    """Desk-scale config: small models, fast learning rate, X4 task."""
    variant = Variant(variant)
    defaults = dict(
        variant=variant,
        epochs=2,
        batch_size=4,
        lr_initial=1e-3,
        lr_after_midpoint=1e-4,
        pretrain_epochs=2 if variant.needs_pretrain else 0,
        seed=0,
        adv=AdvConfig(n_critic=1 if variant is Variant.GAN_PRETRAIN else 5),
        generator=GeneratorSpec(
            kind="multiscale" if variant.needs_multiscale else "srresnet",
            scale=4,
            channels=8,
            n_res_blocks_trunk=2,
            n_res_blocks_stage2=1,
        ),
        critic=CriticSpec(kind=variant.critic_kind, base_channels=4, input_size=24),
        perceptual=PerceptualConfig(weights_source="fixed_random", layer_index=1, seed=0),
    )
    defaults.update(overrides)
    return TrainingConfig(**defaults)
