"""Training orchestration for the six adversarial regimes.

Variants:

    GAN_PRETRAIN    vanilla discriminator, MSE pretraining phase first
    WGAN_PRETRAIN   weight-clipped Wasserstein critic, with pretraining
    WGAN            weight-clipped Wasserstein critic, no pretraining
    WGAN_GP         gradient-penalty critic
    WGAN_GP_X2MSE   gradient-penalty critic + extra X2 pixel term
    MS_GAN          multi-scale generator with the composite four-term loss

All variants share the step structure: n_critic critic updates per generator
update (1 for the vanilla GAN), Adam with the two-phase learning-rate
schedule, and abort-and-diagnose on non-finite losses. Variable-size ROI
crops are batched within same-size groups, so the generator and its pixel and
feature losses always see native (unpadded) crops; only the critic's
fixed-size canvas is zero-padded, identically for real and fake batches, so
padding carries no real/fake signal.

Runs are seeded and bit-reproducible in the single-worker configuration used
here; parallel data loading would relax this to statistical reproducibility.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch

from .data import ImageSlice, RoiBox, RoiPair, SlicePair, crop_pair
from .errors import ConfigError, InvalidInputError, ShapeError, TrainingDivergedError
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
from .models import (
    CriticSpec,
    GeneratorSpec,
    MultiScaleOutput,
    build_critic,
    build_generator,
)

CHECKPOINT_FORMAT_VERSION = 1
PROB_EPS = 1e-7  # keep sigmoid outputs strictly inside (0, 1) for the log losses


class Variant(str, Enum):
    GAN_PRETRAIN = "GAN_PRETRAIN"
    WGAN_PRETRAIN = "WGAN_PRETRAIN"
    WGAN = "WGAN"
    WGAN_GP = "WGAN_GP"
    WGAN_GP_X2MSE = "WGAN_GP_X2MSE"
    MS_GAN = "MS_GAN"

    @property
    def needs_pretrain(self) -> bool:
        return self in (Variant.GAN_PRETRAIN, Variant.WGAN_PRETRAIN)

    @property
    def uses_clipping(self) -> bool:
        return self in (Variant.WGAN_PRETRAIN, Variant.WGAN)

    @property
    def uses_gp(self) -> bool:
        return self in (Variant.WGAN_GP, Variant.WGAN_GP_X2MSE, Variant.MS_GAN)

    @property
    def needs_multiscale(self) -> bool:
        return self in (Variant.WGAN_GP_X2MSE, Variant.MS_GAN)

    @property
    def critic_kind(self) -> str:
        if self is Variant.GAN_PRETRAIN:
            return "vanilla_d"
        if self in (Variant.WGAN_PRETRAIN, Variant.WGAN):
            return "wgan_critic"
        return "wgangp_critic"


@dataclass
class TrainingConfig:
    variant: Variant
    epochs: int
    batch_size: int = 16
    lr_initial: float = 1e-4
    lr_after_midpoint: float = 1e-5
    pretrain_epochs: int = 0
    seed: int = 0
    max_steps: int | None = None  # optional cap on adversarial generator steps
    checkpoint_interval: int = 0  # epochs between checkpoints; 0 = final only
    # Per-term generator loss weights; default is the unit-weight composite as
    # written. Keys: mse_x2, mse_x{scale}, vgg_x{scale}, adv_x{scale}.
    term_weights: dict = field(default_factory=dict)
    adv: AdvConfig = field(default_factory=AdvConfig)
    generator: GeneratorSpec = field(default_factory=lambda: GeneratorSpec(kind="srresnet", scale=4))
    critic: CriticSpec = field(default_factory=CriticSpec)
    perceptual: PerceptualConfig = field(default_factory=PerceptualConfig)

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant(self.variant)
        if self.epochs < 2:
            raise ConfigError(f"epochs must be >= 2, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr_initial > self.lr_after_midpoint > 0:
            raise ConfigError(
                f"need lr_initial > lr_after_midpoint > 0, got {self.lr_initial}, {self.lr_after_midpoint}"
            )
        if self.variant.needs_pretrain and self.pretrain_epochs < 1:
            raise ConfigError(f"{self.variant.value} requires pretrain_epochs >= 1")
        if not self.variant.needs_pretrain and self.pretrain_epochs:
            raise ConfigError(f"{self.variant.value} does not take a pretraining phase")
        if self.variant.needs_multiscale and self.generator.kind != "multiscale":
            raise ConfigError(f"{self.variant.value} requires the multiscale generator")
        if self.critic.kind != self.variant.critic_kind:
            raise ConfigError(
                f"{self.variant.value} requires critic kind {self.variant.critic_kind!r}, "
                f"got {self.critic.kind!r}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["perceptual"].pop("extractor", None)  # callables are rebuilt from weights_source
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        for key, klass in (("adv", AdvConfig), ("generator", GeneratorSpec), ("critic", CriticSpec), ("perceptual", PerceptualConfig)):
            if key in d and isinstance(d[key], dict):
                d[key] = klass(**d[key])
        return cls(**d)


def default_config(variant, **overrides) -> TrainingConfig:
    """A consistent config for a variant: right critic kind, generator kind,
    n_critic (5 for Wasserstein variants, 1 for the vanilla GAN), pretraining."""
    variant = Variant(variant)
    cfg = dict(
        variant=variant,
        epochs=overrides.pop("epochs", 300),
        pretrain_epochs=10 if variant.needs_pretrain else 0,
        adv=AdvConfig(n_critic=1 if variant is Variant.GAN_PRETRAIN else 5),
        generator=GeneratorSpec(kind="multiscale" if variant.needs_multiscale else "srresnet", scale=4),
        critic=CriticSpec(kind=variant.critic_kind),
    )
    cfg.update(overrides)
    return TrainingConfig(**cfg)


def lr_schedule(epoch: int, cfg: TrainingConfig) -> float:
    """Initial rate for the first half of the epochs, decayed rate after."""
    if not 0 <= epoch < cfg.epochs:
        raise ConfigError(f"epoch {epoch} out of range [0, {cfg.epochs})")
    return cfg.lr_initial if epoch < cfg.epochs // 2 else cfg.lr_after_midpoint


@dataclass
class StepRecord:
    epoch: int
    step: int
    lr: float
    phase: str  # "pretrain" | "adversarial"
    terms: dict
    wall_time: float


@dataclass
class StepEvent:
    """Passed to step callbacks right after each optimizer update."""

    kind: str  # "critic_step" | "generator_step" | "pretrain_step"
    epoch: int
    step: int
    terms: dict
    generator: torch.nn.Module
    critic: torch.nn.Module | None


@dataclass
class RunHistory:
    steps: list = field(default_factory=list)
    val: list = field(default_factory=list)  # (epoch, val_mse) tuples
    checkpoints: list = field(default_factory=list)

    def append(self, record: StepRecord):
        if self.steps and record.step <= self.steps[-1].step and record.phase == self.steps[-1].phase:
            raise InvalidInputError("history steps must be strictly increasing")
        self.steps.append(record)

    def adversarial_steps(self):
        return [r for r in self.steps if r.phase == "adversarial"]


class _JsonlLog:
    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, record: dict):
        if self.path:
            with self.path.open("a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")


def _device() -> torch.device:
    return torch.device(os.environ.get("LESIONSR_DEVICE", "cpu"))


def pad_to_canvas(t: torch.Tensor, size: int) -> torch.Tensor:
    """Zero-pad a (B, 1, h, w) batch to the (size, size) critic canvas.

    Real and fake batches receive identical padding, so the frame carries no
    real/fake signal.
    """
    h, w = t.shape[-2:]
    if h > size or w > size:
        raise ShapeError(f"ROI {h}x{w} exceeds the {size}x{size} canvas; raise critic.input_size")
    return torch.nn.functional.pad(t, (0, size - w, 0, size - h))


class RoiBatchDataset:
    """ROI pairs grouped by identical crop size.

    Batches are drawn within a size group, so the generator always trains on
    native (unpadded) crops and its pixel losses are plain MSE; only the
    critic's fixed-size canvas ever sees padding.
    """

    def __init__(self, pairs: list[RoiPair], scale: int, hr_canvas: int):
        if not pairs:
            raise InvalidInputError("dataset is empty")
        self.scale = scale
        self.hr_canvas = hr_canvas
        self.n_items = len(pairs)
        groups: dict[tuple, list[RoiPair]] = {}
        for pair in pairs:
            if pair.scale != scale:
                raise ConfigError(f"pair {pair.slice_id!r} has scale {pair.scale}, expected {scale}")
            h, w = pair.hr.shape
            if h > hr_canvas or w > hr_canvas:
                raise ShapeError(
                    f"ROI {h}x{w} exceeds the {hr_canvas}x{hr_canvas} canvas; raise critic.input_size"
                )
            if scale == 4 and pair.dr is None:
                raise InvalidInputError(f"pair {pair.slice_id!r} lacks the X2 target")
            groups.setdefault((h, w), []).append(pair)

        def stack(images):
            return torch.stack([torch.from_numpy(s.pixels).float().unsqueeze(0) for s in images])

        self.groups = {}
        for shape, members in sorted(groups.items()):
            g = {
                "lr": stack([p.lr for p in members]),
                "hr": stack([p.hr for p in members]),
                "ids": [p.slice_id for p in members],
            }
            if scale == 4:
                g["dr"] = stack([p.dr for p in members])
            self.groups[shape] = g

    def __len__(self):
        return self.n_items

    def iter_epoch(self, rng, batch_size):
        """Yield one epoch of batches: shuffled within groups, groups interleaved."""
        chunks = []
        for shape, g in self.groups.items():
            n = g["hr"].shape[0]
            order = rng.permutation(n)
            chunks.extend((shape, order[i : i + batch_size]) for i in range(0, n, batch_size))
        for k in rng.permutation(len(chunks)):
            shape, idx = chunks[k]
            yield self.slice_group(shape, idx)

    def slice_group(self, shape, idx):
        g = self.groups[shape]
        idx = torch.as_tensor(idx, dtype=torch.long)
        out = {"lr": g["lr"][idx], "hr": g["hr"][idx]}
        if "dr" in g:
            out["dr"] = g["dr"][idx]
        return out

    def steps_per_epoch(self, batch_size) -> int:
        return sum(
            (g["hr"].shape[0] + batch_size - 1) // batch_size for g in self.groups.values()
        )


def _sr_main(gen_out):
    return gen_out.sr_x4 if isinstance(gen_out, MultiScaleOutput) else gen_out


def _check_finite(step, terms):
    for name, value in terms.items():
        if not np.isfinite(value):
            raise TrainingDivergedError(step, name, value)


def _generator_loss(cfg: TrainingConfig, gen_out, batch, critic):
    """Assemble the per-variant generator loss; returns (loss, term floats)."""
    scale = cfg.generator.scale
    sr = _sr_main(gen_out)
    d_fake = critic(pad_to_canvas(sr, cfg.critic.input_size))
    if cfg.variant is Variant.MS_GAN:
        return composite_ms_loss(
            gen_out, batch["dr"], batch["hr"], d_fake, cfg.perceptual, weights=cfg.term_weights
        )
    w = lambda k: cfg.term_weights.get(k, 1.0)
    terms = {
        f"mse_x{scale}": w(f"mse_x{scale}") * mse_loss(sr, batch["hr"]),
        f"vgg_x{scale}": w(f"vgg_x{scale}") * perceptual_loss(sr, batch["hr"], cfg.perceptual),
    }
    if cfg.variant is Variant.GAN_PRETRAIN:
        terms[f"adv_x{scale}"] = w(f"adv_x{scale}") * vanilla_g_loss(d_fake.clamp(PROB_EPS, 1 - PROB_EPS))
    else:
        terms[f"adv_x{scale}"] = w(f"adv_x{scale}") * wgan_g_loss(d_fake)
    if cfg.variant is Variant.WGAN_GP_X2MSE:
        terms["mse_x2"] = w("mse_x2") * mse_loss(gen_out.sr_x2, batch["dr"])
    total = sum(terms.values())
    breakdown = {k: float(v.detach()) for k, v in terms.items()}
    breakdown["total"] = sum(breakdown.values())
    return total, breakdown


def _critic_step(cfg: TrainingConfig, gen, critic, opt_c, batch) -> dict:
    size = cfg.critic.input_size
    with torch.no_grad():
        fake = pad_to_canvas(_sr_main(gen(batch["lr"])), size)
    real = pad_to_canvas(batch["hr"], size)
    d_real = critic(real)
    d_fake = critic(fake)
    terms = {}
    if cfg.variant is Variant.GAN_PRETRAIN:
        loss = vanilla_d_loss(
            d_real.clamp(PROB_EPS, 1 - PROB_EPS), d_fake.clamp(PROB_EPS, 1 - PROB_EPS)
        )
    else:
        loss = wgan_critic_loss(d_real, d_fake)
    terms["critic_loss"] = float(loss.detach())
    if cfg.variant.uses_gp:
        gp = gradient_penalty(critic, real, fake, cfg.adv.gp_lambda)
        terms["gp"] = float(gp.detach())
        loss = loss + gp
    opt_c.zero_grad()
    loss.backward()
    opt_c.step()
    if cfg.variant.uses_clipping:
        clip_weights(critic, cfg.adv.clip_c)
    return terms


def pretrain_generator(gen, dataset: RoiBatchDataset, cfg: TrainingConfig, adversarial_hooks=(),
                       history: RunHistory | None = None, log=None, step_callback=None):
    """MSE-only warm-up phase; adversarial terms are forbidden here."""
    if adversarial_hooks:
        raise ConfigError("pretraining is MSE-only; adversarial hooks are not allowed")
    if not cfg.variant.needs_pretrain:
        raise ConfigError(f"variant {cfg.variant.value} has no pretraining phase")
    if cfg.pretrain_epochs < 1:
        raise ConfigError("pretrain_epochs must be >= 1 for pretraining variants")
    history = history if history is not None else RunHistory()
    opt = torch.optim.Adam(gen.parameters(), lr=cfg.lr_initial)
    rng = np.random.default_rng(cfg.seed ^ 0x5EED)
    step = 0
    start = time.monotonic()
    for epoch in range(cfg.pretrain_epochs):
        for batch in dataset.iter_epoch(rng, cfg.batch_size):
            out = gen(batch["lr"])
            loss = mse_loss(_sr_main(out), batch["hr"])
            if isinstance(out, MultiScaleOutput):
                loss = loss + mse_loss(out.sr_x2, batch["dr"])
            opt.zero_grad()
            loss.backward()
            opt.step()
            terms = {"mse": float(loss.detach())}
            _check_finite(step, terms)
            record = StepRecord(epoch, step, cfg.lr_initial, "pretrain", terms,
                                time.monotonic() - start)
            history.append(record)
            if log:
                log.write({"kind": "step", "phase": "pretrain", "variant": cfg.variant.value,
                           "epoch": epoch, "step": step, "lr": cfg.lr_initial, "terms": terms})
            if step_callback:
                step_callback(StepEvent("pretrain_step", epoch, step, terms, gen, None))
            step += 1
    return history




def train(cfg: TrainingConfig, train_set: list[RoiPair], val_set=None, out_dir=None,
          step_callback=None):
    """Run one configured training job; returns (checkpoint path or state, history).

    When ``out_dir`` is given it receives a config snapshot, the JSONL loss
    log, and checkpoints; otherwise everything stays in memory.
    """
    if not train_set:
        raise InvalidInputError("train_set is empty")
    device = _device()
    torch.manual_seed(cfg.seed)
    gen = build_generator(cfg.generator, cfg.seed).to(device)
    critic = build_critic(cfg.critic, cfg.seed + 1).to(device)
    cfg.perceptual.extractor_fn()  # build eagerly so run streams are reproducible
    dataset = RoiBatchDataset(train_set, cfg.generator.scale, cfg.critic.input_size)
    val_dataset = (
        RoiBatchDataset(val_set, cfg.generator.scale, cfg.critic.input_size) if val_set else None
    )

    out = Path(out_dir) if out_dir else None
    log = None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        log = _JsonlLog(out / "history.jsonl")

    history = RunHistory()
    if cfg.variant.needs_pretrain:
        pretrain_generator(gen, dataset, cfg, history=history, log=log, step_callback=step_callback)
        if out:
            path = out / "checkpoints" / "pretrain.pt"
            save_checkpoint(path, gen, cfg, step=0)
            history.checkpoints.append(str(path))

    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_initial)
    opt_c = torch.optim.Adam(critic.parameters(), lr=cfg.lr_initial)
    rng = np.random.default_rng(cfg.seed)
    step = 0
    start = time.monotonic()
    stop = False
    try:
        for epoch in range(cfg.epochs):
            lr_now = lr_schedule(epoch, cfg)
            for opt in (opt_g, opt_c):
                for group in opt.param_groups:
                    group["lr"] = lr_now
            for batch in dataset.iter_epoch(rng, cfg.batch_size):
                batch = {k: v.to(device) for k, v in batch.items()}
                critic_terms = {}
                for _ in range(cfg.adv.n_critic):
                    critic_terms = _critic_step(cfg, gen, critic, opt_c, batch)
                    _check_finite(step, critic_terms)
                    if step_callback:
                        step_callback(StepEvent("critic_step", epoch, step, critic_terms, gen, critic))
                out_g = gen(batch["lr"])
                loss, terms = _generator_loss(cfg, out_g, batch, critic)
                opt_g.zero_grad()
                loss.backward()
                opt_g.step()
                terms.update(critic_terms)
                _check_finite(step, terms)
                record = StepRecord(epoch, step, lr_now, "adversarial", terms,
                                    time.monotonic() - start)
                history.append(record)
                if log:
                    log.write({"kind": "step", "phase": "adversarial", "variant": cfg.variant.value,
                               "epoch": epoch, "step": step, "lr": lr_now, "terms": terms})
                if step_callback:
                    step_callback(StepEvent("generator_step", epoch, step, terms, gen, critic))
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    stop = True
                    break
            if val_dataset is not None:
                recalibrate_batchnorm(gen, dataset)
                history.val.append((epoch, _validation_mse(gen, val_dataset)))
                if log:
                    log.write({"kind": "val", "epoch": epoch, "mse": history.val[-1][1]})
            if out and cfg.checkpoint_interval and (epoch + 1) % cfg.checkpoint_interval == 0:
                recalibrate_batchnorm(gen, dataset)
                path = out / "checkpoints" / f"epoch_{epoch:04d}.pt"
                save_checkpoint(path, gen, cfg, step=step)
                history.checkpoints.append(str(path))
            if stop:
                break
    except TrainingDivergedError as e:
        if log:
            log.write({"kind": "diverged", "step": e.step, "term": e.term, "value": repr(e.value),
                       "variant": cfg.variant.value})
        raise

    recalibrate_batchnorm(gen, dataset)
    if out:
        path = out / "checkpoints" / "final.pt"
        save_checkpoint(path, gen, cfg, step=step)
        history.checkpoints.append(str(path))
        return path, history
    return checkpoint_state(gen, cfg, step=step), history


def recalibrate_batchnorm(model, dataset: RoiBatchDataset) -> None:
    """Set BatchNorm running statistics to exact biased dataset statistics.

    Training normalizes with biased per-batch statistics while eval mode uses
    the stored running stats, which torch keeps Bessel-corrected; on heavily
    overfit tiny corpora that systematic variance offset is visibly amplified.
    One train-mode pass over the data accumulates per-channel sums, and the
    stats are written back in the biased form training actually used.
    """
    bns = [m for m in model.modules() if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)]
    if not bns:
        return
    sums: dict = {}
    hooks = []

    def make_hook(module):
        def hook(mod, inputs):
            x = inputs[0].detach()
            s = x.sum(dim=(0, 2, 3)).double()
            ss = (x.double() ** 2).sum(dim=(0, 2, 3))
            n = x.numel() // x.shape[1]
            if mod in sums:
                sums[mod][0] += s
                sums[mod][1] += ss
                sums[mod][2] += n
            else:
                sums[mod] = [s, ss, n]

        return hook

    for m in bns:
        hooks.append(m.register_forward_pre_hook(make_hook(m)))
    was_training = model.training
    model.train()
    try:
        with torch.no_grad():
            for g in dataset.groups.values():
                model(g["lr"])
    finally:
        for h in hooks:
            h.remove()
        model.train(was_training)
    with torch.no_grad():
        for m in bns:
            s, ss, n = sums[m]
            mean = s / n
            var = ss / n - mean**2  # biased, matching train-mode normalization
            m.running_mean.copy_(mean.to(m.running_mean.dtype))
            m.running_var.copy_(var.clamp(min=0).to(m.running_var.dtype))


def _validation_mse(gen, dataset: RoiBatchDataset) -> float:
    was_training = gen.training
    gen.eval()
    total, count = 0.0, 0
    try:
        with torch.no_grad():
            for g in dataset.groups.values():
                out = _sr_main(gen(g["lr"]))
                n = g["hr"].shape[0]
                total += float(((out - g["hr"]) ** 2).mean()) * n
                count += n
    finally:
        gen.train(was_training)
    return total / count


def checkpoint_state(gen, cfg: TrainingConfig, step: int) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "lesionsr_generator",
        "generator_spec": asdict(cfg.generator),
        "seed": cfg.seed,
        "step": step,
        "variant": cfg.variant.value,
        "state_dict": {k: v.detach().cpu().clone() for k, v in gen.state_dict().items()},
    }


def save_checkpoint(path, gen, cfg: TrainingConfig, step: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(checkpoint_state(gen, cfg, step), path)
    return path


def load_checkpoint(path_or_state):
    """Rebuild the generator from a checkpoint file or in-memory state."""
    if isinstance(path_or_state, dict):
        state = path_or_state
    else:
        state = torch.load(path_or_state, map_location="cpu", weights_only=True)
    if state.get("kind") != "lesionsr_generator":
        raise InvalidInputError("not a generator checkpoint")
    if state.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {state.get('format_version')}")
    spec = GeneratorSpec(**state["generator_spec"])
    gen = build_generator(spec, state["seed"])
    gen.load_state_dict(state["state_dict"])
    gen.eval()
    return gen, state


def infer(checkpoint, item, detector=None):
    """Detector -> crop -> generator; returns (SR slice, RoiBox provenance).

    ``item`` is either a prepared RoiPair (the detector is skipped) or a
    SlicePair plus a detector callable mapping the HR slice to a RoiBox.
    """
    gen, state = load_checkpoint(checkpoint) if not isinstance(checkpoint, tuple) else checkpoint
    spec = GeneratorSpec(**state["generator_spec"])
    if isinstance(item, RoiPair):
        roi = item
    elif isinstance(item, SlicePair):
        if detector is None:
            raise ConfigError("a detector is required for full-frame inference")
        roi = crop_pair(item, detector(item.hr))
    else:
        raise InvalidInputError(f"cannot infer from {type(item)!r}")
    if roi.scale != spec.scale:
        raise ConfigError(f"checkpoint is X{spec.scale}, request is X{roi.scale}")
    from .models import generator_forward

    out = generator_forward(gen, roi.lr)
    sr = out.sr_x4 if isinstance(out, MultiScaleOutput) else out
    return sr, roi.box
