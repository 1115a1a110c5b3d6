"""Training loops for the two segmentation networks and the conditional GAN.

Segmentation follows the published optimization recipe: Adam with decoupled
weight decay, CE+Dice loss, a fixed 200-epoch run for the multi-tissue network
and EMA-plateau learning-rate decay (factor 0.2, 30-epoch patience) with early
stopping (lr < 1e-6 or 500 epochs) for the cavity network. The GAN alternates
hinge discriminator and generator updates with feature matching and a weighted
KL penalty on the style code.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from . import losses
from .augment import apply_pipeline, build_pipeline, derive_draw_seed
from .core import (
    AugmentConfig,
    Checkpoint,
    DatasetManifest,
    GanTrainConfig,
    NetworkKind,
    Role,
    SegTrainConfig,
    nifti,
    serialize_arrays,
)
from .nets import (
    SpadeGenSpec,
    UNetSpec,
    build_discriminator,
    build_generator,
    build_style_encoder,
    build_unet,
    state_to_arrays,
)

REL_IMPROVEMENT = 1e-4

# (volume_index, image slice, label slice) triples; volume_index drives
# volume-stratified shuffling
SlicePair = tuple[int, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class TrainState:
    epoch: int = 0
    lr: float = 0.0
    ema_loss: float = float("nan")
    best_window_ema: float = float("inf")
    epochs_since_improvement: int = 0
    history: tuple[dict, ...] = ()
    rng_state: tuple | None = None


def plateau_step(state: TrainState, epoch_loss: float, cfg: SegTrainConfig) -> TrainState:
    """Advance the EMA-plateau schedule by one epoch.

    The EMA of the train loss must improve by a relative 1e-4 within
    plateau_window_epochs consecutive epochs, otherwise the learning rate is
    multiplied by lr_plateau_factor and the patience counter restarts.
    """
    d = cfg.ema_decay
    ema = epoch_loss if state.epoch == 0 else d * state.ema_loss + (1 - d) * epoch_loss
    lr = state.lr
    if ema < state.best_window_ema * (1 - REL_IMPROVEMENT):
        best, since = ema, 0
    else:
        best, since = state.best_window_ema, state.epochs_since_improvement + 1
    if since >= cfg.plateau_window_epochs:
        lr = lr * cfg.lr_plateau_factor
        since = 0
    return replace(state, epoch=state.epoch + 1, lr=lr, ema_loss=ema,
                   best_window_ema=best, epochs_since_improvement=since)


def should_stop(state: TrainState, cfg: SegTrainConfig) -> bool:
    return state.lr < cfg.min_lr or state.epoch >= cfg.max_epochs


def _load_pairs_from_manifest(manifest: DatasetManifest, role: Role) -> list[SlicePair]:
    pairs: list[SlicePair] = []
    for vol_idx, entry in enumerate(manifest.with_role(role)):
        vol = nifti.load_volume(entry.volume_path)
        lab = nifti.load_labelmap(entry.labelmap_path)
        if vol.shape != lab.shape:
            raise ValueError(f"{entry.volume_path}: image/label shape mismatch")
        for s in range(vol.shape[0]):
            pairs.append((vol_idx, vol.voxels[s], lab.labels[s]))
    return pairs


def _as_slice_pairs(data, role: Role) -> list[SlicePair]:
    if isinstance(data, DatasetManifest):
        pairs = _load_pairs_from_manifest(data, role)
    else:
        pairs = [p if len(p) == 3 else (i, p[0], p[1]) for i, p in enumerate(data)]
    if not pairs:
        raise ValueError(f"no training slices for role {role.value}")
    return pairs


def _epoch_order(pairs: Sequence[SlicePair], rng: np.random.Generator) -> list[int]:
    """Volume-stratified shuffle: volume order and slice order both permuted."""
    by_vol: dict[int, list[int]] = {}
    for i, (v, _, _) in enumerate(pairs):
        by_vol.setdefault(v, []).append(i)
    vols = list(by_vol)
    rng.shuffle(vols)
    order: list[int] = []
    for v in vols:
        idx = by_vol[v][:]
        rng.shuffle(idx)
        order.extend(idx)
    return order


def _batches(order: list[int], batch_size: int):
    for i in range(0, len(order), batch_size):
        yield order[i:i + batch_size]


def _augmented_batch(pairs, batch_idx, pipeline, aug, epoch):
    imgs, labs = [], []
    for j in batch_idx:
        _, img, lab = pairs[j]
        img, lab = apply_pipeline(pipeline, (img, lab), aug, aug.seed, epoch, j)
        imgs.append(img)
        labs.append(lab)
    x = torch.from_numpy(np.stack(imgs).astype(np.float32)).unsqueeze(1)
    t = torch.from_numpy(np.stack(labs).astype(np.int64))
    return x, t


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise RuntimeError(f"{what} diverged to {value} at epoch {epoch}")


def train_segmentation(
    cfg: SegTrainConfig,
    data: DatasetManifest | Sequence,
    aug: AugmentConfig,
) -> Checkpoint:
    """Train network 1 (fixed epoch count) or network 3 (plateau + early stop)."""
    role = Role.TRAIN_NET1 if cfg.network_kind is NetworkKind.NET1 else Role.TRAIN_NET3
    pairs = _as_slice_pairs(data, role)
    torch.manual_seed(cfg.seed)
    spec = UNetSpec(
        in_channels=1, out_channels=cfg.out_channels, depth=cfg.depth,
        base_channels=cfg.base_channels, norm_kind=cfg.norm_kind.value,
        dropout_rate=cfg.dropout_rate,
    )
    model = build_unet(spec, seed=cfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.initial_lr,
                            betas=(0.9, 0.999), weight_decay=cfg.weight_decay)
    kind = cfg.network_kind.value
    pipeline = build_pipeline("net1" if kind == "net1" else "net3", aug)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0xDA7A]))
    state = TrainState(lr=cfg.initial_lr)
    decays = cfg.network_kind is NetworkKind.NET3

    while state.epoch < cfg.max_epochs:
        epoch = state.epoch
        t0 = time.monotonic()
        model.train()
        epoch_losses, epoch_ce, epoch_dice = [], [], []
        for batch_idx in _batches(_epoch_order(pairs, rng), cfg.batch_size):
            x, t = _augmented_batch(pairs, batch_idx, pipeline, aug, epoch)
            for group in opt.param_groups:
                group["lr"] = state.lr
            opt.zero_grad()
            total, parts = losses.ce_dice(model(x), t)
            total.backward()
            opt.step()
            epoch_losses.append(float(total.detach()))
            epoch_ce.append(float(parts["ce"].detach()))
            epoch_dice.append(float(parts["dice"].detach()))
        train_loss = float(np.mean(epoch_losses))
        _check_finite(train_loss, "training loss", epoch + 1)
        record = {
            "epoch": epoch + 1,
            "train_loss": train_loss,
            "ce": float(np.mean(epoch_ce)),
            "dice": float(np.mean(epoch_dice)),
            "lr": state.lr,
            "wall_time": time.monotonic() - t0,
        }
        if decays:
            state = plateau_step(state, train_loss, cfg)
        else:
            state = replace(state, epoch=epoch + 1,
                            ema_loss=train_loss if epoch == 0
                            else cfg.ema_decay * state.ema_loss + (1 - cfg.ema_decay) * train_loss)
        state = replace(state, history=state.history + (record,))
        if decays and should_stop(state, cfg):
            break

    return Checkpoint(
        network_kind=cfg.network_kind,
        blob=serialize_arrays(state_to_arrays(model)),
        config=cfg,
        epoch=state.epoch,
        history=state.history,
    )


def _onehot_batch(labels: torch.Tensor, num_classes: int) -> torch.Tensor:
    return torch.nn.functional.one_hot(labels, num_classes).permute(0, 3, 1, 2).float()


def train_gan(
    cfg: GanTrainConfig,
    data: DatasetManifest | Sequence,
    aug: AugmentConfig,
) -> tuple[Checkpoint, Checkpoint, Checkpoint]:
    """Alternating hinge GAN training; returns (generator, encoder, discriminator).

    The style image during training is always the paired real image; the
    generator objective is hinge + feature matching + kl_weight * KL.
    """
    pairs = _as_slice_pairs(data, Role.TRAIN_GAN)
    num_classes = cfg.conditioning.num_classes
    max_id = max(int(p[2].max()) for p in pairs)
    if max_id >= num_classes:
        raise ValueError(
            f"label id {max_id} incompatible with {cfg.conditioning.value} conditioning"
        )
    image_size = pairs[0][1].shape[-1]
    torch.manual_seed(cfg.seed)
    g_spec = SpadeGenSpec(
        label_channels=num_classes, z_dim=cfg.z_dim, base_channels=cfg.base_channels,
        num_upsampling_stages=cfg.num_upsampling_stages, image_size=image_size,
    )
    gen = build_generator(g_spec, seed=cfg.seed)
    enc = build_style_encoder(cfg.z_dim, cfg.base_channels, seed=cfg.seed + 1)
    disc = build_discriminator(num_classes, cfg.discriminator_scales,
                               cfg.base_channels, seed=cfg.seed + 2)
    opt_g = torch.optim.Adam(list(gen.parameters()) + list(enc.parameters()),
                             lr=cfg.lr, betas=(0.0, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(0.0, 0.999))
    eps_rng = torch.Generator().manual_seed(cfg.seed + 3)
    pipeline = build_pipeline("gan", aug)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 0x6A4]))

    history: list[dict] = []
    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        sums = {"d_total": 0.0, "g_total": 0.0, "g_adv": 0.0, "g_fm": 0.0, "g_kl": 0.0}
        n_batches = 0
        for batch_idx in _batches(_epoch_order(pairs, rng), cfg.batch_size):
            x, t = _augmented_batch(pairs, batch_idx, pipeline, aug, epoch)
            onehot = _onehot_batch(t, num_classes)

            # discriminator update
            with torch.no_grad():
                code = enc(x, generator=eps_rng)
                fake = gen(onehot, code.z)
            opt_d.zero_grad()
            real_out = disc(x, onehot)
            fake_out = disc(fake, onehot)
            d_loss = losses.hinge_d([o[1] for o in real_out], [o[1] for o in fake_out])
            d_loss.backward()
            opt_d.step()

            # generator + encoder update
            opt_g.zero_grad()
            code = enc(x, generator=eps_rng)
            fake = gen(onehot, code.z)
            fake_out = disc(fake, onehot)
            with torch.no_grad():
                real_out = disc(x, onehot)
            g_adv = losses.hinge_g([o[1] for o in fake_out])
            g_fm = losses.feature_matching(
                [[f.detach() for f in o[0]] for o in real_out],
                [o[0] for o in fake_out],
                weight=cfg.feature_matching_weight,
            )
            g_kl = cfg.kl_weight * losses.kl_divergence(code.mu, code.logvar)
            g_total = g_adv + g_fm + g_kl
            g_total.backward()
            opt_g.step()

            sums["d_total"] += float(d_loss.detach())
            sums["g_total"] += float(g_total.detach())
            sums["g_adv"] += float(g_adv.detach())
            sums["g_fm"] += float(g_fm.detach())
            sums["g_kl"] += float(g_kl.detach())
            n_batches += 1

        record = {k: v / n_batches for k, v in sums.items()}
        _check_finite(record["g_total"], "generator loss", epoch + 1)
        _check_finite(record["d_total"], "discriminator loss", epoch + 1)
        record.update(epoch=epoch + 1, lr=cfg.lr, kl_weight=cfg.kl_weight,
                      wall_time=time.monotonic() - t0)
        history.append(record)

    hist = tuple(history)

    def ckpt(module, kind_tag):
        return Checkpoint(
            network_kind=NetworkKind.GAN,
            blob=serialize_arrays({f"{kind_tag}.{k}": v
                                   for k, v in state_to_arrays(module).items()}),
            config=cfg,
            epoch=cfg.epochs,
            history=hist,
        )

    return ckpt(gen, "generator"), ckpt(enc, "encoder"), ckpt(disc, "discriminator")


def gan_model_specs(cfg: GanTrainConfig, image_size: int) -> SpadeGenSpec:
    return SpadeGenSpec(
        label_channels=cfg.conditioning.num_classes, z_dim=cfg.z_dim,
        base_channels=cfg.base_channels,
        num_upsampling_stages=cfg.num_upsampling_stages, image_size=image_size,
    )
