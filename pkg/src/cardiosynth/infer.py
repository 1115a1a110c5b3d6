"""Inference paths: multi-tissue prediction, conditional volume synthesis,
cardiac cavity segmentation."""
from __future__ import annotations

import numpy as np
import torch

from .core import (
    Checkpoint,
    Conditioning,
    EIGHT_CLASS,
    FOUR_CLASS,
    GanTrainConfig,
    LabelMap,
    NetworkKind,
    SegTrainConfig,
    Volume,
)
from .nets import (
    SpadeGenSpec,
    StyleEncoder,
    UNet,
    UNetSpec,
    arrays_to_state,
    build_generator,
    build_style_encoder,
    build_unet,
)
from .preprocess import one_hot, to_four_class


def logits_to_labels(logits: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over the class axis; ties resolve to the lower id."""
    return np.argmax(logits, axis=-3).astype(np.uint8)


def unet_from_checkpoint(ckpt: Checkpoint) -> UNet:
    cfg = ckpt.config
    if not isinstance(cfg, SegTrainConfig):
        raise ValueError("checkpoint does not hold a segmentation config")
    spec = UNetSpec(
        in_channels=1, out_channels=cfg.out_channels, depth=cfg.depth,
        base_channels=cfg.base_channels, norm_kind=cfg.norm_kind.value,
        dropout_rate=cfg.dropout_rate,
    )
    model = build_unet(spec, seed=cfg.seed)
    arrays_to_state(model, ckpt.arrays())
    model.eval()
    return model


def _strip_prefix(arrays: dict, prefix: str) -> dict:
    out = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
    if not out:
        raise ValueError(f"checkpoint blob has no '{prefix}' parameters")
    return out


def generator_from_checkpoint(ckpt: Checkpoint):
    cfg = ckpt.config
    if not isinstance(cfg, GanTrainConfig):
        raise ValueError("checkpoint does not hold a GAN config")
    arrays = _strip_prefix(ckpt.arrays(), "generator.")
    n = cfg.num_upsampling_stages
    ch0 = min(cfg.base_channels * 2**n, 512)
    h0 = int(round((arrays["fc.weight"].shape[0] / ch0) ** 0.5))
    spec = SpadeGenSpec(
        label_channels=cfg.conditioning.num_classes, z_dim=cfg.z_dim,
        base_channels=cfg.base_channels, num_upsampling_stages=n,
        image_size=h0 * 2**n,
    )
    model = build_generator(spec, seed=cfg.seed)
    arrays_to_state(model, arrays)
    model.eval()
    return model


def encoder_from_checkpoint(ckpt: Checkpoint) -> StyleEncoder:
    cfg = ckpt.config
    if not isinstance(cfg, GanTrainConfig):
        raise ValueError("checkpoint does not hold a GAN config")
    model = build_style_encoder(cfg.z_dim, cfg.base_channels, seed=cfg.seed)
    arrays_to_state(model, _strip_prefix(ckpt.arrays(), "encoder."))
    model.eval()
    return model


def _segment(ckpt: Checkpoint, vol: Volume, scheme) -> LabelMap:
    model = unet_from_checkpoint(ckpt)
    x = torch.from_numpy(vol.voxels.astype(np.float32)).unsqueeze(1)
    with torch.no_grad():
        logits = model(x).numpy()
    labels = logits_to_labels(logits)
    return LabelMap(labels=labels, scheme=scheme, spacing=vol.spacing,
                    phase=vol.phase, subject_id=vol.subject_id)


def predict_multitissue(ckpt: Checkpoint, vol: Volume) -> LabelMap:
    """Per-slice multi-tissue segmentation of a preprocessed volume (network 1)."""
    if ckpt.config.out_channels != 8:
        raise ValueError("predict_multitissue needs an 8-class checkpoint")
    return _segment(ckpt, vol, EIGHT_CLASS)


def segment_cardiac(ckpt: Checkpoint, vol: Volume) -> LabelMap:
    """Per-slice cavity segmentation into background/RV/MYO/LV (network 3)."""
    if ckpt.config.out_channels != 4:
        raise ValueError("segment_cardiac needs a 4-class checkpoint")
    return _segment(ckpt, vol, FOUR_CLASS)


def _style_code_z(enc: StyleEncoder, style: Volume | None, z_dim: int,
                  n_slices: int, seed: int, per_slice: bool) -> torch.Tensor:
    """Style codes for each slice: one shared draw per volume, or independent
    draws per slice for the consistency A/B comparison."""
    g = torch.Generator().manual_seed(seed)
    n_draws = n_slices if per_slice else 1
    if style is None:
        z = torch.randn((n_draws, z_dim), generator=g)
    else:
        mid = style.voxels[style.shape[0] // 2]
        x = torch.from_numpy(mid.astype(np.float32))[None, None]
        with torch.no_grad():
            h = enc.pool(enc.convs(x)).flatten(1)
            mu, logvar = enc.fc_mu(h), enc.fc_logvar(h)
        eps = torch.randn((n_draws, z_dim), generator=g)
        z = mu + torch.exp(0.5 * logvar) * eps
    if not per_slice:
        z = z.expand(n_slices, z_dim)
    return z


def synthesize_volume(
    gen_ckpt: Checkpoint,
    enc_ckpt: Checkpoint,
    labels: LabelMap,
    style: Volume | None = None,
    mode: Conditioning = Conditioning.EIGHT_CLASS,
    seed: int = 0,
    z_per_slice: bool = False,
) -> Volume:
    """Slice-by-slice conditional synthesis of one volume.

    All slices share a single style code by default; that shared code is what
    keeps appearance coherent through the slice direction. The label array is
    only read through its one-hot encoding and is never altered. Four-class
    conditioning requires a style volume; eight-class falls back to a prior
    draw when no reference style is configured.
    """
    cfg = gen_ckpt.config
    if cfg.conditioning is not mode:
        raise ValueError(f"checkpoint conditioning {cfg.conditioning.value} != {mode.value}")
    if mode is Conditioning.FOUR_CLASS:
        if style is None:
            raise ValueError("four_class synthesis requires a style image")
        if labels.scheme is EIGHT_CLASS:
            cond = to_four_class(labels)
        elif labels.scheme is FOUR_CLASS:
            cond = labels
        else:
            raise ValueError("unsupported label scheme")
    else:
        if labels.scheme is not EIGHT_CLASS:
            raise ValueError("eight_class synthesis requires EightClass labels")
        cond = labels

    gen = generator_from_checkpoint(gen_ckpt)
    enc = encoder_from_checkpoint(enc_ckpt)
    onehot = torch.from_numpy(one_hot(cond, mode.num_classes))
    n = onehot.shape[0]
    z = _style_code_z(enc, style, cfg.z_dim, n, seed, z_per_slice)
    with torch.no_grad():
        out = gen(onehot, z).squeeze(1).numpy()
    return Volume(voxels=out.astype(np.float32), spacing=labels.spacing,
                  phase=labels.phase, subject_id=labels.subject_id, normalized=True)
