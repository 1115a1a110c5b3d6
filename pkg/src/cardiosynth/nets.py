"""Network constructors: segmentation U-Net, mask-conditioned generator with
spatially-adaptive modulation, style encoder (VAE head), multiscale patch
discriminator.

All builders take a seed and re-initialize every parameter from a dedicated
torch.Generator in sorted-name order, so identical (spec, seed) always give
identical parameters regardless of construction-time global RNG state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


# -- deterministic initialization --------------------------------------------

def init_params(module: nn.Module, seed: int) -> nn.Module:
    """Re-initialize all parameters deterministically from (names, seed)."""
    g = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    zero_mods = {
        id(p)
        for m in module.modules()
        if getattr(m, "zero_init", False)
        for p in m.parameters(recurse=False)
    }
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if id(p) in zero_mods:
                p.zero_()
            elif p.dim() >= 2:
                fan_in = p[0].numel()
                std = math.sqrt(2.0 / max(fan_in, 1))
                p.copy_(torch.randn(p.shape, generator=g) * std)
            elif name.endswith("weight"):
                p.fill_(1.0)  # norm gains
            else:
                p.zero_()
    return module


def state_to_arrays(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def arrays_to_state(module: nn.Module, arrays: dict[str, np.ndarray]) -> nn.Module:
    state = {k: torch.from_numpy(np.asarray(v)) for k, v in arrays.items()}
    module.load_state_dict(state)
    return module


# -- segmentation U-Net -------------------------------------------------------

@dataclass(frozen=True)
class UNetSpec:
    in_channels: int = 1
    out_channels: int = 8
    depth: int = 4
    base_channels: int = 32
    norm_kind: str = "batch"  # "batch" | "instance" | "none"
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.out_channels not in (4, 8):
            raise ValueError("out_channels must be 4 or 8")
        if self.norm_kind not in ("batch", "instance", "none"):
            raise ValueError(f"unknown norm_kind {self.norm_kind!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def _norm_layer(kind: str, channels: int) -> nn.Module:
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    if kind == "instance":
        return nn.InstanceNorm2d(channels, affine=True)
    return nn.Identity()


class _ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, norm_kind, dropout=0.0):
        super().__init__()
        layers = [
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            _norm_layer(norm_kind, out_ch),
            nn.LeakyReLU(0.1, inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            _norm_layer(norm_kind, out_ch),
            nn.LeakyReLU(0.1, inplace=True),
        ]
        if dropout > 0:
            layers.append(nn.Dropout2d(dropout))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Encoder-decoder with skip connections; logits keep the input spatial size."""

    def __init__(self, spec: UNetSpec):
        super().__init__()
        self.spec = spec
        d, b = spec.depth, spec.base_channels
        chans = [min(b * 2**i, 512) for i in range(d + 1)]
        self.enc = nn.ModuleList()
        in_ch = spec.in_channels
        for i in range(d):
            # dropout only at the deeper levels, as a regularizer near the bottleneck
            drop = spec.dropout_rate if i >= d - 2 else 0.0
            self.enc.append(_ConvBlock(in_ch, chans[i], spec.norm_kind, drop))
            in_ch = chans[i]
        self.bottleneck = _ConvBlock(in_ch, chans[d], spec.norm_kind, spec.dropout_rate)
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for i in reversed(range(d)):
            self.up.append(nn.Conv2d(chans[i + 1], chans[i], 3, padding=1))
            self.dec.append(_ConvBlock(chans[i] * 2, chans[i], spec.norm_kind))
        self.head = nn.Conv2d(chans[0], spec.out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        div = 2**self.spec.depth
        if h % div or w % div:
            raise ValueError(f"input {h}x{w} not divisible by 2^depth = {div}")
        skips = []
        for enc in self.enc:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.up, self.dec, reversed(skips)):
            x = up(F.interpolate(x, scale_factor=2, mode="nearest"))
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)


def build_unet(spec: UNetSpec, seed: int = 0) -> UNet:
    return init_params(UNet(spec), seed)


# -- parameter-free normalization with running statistics ---------------------

class BatchStatNorm(nn.Module):
    """Per-channel normalization without learned affine parameters.

    mode "batch": statistics over (N, H, W) with running estimates used in
    eval mode (the conventional choice). mode "sample": per-sample statistics
    over (H, W) only, fully batch-independent (unit-test mode).
    """

    def __init__(self, channels: int, mode: str = "batch", momentum: float = 0.1,
                 eps: float = 1e-5):
        super().__init__()
        if mode not in ("batch", "sample"):
            raise ValueError(f"unknown norm mode {mode!r}")
        self.mode = mode
        self.momentum = momentum
        self.eps = eps
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.mode == "sample":
            mean = x.mean(dim=(2, 3), keepdim=True)
            var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
            return (x - mean) / torch.sqrt(var + self.eps)
        if self.training:
            mean = x.mean(dim=(0, 2, 3))
            var = x.var(dim=(0, 2, 3), unbiased=False)
            with torch.no_grad():
                self.running_mean.lerp_(mean, self.momentum)
                self.running_var.lerp_(var, self.momentum)
        else:
            mean, var = self.running_mean, self.running_var
        return (x - mean[None, :, None, None]) / torch.sqrt(var[None, :, None, None] + self.eps)


# -- spatially-adaptive modulation --------------------------------------------

class SpadeModulation(nn.Module):
    """out = norm(x) * (1 + gamma(mask)) + beta(mask).

    gamma and beta are per-pixel maps computed from the nearest-resized one-hot
    mask by a small convolutional head. The output layers of both heads are
    zero-initialized, so a freshly built module is exactly the parameter-free
    normalization.
    """

    def __init__(self, channels: int, label_channels: int, hidden: int = 64,
                 kernel_size: int = 3, norm_mode: str = "batch"):
        super().__init__()
        pad = kernel_size // 2
        self.norm = BatchStatNorm(channels, mode=norm_mode)
        self.shared = nn.Sequential(
            nn.Conv2d(label_channels, hidden, kernel_size, padding=pad),
            nn.ReLU(inplace=True),
        )
        self.gamma_head = nn.Conv2d(hidden, channels, kernel_size, padding=pad)
        self.beta_head = nn.Conv2d(hidden, channels, kernel_size, padding=pad)
        self.gamma_head.zero_init = True
        self.beta_head.zero_init = True

    def forward(self, x: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
        if onehot.shape[0] != x.shape[0]:
            raise ValueError("batch mismatch between features and mask")
        normalized = self.norm(x)
        if onehot.shape[-2:] != x.shape[-2:]:
            onehot = F.interpolate(onehot, size=x.shape[-2:], mode="nearest")
        actv = self.shared(onehot)
        return normalized * (1 + self.gamma_head(actv)) + self.beta_head(actv)


def spade_modulate(module: SpadeModulation, features: torch.Tensor,
                   onehot: torch.Tensor) -> torch.Tensor:
    return module(features, onehot)


class SpadeResBlock(nn.Module):
    def __init__(self, in_ch, out_ch, label_channels, norm_mode="batch"):
        super().__init__()
        mid = min(in_ch, out_ch)
        self.spade_0 = SpadeModulation(in_ch, label_channels, norm_mode=norm_mode)
        self.conv_0 = nn.Conv2d(in_ch, mid, 3, padding=1)
        self.spade_1 = SpadeModulation(mid, label_channels, norm_mode=norm_mode)
        self.conv_1 = nn.Conv2d(mid, out_ch, 3, padding=1)
        self.learned_shortcut = in_ch != out_ch
        if self.learned_shortcut:
            self.spade_s = SpadeModulation(in_ch, label_channels, norm_mode=norm_mode)
            self.conv_s = nn.Conv2d(in_ch, out_ch, 1, bias=False)

    def forward(self, x, onehot):
        sc = self.conv_s(self.spade_s(x, onehot)) if self.learned_shortcut else x
        dx = self.conv_0(F.leaky_relu(self.spade_0(x, onehot), 0.2))
        dx = self.conv_1(F.leaky_relu(self.spade_1(dx, onehot), 0.2))
        return sc + dx


@dataclass(frozen=True)
class SpadeGenSpec:
    label_channels: int = 8
    z_dim: int = 16
    base_channels: int = 32
    num_upsampling_stages: int = 3
    image_size: int = 64

    def __post_init__(self):
        if self.label_channels not in (4, 8):
            raise ValueError("label_channels must be 4 or 8")
        if self.image_size % 2**self.num_upsampling_stages:
            raise ValueError("image_size must be divisible by 2^num_upsampling_stages")


class SpadeGenerator(nn.Module):
    """Residual SPADE decoder from a learned projection of z; tanh output in [-1, 1]."""

    def __init__(self, spec: SpadeGenSpec, norm_mode: str = "batch"):
        super().__init__()
        self.spec = spec
        n = spec.num_upsampling_stages
        chans = [min(spec.base_channels * 2**i, 512) for i in range(n, -1, -1)]
        self.h0 = spec.image_size // 2**n
        self.fc = nn.Linear(spec.z_dim, chans[0] * self.h0 * self.h0)
        self.blocks = nn.ModuleList([
            SpadeResBlock(chans[i], chans[i + 1], spec.label_channels, norm_mode)
            for i in range(n)
        ])
        self.head = nn.Conv2d(chans[-1], 1, 3, padding=1)

    def forward(self, onehot: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        if onehot.shape[1] != self.spec.label_channels:
            raise ValueError(
                f"conditioning mismatch: got {onehot.shape[1]} channels, "
                f"expected {self.spec.label_channels}"
            )
        if onehot.shape[-1] != self.spec.image_size:
            raise ValueError(f"expected {self.spec.image_size}px input masks")
        x = self.fc(z).view(z.shape[0], -1, self.h0, self.h0)
        for block in self.blocks:
            x = block(x, onehot)
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        return torch.tanh(self.head(F.leaky_relu(x, 0.2)))


def build_generator(spec: SpadeGenSpec, seed: int = 0, norm_mode: str = "batch") -> SpadeGenerator:
    return init_params(SpadeGenerator(spec, norm_mode), seed)


def generator_forward(model: SpadeGenerator, onehot: torch.Tensor,
                      z: torch.Tensor) -> torch.Tensor:
    return model(onehot, z)


# -- style encoder -------------------------------------------------------------

@dataclass(frozen=True)
class StyleCode:
    mu: torch.Tensor
    logvar: torch.Tensor
    z: torch.Tensor


class StyleEncoder(nn.Module):
    """Strided conv stack ending in (mu, logvar) heads; deliberately norm-free."""

    def __init__(self, z_dim: int = 16, base_channels: int = 32):
        super().__init__()
        b = base_channels
        self.convs = nn.Sequential(
            nn.Conv2d(1, b, 3, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True),
        )
        self.pool = nn.AdaptiveAvgPool2d(4)
        self.fc_mu = nn.Linear(4 * b * 16, z_dim)
        self.fc_logvar = nn.Linear(4 * b * 16, z_dim)

    def forward(self, image: torch.Tensor, *, deterministic: bool = False,
                generator: torch.Generator | None = None) -> StyleCode:
        h = self.pool(self.convs(image)).flatten(1)
        mu = self.fc_mu(h)
        logvar = self.fc_logvar(h)
        if deterministic:
            z = mu
        else:
            eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
            z = mu + torch.exp(0.5 * logvar) * eps
        return StyleCode(mu=mu, logvar=logvar, z=z)


def build_style_encoder(z_dim: int = 16, base_channels: int = 32,
                        seed: int = 0) -> StyleEncoder:
    return init_params(StyleEncoder(z_dim, base_channels), seed)


def style_encode(model: StyleEncoder, image: torch.Tensor, **kw) -> StyleCode:
    return model(image, **kw)


# -- multiscale patch discriminator --------------------------------------------

class _PatchDiscriminator(nn.Module):
    def __init__(self, in_channels: int, base_channels: int = 32):
        super().__init__()
        b = base_channels
        self.layers = nn.ModuleList([
            nn.Sequential(nn.Conv2d(in_channels, b, 4, stride=2, padding=1),
                          nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(nn.Conv2d(b, 2 * b, 4, stride=2, padding=1),
                          nn.InstanceNorm2d(2 * b), nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(nn.Conv2d(2 * b, 4 * b, 4, stride=1, padding=1),
                          nn.InstanceNorm2d(4 * b), nn.LeakyReLU(0.2, inplace=True)),
        ])
        self.head = nn.Conv2d(4 * b, 1, 4, stride=1, padding=1)

    def forward(self, x):
        feats = []
        for layer in self.layers:
            x = layer(x)
            feats.append(x)
        return feats, self.head(x)


class MultiScaleDiscriminator(nn.Module):
    """Patch classifiers at progressively halved resolutions (default 2 scales).

    Input is the image concatenated channel-wise with the one-hot mask; each
    scale returns (feature list, logit map) for hinge + feature-matching losses.
    """

    def __init__(self, label_channels: int, scales: int = 2, base_channels: int = 32):
        super().__init__()
        if scales < 1:
            raise ValueError("scale count must be >= 1")
        self.scales = nn.ModuleList([
            _PatchDiscriminator(1 + label_channels, base_channels)
            for _ in range(scales)
        ])

    def forward(self, image: torch.Tensor, onehot: torch.Tensor):
        if onehot.shape[-2:] != image.shape[-2:]:
            onehot = F.interpolate(onehot, size=image.shape[-2:], mode="nearest")
        x = torch.cat([image, onehot], dim=1)
        outputs = []
        for k, disc in enumerate(self.scales):
            outputs.append(disc(x))
            if k + 1 < len(self.scales):
                x = F.avg_pool2d(x, 2)
        return outputs


def build_discriminator(label_channels: int, scales: int = 2, base_channels: int = 32,
                        seed: int = 0) -> MultiScaleDiscriminator:
    return init_params(MultiScaleDiscriminator(label_channels, scales, base_channels), seed)


def discriminator_forward(model: MultiScaleDiscriminator, image: torch.Tensor,
                          onehot: torch.Tensor):
    return model(image, onehot)


def set_norm_mode(module: nn.Module, mode: str) -> None:
    """Switch every BatchStatNorm in a module tree between batch/sample statistics."""
    for m in module.modules():
        if isinstance(m, BatchStatNorm):
            if mode not in ("batch", "sample"):
                raise ValueError(f"unknown norm mode {mode!r}")
            m.mode = mode
