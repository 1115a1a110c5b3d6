"""Training-configuration records and the pinned desk/paper default profiles."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

CONFIG_SCHEMA_VERSION = 1


class NetworkKind(str, Enum):
    NET1 = "net1"
    NET3 = "net3"
    GAN = "gan"


class NormKind(str, Enum):
    BATCH = "batch"
    INSTANCE = "instance"


class Conditioning(str, Enum):
    FOUR_CLASS = "four_class"
    EIGHT_CLASS = "eight_class"

    @property
    def num_classes(self) -> int:
        return 4 if self is Conditioning.FOUR_CLASS else 8


@dataclass(frozen=True)
class SegTrainConfig:
    network_kind: NetworkKind = NetworkKind.NET1
    batch_size: int = 10
    max_epochs: int = 200
    initial_lr: float = 1e-4
    weight_decay: float = 5e-5
    dropout_rate: float = 0.5
    norm_kind: NormKind = NormKind.BATCH
    lr_plateau_factor: float = 0.2
    plateau_window_epochs: int = 30
    min_lr: float = 1e-6
    ema_decay: float = 0.9
    seed: int = 0
    # architecture knobs (the source designs leave exact width/depth open)
    depth: int = 4
    base_channels: int = 32
    out_channels: int = 8
    # batches per epoch; None means one pass over the slice pool. Epochs are
    # fixed iteration counts so tiny desk datasets still take full batches.
    steps_per_epoch: int | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


def net1_defaults(**overrides) -> SegTrainConfig:
    return replace(
        SegTrainConfig(
            network_kind=NetworkKind.NET1, batch_size=10, max_epochs=200,
            initial_lr=1e-4, weight_decay=5e-5, dropout_rate=0.5,
            norm_kind=NormKind.BATCH, out_channels=8,
        ),
        **overrides,
    )


def net3_defaults(**overrides) -> SegTrainConfig:
    return replace(
        SegTrainConfig(
            network_kind=NetworkKind.NET3, batch_size=32, max_epochs=500,
            initial_lr=5e-4, weight_decay=5e-5, dropout_rate=0.2,
            norm_kind=NormKind.INSTANCE, lr_plateau_factor=0.2,
            plateau_window_epochs=30, min_lr=1e-6, out_channels=4,
        ),
        **overrides,
    )


@dataclass(frozen=True)
class GanTrainConfig:
    lr: float = 2e-4
    batch_size: int = 20
    kl_weight: float = 0.5
    feature_matching_weight: float = 10.0
    z_dim: int = 16
    discriminator_scales: int = 2
    epochs: int = 100
    seed: int = 0
    conditioning: Conditioning = Conditioning.EIGHT_CLASS
    base_channels: int = 32
    num_upsampling_stages: int = 3

    def __post_init__(self):
        if self.discriminator_scales < 1:
            raise ValueError("discriminator_scales must be >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


@dataclass(frozen=True)
class AugmentConfig:
    """Stochastic transform menu; magnitudes are pinned defaults, not sourced."""

    scale_range: tuple[float, float] = (0.85, 1.15)
    rotation_deg_range: tuple[float, float] = (-15.0, 15.0)
    elastic_grid_mm: float = 32.0
    elastic_sigma_mm: float = 2.0
    mirror_prob: float = 0.5
    gamma_range: tuple[float, float] = (0.7, 1.5)
    enabled_ops: tuple[str, ...] = ("affine", "elastic", "mirror", "gamma", "crop_nonzero")
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.mirror_prob <= 1.0):
            raise ValueError("mirror_prob must lie in [0, 1]")
        if self.scale_range[0] <= 0:
            raise ValueError("scale range must be positive")


def no_augmentation() -> AugmentConfig:
    return AugmentConfig(enabled_ops=())


# -- JSON round-trip ---------------------------------------------------------

_ENUMS = {
    "network_kind": NetworkKind,
    "norm_kind": NormKind,
    "conditioning": Conditioning,
}


def config_to_dict(cfg) -> dict:
    d = asdict(cfg)
    for k, v in d.items():
        if isinstance(v, Enum):
            d[k] = v.value
        elif isinstance(v, tuple):
            d[k] = list(v)
    d["schema_version"] = CONFIG_SCHEMA_VERSION
    d["kind"] = type(cfg).__name__
    return d


_KINDS = {}


def _register(cls):
    _KINDS[cls.__name__] = cls
    return cls


for _cls in (SegTrainConfig, GanTrainConfig, AugmentConfig):
    _register(_cls)


def config_from_dict(d: dict):
    d = dict(d)
    version = d.pop("schema_version", None)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema_version {version!r}")
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown config kind {kind!r}")
    cls = _KINDS[kind]
    for k, enum_cls in _ENUMS.items():
        if k in d:
            d[k] = enum_cls(d[k])
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    return cls(**d)


def save_config(cfg, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def load_config(path: str | Path):
    return config_from_dict(json.loads(Path(path).read_text()))


# -- profiles ----------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Pinned default geometry + network sizes for one run scale."""

    name: str
    image_size: int
    inplane_mm: float
    slice_mm: float
    slices: int
    unet_depth: int
    unet_base_channels: int
    gan_base_channels: int
    z_dim: int


DESK = Profile(
    name="desk", image_size=64, inplane_mm=4.0, slice_mm=8.0, slices=8,
    unet_depth=3, unet_base_channels=16, gan_base_channels=32, z_dim=16,
)

PAPER = Profile(
    name="paper", image_size=256, inplane_mm=1.3, slice_mm=8.0, slices=10,
    unet_depth=4, unet_base_channels=32, gan_base_channels=64, z_dim=256,
)

PROFILES = {"desk": DESK, "paper": PAPER}


def get_profile(name: str) -> Profile:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
    return PROFILES[name]
