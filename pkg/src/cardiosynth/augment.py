"""Training-time stochastic transforms on aligned (image slice, label slice) pairs.

Every op is a pure function of (pair, cfg, draw_seed). Batch assembly derives
draw seeds from (cfg.seed, epoch, sample index), so runs replay exactly. Images
are interpolated bilinearly, labels with nearest neighbour, and both members of
a pair always receive the same geometric transform.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import AugmentConfig

Pair = tuple[np.ndarray, np.ndarray]


def _rng(draw_seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(draw_seed))


def _warp(plane: np.ndarray, coords, order: int) -> np.ndarray:
    return ndimage.map_coordinates(plane.astype(np.float64), coords,
                                   order=order, mode="nearest")


def _affine_coords(shape, scale: float, rot_deg: float):
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    th = np.deg2rad(rot_deg)
    # inverse map: output pixel -> source location (rotate by -th, scale by 1/s)
    dy, dx = yy - cy, xx - cx
    src_y = (np.cos(th) * dy + np.sin(th) * dx) / scale + cy
    src_x = (-np.sin(th) * dy + np.cos(th) * dx) / scale + cx
    return [src_y, src_x]


def affine_aug(pair: Pair, cfg: AugmentConfig, draw_seed: int) -> Pair:
    """Random in-plane scaling and rotation about the slice center."""
    rng = _rng(draw_seed)
    scale = rng.uniform(*cfg.scale_range)
    rot = rng.uniform(*cfg.rotation_deg_range)
    img, lab = pair
    coords = _affine_coords(img.shape, scale, rot)
    return (_warp(img, coords, 1).astype(img.dtype),
            _warp(lab, coords, 0).astype(lab.dtype))


def sample_displacement_field(shape, cfg: AugmentConfig, rng,
                              spacing_mm: float = 1.0) -> np.ndarray:
    """Smooth random displacement field (2, H, W) in pixels.

    A coarse Gaussian grid (one control point per elastic_grid_mm) is smoothed
    and bilinearly upsampled, then rescaled so each displacement component has
    standard deviation elastic_sigma_mm (expressed in pixels via spacing_mm).
    """
    h, w = shape
    step_px = max(2.0, cfg.elastic_grid_mm / spacing_mm)
    gh, gw = max(3, int(np.ceil(h / step_px)) + 1), max(3, int(np.ceil(w / step_px)) + 1)
    coarse = rng.standard_normal((2, gh, gw))
    coarse = ndimage.gaussian_filter(coarse, sigma=(0, 1.0, 1.0))
    rr = np.linspace(0, gh - 1, h)
    cc = np.linspace(0, gw - 1, w)
    grid = np.meshgrid(rr, cc, indexing="ij")
    field = np.stack([
        ndimage.map_coordinates(coarse[k], grid, order=1, mode="nearest")
        for k in range(2)
    ])
    # normalize after upsampling so per-component std equals elastic_sigma
    std = field.std()
    if std > 0:
        field = field / std
    return field * (cfg.elastic_sigma_mm / spacing_mm)


def elastic_aug(pair: Pair, cfg: AugmentConfig, draw_seed: int,
                spacing_mm: float = 1.0) -> Pair:
    """Warp both members by one smooth random displacement field."""
    img, lab = pair
    if cfg.elastic_sigma_mm == 0:
        return pair
    rng = _rng(draw_seed)
    field = sample_displacement_field(img.shape, cfg, rng, spacing_mm)
    h, w = img.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    coords = [yy + field[0], xx + field[1]]
    return (_warp(img, coords, 1).astype(img.dtype),
            _warp(lab, coords, 0).astype(lab.dtype))


def mirror_aug(pair: Pair, cfg: AugmentConfig, draw_seed: int) -> Pair:
    """Horizontal flip of both members with probability mirror_prob."""
    if _rng(draw_seed).uniform() < cfg.mirror_prob:
        img, lab = pair
        return img[:, ::-1].copy(), lab[:, ::-1].copy()
    return pair


def gamma_aug(pair: Pair, cfg: AugmentConfig, draw_seed: int) -> Pair:
    """Monotone gamma correction of the image slice; labels pass through.

    The slice is rescaled to [0, 1] by its own min/max for exponentiation and
    mapped back, so order statistics are preserved exactly.
    """
    img, lab = pair
    gamma = _rng(draw_seed).uniform(*cfg.gamma_range)
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return pair
    unit = (img.astype(np.float64) - lo) / (hi - lo)
    out = np.power(unit, gamma) * (hi - lo) + lo
    return out.astype(img.dtype), lab


def crop_nonzero(pair: Pair, cfg: AugmentConfig | None = None,
                 draw_seed: int = 0) -> Pair:
    """Crop both members to the image's non-minimum bounding box, then pad back."""
    img, lab = pair
    content = img != img.min()
    if not content.any() or content.all():
        return pair
    rows = np.any(content, axis=1)
    cols = np.any(content, axis=0)
    r0, r1 = np.argmax(rows), len(rows) - np.argmax(rows[::-1])
    c0, c1 = np.argmax(cols), len(cols) - np.argmax(cols[::-1])
    sub_img, sub_lab = img[r0:r1, c0:c1], lab[r0:r1, c0:c1]
    return (_pad_center(sub_img, img.shape, img.min()),
            _pad_center(sub_lab, lab.shape, 0))


def _pad_center(arr: np.ndarray, shape, fill) -> np.ndarray:
    out = np.full(shape, fill, dtype=arr.dtype)
    h, w = arr.shape
    oh, ow = shape
    # crop if the content box exceeds the target (cannot happen for crop_nonzero)
    h, w = min(h, oh), min(w, ow)
    r0, c0 = (oh - h) // 2, (ow - w) // 2
    out[r0:r0 + h, c0:c0 + w] = arr[:h, :w]
    return out


_OPS = {
    "affine": affine_aug,
    "elastic": elastic_aug,
    "mirror": mirror_aug,
    "gamma": gamma_aug,
    "crop_nonzero": crop_nonzero,
}

_MENU = {
    "net1": ("affine", "elastic", "mirror"),
    "net3": ("affine", "elastic", "mirror", "gamma", "crop_nonzero"),
    "gan": ("affine", "elastic"),
}


def build_pipeline(kind: str, cfg: AugmentConfig) -> list[tuple[str, callable]]:
    """Ordered transform list for one training target, filtered by enabled_ops."""
    if kind not in _MENU:
        raise ValueError(f"unknown pipeline kind {kind!r}")
    names = [n for n in _MENU[kind] if n in cfg.enabled_ops]
    return [(n, _OPS[n]) for n in names]


def derive_draw_seed(base_seed: int, epoch: int, index: int, op_index: int = 0) -> int:
    """Stable per-(epoch, sample, op) seed stream."""
    mix = np.random.SeedSequence([base_seed, epoch, index, op_index])
    return int(mix.generate_state(1)[0])


def apply_pipeline(pipeline, pair: Pair, cfg: AugmentConfig,
                   base_seed: int, epoch: int, index: int) -> Pair:
    for k, (name, fn) in enumerate(pipeline):
        pair = fn(pair, cfg, derive_draw_seed(base_seed, epoch, index, k))
    return pair
