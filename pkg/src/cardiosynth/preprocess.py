"""Deterministic conditioning: resampling, cropping, normalization, scheme ops.

All geometric ops use the pixel-center convention: output pixel i samples the
input at (i + 0.5) * in_size / out_size - 0.5, clamped at the edges.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from .core import (
    EIGHT_CLASS,
    FOUR_CLASS,
    LabelMap,
    Spacing,
    Volume,
)

# EightClass heart ids -> FourClass ids
_HEART_8_TO_4 = {5: 1, 6: 2, 7: 3}
_EIGHT_TO_FOUR = np.zeros(8, dtype=np.uint8)
for _e, _f in _HEART_8_TO_4.items():
    _EIGHT_TO_FOUR[_e] = _f
_FOUR_TO_EIGHT = np.array([0, 5, 6, 7], dtype=np.uint8)
BODY_TISSUE_ID = 1


def _resample_coords(out_size: int, in_size: int) -> np.ndarray:
    return (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5


def _resample_plane_stack(arr: np.ndarray, new_rc: tuple[int, int], order: int) -> np.ndarray:
    ns = arr.shape[0]
    rr = _resample_coords(new_rc[0], arr.shape[1])
    cc = _resample_coords(new_rc[1], arr.shape[2])
    grid_r, grid_c = np.meshgrid(rr, cc, indexing="ij")
    out = np.empty((ns, new_rc[0], new_rc[1]), dtype=np.float64)
    for s in range(ns):
        out[s] = ndimage.map_coordinates(
            arr[s].astype(np.float64), [grid_r, grid_c], order=order, mode="nearest"
        )
    return out


def resample_inplane(
    x: Volume | LabelMap,
    target_mm: float = Spacing.TARGET_INPLANE_MM,
    mode: str | None = None,
) -> Volume | LabelMap:
    """Resample rows/cols to a square in-plane spacing; the slice axis is untouched.

    New size = round(old_size * old_spacing / target). Volumes default to
    linear interpolation, label maps are always nearest.
    """
    is_label = isinstance(x, LabelMap)
    if mode is None:
        mode = "nearest" if is_label else "linear"
    if mode not in ("linear", "nearest"):
        raise ValueError(f"unknown resample mode {mode!r}")
    if is_label and mode != "nearest":
        raise ValueError("label maps must use nearest-mode resampling")
    sp = x.spacing
    arr = x.labels if is_label else x.voxels
    new_r = int(round(arr.shape[1] * sp.row_mm / target_mm))
    new_c = int(round(arr.shape[2] * sp.col_mm / target_mm))
    if new_r < 1 or new_c < 1:
        raise ValueError(f"resampling to {target_mm} mm collapses shape {arr.shape}")
    out = _resample_plane_stack(arr, (new_r, new_c), order=0 if mode == "nearest" else 1)
    new_spacing = Spacing(target_mm, target_mm, sp.slice_mm)
    if is_label:
        return LabelMap(labels=out.astype(arr.dtype), scheme=x.scheme,
                        spacing=new_spacing, phase=x.phase, subject_id=x.subject_id)
    return Volume(voxels=out.astype(np.float32), spacing=new_spacing, phase=x.phase,
                  subject_id=x.subject_id, normalized=x.normalized)


def _crop_pad_axis(n_in: int, n_out: int) -> tuple[slice, slice]:
    """(source slice, destination slice); equal margins, extra pixel trailing."""
    if n_in >= n_out:
        off = (n_in - n_out) // 2
        return slice(off, off + n_out), slice(0, n_out)
    off = (n_out - n_in) // 2
    return slice(0, n_in), slice(off, off + n_in)


def center_crop_or_pad(x: Volume | LabelMap, size: int = 256) -> Volume | LabelMap:
    """Force the in-plane shape to size x size around the geometric center.

    Label pads use the background id; image pads use the volume minimum.
    """
    is_label = isinstance(x, LabelMap)
    arr = x.labels if is_label else x.voxels
    ns, nr, nc = arr.shape
    fill = 0 if is_label else (arr.min() if arr.size else 0)
    out = np.full((ns, size, size), fill, dtype=arr.dtype)
    sr, dr = _crop_pad_axis(nr, size)
    sc, dc = _crop_pad_axis(nc, size)
    out[:, dr, dc] = arr[:, sr, sc]
    if is_label:
        return LabelMap(labels=out, scheme=x.scheme, spacing=x.spacing,
                        phase=x.phase, subject_id=x.subject_id)
    return Volume(voxels=out, spacing=x.spacing, phase=x.phase,
                  subject_id=x.subject_id, normalized=x.normalized)


def normalize_minmax(vol: Volume) -> Volume:
    """Affine map of the full volume onto [-1, 1]; constant input becomes zeros."""
    v = vol.voxels.astype(np.float32)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        warnings.warn(f"constant volume ({lo}); normalize_minmax returns zeros")
        out = np.zeros_like(v)
    else:
        out = 2.0 * (v - lo) / (hi - lo) - 1.0
    return vol.with_voxels(out, normalized=True)


def to_four_class(labels: LabelMap) -> LabelMap:
    """Project EightClass onto FourClass: heart ids kept, everything else background."""
    if labels.scheme is not EIGHT_CLASS:
        raise ValueError("to_four_class expects an EightClass label map")
    out = _EIGHT_TO_FOUR[labels.labels]
    return LabelMap(labels=out, scheme=FOUR_CLASS, spacing=labels.spacing,
                    phase=labels.phase, subject_id=labels.subject_id)


def merge_heart_labels(predicted: LabelMap, annotation: LabelMap) -> LabelMap:
    """Overwrite the predicted multi-tissue map's heart with the annotation.

    Where the annotation has a heart class, the output takes the matching
    EightClass id; where the annotation is background but the prediction put
    a heart id, the voxel becomes body tissue (the heart must not leak
    outside the annotation); everywhere else the prediction stands.
    """
    if predicted.scheme is not EIGHT_CLASS or annotation.scheme is not FOUR_CLASS:
        raise ValueError("merge_heart_labels expects (EightClass, FourClass)")
    if predicted.shape != annotation.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {annotation.shape}")
    out = predicted.labels.copy()
    pred_heart = np.isin(predicted.labels, (5, 6, 7))
    ann_heart = annotation.labels > 0
    out[pred_heart & ~ann_heart] = BODY_TISSUE_ID
    out[ann_heart] = _FOUR_TO_EIGHT[annotation.labels[ann_heart]]
    return predicted.with_labels(out)


def one_hot(labels: LabelMap, num_classes: int | None = None) -> np.ndarray:
    """Per-slice one-hot encoding, shape (slices, C, rows, cols), float32."""
    num_classes = num_classes or labels.scheme.num_classes
    lab = labels.labels
    if lab.max(initial=0) >= num_classes:
        raise ValueError(f"label id {int(lab.max())} out of range for C={num_classes}")
    out = np.zeros((lab.shape[0], num_classes) + lab.shape[1:], dtype=np.float32)
    s, r, c = np.indices(lab.shape, sparse=True)
    out[s, lab, r, c] = 1.0
    return out


def preprocess_pair(
    vol: Volume,
    labels: LabelMap | None,
    target_mm: float = Spacing.TARGET_INPLANE_MM,
    size: int = 256,
) -> tuple[Volume, LabelMap | None]:
    """The standard conditioning chain: resample, crop to size, normalize."""
    v = normalize_minmax(center_crop_or_pad(resample_inplane(vol, target_mm), size))
    l = None
    if labels is not None:
        l = center_crop_or_pad(resample_inplane(labels, target_mm), size)
    return v, l
