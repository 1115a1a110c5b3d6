"""Per-class Dice and Hausdorff distance plus cohort aggregation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import FOUR_CLASS, LabelMap, Spacing

FOREGROUND_CLASSES = ("RV", "MYO", "LV")  # FourClass ids 1, 2, 3


def _check_shapes(pred: LabelMap, gt: LabelMap) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")


def dice(pred: LabelMap, gt: LabelMap, class_id: int) -> float:
    """Overlap 2|P∩G| / (|P|+|G|); both masks empty counts as perfect (1.0)."""
    _check_shapes(pred, gt)
    p = pred.labels == class_id
    g = gt.labels == class_id
    np_, ng = int(p.sum()), int(g.sum())
    if np_ == 0 and ng == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / (np_ + ng)


def image_diagonal_mm(shape: tuple[int, int, int], spacing: Spacing) -> float:
    ns, nr, nc = shape
    return float(np.sqrt((ns * spacing.slice_mm) ** 2
                         + (nr * spacing.row_mm) ** 2
                         + (nc * spacing.col_mm) ** 2))


def _mask_points_mm(mask: np.ndarray, spacing: Spacing) -> np.ndarray:
    idx = np.argwhere(mask).astype(np.float64)
    idx[:, 0] *= spacing.slice_mm
    idx[:, 1] *= spacing.row_mm
    idx[:, 2] *= spacing.col_mm
    return idx


def hausdorff(
    pred: LabelMap,
    gt: LabelMap,
    class_id: int,
    spacing: Spacing | None = None,
    *,
    percentile: float | None = None,
    per_slice: bool = False,
) -> float:
    """Symmetric Hausdorff distance between two class masks in millimeters.

    Defaults to the maximum symmetric distance over the full 3D mask;
    `percentile` switches to e.g. HD95 and `per_slice` to the mean of 2D
    slice-wise distances (comparison variants only). Either mask empty
    yields the image-diagonal penalty.
    """
    _check_shapes(pred, gt)
    spacing = spacing or pred.spacing
    p = pred.labels == class_id
    g = gt.labels == class_id
    if per_slice:
        vals = []
        flat = Spacing(spacing.row_mm, spacing.col_mm, 1.0)
        for s in range(p.shape[0]):
            vals.append(_hd_masks(p[s:s + 1], g[s:s + 1], flat, percentile,
                                  diag=image_diagonal_mm((1,) + p.shape[1:], flat)))
        return float(np.mean(vals))
    return _hd_masks(p, g, spacing, percentile, diag=image_diagonal_mm(p.shape, spacing))


def _hd_masks(p: np.ndarray, g: np.ndarray, spacing: Spacing,
              percentile: float | None, diag: float) -> float:
    if not p.any() or not g.any():
        return diag
    pp = _mask_points_mm(p, spacing)
    gp = _mask_points_mm(g, spacing)
    d_pg, _ = cKDTree(gp).query(pp, k=1)
    d_gp, _ = cKDTree(pp).query(gp, k=1)
    if percentile is None:
        return float(max(d_pg.max(), d_gp.max()))
    return float(max(np.percentile(d_pg, percentile), np.percentile(d_gp, percentile)))


@dataclass(frozen=True)
class MetricRow:
    subject_id: str
    phase: str
    tissue: str
    dsc: float
    hd_mm: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[MetricRow, ...]

    def aggregates(self) -> dict[str, dict[str, float]]:
        return aggregate(self.rows)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "rows": [vars(r) for r in self.rows],
            "aggregates": self.aggregates(),
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        return MetricsReport(rows=tuple(
            MetricRow(r["subject_id"], r["phase"], r["tissue"],
                      float(r["dsc"]), float(r["hd_mm"]))
            for r in d["rows"]
        ))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def load(path: str | Path) -> "MetricsReport":
        return MetricsReport.from_dict(json.loads(Path(path).read_text()))


def evaluate(pred: LabelMap, gt: LabelMap, spacing: Spacing | None = None) -> tuple[MetricRow, ...]:
    """One (DSC, HD) row per foreground class of a FourClass pair."""
    if pred.scheme is not FOUR_CLASS or gt.scheme is not FOUR_CLASS:
        raise ValueError("evaluate expects FourClass label maps")
    spacing = spacing or gt.spacing
    rows = []
    for tissue in FOREGROUND_CLASSES:
        cid = FOUR_CLASS.id_of(tissue)
        rows.append(MetricRow(
            subject_id=gt.subject_id,
            phase=gt.phase.value,
            tissue=tissue,
            dsc=dice(pred, gt, cid),
            hd_mm=hausdorff(pred, gt, cid, spacing),
        ))
    return tuple(rows)


def aggregate(rows) -> dict[str, dict[str, float]]:
    """Arithmetic per-class means over a cohort (ED and ES rows pooled)."""
    rows = tuple(rows)
    if not rows:
        raise ValueError("cannot aggregate an empty cohort")
    out: dict[str, dict[str, float]] = {}
    for tissue in FOREGROUND_CLASSES:
        sub = [r for r in rows if r.tissue == tissue]
        if sub:
            out[tissue] = {
                "dsc": float(np.mean([r.dsc for r in sub])),
                "hd_mm": float(np.mean([r.hd_mm for r in sub])),
            }
    return out
