"""Domain types shared by every stage: spacings, volumes, label maps, schemes."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np


class Phase(str, Enum):
    ED = "ED"
    ES = "ES"
    NONE = "none"


@dataclass(frozen=True)
class Spacing:
    """Physical voxel spacing in millimeters, (row, col) in-plane plus slice pitch."""

    row_mm: float
    col_mm: float
    slice_mm: float

    # target in-plane resolution every dataset is resampled to
    TARGET_INPLANE_MM = 1.3

    def __post_init__(self):
        for name in ("row_mm", "col_mm", "slice_mm"):
            v = getattr(self, name)
            if not (v > 0):
                raise ValueError(f"spacing {name} must be positive, got {v}")

    def inplane(self) -> tuple[float, float]:
        return (self.row_mm, self.col_mm)


@dataclass(frozen=True)
class SchemeClass:
    id: int
    tissue: str


class SchemeName(str, Enum):
    FOUR_CLASS = "FourClass"
    EIGHT_CLASS = "EightClass"


@dataclass(frozen=True)
class LabelScheme:
    """Ordered tissue-class table; ids are contiguous from 0."""

    name: SchemeName
    classes: tuple[SchemeClass, ...]

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ValueError(f"class ids must be contiguous from 0, got {ids}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def tissue_of(self, class_id: int) -> str:
        return self.classes[class_id].tissue

    def id_of(self, tissue: str) -> int:
        for c in self.classes:
            if c.tissue == tissue:
                return c.id
        raise KeyError(f"tissue {tissue!r} not in scheme {self.name.value}")

    def __contains__(self, tissue: str) -> bool:
        return any(c.tissue == tissue for c in self.classes)


FOUR_CLASS = LabelScheme(
    SchemeName.FOUR_CLASS,
    (
        SchemeClass(0, "background"),
        SchemeClass(1, "RV"),
        SchemeClass(2, "MYO"),
        SchemeClass(3, "LV"),
    ),
)

# Heart classes occupy the top ids so the 8-to-4 projection is a fixed table.
EIGHT_CLASS = LabelScheme(
    SchemeName.EIGHT_CLASS,
    (
        SchemeClass(0, "background"),
        SchemeClass(1, "body tissue"),
        SchemeClass(2, "lung"),
        SchemeClass(3, "liver"),
        SchemeClass(4, "abdominal organ"),
        SchemeClass(5, "RV"),
        SchemeClass(6, "MYO"),
        SchemeClass(7, "LV"),
    ),
)

SCHEMES = {SchemeName.FOUR_CLASS: FOUR_CLASS, SchemeName.EIGHT_CLASS: EIGHT_CLASS}

HEART_TISSUES = ("RV", "MYO", "LV")


def scheme_by_name(name: str | SchemeName) -> LabelScheme:
    return SCHEMES[SchemeName(name)]


def to_scheme_code(tissue_name: str, scheme: LabelScheme) -> int:
    """Integer class id of a tissue under a scheme; KeyError if absent."""
    return scheme.id_of(tissue_name)


@dataclass(frozen=True)
class Volume:
    """3D scalar image, indexed (slice, row, col), with physical spacing."""

    voxels: np.ndarray
    spacing: Spacing
    phase: Phase = Phase.NONE
    subject_id: str = ""
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {v.shape}")
        if min(v.shape) < 1:
            raise ValueError(f"every axis must have size >= 1, got {v.shape}")
        object.__setattr__(self, "voxels", v)
        if self.normalized and v.size:
            lo, hi = float(v.min()), float(v.max())
            if lo < -1.0 - 1e-9 or hi > 1.0 + 1e-9:
                raise ValueError(
                    f"normalized volume has values outside [-1, 1]: [{lo}, {hi}]"
                )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def with_voxels(self, voxels: np.ndarray, *, normalized: bool | None = None) -> "Volume":
        return replace(
            self,
            voxels=voxels,
            normalized=self.normalized if normalized is None else normalized,
        )


@dataclass(frozen=True)
class LabelMap:
    """3D integer class map under a declared scheme."""

    labels: np.ndarray
    scheme: LabelScheme
    spacing: Spacing
    phase: Phase = Phase.NONE
    subject_id: str = ""

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 3:
            raise ValueError(f"label map must be 3D, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ValueError(f"label map must have integer dtype, got {lab.dtype}")
        if lab.size:
            lo, hi = int(lab.min()), int(lab.max())
            if lo < 0 or hi >= self.scheme.num_classes:
                raise ValueError(
                    f"label ids [{lo}, {hi}] outside scheme "
                    f"{self.scheme.name.value} (0..{self.scheme.num_classes - 1})"
                )
        object.__setattr__(self, "labels", lab)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape

    def with_labels(self, labels: np.ndarray, scheme: LabelScheme | None = None) -> "LabelMap":
        return replace(self, labels=labels, scheme=scheme or self.scheme)

    def class_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}
