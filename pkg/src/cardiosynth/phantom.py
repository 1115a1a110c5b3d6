"""Procedural torso/heart label-map generator and analytical MR contrast model.

Geometry is a deliberate cartoon built from ellipsoids in physical (mm)
coordinates, so the same parameters rasterize consistently at any grid
resolution: an elliptical body, two lateral lung lobes, a right-side liver
blob, an abdominal organ below the heart, and a nested short-axis heart
(LV blood pool inside a closed myocardial ring, RV crescent hugging it).
Slice position tapers the ventricles from base to apex. The ES phase
shrinks the blood pools and thickens the ring.

The contrast model is per-tissue constant signal plus a smooth polynomial
bias field plus noise (Gaussian by default, Rician behind a flag),
min-max normalized to [-1, 1].
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import EIGHT_CLASS, LabelMap, Phase, Spacing, Volume

# EightClass ids
BG, BODY, LUNG, LIVER, ABDOMINAL, RV, MYO, LV = range(8)

# systolic contraction: blood-pool radius factor and wall thickening factor
ES_POOL_FACTOR = 0.68
ES_WALL_FACTOR = 1.35


@dataclass(frozen=True)
class PhantomParams:
    heart_scale: float = 1.0
    heart_center_offset: tuple[float, float] = (6.0, -8.0)  # (d_row, d_col) mm
    heart_axis_angle: float = 35.0  # degrees, RV attachment direction
    lv_wall_thickness: float = 9.0  # mm at ED
    body_axes: tuple[float, float] = (85.0, 115.0)  # (row, col) semi-axes mm
    lung_scale: float = 1.0
    liver_scale: float = 1.0
    phase: Phase = Phase.ED
    seed: int = 0

    def __post_init__(self):
        for name in ("heart_scale", "lung_scale", "liver_scale"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        if self.lv_wall_thickness <= 0:
            raise ValueError("lv_wall_thickness must be positive")


#: sampling intervals for each varying field, in the same units as the field
DEFAULT_PARAM_RANGES: dict[str, tuple[float, float]] = {
    "heart_scale": (0.85, 1.2),
    "heart_center_row_mm": (-2.0, 14.0),
    "heart_center_col_mm": (-18.0, 2.0),
    "heart_axis_angle": (20.0, 50.0),
    "lv_wall_thickness": (7.5, 11.0),
    "body_axis_row_mm": (78.0, 92.0),
    "body_axis_col_mm": (105.0, 122.0),
    "lung_scale": (0.85, 1.15),
    "liver_scale": (0.85, 1.15),
}


def sample_params(
    seed: int,
    ranges: dict[str, tuple[float, float]] | None = None,
    phase: Phase = Phase.ED,
) -> PhantomParams:
    """Draw one anatomy from per-field uniform intervals, deterministically."""
    merged = dict(DEFAULT_PARAM_RANGES)
    if ranges:
        unknown = set(ranges) - set(merged)
        if unknown:
            raise ValueError(f"unknown range fields: {sorted(unknown)}")
        merged.update(ranges)
    for name, (lo, hi) in merged.items():
        if hi < lo:
            raise ValueError(f"inverted interval for {name}: [{lo}, {hi}]")
    rng = np.random.Generator(np.random.PCG64(seed))
    draw = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in merged.items()}
    return PhantomParams(
        heart_scale=draw["heart_scale"],
        heart_center_offset=(draw["heart_center_row_mm"], draw["heart_center_col_mm"]),
        heart_axis_angle=draw["heart_axis_angle"],
        lv_wall_thickness=draw["lv_wall_thickness"],
        body_axes=(draw["body_axis_row_mm"], draw["body_axis_col_mm"]),
        lung_scale=draw["lung_scale"],
        liver_scale=draw["liver_scale"],
        phase=phase,
        seed=seed,
    )


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def render_labels(
    params: PhantomParams,
    shape: tuple[int, int, int],
    spacing: Spacing,
    subject_id: str = "",
) -> LabelMap:
    """Rasterize one anatomy to an EightClass label volume.

    Slice 0 is apical, the last slice basal. Organ extents are fractions of
    the slab so every class is present for any shape >= (4, 32, 32) that can
    hold the body ellipse.
    """
    ns, nr, nc = shape
    if ns < 4 or nr < 32 or nc < 32:
        raise ValueError(f"shape {shape} below minimum (4, 32, 32)")
    half_r = (nr - 1) / 2.0 * spacing.row_mm
    half_c = (nc - 1) / 2.0 * spacing.col_mm
    body_ry, body_rx = params.body_axes
    if body_ry > half_r + spacing.row_mm or body_rx > half_c + spacing.col_mm:
        raise ValueError(
            f"field of view ({2 * half_r:.0f}x{2 * half_c:.0f} mm) cannot contain "
            f"body ellipse axes {params.body_axes}"
        )

    # pixel-center coordinates in mm, origin at the image center
    rows = (np.arange(nr) - (nr - 1) / 2.0) * spacing.row_mm
    cols = (np.arange(nc) - (nc - 1) / 2.0) * spacing.col_mm
    yy, xx = np.meshgrid(rows, cols, indexing="ij")

    hs = params.heart_scale
    es = params.phase is Phase.ES
    pool_factor = ES_POOL_FACTOR if es else 1.0
    wall = params.lv_wall_thickness * hs * (ES_WALL_FACTOR if es else 1.0)
    r_lv0 = 16.0 * hs
    r_rv0 = 15.0 * hs
    ang = np.deg2rad(params.heart_axis_angle)
    rv_dir = np.array([-np.sin(ang), -np.cos(ang)])  # (d_row, d_col) unit

    z_half = max(ns * spacing.slice_mm / 2.0, 1e-6)
    labels = np.zeros(shape, dtype=np.uint8)
    for s in range(ns):
        z = (s - (ns - 1) / 2.0) * spacing.slice_mm
        zn = z / z_half  # -1 apical .. +1 basal
        sl = np.zeros((nr, nc), dtype=np.uint8)

        sl[_ellipse(yy, xx, 0.0, 0.0, body_ry, body_rx)] = BODY

        lung_ry = 42.0 * params.lung_scale
        lung_rx = 30.0 * params.lung_scale
        lz = np.sqrt(max(0.0, 1.0 - (zn / 1.25) ** 2))
        for sx in (-1.0, 1.0):
            m = _ellipse(yy, xx, -14.0, sx * 58.0, lung_ry * lz, lung_rx * lz)
            sl[m & (sl == BODY)] = LUNG

        # abdominal organ occupies the caudal (apical) half of the slab
        az = np.sqrt(max(0.0, 1.0 - ((zn + 0.5) / 0.85) ** 2))
        if az > 0:
            m = _ellipse(yy, xx, 40.0, -24.0, 20.0 * az, 28.0 * az)
            sl[m & (sl == BODY)] = ABDOMINAL

        lvz = np.sqrt(max(0.0, 1.0 - ((zn + 0.45) / 0.9) ** 2)) * params.liver_scale
        if lvz > 0:
            m = _ellipse(yy, xx, 30.0, 52.0, 26.0 * lvz, 34.0 * lvz)
            sl[m & ((sl == BODY) | (sl == ABDOMINAL))] = LIVER

        # ventricles taper toward the apex (slice 0)
        apex_frac = (1.0 - zn) / 2.0  # 0 at base .. 1 at apex
        taper = np.sqrt(max(0.0, 1.0 - 0.72 * apex_frac**2))
        r_lv = r_lv0 * taper * pool_factor
        r_rv = r_rv0 * taper * pool_factor
        cy = params.heart_center_offset[0] + 4.0 * zn
        cx = params.heart_center_offset[1] - 3.0 * zn
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        pool = d2 <= r_lv**2
        ring = (d2 <= (r_lv + wall) ** 2) & ~pool
        rv_c = np.array([cy, cx]) + rv_dir * (r_lv + wall + r_rv * 0.55)
        rv_mask = ((yy - rv_c[0]) ** 2 + (xx - rv_c[1]) ** 2 <= r_rv**2)
        sl[rv_mask & ~pool & ~ring] = RV
        sl[ring] = MYO
        sl[pool] = LV
        labels[s] = sl

    return LabelMap(labels=labels, scheme=EIGHT_CLASS, spacing=spacing,
                    phase=params.phase, subject_id=subject_id)


@dataclass(frozen=True)
class TissueSignalTable:
    """Per-tissue mean signal in (0, 1] plus noise/bias magnitudes.

    Means follow the bright-blood cine ordering: blood pools brightest,
    myocardium mid-gray, lung close to air.
    """

    means: tuple[float, ...] = (0.05, 0.62, 0.15, 0.55, 0.48, 0.88, 0.42, 0.95)
    spreads: tuple[float, ...] = (0.0,) * 8
    noise_sigma: float = 0.03
    bias_field_amplitude: float = 0.12
    rician: bool = False

    def __post_init__(self):
        if any(not (0 < m <= 1) for m in self.means):
            raise ValueError("tissue means must lie in (0, 1]")
        if any(s < 0 for s in self.spreads):
            raise ValueError("signal spreads must be >= 0")
        if self.noise_sigma < 0 or self.bias_field_amplitude < 0:
            raise ValueError("noise_sigma and bias_field_amplitude must be >= 0")
        if not (self.means[LV] > self.means[MYO] and self.means[RV] > self.means[MYO]
                and self.means[MYO] > self.means[LUNG]):
            raise ValueError("contrast ordering violated: need blood > MYO > lung")


def jittered_table(base: TissueSignalTable, seed: int, rel: float = 0.1) -> TissueSignalTable:
    """Per-subject appearance variation: multiply each tissue mean by U[1-rel, 1+rel].

    Background and the LV/RV/MYO/lung ordering margins are preserved so the
    jittered table still satisfies the contrast invariant.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    means = list(base.means)
    for t in (BODY, LUNG, LIVER, ABDOMINAL, RV, MYO, LV):
        means[t] = float(np.clip(means[t] * rng.uniform(1 - rel, 1 + rel), 1e-3, 1.0))
    # restore ordering if the jitter crossed a margin
    means[MYO] = min(means[MYO], 0.92 * means[RV], 0.92 * means[LV])
    means[LUNG] = min(means[LUNG], 0.8 * means[MYO])
    return replace(base, means=tuple(means))


def _bias_field(shape, spacing, amplitude, rng) -> np.ndarray:
    """Smooth low-order polynomial in normalized coordinates, zero mean-ish."""
    ns, nr, nc = shape
    zz = np.linspace(-1, 1, ns)[:, None, None]
    yy = np.linspace(-1, 1, nr)[None, :, None]
    xx = np.linspace(-1, 1, nc)[None, None, :]
    c = rng.uniform(-1, 1, size=6)
    f = (c[0] * yy + c[1] * xx + c[2] * zz
         + c[3] * yy * xx + c[4] * (yy**2 - 1 / 3) + c[5] * (xx**2 - 1 / 3))
    return amplitude * f


def simulate_contrast(labels: LabelMap, table: TissueSignalTable, seed: int) -> Volume:
    """Tissue means + bias field + noise, min-max normalized to [-1, 1]."""
    if labels.scheme is not EIGHT_CLASS:
        raise ValueError("simulate_contrast expects EightClass labels")
    present = np.unique(labels.labels)
    if present.max() >= len(table.means):
        raise ValueError(f"signal table missing tissue id {int(present.max())}")
    rng = np.random.Generator(np.random.PCG64(seed))
    means = np.asarray(table.means, dtype=np.float64)
    spreads = np.asarray(table.spreads, dtype=np.float64)
    img = means[labels.labels]
    if spreads.any():
        img = img + spreads[labels.labels] * rng.standard_normal(labels.shape)
    img = img + _bias_field(labels.shape, labels.spacing, table.bias_field_amplitude, rng)
    if table.noise_sigma > 0:
        if table.rician:
            n1 = rng.normal(0, table.noise_sigma, labels.shape)
            n2 = rng.normal(0, table.noise_sigma, labels.shape)
            img = np.sqrt((img + n1) ** 2 + n2**2)
        else:
            img = img + rng.normal(0, table.noise_sigma, labels.shape)
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = 2.0 * (img - lo) / (hi - lo) - 1.0
    else:
        warnings.warn("constant simulated image; returning zeros")
        img = np.zeros_like(img)
    return Volume(voxels=img.astype(np.float32), spacing=labels.spacing,
                  phase=labels.phase, subject_id=labels.subject_id, normalized=True)
