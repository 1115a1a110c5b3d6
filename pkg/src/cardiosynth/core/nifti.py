"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Covers exactly what this project stores on disk: 3D scalar volumes and
integer label maps with per-axis spacing and a short free-text metadata
field. Arrays are indexed (slice, row, col); on disk that maps to the
NIfTI convention dim = (cols, rows, slices) with the column index varying
fastest, so a C-order (slice, row, col) buffer is already in file order.
"""
from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .types import LabelMap, LabelScheme, Phase, Spacing, Volume, scheme_by_name

HDR_SIZE = 348
VOX_OFFSET = 352.0
MAGIC = b"n+1\x00"

# NIfTI-1 datatype codes
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}
_INT_CODES = {2, 4, 8}


def _pack_header(shape: tuple[int, int, int], spacing: Spacing, dtype: np.dtype,
                 descrip: str) -> bytes:
    ns, nr, nc = shape
    hdr = bytearray(HDR_SIZE)
    struct.pack_into("<i", hdr, 0, HDR_SIZE)                  # sizeof_hdr
    struct.pack_into("<8h", hdr, 40, 3, nc, nr, ns, 1, 1, 1, 1)  # dim
    struct.pack_into("<h", hdr, 70, _CODES[np.dtype(dtype)])  # datatype
    struct.pack_into("<h", hdr, 72, np.dtype(dtype).itemsize * 8)  # bitpix
    struct.pack_into(
        "<8f", hdr, 76, 1.0, spacing.col_mm, spacing.row_mm, spacing.slice_mm,
        1.0, 1.0, 1.0, 1.0,
    )  # pixdim
    struct.pack_into("<f", hdr, 108, VOX_OFFSET)              # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)                     # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)                     # scl_inter
    raw = descrip.encode("utf-8")[:79]
    hdr[148:148 + len(raw)] = raw                             # descrip
    struct.pack_into("<h", hdr, 252, 0)                       # qform_code
    struct.pack_into("<h", hdr, 254, 1)                       # sform_code
    # diagonal sform: world axes aligned with (col, row, slice)
    struct.pack_into("<4f", hdr, 280, spacing.col_mm, 0, 0, 0)
    struct.pack_into("<4f", hdr, 296, 0, spacing.row_mm, 0, 0)
    struct.pack_into("<4f", hdr, 312, 0, 0, spacing.slice_mm, 0)
    hdr[344:348] = MAGIC
    return bytes(hdr)


def _write(path: Path, payload: bytes) -> None:
    if path.name.endswith(".gz"):
        # fixed mtime so identical volumes produce identical bytes
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)


def _read(path: Path) -> bytes:
    data = path.read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _descrip(phase: Phase, subject_id: str, normalized: bool = False) -> str:
    tag = f"subject={subject_id};phase={phase.value}"
    if normalized:
        tag += ";normalized=1"
    return tag


def _parse_descrip(raw: bytes) -> tuple[str, Phase, bool]:
    text = raw.split(b"\x00", 1)[0].decode("utf-8", "replace")
    subject, phase, normalized = "", Phase.NONE, False
    for part in text.split(";"):
        if part.startswith("subject="):
            subject = part[len("subject="):]
        elif part.startswith("phase="):
            try:
                phase = Phase(part[len("phase="):])
            except ValueError:
                phase = Phase.NONE
        elif part == "normalized=1":
            normalized = True
    return subject, phase, normalized


def _decode(data: bytes, path: Path) -> tuple[np.ndarray, Spacing, str, Phase, bool, int]:
    if len(data) < HDR_SIZE:
        raise ValueError(f"{path}: truncated NIfTI header")
    (sizeof_hdr,) = struct.unpack_from("<i", data, 0)
    if sizeof_hdr != HDR_SIZE or data[344:347] != MAGIC[:3]:
        raise ValueError(f"{path}: not a NIfTI-1 single file")
    dim = struct.unpack_from("<8h", data, 40)
    if dim[0] not in (2, 3):
        raise ValueError(f"{path}: only 2D/3D volumes supported, ndim={dim[0]}")
    nc, nr, ns = dim[1], dim[2], (dim[3] if dim[0] == 3 else 1)
    (dtcode,) = struct.unpack_from("<h", data, 70)
    if dtcode not in _DTYPES:
        raise ValueError(f"{path}: unsupported NIfTI datatype code {dtcode}")
    pixdim = struct.unpack_from("<8f", data, 76)
    (vox_offset,) = struct.unpack_from("<f", data, 108)
    offset = int(vox_offset) or int(VOX_OFFSET)
    dtype = np.dtype(_DTYPES[dtcode])
    count = ns * nr * nc
    payload = data[offset:offset + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise ValueError(f"{path}: voxel payload truncated")
    arr = np.frombuffer(payload, dtype=dtype).reshape(ns, nr, nc)
    spacing = Spacing(row_mm=float(pixdim[2]), col_mm=float(pixdim[1]),
                      slice_mm=float(pixdim[3]) if pixdim[3] > 0 else 1.0)
    subject, phase, normalized = _parse_descrip(data[148:228])
    return arr, spacing, subject, phase, normalized, dtcode


def save_volume(vol: Volume, path: str | Path) -> None:
    path = Path(path)
    vox = np.ascontiguousarray(vol.voxels, dtype=np.float32)
    hdr = _pack_header(vox.shape, vol.spacing, vox.dtype,
                       _descrip(vol.phase, vol.subject_id, vol.normalized))
    _write(path, hdr + b"\x00" * 4 + vox.tobytes(order="C"))


def load_volume(path: str | Path) -> Volume:
    path = Path(path)
    arr, spacing, subject, phase, normalized, _ = _decode(_read(path), path)
    return Volume(voxels=arr.astype(np.float32), spacing=spacing, phase=phase,
                  subject_id=subject, normalized=normalized)


def save_labelmap(lab: LabelMap, path: str | Path) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(lab.labels, dtype=np.uint8)
    descrip = _descrip(lab.phase, lab.subject_id) + f";scheme={lab.scheme.name.value}"
    hdr = _pack_header(arr.shape, lab.spacing, arr.dtype, descrip)
    _write(path, hdr + b"\x00" * 4 + arr.tobytes(order="C"))


def load_labelmap(path: str | Path, scheme: LabelScheme | None = None) -> LabelMap:
    path = Path(path)
    data = _read(path)
    arr, spacing, subject, phase, _, dtcode = _decode(data, path)
    if dtcode not in _INT_CODES:
        raise ValueError(f"{path}: label maps must use an integer datatype")
    if scheme is None:
        text = data[148:228].split(b"\x00", 1)[0].decode("utf-8", "replace")
        for part in text.split(";"):
            if part.startswith("scheme="):
                scheme = scheme_by_name(part[len("scheme="):])
        if scheme is None:
            raise ValueError(f"{path}: no scheme tag in header; pass one explicitly")
    return LabelMap(labels=arr.astype(np.uint8), scheme=scheme, spacing=spacing,
                    phase=phase, subject_id=subject)
