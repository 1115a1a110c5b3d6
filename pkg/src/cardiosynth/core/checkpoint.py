"""Checkpoint container: digest-verified parameter blob plus config snapshot.

File layout:  magic | u32 header length | header JSON (utf-8) | blob bytes.
The header stores the sha256 of the blob; load() refuses anything that does
not hash back to it. The blob itself is produced by `serialize_arrays`, a
deterministic name/dtype/shape/raw-bytes encoding, so identical parameters
always give identical files (torch's pickle container does not promise that).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import NetworkKind, config_from_dict, config_to_dict

MAGIC = b"CSCKPT01"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def serialize_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    """Deterministic byte encoding of a name->array mapping (sorted by name)."""
    out = bytearray()
    out += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        nb = name.encode("utf-8")
        dt = arr.dtype.str.encode("ascii")  # e.g. b"<f4"
        out += struct.pack("<I", len(nb)) + nb
        out += struct.pack("<I", len(dt)) + dt
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}q", *arr.shape)
        raw = arr.tobytes(order="C")
        out += struct.pack("<Q", len(raw)) + raw
    return bytes(out)


def deserialize_arrays(blob: bytes) -> dict[str, np.ndarray]:
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (count,) = take("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = blob[off:off + nlen].decode("utf-8"); off += nlen
        (dlen,) = take("<I")
        dt = np.dtype(blob[off:off + dlen].decode("ascii")); off += dlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}q") if ndim else ()
        (nbytes,) = take("<Q")
        arrays[name] = np.frombuffer(blob[off:off + nbytes], dtype=dt).reshape(shape).copy()
        off += nbytes
    return arrays


def digest_of(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Checkpoint:
    network_kind: NetworkKind
    blob: bytes
    config: object
    epoch: int
    history: tuple[dict, ...] = ()

    @property
    def digest(self) -> str:
        return digest_of(self.blob)

    def arrays(self) -> dict[str, np.ndarray]:
        return deserialize_arrays(self.blob)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "network_kind": ckpt.network_kind.value,
        "epoch": ckpt.epoch,
        "digest": ckpt.digest,
        "config": config_to_dict(ckpt.config),
        "history": list(ckpt.history),
    }
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hjson)))
        fh.write(hjson)
        fh.write(ckpt.blob)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unknown checkpoint version {header.get('version')!r}")
    blob = data[off + hlen:]
    if digest_of(blob) != header["digest"]:
        raise CheckpointError(f"{path}: digest mismatch, file corrupt or truncated")
    return Checkpoint(
        network_kind=NetworkKind(header["network_kind"]),
        blob=blob,
        config=config_from_dict(header["config"]),
        epoch=int(header["epoch"]),
        history=tuple(header["history"]),
    )
