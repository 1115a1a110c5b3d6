"""Dataset manifests: JSON files listing volume/label pairs and their role.

Schema (version 1):
    {
      "schema_version": 1,
      "entries": [
        {
          "volume_path": "path/to/image.nii.gz",
          "labelmap_path": "path/to/labels.nii.gz",   # optional for style_only
          "scheme": "FourClass" | "EightClass",
          "role": "train_net1" | "train_gan" | "style_only"
                  | "train_net3" | "test_net3",
          "source_tag": "free-form dataset tag"
        },
        ...
      ]
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .types import SchemeName

SCHEMA_VERSION = 1


class Role(str, Enum):
    TRAIN_NET1 = "train_net1"
    TRAIN_GAN = "train_gan"
    STYLE_ONLY = "style_only"
    TRAIN_NET3 = "train_net3"
    TEST_NET3 = "test_net3"


LABELED_ROLES = frozenset(
    {Role.TRAIN_NET1, Role.TRAIN_GAN, Role.TRAIN_NET3, Role.TEST_NET3}
)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    volume_path: str
    role: Role
    scheme: SchemeName
    labelmap_path: str | None = None
    source_tag: str = ""

    def __post_init__(self):
        if self.role in LABELED_ROLES and not self.labelmap_path:
            raise ManifestError(
                f"labeled role {self.role.value} missing labels for {self.volume_path}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...] = ()

    def with_role(self, role: Role) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.role == role)

    def source_tags(self) -> tuple[str, ...]:
        seen: list[str] = []
        for e in self.entries:
            if e.source_tag not in seen:
                seen.append(e.source_tag)
        return tuple(seen)

    def __len__(self) -> int:
        return len(self.entries)


def _entry_from_dict(d: dict) -> ManifestEntry:
    try:
        role = Role(d["role"])
    except ValueError:
        raise ManifestError(f"unknown role {d.get('role')!r}")
    except KeyError:
        raise ManifestError("entry missing 'role'")
    try:
        scheme = SchemeName(d["scheme"])
    except ValueError:
        raise ManifestError(f"unknown scheme {d.get('scheme')!r}")
    except KeyError:
        raise ManifestError("entry missing 'scheme'")
    if "volume_path" not in d:
        raise ManifestError("entry missing 'volume_path'")
    return ManifestEntry(
        volume_path=d["volume_path"],
        role=role,
        scheme=scheme,
        labelmap_path=d.get("labelmap_path"),
        source_tag=d.get("source_tag", ""),
    )


def _entry_to_dict(e: ManifestEntry) -> dict:
    d = {
        "volume_path": e.volume_path,
        "role": e.role.value,
        "scheme": e.scheme.value,
        "source_tag": e.source_tag,
    }
    if e.labelmap_path is not None:
        d["labelmap_path"] = e.labelmap_path
    return d


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest JSON file."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}")
    return manifest_from_dict(raw)


def manifest_from_dict(raw: dict) -> DatasetManifest:
    if not isinstance(raw, dict) or "entries" not in raw:
        raise ManifestError("manifest must be an object with an 'entries' list")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ManifestError(f"unsupported manifest schema_version {version!r}")
    return DatasetManifest(entries=tuple(_entry_from_dict(d) for d in raw["entries"]))


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "entries": [_entry_to_dict(e) for e in manifest.entries],
    }


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n")
