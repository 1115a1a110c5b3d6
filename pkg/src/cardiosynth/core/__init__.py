from .types import (
    EIGHT_CLASS,
    FOUR_CLASS,
    HEART_TISSUES,
    LabelMap,
    LabelScheme,
    Phase,
    SchemeName,
    Spacing,
    Volume,
    scheme_by_name,
    to_scheme_code,
)
from .manifest import (
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    Role,
    load_manifest,
    manifest_from_dict,
    manifest_to_dict,
    save_manifest,
)
from .config import (
    AugmentConfig,
    Conditioning,
    GanTrainConfig,
    NetworkKind,
    NormKind,
    Profile,
    SegTrainConfig,
    config_from_dict,
    config_to_dict,
    get_profile,
    load_config,
    net1_defaults,
    net3_defaults,
    no_augmentation,
    save_config,
)
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    deserialize_arrays,
    digest_of,
    load_checkpoint,
    save_checkpoint,
    serialize_arrays,
)
from . import nifti

__all__ = [name for name in dir() if not name.startswith("_")]
