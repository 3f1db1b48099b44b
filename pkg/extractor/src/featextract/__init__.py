"""Per-frame feature-grid dumps from pretrained image backbones."""

from featextract.backbone import LAYER_CHANNELS, BackboneError, build_backbone
from featextract.pipeline import (
    ExtractConfig,
    ExtractionError,
    extract_sequence,
    write_manifest,
)

__version__ = "0.1.0"
