"""Frozen vision-backbone feature extraction into the evaluation toolkit's corpus format."""

__version__ = "0.1.0"

from .backbones import BackboneSpec, WeightFetchError, load_backbone  # noqa: F401
from .extract import ExtractionResult, extract, preprocess_for_backbone, read_metadata  # noqa: F401
