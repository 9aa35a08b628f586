"""Compile annotated vision-language datasets into interleaved in-context corpora."""

from .core import (
    CropRect,
    ImageAssetSpec,
    InterleavedInstance,
    Segment,
    SourceRecord,
    TemplateBank,
    deserialize,
    serialize,
    validate,
)
from .declaration import DeclarationStyle, allocate_proxies, declare_images, declare_segments
from .errors import InvariantViolation, ManifestError, MicError, ParseError
from .icl import Exemplar, assemble_instance, choose_template, fill_template, sample_exemplars
from .ingest import DatasetDescriptor, IngestReport, ingest
from .interconnect import crop_entities, select_frames, substitute_references
from .layout import LayoutReport, check_alignment, simulate_layout
from .manifest import PipelineManifest, load_manifest
from .mixer import MixPlan, budget_from_fraction, compute_weights, sample_stream
from .pipeline import build
from .templates import default_banks

__version__ = "0.1.0"

__all__ = [
    "CropRect", "DatasetDescriptor", "DeclarationStyle", "Exemplar", "ImageAssetSpec", "IngestReport",
    "InterleavedInstance", "InvariantViolation", "LayoutReport", "ManifestError", "MicError", "MixPlan",
    "ParseError", "PipelineManifest", "Segment", "SourceRecord", "TemplateBank", "allocate_proxies",
    "assemble_instance", "budget_from_fraction", "build", "check_alignment", "choose_template",
    "compute_weights", "crop_entities", "declare_images", "declare_segments", "default_banks",
    "deserialize", "fill_template", "ingest", "load_manifest", "sample_exemplars", "sample_stream",
    "select_frames", "serialize", "simulate_layout", "substitute_references", "validate",
]
