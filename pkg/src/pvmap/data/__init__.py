"""Raster/annotation ingestion, ground-truth rasterization, patch extraction,
and synthetic scene generation."""

from .archive import read_patches, write_patches
from .geometry import rasterize, validate_polygons
from .rasters import (
    Manifest,
    compute_manifest,
    load_annotations,
    load_mask,
    load_raster,
    load_split_file,
    raster_dims,
    save_annotations,
    save_mask,
    save_raster,
)
from .sampling import (
    PatchSet,
    concat_patch_sets,
    extract_patches,
    rotate_crop,
    sample_negatives,
    sample_positives,
    split_validation,
)
from .synth import synth_scene

__all__ = [
    "Manifest",
    "PatchSet",
    "compute_manifest",
    "concat_patch_sets",
    "extract_patches",
    "load_annotations",
    "load_mask",
    "load_raster",
    "load_split_file",
    "raster_dims",
    "rasterize",
    "read_patches",
    "rotate_crop",
    "sample_negatives",
    "sample_positives",
    "save_annotations",
    "save_mask",
    "save_raster",
    "split_validation",
    "synth_scene",
    "validate_polygons",
    "write_patches",
]
