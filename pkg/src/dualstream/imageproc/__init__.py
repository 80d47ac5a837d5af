"""Preprocessing chain, augmentation ops and image I/O."""
from .augment import KINDS, AugmentConfig, augment_dataset, class_quotas, item_rng, random_hflip
from .io import IMAGE_SUFFIXES, load_manifest_samples, read_image, read_manifest, write_manifest, write_png
from .transforms import (
    RESIZE_CONVENTION,
    NormalizationStats,
    PreprocessConfig,
    brightness_contrast,
    clahe,
    clipped_equalization_lut,
    compute_normalization_stats,
    hflip,
    nl_means_denoise,
    normalize,
    preprocess,
    resize_bilinear,
    rotate,
    upsample_bilinear,
)
