"""Domain adaptation toolkit for circuit-style binary segmentation.

Submodules:
  imagecore  core image/mask/histogram/dataset types and manifest I/O
  synthgen   deterministic circuit-style dataset generator
  translate  translation backends (cyclegan, hist-match, fda)
  curation   KS-based histogram gating of translated sets
  segmodel   small U-Net segmenter (torch)
  metrics    confusion counts, SA / IoU, aggregation tables
  harness    scenario matrix runner with reports and figures
  plots      matplotlib figure output
"""

__version__ = "0.1.0"

from .imagecore import (
    BinaryMask,
    DatasetSplit,
    GrayImage,
    Histogram,
    compute_histogram,
    load_image,
    load_split,
    mean_histogram,
    save_mask,
    save_split,
)
from .metrics import ConfusionCounts, RunResult, aggregate, confusion, iou, segmentation_accuracy

__all__ = [
    "__version__",
    "GrayImage",
    "BinaryMask",
    "Histogram",
    "DatasetSplit",
    "compute_histogram",
    "mean_histogram",
    "load_image",
    "save_mask",
    "save_split",
    "load_split",
    "ConfusionCounts",
    "RunResult",
    "confusion",
    "segmentation_accuracy",
    "iou",
    "aggregate",
]
