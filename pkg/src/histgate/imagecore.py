"""Core image, mask, histogram, and dataset types shared by the whole pipeline.

Images are 2-D grayscale arrays normalized to [0, 1] (8-bit PNG on disk), masks
are {0, 1} label maps, and dataset splits are declared by JSON manifests so a
training set can be rewritten (for example after gating) without moving any
pixel files. Everything here is immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

N_BINS = 256
MIN_SIDE = 8
ROLES = ("source-train", "source-test", "target-train", "target-test")

__all__ = [
    "N_BINS",
    "ROLES",
    "ImageFormatError",
    "GrayImage",
    "BinaryMask",
    "Histogram",
    "DatasetSplit",
    "bin_indices",
    "compute_histogram",
    "mean_histogram",
    "load_image",
    "save_image",
    "load_mask",
    "save_mask",
    "save_split",
    "load_split",
    "read_manifest",
    "write_manifest",
    "concat_splits",
]


class ImageFormatError(ValueError):
    """Input file is not the 8-bit single-channel PNG this pipeline expects."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """A grayscale image with intensities in [0, 1], at least 8x8 pixels."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError(f"expected a 2-D pixel array, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(
                f"image must be at least {MIN_SIDE}x{MIN_SIDE} pixels, got {px.shape}"
            )
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel {0, 1} labels; 1 marks a metal line."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError(f"expected a 2-D label array, got shape {lab.shape}")
        if not np.isin(lab, (0, 1)).all():
            raise ValueError("mask labels must be exactly 0 or 1")
        lab = lab.astype(np.uint8)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def foreground_fraction(self) -> float:
        return float(self.labels.mean())


@dataclass(frozen=True, eq=False)
class Histogram:
    """256-bin normalized intensity distribution.

    Bin b aggregates intensities in [b/256, (b+1)/256); the last bin is closed
    above so an intensity of exactly 1.0 lands in bin 255.
    """

    bins: np.ndarray
    pixel_count: int

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        if bins.shape != (N_BINS,):
            raise ValueError(f"expected {N_BINS} bins, got shape {bins.shape}")
        if bins.min() < 0.0:
            raise ValueError("histogram bins must be non-negative")
        if abs(bins.sum() - 1.0) > 1e-9:
            raise ValueError("histogram bins must sum to 1 within 1e-9")
        if self.pixel_count < 1:
            raise ValueError("pixel_count must be positive")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.bins)


def bin_indices(pixels: np.ndarray) -> np.ndarray:
    """Histogram bin index of each intensity; 1.0 maps into the top bin."""
    idx = (np.asarray(pixels, dtype=np.float64) * N_BINS).astype(np.int64)
    return np.minimum(idx, N_BINS - 1)


def compute_histogram(img: GrayImage | np.ndarray) -> Histogram:
    """Normalized 256-bin intensity histogram of an image or raw pixel array."""
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    counts = np.bincount(bin_indices(px).ravel(), minlength=N_BINS)
    return Histogram(bins=counts / px.size, pixel_count=int(px.size))


def mean_histogram(hists: list[Histogram]) -> Histogram:
    """Per-bin arithmetic mean of histograms, renormalized."""
    if not hists:
        raise ValueError("mean_histogram requires at least one histogram")
    bins = np.stack([h.bins for h in hists]).mean(axis=0)
    return Histogram(bins=bins / bins.sum(), pixel_count=sum(h.pixel_count for h in hists))


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> GrayImage:
    """Load an 8-bit single-channel PNG as intensities in [0, 1] (raw/255)."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise ImageFormatError(
                f"{path}: expected an 8-bit single-channel image, got mode {im.mode!r}"
            )
        raw = np.asarray(im, dtype=np.uint8)
    return GrayImage(raw.astype(np.float64) / 255.0)


def save_image(img: GrayImage, path: str | Path) -> None:
    """Write an image as 8-bit grayscale PNG (nearest-byte quantization)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = np.rint(img.pixels * 255.0).astype(np.uint8)
    Image.fromarray(raw, mode="L").save(path, format="PNG")


def load_mask(path: str | Path) -> BinaryMask:
    """Load a {0, 255}-valued 8-bit PNG as a binary mask."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise ImageFormatError(
                f"{path}: expected an 8-bit single-channel mask, got mode {im.mode!r}"
            )
        raw = np.asarray(im, dtype=np.uint8)
    if not np.isin(raw, (0, 255)).all():
        raise ImageFormatError(f"{path}: mask bytes must be 0 or 255")
    return BinaryMask((raw == 255).astype(np.uint8))


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a mask as 8-bit PNG with 0 -> 0 and 1 -> 255."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.labels * np.uint8(255), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Dataset splits and manifests
# ---------------------------------------------------------------------------

@dataclass
class DatasetSplit:
    """Images with optional aligned masks and stable string identifiers."""

    images: list[GrayImage]
    masks: list[BinaryMask] | None
    ids: list[str]
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if len(self.ids) != len(self.images):
            raise ValueError("ids and images must align index-wise")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique within a split")
        if self.masks is not None:
            if len(self.masks) != len(self.images):
                raise ValueError("masks and images must align index-wise")
            for img, mask, item_id in zip(self.images, self.masks, self.ids):
                if mask.labels.shape != img.pixels.shape:
                    raise ValueError(f"mask/image shape mismatch for id {item_id!r}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def labeled(self) -> bool:
        return self.masks is not None

    def subset(self, indices: list[int]) -> "DatasetSplit":
        """New split containing the given items, in the given order."""
        return DatasetSplit(
            images=[self.images[i] for i in indices],
            masks=None if self.masks is None else [self.masks[i] for i in indices],
            ids=[self.ids[i] for i in indices],
            role=self.role,
        )

    def with_images(self, images: list[GrayImage]) -> "DatasetSplit":
        """Same ids/masks/role with the pixel content replaced (e.g. translated)."""
        if len(images) != len(self.images):
            raise ValueError("replacement images must match the split length")
        return DatasetSplit(images=images, masks=self.masks, ids=list(self.ids), role=self.role)


def concat_splits(a: DatasetSplit, b: DatasetSplit) -> DatasetSplit:
    """Concatenate two splits of the same role; ids must stay unique."""
    if a.role != b.role:
        raise ValueError(f"cannot concatenate roles {a.role!r} and {b.role!r}")
    if (a.masks is None) != (b.masks is None):
        raise ValueError("cannot concatenate a labeled split with an unlabeled one")
    return DatasetSplit(
        images=a.images + b.images,
        masks=None if a.masks is None else a.masks + b.masks,
        ids=a.ids + b.ids,
        role=a.role,
    )


def write_manifest(path: str | Path, role: str, items: list[dict]) -> Path:
    """Write a manifest JSON; item paths are relative to the manifest's directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"role": role, "items": items}
    path.write_text(json.dumps(payload, indent=2))
    return path


def read_manifest(path: str | Path) -> tuple[str, list[dict]]:
    """Read a manifest; returns (role, items) with paths resolved to absolute."""
    path = Path(path)
    payload = json.loads(path.read_text())
    role, items = payload["role"], payload["items"]
    resolved = []
    for item in items:
        resolved.append(
            {
                "id": item["id"],
                "image": str((path.parent / item["image"]).resolve()),
                "mask": None if item.get("mask") is None else str((path.parent / item["mask"]).resolve()),
            }
        )
    return role, resolved


def save_split(
    split: DatasetSplit,
    out_dir: str | Path,
    manifest_name: str = "manifest.json",
    masks_in_manifest: bool = True,
) -> Path:
    """Write images (and masks, when present) as PNGs plus a manifest.

    With masks_in_manifest=False the mask files are still written but the
    manifest declares them null, which is how unlabeled target training data
    is presented to the pipeline while keeping ground truth around for
    evaluation-only use.
    """
    out_dir = Path(out_dir)
    items = []
    for i, (img, item_id) in enumerate(zip(split.images, split.ids)):
        image_rel = f"images/{item_id}.png"
        save_image(img, out_dir / image_rel)
        mask_rel = None
        if split.masks is not None:
            mask_rel = f"masks/{item_id}.png"
            save_mask(split.masks[i], out_dir / mask_rel)
        items.append(
            {
                "id": item_id,
                "image": image_rel,
                "mask": mask_rel if masks_in_manifest else None,
            }
        )
    return write_manifest(out_dir / manifest_name, split.role, items)


def load_split(manifest_path: str | Path) -> DatasetSplit:
    """Load a split from a manifest; masks must be declared for all items or none."""
    role, items = read_manifest(manifest_path)
    images = [load_image(item["image"]) for item in items]
    ids = [item["id"] for item in items]
    mask_paths = [item["mask"] for item in items]
    if all(p is None for p in mask_paths):
        masks = None
    elif any(p is None for p in mask_paths):
        raise ValueError(f"{manifest_path}: manifest mixes masked and unmasked items")
    else:
        masks = [load_mask(p) for p in mask_paths]
    return DatasetSplit(images=images, masks=masks, ids=ids, role=role)
