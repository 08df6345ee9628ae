"""Deterministic generator of circuit-style labeled datasets.

Layouts are Manhattan-routed line masks (horizontal/vertical runs with bends,
no curves or vias) and rendering is parameterized by a DomainStyle so that
"devices" with different brightness, contrast, noise, and texture can be
synthesized on demand. Everything is pure given explicit seeds, so repeated
generation is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .curation import ks_statistic
from .imagecore import (
    BinaryMask,
    DatasetSplit,
    GrayImage,
    compute_histogram,
    mean_histogram,
    save_split,
)

__all__ = [
    "LayoutError",
    "DomainStyle",
    "LayoutSpec",
    "DomainPair",
    "SOURCE_STYLE",
    "TARGET_STYLES",
    "generate_layout",
    "render",
    "generate_domain_pair",
    "make_degenerate_translations",
    "style_record",
    "domain_gap_ks",
]


class LayoutError(RuntimeError):
    """A layout could not reach the requested wiring density."""


@dataclass(frozen=True)
class DomainStyle:
    """Parametric rendering style of one synthetic device/layer domain."""

    bg_level: float
    fg_level: float
    noise_sigma: float = 0.0
    blur_radius: float = 0.0
    texture_amp: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.bg_level <= 1.0 and 0.0 <= self.fg_level <= 1.0):
            raise ValueError("intensity levels must lie in [0, 1]")
        if self.fg_level == self.bg_level:
            raise ValueError("fg_level must differ from bg_level")
        if not 0.0 <= self.noise_sigma <= 0.3:
            raise ValueError("noise_sigma must lie in [0, 0.3]")
        if not 0.0 <= self.blur_radius <= 4.0:
            raise ValueError("blur_radius must lie in [0, 4]")
        if not 0.0 <= self.texture_amp <= 0.5:
            raise ValueError("texture_amp must lie in [0, 0.5]")

    @property
    def contrast(self) -> float:
        return abs(self.fg_level - self.bg_level)

    def to_dict(self) -> dict:
        return {
            "bg_level": self.bg_level,
            "fg_level": self.fg_level,
            "noise_sigma": self.noise_sigma,
            "blur_radius": self.blur_radius,
            "texture_amp": self.texture_amp,
            "contrast": self.contrast,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainStyle":
        return cls(
            bg_level=float(d["bg_level"]),
            fg_level=float(d["fg_level"]),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            blur_radius=float(d.get("blur_radius", 0.0)),
            texture_amp=float(d.get("texture_amp", 0.0)),
        )


# Default source look plus three target looks emulating typical device shifts:
# a brighter device, a darker low-contrast one, and a strongly textured one.
SOURCE_STYLE = DomainStyle(bg_level=0.25, fg_level=0.75, noise_sigma=0.03, blur_radius=0.6, texture_amp=0.05)

TARGET_STYLES = {
    "shifted-bright": DomainStyle(bg_level=0.45, fg_level=0.95, noise_sigma=0.04, blur_radius=0.6, texture_amp=0.05),
    "shifted-dark-lowcontrast": DomainStyle(bg_level=0.10, fg_level=0.30, noise_sigma=0.03, blur_radius=0.8, texture_amp=0.05),
    "textured": DomainStyle(bg_level=0.30, fg_level=0.70, noise_sigma=0.03, blur_radius=0.6, texture_amp=0.25),
}


@dataclass(frozen=True)
class LayoutSpec:
    """Geometry of a Manhattan line layout (horizontal/vertical runs with bends)."""

    image_size: int = 128
    line_width_range: tuple[int, int] = (3, 7)
    density: float = 0.30
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 32:
            raise ValueError("image_size must be at least 32")
        lo, hi = self.line_width_range
        if lo < 2 or hi < lo:
            raise ValueError("line widths must satisfy 2 <= min <= max")
        if not 0.05 <= self.density <= 0.6:
            raise ValueError("density must lie in [0.05, 0.6]")


def _draw_wire(rng: np.random.Generator, grid: np.ndarray, spec: LayoutSpec) -> None:
    """Paint one thick Manhattan wire of 2-3 orthogonal segments onto grid."""
    size = spec.image_size
    lo, hi = spec.line_width_range
    width = int(rng.integers(lo, hi + 1))
    half = width // 2
    row = int(rng.integers(0, size))
    col = int(rng.integers(0, size))
    horizontal = bool(rng.integers(2))
    for _ in range(int(rng.integers(2, 4))):
        run = int(rng.integers(size // 4, size // 2 + 1))
        step = run if rng.integers(2) else -run
        if horizontal:
            c2 = int(np.clip(col + step, 0, size - 1))
            r0 = max(row - half, 0)
            grid[r0 : min(r0 + width, size), min(col, c2) : max(col, c2) + 1] = True
            col = c2
        else:
            r2 = int(np.clip(row + step, 0, size - 1))
            c0 = max(col - half, 0)
            grid[min(row, r2) : max(row, r2) + 1, c0 : min(c0 + width, size)] = True
            row = r2
        horizontal = not horizontal


def generate_layout(spec: LayoutSpec, max_wires: int = 500) -> BinaryMask:
    """Grow wires until the foreground fraction reaches spec.density.

    The result overshoots the requested density by at most one wire's area,
    keeping it within +-0.15 of the target.
    """
    rng = np.random.default_rng(spec.seed)
    grid = np.zeros((spec.image_size, spec.image_size), dtype=bool)
    wires = 0
    while grid.mean() < spec.density:
        if wires >= max_wires:
            raise LayoutError(
                f"could not reach density {spec.density} after {max_wires} wires"
            )
        _draw_wire(rng, grid, spec)
        wires += 1
    return BinaryMask(grid.astype(np.uint8))


def _smooth_field(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Low-frequency random field scaled into [-1, 1]."""
    coarse = rng.standard_normal((6, 6))
    field = ndimage.zoom(coarse, (shape[0] / 6.0, shape[1] / 6.0), order=3)
    # zoom can land one pixel off for awkward sizes; trim or pad defensively
    field = field[: shape[0], : shape[1]]
    if field.shape != shape:
        field = np.pad(field, ((0, shape[0] - field.shape[0]), (0, shape[1] - field.shape[1])), mode="edge")
    peak = np.max(np.abs(field))
    return field / peak if peak > 0 else field


def render(mask: BinaryMask, style: DomainStyle, seed: int) -> GrayImage:
    """Render a layout: level map, edge blur, multiplicative texture, noise, clip."""
    rng = np.random.default_rng(seed)
    base = np.where(mask.labels == 1, style.fg_level, style.bg_level).astype(np.float64)
    if style.blur_radius > 0:
        base = ndimage.gaussian_filter(base, sigma=style.blur_radius, mode="nearest")
    if style.texture_amp > 0:
        base = base * (1.0 + style.texture_amp * _smooth_field(rng, base.shape))
    if style.noise_sigma > 0:
        base = base + rng.normal(0.0, style.noise_sigma, size=base.shape)
    return GrayImage(np.clip(base, 0.0, 1.0))


@dataclass
class DomainPair:
    """All four splits of a synthetic source/target domain pair.

    target_train is presented unlabeled; its ground truth masks are retained
    separately for evaluation-only uses such as the supervised upper bound.
    """

    source_train: DatasetSplit
    source_test: DatasetSplit
    target_train: DatasetSplit
    target_test: DatasetSplit
    target_train_masks: list[BinaryMask]
    source_style: DomainStyle
    target_style: DomainStyle
    layout: LayoutSpec


_SPLIT_OFFSETS = {"source-train": 0, "source-test": 1, "target-train": 2, "target-test": 3}


def _make_split(role: str, style: DomainStyle, count: int, spec: LayoutSpec) -> tuple[DatasetSplit, list[BinaryMask]]:
    seeder = np.random.default_rng([spec.seed, _SPLIT_OFFSETS[role]])
    item_seeds = seeder.integers(0, 2**63 - 1, size=(count, 2))
    images, masks, ids = [], [], []
    for i in range(count):
        mask = generate_layout(replace(spec, seed=int(item_seeds[i, 0])))
        images.append(render(mask, style, seed=int(item_seeds[i, 1])))
        masks.append(mask)
        ids.append(f"{i:04d}")
    labeled = role != "target-train"
    split = DatasetSplit(images=images, masks=masks if labeled else None, ids=ids, role=role)
    return split, masks


def style_record(
    source_style: DomainStyle,
    target_style: DomainStyle,
    spec: LayoutSpec,
    n_train: int,
    n_test: int,
) -> dict:
    """The generation recipe persisted as style.json next to the manifests."""
    return {
        "source_style": source_style.to_dict(),
        "target_style": target_style.to_dict(),
        "layout": {
            "image_size": spec.image_size,
            "line_width_range": list(spec.line_width_range),
            "density": spec.density,
            "seed": spec.seed,
        },
        "n_train": n_train,
        "n_test": n_test,
    }


def generate_domain_pair(
    source_style: DomainStyle,
    target_style: DomainStyle,
    n_train: int,
    n_test: int,
    spec: LayoutSpec,
    out_dir: str | Path | None = None,
) -> DomainPair:
    """Generate independent layouts for all four splits and optionally persist them.

    When out_dir is given, each split is written under its role name with a
    manifest; target-train gets a null-mask manifest plus a labeled companion
    (manifest_labeled.json), and a style.json records the generation recipe.
    """
    if n_train <= 0 or n_test <= 0:
        raise ValueError("n_train and n_test must be positive")
    source_train, _ = _make_split("source-train", source_style, n_train, spec)
    source_test, _ = _make_split("source-test", source_style, n_test, spec)
    target_train, tt_masks = _make_split("target-train", target_style, n_train, spec)
    target_test, _ = _make_split("target-test", target_style, n_test, spec)
    pair = DomainPair(
        source_train=source_train,
        source_test=source_test,
        target_train=target_train,
        target_test=target_test,
        target_train_masks=tt_masks,
        source_style=source_style,
        target_style=target_style,
        layout=spec,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        save_split(source_train, out_dir / "source-train")
        save_split(source_test, out_dir / "source-test")
        labeled_target_train = DatasetSplit(
            images=target_train.images, masks=tt_masks, ids=list(target_train.ids), role="target-train"
        )
        save_split(labeled_target_train, out_dir / "target-train", masks_in_manifest=False)
        save_split(labeled_target_train, out_dir / "target-train", manifest_name="manifest_labeled.json")
        save_split(target_test, out_dir / "target-test")
        record = style_record(source_style, target_style, spec, n_train, n_test)
        (out_dir / "style.json").write_text(json.dumps(record, indent=2))
    return pair


def make_degenerate_translations(
    spec: LayoutSpec,
    style: DomainStyle,
    seed: int,
    n_constant: int = 3,
    n_bright: int = 3,
    role: str = "source-train",
) -> DatasetSplit:
    """Deliberately bad "translations" for stress-testing the curation gate.

    Produces constant-intensity frames (translation collapse: no structure at
    all, but a mask that claims there is) and frames whose metal lines are
    abnormally brightened relative to the style they should match. Both are
    failure modes a histogram gate is expected to reject.
    """
    rng = np.random.default_rng(seed)
    layout_seeds = rng.integers(0, 2**63 - 1, size=n_constant + n_bright)
    size = spec.image_size
    # poison masks claim dense wiring that the frames do not show
    poison_spec = replace(spec, density=min(0.5, max(spec.density, 0.4)))
    images, masks, ids = [], [], []
    # collapse levels cycle through the style's own background/foreground/midpoint,
    # mimicking frames that are all background or all metal
    levels = [style.bg_level, style.fg_level, 0.5 * (style.bg_level + style.fg_level)]
    for k in range(n_constant):
        level = float(np.clip(levels[k % 3] + rng.uniform(-0.02, 0.02), 0.0, 1.0))
        images.append(GrayImage(np.full((size, size), level)))
        masks.append(generate_layout(replace(poison_spec, seed=int(layout_seeds[k]))))
        ids.append(f"degenerate-const-{k:02d}")
    bright = replace(
        style,
        fg_level=min(0.99, style.fg_level + 0.55),
        noise_sigma=min(style.noise_sigma, 0.02),
    )
    for k in range(n_bright):
        mask = generate_layout(replace(poison_spec, seed=int(layout_seeds[n_constant + k])))
        images.append(render(mask, bright, seed=int(rng.integers(0, 2**63 - 1))))
        masks.append(mask)
        ids.append(f"degenerate-bright-{k:02d}")
    return DatasetSplit(images=images, masks=masks, ids=ids, role=role)


def domain_gap_ks(a: DatasetSplit, b: DatasetSplit) -> float:
    """KS statistic between the mean histograms of two splits (gap diagnostic)."""
    ha = mean_histogram([compute_histogram(img) for img in a.images])
    hb = mean_histogram([compute_histogram(img) for img in b.images])
    return ks_statistic(ha, hb)
