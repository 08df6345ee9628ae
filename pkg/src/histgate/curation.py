"""Histogram-similarity gating of translated image sets.

Each translated image's intensity histogram is scored against the mean target
histogram with a Kolmogorov-Smirnov test; images are ranked by p-value and the
top N percent survive. Histograms are treated as discrete distributions whose
CDFs are compared directly at 256-bin resolution, which is equivalent to the
empirical two-sample test at that resolution, and the per-image pixel count is
used as both effective sample sizes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import DatasetSplit, Histogram, compute_histogram, mean_histogram

SERIES_TOL = 1e-12

METHOD_NOTE = (
    "two-sample Kolmogorov-Smirnov, asymptotic form; histogram CDFs compared "
    "at 256-bin resolution; effective sample size = per-image pixel count on "
    "both sides"
)

__all__ = [
    "METHOD_NOTE",
    "CurationConfig",
    "CurationRecord",
    "CurationReport",
    "ks_statistic",
    "ks_p_value",
    "gate",
]


@dataclass
class CurationConfig:
    """Gating knobs: percentage kept and an optional sample-size override."""

    keep_percent: float = 70.0
    effective_n: int | None = None

    def __post_init__(self):
        if not 0.0 < self.keep_percent <= 100.0:
            raise ValueError("keep_percent must lie in (0, 100]")
        if self.effective_n is not None and self.effective_n < 1:
            raise ValueError("effective_n must be positive when set")


@dataclass
class CurationRecord:
    image_id: str
    ks_statistic: float
    p_value: float
    rank: int
    selected: bool


@dataclass
class CurationReport:
    """Ranked gating decisions for every inspected image."""

    records: list[CurationRecord]
    target_profile: Histogram
    keep_percent: float
    method: str = METHOD_NOTE

    @property
    def selected_ids(self) -> list[str]:
        return [r.image_id for r in self.records if r.selected]

    @property
    def rejected_ids(self) -> list[str]:
        return [r.image_id for r in self.records if not r.selected]

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "method": self.method,
            "keep_percent": self.keep_percent,
            "records": [
                {
                    "id": r.image_id,
                    "ks_statistic": r.ks_statistic,
                    "p_value": r.p_value,
                    "rank": r.rank,
                    "selected": r.selected,
                }
                for r in self.records
            ],
            "target_profile": self.target_profile.bins.tolist(),
            "target_pixel_count": self.target_profile.pixel_count,
        }
        path.write_text(json.dumps(payload, indent=2))
        return path

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "ks_statistic", "p_value", "rank", "selected"])
            for r in self.records:
                writer.writerow([r.image_id, f"{r.ks_statistic:.6g}", f"{r.p_value:.6g}", r.rank, int(r.selected)])
        return path


def _as_bins(h: Histogram | np.ndarray) -> np.ndarray:
    bins = h.bins if isinstance(h, Histogram) else np.asarray(h, dtype=np.float64)
    if abs(bins.sum() - 1.0) > 1e-9:
        raise ValueError("histogram must be normalized (bins summing to 1)")
    return bins


def ks_statistic(h1: Histogram | np.ndarray, h2: Histogram | np.ndarray) -> float:
    """Maximum absolute difference between the two histograms' CDFs."""
    c1 = np.cumsum(_as_bins(h1))
    c2 = np.cumsum(_as_bins(h2))
    return min(float(np.max(np.abs(c1 - c2))), 1.0)


def ks_p_value(d: float, n1: int, n2: int) -> float:
    """Asymptotic two-sample KS p-value.

    Evaluates the Kolmogorov survival function Q(lambda) =
    2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2) at
    lambda = d * sqrt(n1*n2/(n1+n2)), truncating the series once a term drops
    below 1e-12, and clips the result to [0, 1].
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError("KS statistic must lie in [0, 1]")
    if n1 < 1 or n2 < 1:
        raise ValueError("sample sizes must be at least 1")
    n_eff = n1 * n2 / (n1 + n2)
    lam = d * math.sqrt(n_eff)
    if lam < 1e-3:
        # Q(lambda) equals 1 to double precision well above this point.
        return 1.0
    total = 0.0
    sign = 1.0
    k = 1
    while True:
        term = math.exp(-2.0 * (k * lam) ** 2)
        if term < SERIES_TOL:
            break
        total += sign * term
        sign = -sign
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def gate(
    transformed: DatasetSplit,
    target: DatasetSplit,
    cfg: CurationConfig | None = None,
) -> tuple[DatasetSplit, CurationReport]:
    """Keep the top keep_percent of transformed images by KS p-value.

    The target split provides the mean histogram profile. Ranking is by
    p-value descending with ties broken by smaller KS statistic and then by
    id, so the gate is a total order and invariant to input order. The
    selected count is ceil(keep_percent/100 * M) and masks ride along with
    their images.
    """
    cfg = cfg or CurationConfig()
    if len(transformed) == 0:
        raise ValueError("transformed split is empty")
    if len(target) == 0:
        raise ValueError("target split is empty")
    profile = mean_histogram([compute_histogram(img) for img in target.images])

    scored = []
    for index, (img, image_id) in enumerate(zip(transformed.images, transformed.ids)):
        h = compute_histogram(img)
        d = ks_statistic(h, profile)
        n = cfg.effective_n if cfg.effective_n is not None else h.pixel_count
        p = ks_p_value(d, n, n)
        scored.append((image_id, index, d, p))
    scored.sort(key=lambda rec: (-rec[3], rec[2], rec[0]))

    n_keep = math.ceil(len(scored) * cfg.keep_percent / 100.0)
    records = []
    keep_indices = []
    for rank, (image_id, index, d, p) in enumerate(scored, start=1):
        selected = rank <= n_keep
        records.append(CurationRecord(image_id, d, p, rank, selected))
        if selected:
            keep_indices.append(index)

    report = CurationReport(records=records, target_profile=profile, keep_percent=cfg.keep_percent)
    return transformed.subset(keep_indices), report
