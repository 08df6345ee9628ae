"""Matplotlib figure output for experiment reports and curation diagnostics."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curation import CurationRecord, CurationReport
from .imagecore import GrayImage, Histogram, N_BINS, compute_histogram, load_image
from .metrics import AggregateTable

__all__ = ["scenario_bars", "curation_montage", "emit_plots"]


def scenario_bars(table: AggregateTable, dataset: str, path: str | Path) -> plt.Figure:
    """Grouped SA / IoU bars per scenario for one dataset."""
    scenarios = [s for s in table.scenarios if (s, dataset) in table.cells]
    sa = [table.cells[(s, dataset)][0] for s in scenarios]
    ious = [table.cells[(s, dataset)][1] for s in scenarios]

    fig, ax = plt.subplots(figsize=(1.6 * max(len(scenarios), 3), 3.4))
    pos = np.arange(len(scenarios))
    width = 0.38
    ax.bar(pos - width / 2, sa, width, label="SA", color="#4878a8")
    ax.bar(pos + width / 2, ious, width, label="IoU", color="#e08a45")
    ax.set_xticks(pos)
    ax.set_xticklabels(scenarios, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"{dataset}: mean scores over seeds")
    ax.legend(loc="lower right")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return fig


def curation_montage(
    images: dict[str, GrayImage],
    report: CurationReport,
    path: str | Path,
    image_ids: list[str] | None = None,
) -> plt.Figure:
    """One row per inspected image: the frame, then its histogram vs the target profile.

    Each row is annotated with the KS statistic, p-value, and the gate's
    selected/rejected verdict.
    """
    by_id: dict[str, CurationRecord] = {r.image_id: r for r in report.records}
    if image_ids is None:
        image_ids = [r.image_id for r in report.records if r.image_id in images]
    rows = len(image_ids)
    if rows == 0:
        raise ValueError("no images to inspect")

    centers = (np.arange(N_BINS) + 0.5) / N_BINS
    fig, axes = plt.subplots(rows, 2, figsize=(7.0, 1.9 * rows), squeeze=False)
    for row, image_id in enumerate(image_ids):
        rec = by_id[image_id]
        img = images[image_id]
        ax_img, ax_hist = axes[row]
        ax_img.imshow(img.pixels, cmap="gray", vmin=0.0, vmax=1.0)
        ax_img.set_axis_off()
        verdict = "selected" if rec.selected else "rejected"
        ax_img.set_title(f"{image_id} [{verdict}]", fontsize=8)

        h = compute_histogram(img)
        ax_hist.fill_between(centers, h.bins, step="mid", alpha=0.55, label="image")
        ax_hist.plot(centers, report.target_profile.bins, lw=1.0, color="k", label="target profile")
        ax_hist.set_title(f"D={rec.ks_statistic:.3f}  p={rec.p_value:.2e}  rank {rec.rank}", fontsize=8)
        ax_hist.set_xlim(0, 1)
        ax_hist.tick_params(labelsize=6)
        if row == 0:
            ax_hist.legend(fontsize=6)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return fig


def _load_curation_artifacts(run_dir: Path) -> tuple[dict[str, GrayImage], CurationReport] | None:
    report_path = run_dir / "curation_report.json"
    samples_dir = run_dir / "curation_samples"
    if not report_path.exists() or not samples_dir.is_dir():
        return None
    payload = json.loads(report_path.read_text())
    records = [
        CurationRecord(
            image_id=r["id"],
            ks_statistic=r["ks_statistic"],
            p_value=r["p_value"],
            rank=r["rank"],
            selected=bool(r["selected"]),
        )
        for r in payload["records"]
    ]
    profile = Histogram(
        bins=np.asarray(payload["target_profile"], dtype=np.float64),
        pixel_count=int(payload["target_pixel_count"]),
    )
    report = CurationReport(
        records=records,
        target_profile=profile,
        keep_percent=float(payload["keep_percent"]),
        method=payload.get("method", ""),
    )
    images = {p.stem: load_image(p) for p in sorted(samples_dir.glob("*.png"))}
    return images, report


def emit_plots(report, out_dir: str | Path) -> list[Path]:
    """Render per-dataset score bars and, where gating ran, a curation montage.

    Figures land in <out_dir>/plots next to the delimited report output. The
    montage is rebuilt from the per-run artifacts on disk, so it also works
    for resumed matrices.
    """
    out_dir = Path(out_dir)
    plots_dir = out_dir / "plots"
    written: list[Path] = []

    for dataset in report.table.datasets:
        path = plots_dir / f"{dataset}_scores.png"
        scenario_bars(report.table, dataset, path)
        written.append(path)

        gated_runs = sorted((out_dir / "runs" / dataset / "hgit").glob("seed*"))
        for run_dir in gated_runs:
            artifacts = _load_curation_artifacts(run_dir)
            if artifacts is None:
                continue
            images, curation_report = artifacts
            montage_path = plots_dir / f"{dataset}_curation_montage.png"
            ranked = [r.image_id for r in curation_report.records if r.image_id in images]
            curation_montage(images, curation_report, montage_path, image_ids=ranked)
            written.append(montage_path)
            break
    return written
