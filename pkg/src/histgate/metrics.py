"""Pixel confusion counting, SA / IoU scores, and multi-run aggregation tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import BinaryMask

SCENARIO_ORDER = ("source-only", "hist-match", "fda", "cyclegan", "hgit", "supervised")

IOU_EMPTY_NOTE = "IoU of an empty prediction against an empty truth mask is defined as 1.0"

__all__ = [
    "SCENARIO_ORDER",
    "IOU_EMPTY_NOTE",
    "ConfusionCounts",
    "RunResult",
    "AggregateTable",
    "confusion",
    "segmentation_accuracy",
    "iou",
    "aggregate",
]


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-pixel confusion counts for the metal-line class."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


def confusion(pred: BinaryMask, truth: BinaryMask) -> ConfusionCounts:
    """Exact per-pixel confusion counts of a prediction against ground truth."""
    p = pred.labels
    t = truth.labels
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != truth shape {t.shape}")
    pf = p.astype(bool)
    tf = t.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(pf & tf)),
        fp=int(np.count_nonzero(pf & ~tf)),
        tn=int(np.count_nonzero(~pf & ~tf)),
        fn=int(np.count_nonzero(~pf & tf)),
    )


def segmentation_accuracy(c: ConfusionCounts) -> float:
    """(TP + TN) / all pixels."""
    if c.total == 0:
        raise ValueError("cannot score an empty pixel set")
    return (c.tp + c.tn) / c.total


def iou(c: ConfusionCounts) -> float:
    """TP / (TP + FP + FN); both-empty masks score 1.0 by convention."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return c.tp / denom


@dataclass
class RunResult:
    """SA / IoU of one scenario on one dataset for one training seed."""

    scenario: str
    dataset: str
    seed: int
    sa: float
    iou: float
    wall_time: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.sa <= 1.0 and 0.0 <= self.iou <= 1.0):
            raise ValueError("sa and iou must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "dataset": self.dataset,
            "seed": self.seed,
            "sa": self.sa,
            "iou": self.iou,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            scenario=d["scenario"],
            dataset=d["dataset"],
            seed=int(d["seed"]),
            sa=float(d["sa"]),
            iou=float(d["iou"]),
            wall_time=float(d.get("wall_time", 0.0)),
        )


def _ordered(names: list[str], preference: tuple[str, ...]) -> list[str]:
    known = [n for n in preference if n in names]
    extra = [n for n in names if n not in preference]
    return known + extra


@dataclass
class AggregateTable:
    """Mean SA / IoU per scenario x dataset, plus an unweighted averaged column."""

    scenarios: list[str]
    datasets: list[str]
    cells: dict[tuple[str, str], tuple[float, float]]
    n_runs: dict[tuple[str, str], int] = field(default_factory=dict)

    def cell(self, scenario: str, dataset: str) -> tuple[float, float]:
        return self.cells[(scenario, dataset)]

    def averaged(self, scenario: str) -> tuple[float, float]:
        """Unweighted mean of the scenario's per-dataset means."""
        pairs = [self.cells[(scenario, d)] for d in self.datasets if (scenario, d) in self.cells]
        if not pairs:
            raise KeyError(f"no results for scenario {scenario!r}")
        sa = sum(p[0] for p in pairs) / len(pairs)
        ip = sum(p[1] for p in pairs) / len(pairs)
        return sa, ip

    def header(self) -> list[str]:
        cols = ["method"]
        for d in self.datasets:
            cols += [f"{d}_sa", f"{d}_iou"]
        cols += ["averaged_sa", "averaged_iou"]
        return cols

    def row(self, scenario: str) -> list:
        vals: list = [scenario]
        for d in self.datasets:
            sa, ip = self.cells.get((scenario, d), (float("nan"), float("nan")))
            vals += [sa, ip]
        vals += list(self.averaged(scenario))
        return vals

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for scenario in self.scenarios:
                writer.writerow(
                    [v if isinstance(v, str) else f"{v:.4f}" for v in self.row(scenario)]
                )
        return path

    def to_dict(self) -> dict:
        return {
            "scenarios": self.scenarios,
            "datasets": self.datasets,
            "cells": {
                f"{s}|{d}": {"sa": sa, "iou": ip, "n_runs": self.n_runs.get((s, d), 0)}
                for (s, d), (sa, ip) in self.cells.items()
            },
            "averaged": {s: dict(zip(("sa", "iou"), self.averaged(s))) for s in self.scenarios},
        }


def aggregate(results: list[RunResult]) -> AggregateTable:
    """Arithmetic means per scenario x dataset over seeds (micro counts happen upstream)."""
    if not results:
        raise ValueError("aggregate requires at least one result")
    groups: dict[tuple[str, str], list[RunResult]] = {}
    scenario_seen: list[str] = []
    dataset_seen: list[str] = []
    for r in results:
        groups.setdefault((r.scenario, r.dataset), []).append(r)
        if r.scenario not in scenario_seen:
            scenario_seen.append(r.scenario)
        if r.dataset not in dataset_seen:
            dataset_seen.append(r.dataset)
    cells = {}
    n_runs = {}
    for key, rs in groups.items():
        cells[key] = (
            sum(r.sa for r in rs) / len(rs),
            sum(r.iou for r in rs) / len(rs),
        )
        n_runs[key] = len(rs)
    return AggregateTable(
        scenarios=_ordered(scenario_seen, SCENARIO_ORDER),
        datasets=dataset_seen,
        cells=cells,
        n_runs=n_runs,
    )
