import numpy as np
import pytest

from histgate.curation import CurationConfig, gate
from histgate.metrics import RunResult, aggregate
from histgate.plots import curation_montage, scenario_bars
from conftest import make_split


def two_level(rng, shape=(16, 16)):
    return np.where(rng.random(shape) < 0.5, 0.2, 0.8)


class TestScenarioBars:
    def test_singleton_report_one_bar_per_metric(self, tmp_path):
        table = aggregate([RunResult("source-only", "d1", 0, 0.8, 0.6)])
        fig = scenario_bars(table, "d1", tmp_path / "bars.png")
        assert (tmp_path / "bars.png").exists()
        ax = fig.axes[0]
        assert len(ax.patches) == 2  # one SA bar + one IoU bar

    def test_bars_per_scenario(self, tmp_path):
        results = [
            RunResult("source-only", "d1", 0, 0.5, 0.3),
            RunResult("hgit", "d1", 0, 0.9, 0.8),
            RunResult("supervised", "d1", 0, 0.95, 0.9),
        ]
        fig = scenario_bars(aggregate(results), "d1", tmp_path / "bars.png")
        assert len(fig.axes[0].patches) == 6


class TestCurationMontage:
    def test_rows_match_inspected_images(self, tmp_path, rng):
        transformed = make_split([two_level(rng) for _ in range(5)])
        target = make_split([two_level(rng) for _ in range(3)], role="target-train")
        _, report = gate(transformed, target, CurationConfig(keep_percent=70))
        images = dict(zip(transformed.ids, transformed.images))
        fig = curation_montage(images, report, tmp_path / "montage.png")
        assert (tmp_path / "montage.png").exists()
        assert len(fig.axes) == 2 * 5  # image + histogram per row

    def test_subset_of_ids(self, tmp_path, rng):
        transformed = make_split([two_level(rng) for _ in range(6)])
        target = make_split([two_level(rng) for _ in range(3)], role="target-train")
        _, report = gate(transformed, target)
        images = dict(zip(transformed.ids, transformed.images))
        fig = curation_montage(images, report, tmp_path / "m.png", image_ids=transformed.ids[:2])
        assert len(fig.axes) == 4

    def test_rejected_blank_is_flagged(self, tmp_path, rng):
        arrays = [two_level(rng) for _ in range(7)] + [np.full((16, 16), 0.5)]
        transformed = make_split(arrays, ids=[f"im{i}" for i in range(7)] + ["blank"])
        target = make_split([two_level(rng) for _ in range(3)], role="target-train")
        _, report = gate(transformed, target, CurationConfig(keep_percent=70))
        images = dict(zip(transformed.ids, transformed.images))
        fig = curation_montage(images, report, tmp_path / "m.png")
        titles = [ax.get_title() for ax in fig.axes]
        assert any("blank [rejected]" in t for t in titles)

    def test_empty_inspection_rejected(self, tmp_path, rng):
        transformed = make_split([two_level(rng)])
        target = make_split([two_level(rng)], role="target-train")
        _, report = gate(transformed, target)
        with pytest.raises(ValueError):
            curation_montage({}, report, tmp_path / "m.png", image_ids=[])
