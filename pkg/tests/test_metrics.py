import csv

import numpy as np
import pytest

from histgate.imagecore import BinaryMask
from histgate.metrics import (
    SCENARIO_ORDER,
    ConfusionCounts,
    RunResult,
    aggregate,
    confusion,
    iou,
    segmentation_accuracy,
)
from conftest import random_mask


def loop_confusion(pred, truth):
    """Brute-force per-pixel oracle."""
    tp = fp = tn = fn = 0
    for r in range(pred.labels.shape[0]):
        for c in range(pred.labels.shape[1]):
            p, t = pred.labels[r, c], truth.labels[r, c]
            if p == 1 and t == 1:
                tp += 1
            elif p == 1 and t == 0:
                fp += 1
            elif p == 0 and t == 0:
                tn += 1
            else:
                fn += 1
    return ConfusionCounts(tp, fp, tn, fn)


class TestConfusion:
    def test_perfect_all_ones(self):
        m = BinaryMask(np.ones((4, 4), dtype=np.uint8))
        c = confusion(m, m)
        assert (c.tp, c.fp, c.tn, c.fn) == (16, 0, 0, 0)

    def test_complement(self, rng):
        truth = random_mask(rng)
        pred = BinaryMask(1 - truth.labels)
        c = confusion(pred, truth)
        assert c.tp == 0 and c.tn == 0
        assert c.fp + c.fn == truth.labels.size

    def test_matches_loop_oracle(self, rng):
        for _ in range(25):
            pred, truth = random_mask(rng), random_mask(rng)
            assert confusion(pred, truth) == loop_confusion(pred, truth)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            confusion(random_mask(rng, (8, 8)), random_mask(rng, (8, 9)))

    def test_complement_symmetry(self, rng):
        pred, truth = random_mask(rng), random_mask(rng)
        c = confusion(pred, truth)
        cc = confusion(BinaryMask(1 - pred.labels), BinaryMask(1 - truth.labels))
        assert (cc.tp, cc.fp, cc.tn, cc.fn) == (c.tn, c.fn, c.tp, c.fp)

    def test_counts_partition_pixels(self, rng):
        c = confusion(random_mask(rng), random_mask(rng))
        assert c.total == 256


class TestScores:
    def test_sa_perfect(self):
        assert segmentation_accuracy(ConfusionCounts(10, 0, 6, 0)) == 1.0

    def test_sa_direct_substitution(self):
        assert segmentation_accuracy(ConfusionCounts(1, 1, 1, 1)) == 0.5

    def test_sa_all_wrong(self):
        assert segmentation_accuracy(ConfusionCounts(0, 8, 0, 8)) == 0.0

    def test_sa_zero_total_rejected(self):
        with pytest.raises(ValueError):
            segmentation_accuracy(ConfusionCounts(0, 0, 0, 0))

    def test_iou_perfect(self):
        assert iou(ConfusionCounts(12, 0, 4, 0)) == 1.0

    def test_iou_direct_substitution(self):
        assert iou(ConfusionCounts(1, 1, 0, 2)) == 0.25

    def test_iou_empty_pred_nonempty_truth(self):
        assert iou(ConfusionCounts(0, 0, 10, 6)) == 0.0

    def test_iou_both_empty_convention(self):
        assert iou(ConfusionCounts(0, 0, 16, 0)) == 1.0

    def test_sa_at_least_iou(self, rng):
        for _ in range(100):
            c = confusion(random_mask(rng), random_mask(rng))
            assert segmentation_accuracy(c) >= iou(c)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(-1, 0, 0, 0)


def rr(scenario, dataset, seed, sa, iou_value):
    return RunResult(scenario=scenario, dataset=dataset, seed=seed, sa=sa, iou=iou_value)


class TestAggregate:
    def test_single_result_is_identity(self):
        table = aggregate([rr("source-only", "d1", 0, 0.8, 0.6)])
        assert table.cell("source-only", "d1") == (0.8, 0.6)
        assert table.averaged("source-only") == (0.8, 0.6)

    def test_mean_of_two_seeds(self):
        table = aggregate([rr("hgit", "d1", 0, 0.9, 0.8), rr("hgit", "d1", 1, 1.0, 0.9)])
        sa, ip = table.cell("hgit", "d1")
        assert sa == pytest.approx(0.95)
        assert ip == pytest.approx(0.85)

    def test_permutation_invariant(self):
        results = [rr("hgit", "d1", s, 0.5 + 0.1 * s, 0.4 + 0.1 * s) for s in range(3)]
        a = aggregate(results)
        b = aggregate(results[::-1])
        assert a.cells == b.cells

    def test_grand_average_unweighted(self):
        results = [
            rr("hgit", "d1", 0, 0.9, 0.8),
            rr("hgit", "d2", 0, 0.7, 0.6),
            rr("hgit", "d3", 0, 0.5, 0.4),
        ]
        table = aggregate(results)
        sa, ip = table.averaged("hgit")
        assert sa == pytest.approx((0.9 + 0.7 + 0.5) / 3)
        assert ip == pytest.approx((0.8 + 0.6 + 0.4) / 3)

    def test_reference_layout_fixture(self):
        # reference layout: three per-dataset means reproduce the averaged column at 4 dp
        per_dataset = {"d1": (0.9867, 0.9646), "d2": (0.8066, 0.7124), "d3": (0.9512, 0.9187)}
        results = [rr("hgit", d, 0, sa, ip) for d, (sa, ip) in per_dataset.items()]
        table = aggregate(results)
        sa, ip = table.averaged("hgit")
        assert round(sa, 4) == 0.9148
        assert round(ip, 4) == 0.8652

    def test_csv_layout(self, tmp_path):
        results = [
            rr("supervised", "d1", 0, 1.0, 1.0),
            rr("source-only", "d1", 0, 0.5, 0.25),
            rr("hgit", "d1", 0, 0.9, 0.8),
        ]
        table = aggregate(results)
        path = table.to_csv(tmp_path / "report.csv")
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["method", "d1_sa", "d1_iou", "averaged_sa", "averaged_iou"]
        # canonical method ordering regardless of insertion order
        assert [r[0] for r in rows[1:]] == ["source-only", "hgit", "supervised"]
        assert rows[1][1] == "0.5000"

    def test_scenario_order_matches_reference(self):
        assert SCENARIO_ORDER == ("source-only", "hist-match", "fda", "cyclegan", "hgit", "supervised")

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])
