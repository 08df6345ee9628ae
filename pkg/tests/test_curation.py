import json
import math

import numpy as np
import pytest
from scipy.special import kolmogorov

from histgate.curation import CurationConfig, gate, ks_p_value, ks_statistic
from histgate.imagecore import Histogram, compute_histogram
from conftest import make_split, random_mask


def hist_from_counts(counts):
    counts = np.asarray(counts, dtype=np.float64)
    return Histogram(counts / counts.sum(), int(counts.sum()))


def brute_force_ks(samples1, samples2):
    """Empirical two-sample CDF sweep over all observed values."""
    values = np.unique(np.concatenate([samples1, samples2]))
    best = 0.0
    for v in values:
        f1 = np.count_nonzero(samples1 <= v) / samples1.size
        f2 = np.count_nonzero(samples2 <= v) / samples2.size
        best = max(best, abs(f1 - f2))
    return best


def expand(counts):
    return np.repeat(np.arange(256), counts)


class TestKsStatistic:
    def test_identical_distributions(self, rng):
        h = compute_histogram(rng.random((16, 16)))
        assert ks_statistic(h, h) == 0.0

    def test_disjoint_extremes(self):
        d0 = np.zeros(256)
        d0[0] = 1.0
        d255 = np.zeros(256)
        d255[255] = 1.0
        assert ks_statistic(d0, d255) == 1.0

    def test_hand_cdf_case(self):
        h1 = np.zeros(256)
        h1[0] = 0.5
        h1[255] = 0.5
        h2 = np.zeros(256)
        h2[0] = 1.0
        assert ks_statistic(h1, h2) == 0.5

    def test_symmetry(self, rng):
        for _ in range(10):
            a = compute_histogram(rng.random((12, 12)))
            b = compute_histogram(rng.random((12, 12)))
            assert ks_statistic(a, b) == ks_statistic(b, a)

    def test_triangle_inequality(self, rng):
        for _ in range(20):
            a, b, c = (compute_histogram(rng.random((10, 10))) for _ in range(3))
            assert ks_statistic(a, c) <= ks_statistic(a, b) + ks_statistic(b, c) + 1e-15

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            ks_statistic(np.full(256, 0.5), np.full(256, 1 / 256))

    def test_matches_sample_expansion_oracle(self, rng):
        for _ in range(50):
            counts1 = np.zeros(256, dtype=int)
            counts2 = np.zeros(256, dtype=int)
            counts1[rng.choice(256, 16, replace=False)] = rng.multinomial(
                int(rng.integers(50, 4097)), np.full(16, 1 / 16)
            )
            counts2[rng.choice(256, 16, replace=False)] = rng.multinomial(
                int(rng.integers(50, 4097)), np.full(16, 1 / 16)
            )
            d_binned = ks_statistic(hist_from_counts(counts1), hist_from_counts(counts2))
            d_brute = brute_force_ks(expand(counts1), expand(counts2))
            assert abs(d_binned - d_brute) < 1e-12


class TestKsPValue:
    def test_zero_statistic_gives_one(self):
        assert ks_p_value(0.0, 100, 100) == 1.0
        assert ks_p_value(0.0, 1, 1) == 1.0

    def test_strictly_decreasing_in_d(self):
        n = 4096
        ps = [ks_p_value(d, n, n) for d in np.linspace(0.01, 0.06, 100)]
        assert all(a > b for a, b in zip(ps, ps[1:]))

    def test_large_statistic_vanishes(self):
        assert ks_p_value(0.5, 128 * 128, 128 * 128) < 1e-10

    def test_matches_scipy_series(self):
        # independent evaluation of the same survival function
        n = 2048
        n_eff = n / 2
        for d in np.linspace(0.005, 0.08, 40):
            lam = d * math.sqrt(n_eff)
            assert ks_p_value(d, n, n) == pytest.approx(float(kolmogorov(lam)), abs=1e-9)

    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            ks_p_value(1.5, 10, 10)
        with pytest.raises(ValueError):
            ks_p_value(0.5, 0, 10)

    def test_clipped_to_unit_interval(self, rng):
        for _ in range(50):
            p = ks_p_value(float(rng.random()), int(rng.integers(1, 10000)), int(rng.integers(1, 10000)))
            assert 0.0 <= p <= 1.0


def two_level_image(rng, shape=(16, 16), lo=0.2, hi=0.8):
    return np.where(rng.random(shape) < 0.5, lo, hi)


class TestGate:
    def test_keeps_top_seventy_percent(self, rng):
        transformed = make_split([two_level_image(rng) for _ in range(10)])
        target = make_split([two_level_image(rng) for _ in range(5)], role="target-train")
        selected, report = gate(transformed, target, CurationConfig(keep_percent=70))
        assert len(selected) == 7
        assert len(report.selected_ids) == 7
        # selected and rejected partition the input with no duplicates
        assert set(selected.ids) <= set(transformed.ids)
        assert sorted(report.selected_ids + report.rejected_ids) == sorted(transformed.ids)

    @pytest.mark.parametrize("m,expected", [(3, 3), (10, 7), (137, 96)])
    def test_selection_count_rounds_up(self, rng, m, expected):
        transformed = make_split([two_level_image(rng) for _ in range(m)])
        target = make_split([two_level_image(rng) for _ in range(3)], role="target-train")
        selected, _ = gate(transformed, target, CurationConfig(keep_percent=70))
        assert len(selected) == expected

    def test_keep_all_orders_by_rank(self, rng):
        transformed = make_split([two_level_image(rng) for _ in range(6)])
        target = make_split([two_level_image(rng) for _ in range(3)], role="target-train")
        selected, report = gate(transformed, target, CurationConfig(keep_percent=100))
        assert len(selected) == 6
        assert selected.ids == [r.image_id for r in report.records]
        assert [r.rank for r in report.records] == list(range(1, 7))

    def test_blank_images_rejected(self, rng):
        # bimodal target profile; blanks have delta histograms far from it
        plausible = [two_level_image(rng) for _ in range(7)]
        blanks = [np.full((16, 16), level) for level in (0.1, 0.5, 0.9)]
        transformed = make_split(plausible + blanks)
        target = make_split([two_level_image(rng) for _ in range(5)], role="target-train")
        selected, report = gate(transformed, target, CurationConfig(keep_percent=70))
        blank_ids = set(transformed.ids[7:])
        assert blank_ids == set(report.rejected_ids)
        assert blank_ids.isdisjoint(selected.ids)

    def test_selected_p_at_least_rejected_p(self, rng):
        transformed = make_split([rng.random((16, 16)) for _ in range(12)])
        target = make_split([rng.random((16, 16)) for _ in range(4)], role="target-train")
        _, report = gate(transformed, target)
        sel = [r.p_value for r in report.records if r.selected]
        rej = [r.p_value for r in report.records if not r.selected]
        assert min(sel) >= max(rej)

    def test_invariant_under_input_permutation(self, rng):
        arrays = [rng.random((16, 16)) for _ in range(9)]
        ids = [f"img-{i}" for i in range(9)]
        target = make_split([rng.random((16, 16)) for _ in range(4)], role="target-train")
        a, _ = gate(make_split(arrays, ids=ids), target)
        perm = list(rng.permutation(9))
        b, _ = gate(make_split([arrays[i] for i in perm], ids=[ids[i] for i in perm]), target)
        assert a.ids == b.ids

    def test_masks_carried_through(self, rng):
        masks = [random_mask(rng) for _ in range(4)]
        transformed = make_split([two_level_image(rng) for _ in range(4)], masks=masks)
        target = make_split([two_level_image(rng) for _ in range(3)], role="target-train")
        selected, _ = gate(transformed, target, CurationConfig(keep_percent=50))
        assert selected.masks is not None
        by_id = dict(zip(transformed.ids, masks))
        for item_id, mask in zip(selected.ids, selected.masks):
            assert np.array_equal(mask.labels, by_id[item_id].labels)

    def test_empty_inputs_rejected(self, rng):
        target = make_split([two_level_image(rng)], role="target-train")
        with pytest.raises(ValueError):
            gate(make_split([]), target)

    def test_report_files(self, tmp_path, rng):
        transformed = make_split([two_level_image(rng) for _ in range(5)])
        target = make_split([two_level_image(rng) for _ in range(3)], role="target-train")
        _, report = gate(transformed, target)
        jp = report.to_json(tmp_path / "curation_report.json")
        cp = report.to_csv(tmp_path / "curation_report.csv")
        payload = json.loads(jp.read_text())
        assert "Kolmogorov-Smirnov" in payload["method"]
        assert len(payload["records"]) == 5
        assert cp.read_text().splitlines()[0] == "id,ks_statistic,p_value,rank,selected"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CurationConfig(keep_percent=0)
        with pytest.raises(ValueError):
            CurationConfig(keep_percent=101)
