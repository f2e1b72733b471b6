import numpy as np
import pytest

from capseg import (
    Frame,
    Mask,
    PixelConfusion,
    SuperpixelMap,
    aggregate,
    measures,
    pixel_confusion,
    report_to_csv,
    write_overlay,
)
from capseg.errors import DimensionMismatch, EmptyConfusion, EmptyInput


def _map_512():
    labels = np.arange(512 * 512, dtype=np.int32).reshape(512, 512) // (64 * 512)
    return SuperpixelMap(labels=labels, k=8)


class TestPixelConfusion:
    def test_perfect_prediction(self):
        labels = np.zeros((16, 16), dtype=np.int32)
        labels[:, 8:] = 1
        spmap = SuperpixelMap(labels=labels, k=2)
        mask = Mask((labels == 1).astype(np.uint8))
        conf = pixel_confusion(np.array([0, 1], dtype=np.uint8), spmap, mask)
        assert conf.fn == 0 and conf.fp == 0
        assert conf.tp == 128 and conf.tn == 128

    def test_all_normal_prediction_counts(self):
        spmap = _map_512()
        mask_vals = np.zeros((512, 512), dtype=np.uint8)
        mask_vals.ravel()[:1000] = 1
        conf = pixel_confusion(
            np.zeros(8, dtype=np.uint8), spmap, Mask(mask_vals)
        )
        assert (conf.tp, conf.fn, conf.fp, conf.tn) == (0, 1000, 0, 261144)

    def test_inverted_prediction_swaps_counts(self, rng):
        labels = rng.integers(0, 5, (32, 32)).astype(np.int32)
        for i in range(5):
            labels[i, 0] = i
        spmap = SuperpixelMap(labels=labels, k=5)
        mask = Mask(rng.integers(0, 2, (32, 32)).astype(np.uint8))
        pred = rng.integers(0, 2, 5).astype(np.uint8)
        direct = pixel_confusion(pred, spmap, mask)
        flipped = pixel_confusion(1 - pred, spmap, mask)
        # inversion swaps outcomes within each ground-truth stratum
        assert (flipped.tp, flipped.fn) == (direct.fn, direct.tp)
        assert (flipped.tn, flipped.fp) == (direct.fp, direct.tn)

    def test_dimension_mismatch(self):
        spmap = _map_512()
        with pytest.raises(DimensionMismatch):
            pixel_confusion(
                np.zeros(8, dtype=np.uint8),
                spmap,
                Mask(np.zeros((16, 16), dtype=np.uint8)),
            )

    def test_permutation_invariance(self, rng):
        labels = rng.integers(0, 4, (20, 20)).astype(np.int32)
        for i in range(4):
            labels[i, 0] = i
        mask_vals = rng.integers(0, 2, (20, 20)).astype(np.uint8)
        pred = rng.integers(0, 2, 4).astype(np.uint8)
        conf = pixel_confusion(pred, SuperpixelMap(labels=labels, k=4), Mask(mask_vals))
        perm = rng.permutation(20)
        conf_p = pixel_confusion(
            pred, SuperpixelMap(labels=labels[perm], k=4), Mask(mask_vals[perm])
        )
        assert conf == conf_p


class TestMeasures:
    def test_worked_arithmetic(self):
        m = measures(PixelConfusion(tp=3, fn=1, tn=4, fp=2))
        assert m.sensitivity == pytest.approx(0.75)
        assert m.specificity == pytest.approx(0.6667, abs=1e-4)
        assert m.accuracy == pytest.approx(0.7)
        assert m.precision == pytest.approx(0.6)

    def test_perfect_counts(self):
        m = measures(PixelConfusion(tp=10, fn=0, tn=20, fp=0))
        assert (m.sensitivity, m.specificity, m.accuracy, m.precision) == (1, 1, 1, 1)

    def test_undefined_precision(self):
        m = measures(PixelConfusion(tp=0, fn=5, tn=5, fp=0))
        assert m.precision is None

    def test_empty_confusion(self):
        with pytest.raises(EmptyConfusion):
            measures(PixelConfusion())

    def test_accuracy_consistency_identity(self, rng):
        for _ in range(1000):
            tp, fn, tn, fp = (int(v) for v in rng.integers(0, 500, 4))
            conf = PixelConfusion(tp, fn, tn, fp)
            if conf.total == 0:
                continue
            m = measures(conf)
            if m.sensitivity is None or m.specificity is None:
                continue
            lhs = m.accuracy
            rhs = (m.sensitivity * (tp + fn) + m.specificity * (tn + fp)) / conf.total
            assert lhs == pytest.approx(rhs, abs=1e-12)


class TestAggregate:
    def test_single_frame_total(self):
        conf = PixelConfusion(3, 1, 4, 2)
        report = aggregate([("bleeding", 100, conf)])
        total_conf, total_m = report.rows[("total", 100)]
        assert total_conf == conf
        assert total_m == measures(conf)

    def test_identical_frames_keep_measures(self):
        conf = PixelConfusion(3, 1, 4, 2)
        one = aggregate([("crohn", 50, conf)])
        two = aggregate([("crohn", 50, conf), ("crohn", 50, conf)])
        assert two.rows[("total", 50)][1] == one.rows[("total", 50)][1]

    def test_micro_average_pools_counts(self):
        a = PixelConfusion(tp=10, fn=0, tn=0, fp=0)
        b = PixelConfusion(tp=0, fn=10, tn=0, fp=0)
        report = aggregate([("bleeding", 25, a), ("xanthoma", 25, b)])
        assert report.rows[("total", 25)][1].sensitivity == pytest.approx(0.5)

    def test_associativity(self, rng):
        entries = [
            (
                ["bleeding", "crohn", "xanthoma"][int(rng.integers(0, 3))],
                int(rng.choice([25, 100])),
                PixelConfusion(*(int(v) for v in rng.integers(1, 50, 4))),
            )
            for _ in range(30)
        ]
        direct = aggregate(entries)
        merged = aggregate(entries[:11] + entries[11:])
        shuffled = aggregate([entries[i] for i in rng.permutation(30)])
        assert report_to_csv(direct) == report_to_csv(merged) == report_to_csv(shuffled)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            aggregate([])

    def test_csv_layout(self):
        conf = PixelConfusion(3, 1, 4, 2)
        report = aggregate(
            [("bleeding", 100, conf), ("bleeding", 25, conf), ("crohn", 25, conf)]
        )
        lines = report_to_csv(report).splitlines()
        assert lines[0] == "scope,N,sensitivity,specificity,accuracy,precision"
        assert [ln.split(",")[0] for ln in lines[1:]] == [
            "total", "total", "bleeding", "bleeding", "crohn",
        ]
        assert lines[1].startswith("total,25,")


class TestOverlay:
    def test_overlay_written(self, tmp_path, rng):
        px = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
        labels = np.zeros((32, 32), dtype=np.int32)
        labels[:, 16:] = 1
        write_overlay(
            Frame(px),
            SuperpixelMap(labels=labels, k=2),
            np.array([0, 1], dtype=np.uint8),
            tmp_path / "o.png",
        )
        from PIL import Image

        img = np.array(Image.open(tmp_path / "o.png"))
        assert img.shape == (32, 32, 3)
        # tint moved the abnormal half toward red relative to the original
        assert img[5, 24, 0] >= px[5, 24, 0] - 1
