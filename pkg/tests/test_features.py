import numpy as np
import pytest

from capseg import (
    CHANNEL_ORDER,
    N_FEATURES,
    Frame,
    LbpParams,
    Mask,
    SuperpixelMap,
    channel_moments,
    derive_channels,
    extract_features,
    label_superpixels,
    lbp_map,
    load_features,
    save_features,
    uniform_bin_table,
    uniform_lbp_map,
)
from capseg.errors import DimensionMismatch, ImageTooSmall, InvalidParam

import oracles
from conftest import random_frame


class TestLbp:
    def test_constant_raster_all_bits_set(self):
        gray = np.full((10, 10), 42, dtype=np.uint8)
        cm = lbp_map(gray, LbpParams(neighbors=8, radius=1))
        assert (cm.codes == 255).all()

    def test_worked_packing_example(self):
        # neighbors ordered p=0..7 around center 100
        samples = [120, 110, 90, 80, 70, 100, 130, 140]
        assert oracles.lbp_code_from_samples(samples, 100) == 227

    def test_too_small_raster(self):
        with pytest.raises(ImageTooSmall):
            lbp_map(np.zeros((2, 2), dtype=np.uint8), LbpParams(neighbors=8, radius=1))

    def test_oracle_equivalence_random(self, rng):
        gray = rng.integers(0, 256, (40, 40)).astype(np.uint8)
        cm = lbp_map(gray, LbpParams(neighbors=8, radius=1))
        ref = oracles.lbp_reference(gray, 8, 1)
        assert (cm.codes == ref).all()

    def test_oracle_equivalence_radius_2(self, rng):
        gray = rng.integers(0, 256, (24, 24)).astype(np.uint8)
        params = LbpParams(neighbors=8, radius=2)
        cm = lbp_map(gray, params)
        ref = oracles.lbp_reference(gray, 8, 2)
        assert (cm.codes == ref).all()

    def test_param_bounds(self):
        with pytest.raises(InvalidParam):
            LbpParams(neighbors=3)
        with pytest.raises(InvalidParam):
            LbpParams(radius=0.5)


class TestUniformLbp:
    def test_transition_counts(self):
        assert oracles.circular_transitions(0b00001111, 8) == 2
        assert oracles.circular_transitions(0b01010101, 8) == 8

    def test_uniform_code_enumeration(self):
        table = uniform_bin_table(8)
        uniform = [c for c in range(256) if oracles.circular_transitions(c, 8) <= 2]
        assert len(uniform) == 58  # P(P-1)+2
        misc = table.max()
        assert misc == 58  # 59 bins total
        # uniform codes get unique bins in ascending code order
        bins = [table[c] for c in uniform]
        assert bins == sorted(bins) == list(range(58))
        # everything else shares the miscellaneous bin
        for c in range(256):
            if c not in uniform:
                assert table[c] == misc

    def test_mapping_is_a_function(self, rng):
        table = uniform_bin_table(8)
        gray = rng.integers(0, 256, (30, 30)).astype(np.uint8)
        raw = lbp_map(gray, LbpParams())
        ub = uniform_lbp_map(gray, LbpParams())
        assert (ub.codes == table[raw.codes]).all()
        assert ub.codes.max() < 8 * 7 + 3

    def test_rotation_preserves_symmetric_bin_mass(self, rng):
        # binary block texture; rotating by 90 deg permutes run patterns but
        # keeps the all-0, all-1 and miscellaneous bins fixed
        blocks = rng.integers(0, 2, (8, 8)).astype(np.uint8) * 255
        gray = np.kron(blocks, np.ones((4, 4), dtype=np.uint8))
        params = LbpParams(neighbors=8, radius=1)
        a = uniform_lbp_map(gray, params).codes
        b = uniform_lbp_map(np.rot90(gray).copy(), params).codes
        for bin_id in (0, 57, 58):  # all-zeros bin, all-ones bin, misc
            assert (a == bin_id).sum() == (b == bin_id).sum()


def _single_region_map(h, w):
    return SuperpixelMap(labels=np.zeros((h, w), dtype=np.int32), k=1)


class TestChannelMoments:
    def test_constant_region(self):
        ch = np.full((8, 8), 7, dtype=np.uint8)
        row = channel_moments(ch, _single_region_map(8, 8))[0]
        assert row.tolist() == [7.0, 0.0, 0.0, 0.0, 0.0]

    def test_two_point_distribution(self):
        ch = np.zeros((8, 8), dtype=np.uint8)
        ch[:, 4:] = 255
        row = channel_moments(ch, _single_region_map(8, 8))[0]
        assert row[0] == pytest.approx(127.5)
        assert row[1] == pytest.approx(16256.25)
        assert row[2] == pytest.approx(0.0)
        assert row[3] == pytest.approx(1.0)
        assert row[4] == pytest.approx(1.0)

    def test_identity_under_zero_shift(self, rng):
        ch = rng.integers(0, 256, (16, 16)).astype(np.uint8)
        m = _single_region_map(16, 16)
        a = channel_moments(ch, m)
        b = channel_moments(ch + 0, m)
        assert (a == b).all()

    def test_oracle_equivalence(self, rng):
        for _ in range(25):
            h = w = 16
            k = int(rng.integers(2, 6))
            labels = rng.integers(0, k, (h, w)).astype(np.int32)
            for lab in range(k):  # ensure every label occurs
                labels[lab, 0] = lab
            ch = rng.integers(0, 256, (h, w)).astype(np.uint8)
            got = channel_moments(ch, SuperpixelMap(labels=labels, k=k))
            for lab in range(k):
                ref = oracles.moments_reference(ch[labels == lab])
                for col, expect in enumerate(ref):
                    scale = max(1.0, abs(expect))
                    assert abs(got[lab, col] - expect) / scale < 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            channel_moments(np.zeros((4, 4)), _single_region_map(5, 5))


class TestExtractFeatures:
    def test_constant_frame_rows_identical(self):
        frame = Frame(np.full((32, 32, 3), 120, dtype=np.uint8))
        labels = np.repeat(np.arange(4, dtype=np.int32), 8 * 32).reshape(32, 32)
        feats = extract_features(frame, SuperpixelMap(labels=labels, k=4))
        assert feats.shape == (4, N_FEATURES)
        assert np.allclose(feats, feats[0])

    def test_single_region_equals_whole_image_moments(self, rng):
        frame = random_frame(rng, 24)
        feats = extract_features(frame, _single_region_map(24, 24))
        assert feats.shape == (1, 35)
        gray_block = channel_moments(
            derive_channels(frame).gray, _single_region_map(24, 24)
        )
        assert np.allclose(feats[0, :5], gray_block[0])

    def test_red_blob_shifts_hue_mean(self, rng):
        # crimson rather than pure red: pure red and achromatic gray share
        # hue 0, so the blob must sit elsewhere on the hue circle
        px = np.full((64, 64, 3), (140, 140, 140), dtype=np.uint8)
        px[16:48, 16:48] = (200, 30, 60)
        frame = Frame(px)
        labels = np.zeros((64, 64), dtype=np.int32)
        labels[16:48, 16:48] = 1
        feats = extract_features(frame, SuperpixelMap(labels=labels, k=2))
        hue_mean_col = CHANNEL_ORDER.index("hue") * 5
        assert abs(feats[1, hue_mean_col] - feats[0, hue_mean_col]) > 10

    def test_feature_count_is_35_regardless_of_params(self, rng):
        frame = random_frame(rng, 32)
        m = _single_region_map(32, 32)
        for p, r in ((4, 1), (8, 1), (12, 2), (16, 2)):
            feats = extract_features(frame, m, LbpParams(neighbors=p, radius=r))
            assert feats.shape == (1, 35)


class TestLabelSuperpixels:
    def _map(self):
        labels = np.zeros((10, 10), dtype=np.int32)
        labels[:, 5:] = 1
        return SuperpixelMap(labels=labels, k=2)

    def test_empty_mask(self):
        sp = label_superpixels(self._map(), Mask(np.zeros((10, 10), dtype=np.uint8)))
        assert sp.labels.tolist() == [0, 0]
        assert sp.overlap.tolist() == [0.0, 0.0]

    def test_full_mask(self):
        sp = label_superpixels(self._map(), Mask(np.ones((10, 10), dtype=np.uint8)))
        assert sp.labels.tolist() == [1, 1]
        assert sp.overlap.tolist() == [1.0, 1.0]

    def test_half_overlap_is_inclusive(self):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[:5, :5] = 1  # half of region 0
        sp = label_superpixels(self._map(), Mask(mask), threshold=0.5)
        assert sp.overlap[0] == pytest.approx(0.5)
        assert sp.labels[0] == 1
        assert sp.labels[1] == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            label_superpixels(self._map(), Mask(np.zeros((4, 4), dtype=np.uint8)))


class TestFeatureCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        feats = rng.standard_normal((7, N_FEATURES))
        labels = rng.integers(0, 2, 7).astype(np.uint8)
        overlap = rng.random(7)
        save_features(tmp_path / "f.csv", feats, labels, overlap)
        f2, l2, o2 = load_features(tmp_path / "f.csv")
        assert (f2 == feats).all()
        assert (l2 == labels).all()
        assert (o2 == overlap).all()
