import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowsentry.data_io import (
    CORRUPTION_KINDS,
    CorruptionSpec,
    Dataset,
    corrupt,
    parse_idx,
    serialize_idx,
    split,
)
from flowsentry.errors import FormatError, InvalidSpec


def hand_built_image_idx():
    # magic 0x00000803, n=2, rows=2, cols=2, then 8 payload bytes
    header = struct.pack(">IIII", 0x00000803, 2, 2, 2)
    payload = bytes([0, 51, 102, 153, 204, 255, 10, 20])
    return header + payload


class TestParseIdx:
    def test_hand_built_fixture(self):
        out = parse_idx(hand_built_image_idx())
        assert out.shape == (2, 2, 2)
        # independently computed: byte / 255
        expected = np.array([0, 51, 102, 153, 204, 255, 10, 20]).reshape(2, 2, 2) / 255.0
        np.testing.assert_allclose(out, expected, atol=1e-7)

    def test_wrong_magic(self):
        bad = struct.pack(">I", 0x00000802) + b"\x00" * 8
        with pytest.raises(FormatError):
            parse_idx(bad)

    def test_pixel_255_scales_to_exactly_one(self):
        out = parse_idx(hand_built_image_idx())
        assert out[1, 0, 1] == 1.0

    def test_truncated_payload_reports_offset(self):
        data = hand_built_image_idx()[:-3]
        with pytest.raises(FormatError, match="byte"):
            parse_idx(data)

    def test_truncated_header(self):
        with pytest.raises(FormatError):
            parse_idx(b"\x00\x00")

    def test_labels_stream(self):
        data = struct.pack(">II", 0x00000801, 3) + bytes([7, 0, 9])
        labels = parse_idx(data)
        assert labels.tolist() == [7, 0, 9]
        assert labels.dtype == np.int64

    def test_round_trip_bit_exact(self):
        raw = hand_built_image_idx()
        assert serialize_idx(parse_idx(raw)) == raw
        labels_raw = struct.pack(">II", 0x00000801, 3) + bytes([7, 0, 9])
        assert serialize_idx(parse_idx(labels_raw)) == labels_raw


class TestCorrupt:
    def test_severity_zero_identity(self, digits_small):
        for kind in CORRUPTION_KINDS:
            out = corrupt(digits_small, CorruptionSpec(kind, 0, seed=3))
            np.testing.assert_array_equal(out.images, digits_small.images)

    def test_impulse_deterministic(self, digits_small):
        spec = CorruptionSpec("impulse_noise", 5, seed=11)
        a = corrupt(digits_small, spec)
        b = corrupt(digits_small, spec)
        np.testing.assert_array_equal(a.images, b.images)

    def test_translate_hot_pixel(self):
        img = np.zeros((1, 5, 5), dtype=np.float32)
        img[0, 2, 1] = 1.0
        ds = Dataset(img, name="hot")
        out = corrupt(ds, CorruptionSpec("translate", 2, seed=0))
        expected = np.zeros((5, 5), dtype=np.float32)
        expected[2, 3] = 1.0  # moved exactly two columns, vacated region zero
        np.testing.assert_array_equal(out.images[0], expected)

    def test_severity_out_of_range(self):
        with pytest.raises(InvalidSpec):
            CorruptionSpec("translate", 6, seed=0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidSpec):
            CorruptionSpec("fog", 1, seed=0)

    @given(kind=st.sampled_from(CORRUPTION_KINDS), severity=st.integers(0, 5),
           seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_shape_labels_range_preserved(self, kind, severity, seed):
        rng = np.random.default_rng(99)
        ds = Dataset(rng.random((12, 9, 9)).astype(np.float32),
                     rng.integers(0, 10, 12), "prop")
        out = corrupt(ds, CorruptionSpec(kind, severity, seed))
        assert out.images.shape == ds.images.shape
        np.testing.assert_array_equal(out.labels, ds.labels)
        assert out.images.min() >= 0.0 and out.images.max() <= 1.0

    def test_noise_delta_monotone_in_severity(self, digits_small):
        for kind in ("gaussian_noise", "impulse_noise"):
            deltas = []
            for severity in range(6):
                out = corrupt(digits_small, CorruptionSpec(kind, severity, seed=5))
                deltas.append(np.abs(out.images - digits_small.images).mean())
            assert all(b >= a for a, b in zip(deltas, deltas[1:]))


class TestSplit:
    def balanced_ten(self):
        rng = np.random.default_rng(0)
        return Dataset(rng.random((10, 4, 4)).astype(np.float32),
                       np.arange(10) % 5, "mini")

    def test_stratified_counts(self):
        ds = self.balanced_ten()
        train, test = split(ds, 6, 4, seed=1)
        assert len(train) == 6 and len(test) == 4
        for part, total in ((train, 6), (test, 4)):
            counts = np.bincount(part.labels, minlength=5)
            expected = total / 5
            assert all(abs(c - expected) <= 1 for c in counts)

    def test_disjoint(self):
        rng = np.random.default_rng(2)
        ds = Dataset(rng.random((30, 3, 3)).astype(np.float32),
                     rng.integers(0, 10, 30), "d")
        train, test = split(ds, 18, 12, seed=7)
        train_keys = {im.tobytes() for im in train.images}
        test_keys = {im.tobytes() for im in test.images}
        assert not train_keys & test_keys

    def test_deterministic(self):
        ds = self.balanced_ten()
        a = split(ds, 6, 4, seed=9)
        b = split(ds, 6, 4, seed=9)
        np.testing.assert_array_equal(a[0].images, b[0].images)
        np.testing.assert_array_equal(a[1].labels, b[1].labels)

    def test_oversubscribed(self):
        with pytest.raises(InvalidSpec):
            split(self.balanced_ten(), 8, 4, seed=0)
