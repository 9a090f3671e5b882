import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildloop.errors import DegenerateBox, NoPixels
from wildloop.imaging import (
    AugmentationPolicy,
    CropConfig,
    CropRecord,
    apply_contrast,
    apply_hflip,
    apply_rotation,
    augment,
    crop_and_resize,
)
from wildloop.ingest import Detection


def full_box(conf=0.9):
    return Detection((0.0, 0.0, 1.0, 1.0), conf)


def checker(side):
    img = np.zeros((side, side, 3), dtype=np.uint8)
    img[::2, ::2] = 255
    img[1::2, 1::2] = 128
    return img


class TestCropAndResize:
    def test_nearest_2x2_to_4x4_block_replication(self):
        # Hand-computed nearest index map: floor((i+0.5)*2/4) = (0,0,1,1),
        # so each source pixel fills a 2x2 block.
        src = np.zeros((2, 2, 3), dtype=np.uint8)
        src[0, 0] = (10, 20, 30)
        src[0, 1] = (40, 50, 60)
        src[1, 0] = (70, 80, 90)
        src[1, 1] = (100, 110, 120)
        crop = crop_and_resize(src, full_box(), CropConfig(side=8, resize_filter="nearest"))
        out = crop.pixels
        expected = np.zeros((4, 4, 3), dtype=np.uint8)
        for bi in range(2):
            for bj in range(2):
                expected[2 * bi : 2 * bi + 2, 2 * bj : 2 * bj + 2] = src[bi, bj]
        # side=8 minimum: build the expected map at 8 too (4x4 blocks)
        expected8 = np.zeros((8, 8, 3), dtype=np.uint8)
        for bi in range(2):
            for bj in range(2):
                expected8[4 * bi : 4 * bi + 4, 4 * bj : 4 * bj + 4] = src[bi, bj]
        assert np.array_equal(out, expected8)

    @pytest.mark.parametrize("filt", ["nearest", "bilinear"])
    def test_identity_full_box(self, filt):
        src = checker(32)
        crop = crop_and_resize(src, full_box(), CropConfig(side=32, resize_filter=filt))
        assert np.array_equal(crop.pixels, src)

    def test_degenerate_box(self):
        src = checker(16)
        with pytest.raises(DegenerateBox):
            crop_and_resize(src, Detection((0.5, 0.5, 0.001, 0.5), 0.9), CropConfig(side=8))

    def test_output_shape_fixed(self):
        src = checker(40)
        for bbox in [(0.0, 0.0, 0.2, 0.9), (0.7, 0.1, 0.25, 0.2), (0.0, 0.4, 1.0, 0.1)]:
            crop = crop_and_resize(src, Detection(bbox, 0.8), CropConfig(side=16))
            assert crop.pixels.shape == (16, 16, 3)

    def test_value_range_preserved(self):
        src = checker(17)
        crop = crop_and_resize(src, Detection((0.1, 0.2, 0.65, 0.3), 0.8), CropConfig(side=11))
        assert crop.pixels.dtype == np.uint8
        assert crop.pixels.min() >= 0 and crop.pixels.max() <= 255

    def test_crop_id_and_confidence(self):
        src = checker(8)
        crop = crop_and_resize(
            src, full_box(0.77), CropConfig(side=8), image_id="imgX", box_index=2
        )
        assert crop.crop_id == "imgX#2#0"
        assert crop.detector_confidence == 0.77

    @given(
        x=st.floats(min_value=0.0, max_value=0.6),
        y=st.floats(min_value=0.0, max_value=0.6),
        w=st.floats(min_value=0.05, max_value=0.4),
        h=st.floats(min_value=0.05, max_value=0.4),
    )
    @settings(max_examples=60, deadline=None)
    def test_square_expansion_center_shift(self, x, y, w, h):
        # Away from borders the expanded square keeps the box center to
        # within half a source pixel per axis.
        size = 200
        img_w = img_h = size
        left = int(np.floor(x * img_w + 0.5))
        right = int(np.floor((x + w) * img_w + 0.5))
        top = int(np.floor(y * img_h + 0.5))
        bottom = int(np.floor((y + h) * img_h + 0.5))
        if right - left <= 0 or bottom - top <= 0:
            return
        side = max(right - left, bottom - top)
        ew = side - (right - left)
        eh = side - (bottom - top)
        new_cx = (left - ew // 2 + right + (ew - ew // 2)) / 2
        new_cy = (top - eh // 2 + bottom + (eh - eh // 2)) / 2
        assert abs(new_cx - (left + right) / 2) <= 0.5
        assert abs(new_cy - (top + bottom) / 2) <= 0.5

    def test_border_clamp_pads_by_edge_replication(self):
        # A tall sliver at the left edge must expand into a square by
        # replicating the border column.
        src = checker(20)
        src[:, 0] = (7, 7, 7)
        crop = crop_and_resize(
            src, Detection((0.0, 0.0, 0.1, 1.0), 0.9), CropConfig(side=20, resize_filter="nearest")
        )
        assert crop.pixels.shape == (20, 20, 3)
        assert np.array_equal(crop.pixels[:, 0], np.broadcast_to((7, 7, 7), (20, 3)))


class TestAugment:
    def make_crop(self, side=16):
        return CropRecord(
            crop_id="img1#0#0",
            image_id="img1",
            box_index=0,
            detector_confidence=0.9,
            pixels=checker(side),
        )

    def test_k_zero_empty(self):
        assert augment(self.make_crop(), AugmentationPolicy(), 0) == []

    def test_flip_involution(self):
        crop = self.make_crop()
        assert np.array_equal(apply_hflip(apply_hflip(crop.pixels)), crop.pixels)

    def test_identity_parameters(self):
        crop = self.make_crop()
        assert np.array_equal(apply_contrast(crop.pixels, 1.0), crop.pixels)
        assert np.array_equal(apply_rotation(crop.pixels, 0.0), crop.pixels)

    def test_determinism(self):
        crop = self.make_crop()
        policy = AugmentationPolicy(seed=5)
        a = augment(crop, policy, 3)
        b = augment(crop, policy, 3)
        assert [v.aug_descriptor for v in a] == [v.aug_descriptor for v in b]
        for va, vb in zip(a, b):
            assert np.array_equal(va.pixels, vb.pixels)

    def test_call_order_does_not_matter(self):
        crop = self.make_crop()
        other = CropRecord(
            crop_id="img2#1#0", image_id="img2", box_index=1,
            detector_confidence=0.5, pixels=checker(16),
        )
        policy = AugmentationPolicy(seed=5)
        first = augment(crop, policy, 2)
        augment(other, policy, 3)
        second = augment(crop, policy, 2)
        for va, vb in zip(first, second):
            assert va.aug_descriptor == vb.aug_descriptor
            assert np.array_equal(va.pixels, vb.pixels)

    def test_descriptor_and_ids(self):
        variants = augment(self.make_crop(), AugmentationPolicy(seed=1), 2)
        assert [v.crop_id for v in variants] == ["img1#0#1", "img1#0#2"]
        for v in variants:
            assert v.aug_descriptor
            ops = v.aug_descriptor.split("|")
            assert 1 <= len(ops) <= 3
            assert len(set(o.split("(")[0] for o in ops)) == len(ops)

    def test_k_above_policy_maximum(self):
        with pytest.raises(ValueError):
            augment(self.make_crop(), AugmentationPolicy(max_augmentations_per_crop=2), 3)

    def test_no_pixels(self):
        crop = CropRecord(
            crop_id="img1#0#0", image_id="img1", box_index=0, detector_confidence=0.9
        )
        with pytest.raises(NoPixels):
            augment(crop, AugmentationPolicy(), 1)

    def test_contrast_clamps_to_range(self):
        bright = np.full((8, 8, 3), 250, dtype=np.uint8)
        out = apply_contrast(bright, 1.3)
        assert out.max() <= 255 and out.min() >= 0

    def test_seed_changes_variants(self):
        crop = self.make_crop()
        a = augment(crop, AugmentationPolicy(seed=1), 3)
        b = augment(crop, AugmentationPolicy(seed=2), 3)
        assert [v.aug_descriptor for v in a] != [v.aug_descriptor for v in b]
