import numpy as np
import pytest
from scipy import ndimage

from plgan.flow import FramePair, compute_flow, flow_to_image


@pytest.fixture(scope="module")
def textured():
    rng = np.random.default_rng(0)
    tex = ndimage.gaussian_filter(rng.uniform(0, 255, (64, 64)), 2.0)
    return ((tex - tex.min()) / np.ptp(tex) * 255).astype(np.uint8)


class TestComputeFlow:
    def test_identical_frames_near_zero(self, textured):
        flow = compute_flow(textured, textured)
        assert np.max(np.abs(flow)) < 0.1

    def test_three_pixel_shift(self, textured):
        shifted = np.roll(textured, 3, axis=1)
        flow = compute_flow(textured, shifted)
        med = np.median(flow[8:-8, 8:-8].reshape(-1, 2), axis=0)
        assert abs(med[0] - 3.0) < 0.5
        assert abs(med[1]) < 0.5

    def test_vertical_shift(self, textured):
        shifted = np.roll(textured, 2, axis=0)
        flow = compute_flow(textured, shifted)
        med = np.median(flow[8:-8, 8:-8].reshape(-1, 2), axis=0)
        assert abs(med[1] - 2.0) < 0.5

    def test_uniform_frames_finite(self):
        uni = np.full((64, 64), 128, dtype=np.uint8)
        flow = compute_flow(uni, uni)
        assert np.all(np.isfinite(flow))

    def test_size_mismatch(self, textured):
        with pytest.raises(ValueError, match="sizes differ"):
            compute_flow(textured, textured[:32])


class TestFramePair:
    def test_dimension_check(self, textured):
        with pytest.raises(ValueError, match="dimensions"):
            FramePair(frame=textured, flow=np.zeros((32, 32, 2)))

    def test_nonfinite_flow_rejected(self, textured):
        bad = np.zeros((64, 64, 2))
        bad[0, 0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            FramePair(frame=textured, flow=bad)


class TestFlowToImage:
    def test_zero_flow_neutral_white(self):
        img = flow_to_image(np.zeros((8, 8, 2)))
        assert np.allclose(img, 1.0)

    def test_range_and_shape(self):
        rng = np.random.default_rng(1)
        flow = rng.normal(0, 4, size=(16, 16, 2))
        img = flow_to_image(flow)
        assert img.shape == (16, 16, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_direction_maps_to_distinct_colors(self):
        flows = {d: flow_to_image(np.full((4, 4, 2), v))
                 for d, v in {"+x": (3, 0), "-x": (-3, 0), "+y": (0, 3)}.items()}
        px = {d: img[0, 0] for d, img in flows.items()}
        assert not np.allclose(px["+x"], px["-x"])
        assert not np.allclose(px["+x"], px["+y"])

    def test_magnitude_clips(self):
        a = flow_to_image(np.full((4, 4, 2), 100.0), max_flow=8.0)
        b = flow_to_image(np.full((4, 4, 2), 1000.0), max_flow=8.0)
        assert np.allclose(a, b)
