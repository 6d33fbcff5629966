import numpy as np
import pytest
from scipy import ndimage

from objdistill.segmentation import (SuperpixelMap, gaussian_kernel, gaussian_smooth,
                                     segment)
from oracles import canonical_partition, fh_oracle, smooth_oracle


def test_smooth_constant_image():
    img = np.full((12, 10, 3), 0.37)
    np.testing.assert_allclose(gaussian_smooth(img, 1.3), img, atol=1e-15)


def test_smooth_impulse_center_is_kernel_peak():
    img = np.zeros((21, 21, 3))
    img[10, 10] = 1.0
    k = gaussian_kernel(0.8)
    assert gaussian_smooth(img, 0.8)[10, 10, 0] == pytest.approx(k[k.size // 2] ** 2, abs=1e-15)


def test_smooth_interior_impulse_preserves_energy():
    img = np.zeros((25, 25, 3))
    img[12, 12] = 1.0
    assert gaussian_smooth(img, 0.8).sum() == pytest.approx(3.0, abs=1e-6)


@pytest.mark.parametrize("sigma", [0.5, 0.8, 1.7])
def test_smooth_matches_direct_convolution(rng, sigma):
    img = rng.random((11, 9, 3))
    np.testing.assert_allclose(gaussian_smooth(img, sigma), smooth_oracle(img, sigma), atol=1e-12)


def test_smooth_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        gaussian_smooth(np.zeros((8, 8, 3)), 0.0)


def test_two_halves_give_two_segments(two_halves):
    sp = segment(two_halves, k=300, sigma=0.8, min_size=20)
    assert sp.count == 2
    assert np.all(sp.labels[:, :8] == sp.labels[0, 0])
    assert np.all(sp.labels[:, 8:] == sp.labels[0, 15])


def test_uniform_image_single_segment():
    assert segment(np.full((20, 30, 3), 0.5)).count == 1


def test_too_small_image_rejected():
    with pytest.raises(ValueError):
        segment(np.zeros((7, 20, 3)))


def _oracle_image(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((16, 16, 3))
    if seed % 2:  # blocky content gives larger, more varied segments
        blocks = rng.random((4, 4, 3)).repeat(4, axis=0).repeat(4, axis=1)
        img = 0.8 * blocks + 0.2 * img
    return img


CASES = [(seed, (30.0, 100.0, 300.0)[seed % 3], (1, 5, 10)[seed % 3]) for seed in range(20)]


@pytest.mark.parametrize("seed,k,min_size", CASES)
def test_partition_matches_transcription_oracle(seed, k, min_size):
    img = _oracle_image(seed)
    sp = segment(img, k=k, sigma=0.8, min_size=min_size)
    assert sp.labels.tolist() == canonical_partition(fh_oracle(img, k, 0.8, min_size))


def _check_map(sp: SuperpixelMap, min_size: int):
    labels = sp.labels
    assert sorted(np.unique(labels).tolist()) == list(range(sp.count))
    assert sp.sizes.sum() == labels.size
    assert sp.sizes.min() >= min_size
    eight = np.ones((3, 3), dtype=bool)
    for s in range(sp.count):
        _, n = ndimage.label(labels == s, structure=eight)
        assert n == 1, f"segment {s} is not connected"


@pytest.mark.parametrize("seed", range(6))
def test_partition_invariants(seed):
    rng = np.random.default_rng(100 + seed)
    img = ndimage.gaussian_filter(rng.random((40, 48, 3)), sigma=(2, 2, 0))
    img = (img - img.min()) / np.ptp(img)
    sp = segment(img, k=200, sigma=0.8, min_size=20)
    _check_map(sp, 20)


def test_deterministic(rng):
    img = rng.random((32, 32, 3))
    a = segment(img, k=150)
    b = segment(img.copy(), k=150)
    assert np.array_equal(a.labels, b.labels)


def test_superpixel_map_is_read_only(two_halves):
    sp = segment(two_halves)
    with pytest.raises(ValueError):
        sp.labels[0, 0] = 5
