import numpy as np
import pytest

from bias_field import BiasFieldConfig, apply_bias, draw_means, generate_bias_field
from image_core import ImageGrid


def test_single_kernel_peak_and_decay():
    field = generate_bias_field(30, 25, BiasFieldConfig(1, sigma=4.0, means=[(10, 12)]))
    assert field.data[12, 10] == pytest.approx(1.0)
    assert field.data[12, 14] == pytest.approx(np.exp(-0.5))
    assert field.data[12, 20] < field.data[12, 14]


def test_two_identical_kernels_equal_one():
    one = generate_bias_field(20, 20, BiasFieldConfig(1, sigma=3.0, means=[(5.5, 7.25)]))
    two = generate_bias_field(20, 20, BiasFieldConfig(2, sigma=3.0, means=[(5.5, 7.25), (5.5, 7.25)]))
    np.testing.assert_allclose(two.data, one.data, rtol=0, atol=1e-15)


def test_default_sigma_is_a_sixteenth_of_width():
    assert BiasFieldConfig(1).resolve_sigma(218) == pytest.approx(13.625)


def test_zero_kernels_is_zero_field():
    field = generate_bias_field(12, 9, BiasFieldConfig(0))
    assert field.shape == (9, 12)
    assert np.all(field.data == 0.0)


def test_means_count_must_match():
    with pytest.raises(ValueError):
        generate_bias_field(10, 10, BiasFieldConfig(2, means=[(1, 1)]))
    with pytest.raises(ValueError):
        generate_bias_field(10, 10, BiasFieldConfig(-1))


def test_seeded_means_are_reproducible():
    a = generate_bias_field(40, 30, BiasFieldConfig(3, seed=42))
    b = generate_bias_field(40, 30, BiasFieldConfig(3, seed=42))
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, generate_bias_field(40, 30, BiasFieldConfig(3, seed=43)).data)

    means = draw_means(40, 30, 50, seed=1)
    assert all(0 <= x <= 39 and 0 <= y <= 29 for x, y in means)


def test_field_is_bounded_and_permutation_invariant():
    means = [(3.3, 4.1), (17.0, 2.5), (9.9, 14.2)]
    a = generate_bias_field(20, 18, BiasFieldConfig(3, sigma=2.5, means=means))
    b = generate_bias_field(20, 18, BiasFieldConfig(3, sigma=2.5, means=means[::-1]))
    assert a.data.max() <= 1.0
    np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-15)


def test_apply_bias(rng):
    img = ImageGrid(rng.random((6, 7)))
    assert np.array_equal(apply_bias(img, ImageGrid(np.zeros((6, 7)))).data, img.data)
    np.testing.assert_allclose(apply_bias(img, ImageGrid(np.full((6, 7), 0.3))).data, img.data + 0.3)

    field = generate_bias_field(7, 6, BiasFieldConfig(2, sigma=2.0, seed=0))
    restored = apply_bias(img, field).data - field.data
    np.testing.assert_allclose(restored, img.data, rtol=0, atol=1e-15)


def test_apply_bias_is_unclamped():
    out = apply_bias(ImageGrid(np.full((2, 2), 0.9)), ImageGrid(np.full((2, 2), 0.5)))
    np.testing.assert_allclose(out.data, 1.4)


def test_apply_bias_size_mismatch():
    with pytest.raises(ValueError):
        apply_bias(ImageGrid(np.zeros((3, 3))), ImageGrid(np.zeros((3, 4))))
