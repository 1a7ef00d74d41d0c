import numpy as np
import pytest

from ffd_transform import (
    DisplacementField,
    bspline_basis,
    dense_displacement,
    displacement_at,
    fit_to_lattice,
    lattice_schedule,
    load_transform,
    make_uniform_grid,
    perturb_grid,
    refine_grid,
    save_transform,
    transfer,
    warp_image,
)
from image_core import ImageGrid


def _constant_transform(width, height, n, dx, dy):
    t = make_uniform_grid(width, height, n, n)
    offsets = np.zeros((n, n, 2))
    offsets[..., 0] = dx
    offsets[..., 1] = dy
    return t.with_offsets(offsets)


def test_uniform_grid_spacing():
    t = make_uniform_grid(218, 181, 14, 14)
    assert t.spacing_x == pytest.approx(218 / 11)
    assert t.spacing_y == pytest.approx(181 / 11)
    assert np.all(dense_displacement(t).vectors == 0.0)


def test_lattice_needs_four_points():
    with pytest.raises(ValueError):
        make_uniform_grid(20, 20, 3, 5)


def test_partition_of_unity():
    u = np.linspace(0.0, 1.0, 1001, endpoint=False)
    assert np.max(np.abs(bspline_basis(u).sum(axis=0) - 1.0)) <= 1e-12


def test_constant_offsets_give_constant_displacement():
    field = dense_displacement(_constant_transform(40, 30, 6, 1.25, -0.5)).vectors
    np.testing.assert_allclose(field[..., 0], 1.25, atol=1e-12)
    np.testing.assert_allclose(field[..., 1], -0.5, atol=1e-12)
    assert displacement_at(_constant_transform(40, 30, 6, 1.25, -0.5), 17.3, 8.9) == pytest.approx((1.25, -0.5))


def test_single_control_point_support():
    t = make_uniform_grid(60, 60, 10, 10)
    offsets = np.zeros((10, 10, 2))
    offsets[5, 4] = (3.0, 0.0)
    t = t.with_offsets(offsets)
    magnitude = dense_displacement(t).magnitude()

    y, x = np.unravel_index(np.argmax(magnitude), magnitude.shape)
    assert abs(x - (4 - 1) * t.spacing_x) <= 1.0
    assert abs(y - (5 - 1) * t.spacing_y) <= 1.0

    # nothing moves two spacings or more away from the control point
    far_x = np.abs(np.arange(60) - 3 * t.spacing_x) >= 2 * t.spacing_x
    far_y = np.abs(np.arange(60) - 4 * t.spacing_y) >= 2 * t.spacing_y
    assert np.all(magnitude[:, far_x] == 0.0)
    assert np.all(magnitude[far_y, :] == 0.0)


def test_perturb_grid():
    t = make_uniform_grid(50, 40, 14, 14)
    assert np.all(perturb_grid(t, 0.0, seed=1).offsets == 0.0)

    p = perturb_grid(t, 6.0, seed=1)
    assert np.all(np.abs(p.offsets) <= 6.0)
    assert np.array_equal(p.offsets, perturb_grid(t, 6.0, seed=1).offsets)
    with pytest.raises(ValueError):
        perturb_grid(t, -1.0, seed=1)

    field = dense_displacement(p).vectors
    assert np.all(np.abs(field) <= 6.0 + 1e-12)
    assert np.array_equal(field, dense_displacement(p).vectors)


def test_identity_warp_is_exact(phantom):
    t = make_uniform_grid(phantom.width, phantom.height, 6, 6)
    assert np.array_equal(warp_image(phantom, t).data, phantom.data)


def test_translation_of_a_ramp():
    ramp = ImageGrid(np.tile(np.arange(20, dtype=float) / 19.0, (10, 1)))
    warped = warp_image(ramp, _constant_transform(20, 10, 5, 1.0, 0.0))
    np.testing.assert_allclose(warped.data[:, :-1], ramp.data[:, 1:], atol=1e-12)


def test_warp_of_constant_image():
    img = ImageGrid(np.full((16, 16), 0.42))
    warped = warp_image(img, perturb_grid(make_uniform_grid(16, 16, 6, 6), 6.0, seed=3))
    np.testing.assert_allclose(warped.data, 0.42, atol=1e-15)


def test_warp_rejects_other_domains(phantom):
    with pytest.raises(ValueError):
        warp_image(phantom, make_uniform_grid(phantom.width + 1, phantom.height, 6, 6))


def test_refine_grid_preserves_field():
    t = perturb_grid(make_uniform_grid(37, 29, 5, 5), 3.0, seed=8)
    fine = refine_grid(t)
    assert (fine.nx, fine.ny) == (7, 7)
    assert np.max(np.abs(dense_displacement(fine).vectors - dense_displacement(t).vectors)) <= 1e-6

    identity = refine_grid(make_uniform_grid(37, 29, 5, 5))
    assert np.all(identity.offsets == 0.0)


def test_fit_to_lattice_recovers_offsets():
    t = perturb_grid(make_uniform_grid(48, 40, 8, 8), 4.0, seed=2)
    fitted = fit_to_lattice(dense_displacement(t), 8, 8)
    np.testing.assert_allclose(fitted.offsets, t.offsets, atol=1e-8)


def test_transfer_scales_offsets_between_levels():
    coarse = _constant_transform(12, 10, 5, 1.5, -0.75)
    full = transfer(coarse, 24, 20, 8, 8, src_factor=2, dst_factor=1)
    field = dense_displacement(full).vectors
    np.testing.assert_allclose(field[..., 0], 3.0, atol=1e-9)
    np.testing.assert_allclose(field[..., 1], -1.5, atol=1e-9)


def test_transfer_to_a_finer_lattice_on_smooth_fields():
    gy, gx = np.mgrid[0:60, 0:60].astype(float)
    quadratic = np.stack([0.001 * (gx - 30) ** 2 - 0.5, 0.02 * gy + 0.0005 * gx * gy], axis=-1)
    coarse = fit_to_lattice(DisplacementField(quadratic), 5, 5)
    finer = transfer(coarse, 60, 60, 8, 8)
    assert np.max(np.abs(dense_displacement(finer).vectors - quadratic)) <= 1e-6

    t = perturb_grid(make_uniform_grid(60, 60, 5, 5), 3.0, seed=4)
    subdivided = transfer(t, 60, 60, 7, 7)
    assert np.max(np.abs(dense_displacement(subdivided).vectors - dense_displacement(t).vectors)) <= 1e-6


def test_transfer_doubling_lattice_uses_knot_insertion():
    t = perturb_grid(make_uniform_grid(37, 29, 6, 5), 3.0, seed=5)
    doubled = transfer(t, 37, 29, 9, 7)
    np.testing.assert_array_equal(doubled.offsets, refine_grid(t).offsets)

    # a different domain still goes through the least-squares fit
    rescaled = transfer(t, 74, 58, 9, 7, src_factor=2, dst_factor=1)
    assert (rescaled.image_width, rescaled.image_height) == (74, 58)


def test_lattice_schedule():
    assert lattice_schedule(3, 14) == [5, 8, 14]
    assert lattice_schedule(1, 14) == [14]
    with pytest.raises(ValueError):
        lattice_schedule(0, 14)


def test_transform_json_file(tmp_path):
    t = perturb_grid(make_uniform_grid(30, 20, 6, 5), 2.0, seed=0)
    path = tmp_path / "t.json"
    save_transform(t, str(path))
    back = load_transform(str(path))
    assert (back.nx, back.ny, back.image_width, back.image_height) == (6, 5, 30, 20)
    assert np.array_equal(back.offsets, t.offsets)


def test_displacement_field_validation():
    with pytest.raises(ValueError):
        DisplacementField(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        DisplacementField(np.full((2, 2, 2), np.inf))
