import math

import numpy as np
import pytest

from ffd_transform import DisplacementField
from image_core import ImageGrid
from metrics import converged, i_rmse, pearson, relative_improvement, score_trial, t_rmse


def _field(vectors):
    return DisplacementField(np.asarray(vectors, dtype=float))


def test_t_rmse_known_values():
    zero = _field(np.zeros((4, 6, 2)))
    assert t_rmse(zero, zero) == 0.0

    constant = np.zeros((4, 6, 2))
    constant[..., 0] = 3.0
    constant[..., 1] = 4.0
    assert t_rmse(zero, _field(constant)) == 5.0

    half = np.zeros((4, 6, 2))
    half[:2, :, 0] = 1.0
    assert t_rmse(zero, _field(half)) == pytest.approx(math.sqrt(0.5))


def test_t_rmse_dimension_mismatch():
    with pytest.raises(ValueError):
        t_rmse(_field(np.zeros((4, 6, 2))), _field(np.zeros((4, 5, 2))))


def test_t_rmse_is_a_metric(rng):
    a, b, c = (_field(rng.standard_normal((8, 9, 2))) for _ in range(3))
    assert t_rmse(a, b) == pytest.approx(t_rmse(b, a))
    assert t_rmse(a, c) <= t_rmse(a, b) + t_rmse(b, c) + 1e-12
    assert t_rmse(a, b) > 0.0


def test_rmse_scales_linearly(rng):
    diff = rng.standard_normal((5, 5, 2))
    zero = _field(np.zeros((5, 5, 2)))
    assert t_rmse(zero, _field(3.0 * diff)) == pytest.approx(3.0 * t_rmse(zero, _field(diff)))

    img = rng.random((5, 5))
    base = ImageGrid(np.zeros((5, 5)))
    assert i_rmse(base, ImageGrid(2.5 * img)) == pytest.approx(2.5 * i_rmse(base, ImageGrid(img)))


def test_i_rmse_known_values(rng):
    img = ImageGrid(rng.random((6, 6)))
    other = ImageGrid(rng.random((6, 6)))
    assert i_rmse(img, img) == 0.0
    assert i_rmse(ImageGrid(np.zeros((3, 3))), ImageGrid(np.full((3, 3), 0.1))) == pytest.approx(0.1)
    assert i_rmse(img, other) == i_rmse(other, img)
    with pytest.raises(ValueError):
        i_rmse(img, ImageGrid(np.zeros((6, 5))))


def test_converged_is_strict():
    assert converged(3.9)
    assert not converged(4.0)
    assert converged(0.0)
    with pytest.raises(ValueError):
        converged(-1.0)


def test_score_trial():
    zero = _field(np.zeros((3, 3, 2)))
    img = ImageGrid(np.zeros((3, 3)))
    score = score_trial(zero, zero, img, ImageGrid(np.full((3, 3), 0.2)))
    assert score.t_rmse == 0.0
    assert score.i_rmse == pytest.approx(0.2)
    assert score.converged


def test_pearson(rng):
    a = rng.random(50)
    assert pearson(a, 2 * a + 1) == pytest.approx(1.0)
    assert pearson(a, -a) == pytest.approx(-1.0)
    assert pearson(a, np.ones(50)) == 0.0
    assert pearson(ImageGrid(a.reshape(5, 10)), a.reshape(5, 10)) == pytest.approx(1.0)


def test_relative_improvement():
    assert relative_improvement(1.054, 2.205) == pytest.approx((2.205 - 1.054) / 2.205 * 100)
    assert math.isnan(relative_improvement(1.0, float("nan")))
    assert math.isnan(relative_improvement(1.0, 0.0))
