import numpy as np
import pytest

import registration
from errors import NumericalError
from ffd_transform import dense_displacement, make_uniform_grid, perturb_grid, warp_image
from image_core import ImageGrid, make_phantom
from metrics import converged, t_rmse
from registration import (
    OptimizerOptions,
    optimize_level,
    register,
    register_afr_emd,
    register_intensity_hier,
    register_lr_emd,
)
from similarity import MeasureKind, cost

SSD = MeasureKind.parse("ssd")
FAST = OptimizerOptions(max_iters=20)


def _identity_error(result, width, height):
    identity = dense_displacement(make_uniform_grid(width, height, result.transform.nx, result.transform.ny))
    return t_rmse(identity, dense_displacement(result.transform))


def test_optimizer_options_validation():
    with pytest.raises(ValueError):
        OptimizerOptions(max_iters=0)
    with pytest.raises(ValueError):
        OptimizerOptions(shrink=1.0)
    with pytest.raises(ValueError):
        OptimizerOptions(fd_step=-0.5)


def test_identity_stays_identity(smooth_image):
    init = make_uniform_grid(smooth_image.width, smooth_image.height, 6, 6)
    out = optimize_level(smooth_image, smooth_image, init, SSD)
    assert np.all(np.abs(out.offsets) <= FAST.initial_step)
    assert cost(SSD, smooth_image, warp_image(smooth_image, out)) <= cost(SSD, smooth_image, smooth_image)


def test_recovers_a_translation(smooth_image):
    shift = make_uniform_grid(smooth_image.width, smooth_image.height, 5, 5)
    offsets = np.zeros((5, 5, 2))
    offsets[..., 0] = 2.0
    shift = shift.with_offsets(offsets)
    fixed = warp_image(smooth_image, shift)

    init = make_uniform_grid(smooth_image.width, smooth_image.height, 5, 5)
    out = optimize_level(fixed, smooth_image, init, SSD, OptimizerOptions(max_iters=200))
    field = dense_displacement(out).vectors[6:-6, 6:-6]
    assert np.mean(np.hypot(field[..., 0] - 2.0, field[..., 1])) < 0.5


def test_flat_cost_returns_init():
    flat = ImageGrid(np.full((24, 24), 0.5))
    init = perturb_grid(make_uniform_grid(24, 24, 5, 5), 2.0, seed=0)
    out = optimize_level(flat, flat, init, SSD)
    assert np.array_equal(out.offsets, init.offsets)


def test_non_finite_initial_cost(monkeypatch, smooth_image):
    monkeypatch.setattr(registration, "make_cost_function", lambda measure, fixed: lambda moving: float("nan"))
    init = make_uniform_grid(smooth_image.width, smooth_image.height, 5, 5)
    with pytest.raises(NumericalError):
        optimize_level(smooth_image, smooth_image, init, SSD)


def test_domain_mismatch(smooth_image):
    with pytest.raises(ValueError):
        optimize_level(smooth_image, smooth_image, make_uniform_grid(10, 10, 5, 5), SSD)


@pytest.mark.parametrize("method", ["intensity", "lr-emd", "afr-emd"])
@pytest.mark.parametrize("measure", ["ssd", "cc", "rc", "mi"])
def test_pipelines_keep_identical_images_aligned(method, measure, smooth_image):
    result = register(method, smooth_image, smooth_image, MeasureKind.parse(measure), levels=3, opts=FAST, grid_size=6)
    assert result.method == method
    assert (result.transform.nx, result.transform.image_width) == (6, smooth_image.width)
    assert _identity_error(result, smooth_image.width, smooth_image.height) < 0.5


def test_cost_traces_never_increase(smooth_image):
    ref = warp_image(smooth_image, perturb_grid(make_uniform_grid(48, 48, 6, 6), 2.0, seed=5))
    result = register_intensity_hier(ref, smooth_image, 3, SSD, FAST, grid_size=6)
    assert len(result.cost_traces) == 3
    assert result.lattice_sizes == [5, 5, 6]
    assert len(result.warm_start_costs) == 2
    for trace, iters in zip(result.cost_traces, result.iterations):
        assert len(trace) == iters + 1
        assert all(b < a for a, b in zip(trace, trace[1:]))


def test_pipelines_are_deterministic(smooth_image):
    ref = warp_image(smooth_image, perturb_grid(make_uniform_grid(48, 48, 6, 6), 2.0, seed=6))
    a = register_afr_emd(ref, smooth_image, 2, SSD, FAST, grid_size=6)
    b = register_afr_emd(ref, smooth_image, 2, SSD, FAST, grid_size=6)
    assert np.array_equal(a.transform.offsets, b.transform.offsets)
    assert a.cost_traces == b.cost_traces


def test_single_level_lr_emd(smooth_image):
    result = register_lr_emd(smooth_image, smooth_image, 1, SSD, FAST, grid_size=6)
    assert result.lattice_sizes == [6]
    assert len(result.cost_traces) == 1


def test_register_argument_errors(smooth_image):
    with pytest.raises(ValueError):
        register("demons", smooth_image, smooth_image, SSD)
    with pytest.raises(ValueError):
        register_intensity_hier(smooth_image, ImageGrid(np.zeros((10, 10))), 3, SSD)
    with pytest.raises(ValueError):
        register_lr_emd(smooth_image, smooth_image, 0, SSD)


HALF_SCALE_RUNS = 15


@pytest.fixture(scope="module")
def no_bias_runs():
    """Every pipeline on the same 15 perturbations of the half-scale phantom, MI, no bias."""
    phantom = make_phantom(109, 90, seed=0)
    mi = MeasureKind.parse("mi")
    runs = {method: [] for method in registration.METHODS}
    for seed in range(HALF_SCALE_RUNS):
        truth = perturb_grid(make_uniform_grid(109, 90, 14, 14), 6.0, seed=seed)
        ref = warp_image(phantom, truth)
        for method in registration.METHODS:
            result = register(method, ref, phantom, mi, levels=3)
            error = t_rmse(dense_displacement(truth), dense_displacement(result.transform))
            runs[method].append((error, result))
    return runs


@pytest.mark.slow
@pytest.mark.parametrize("method", ["intensity", "lr-emd", "afr-emd"])
def test_half_scale_recovery(method, no_bias_runs):
    hits = sum(converged(error) for error, _ in no_bias_runs[method])
    assert hits >= 13


@pytest.mark.slow
@pytest.mark.parametrize("method", ["intensity", "lr-emd", "afr-emd"])
def test_warm_start_beats_identity(method, no_bias_runs):
    dominated = [
        all(warm <= cold for warm, cold in result.warm_start_costs)
        for _, result in no_bias_runs[method]
    ]
    assert sum(dominated) >= 0.8 * HALF_SCALE_RUNS


@pytest.mark.slow
def test_afr_emd_matches_intensity_without_bias(no_bias_runs):
    afr = np.mean([error for error, _ in no_bias_runs["afr-emd"]])
    baseline = np.mean([error for error, _ in no_bias_runs["intensity"]])
    assert abs(afr - baseline) <= 0.25 * baseline


@pytest.mark.slow
def test_identity_at_half_scale(half_scale_phantom):
    for method in ("intensity", "lr-emd", "afr-emd"):
        result = register(method, half_scale_phantom, half_scale_phantom, MeasureKind.parse("mi"), levels=3)
        assert _identity_error(result, 109, 90) < 0.5
