"""
FFD registration: a finite-difference gradient-descent optimizer and the three
hierarchical pipelines built on it.

    intensity  downsampling pyramid on raw intensities (baseline)
    lr-emd     one level per IMF, lowest-frequency IMF first, full resolution
    afr-emd    downsampling pyramid on the average IMF feature-map

Every pipeline warps the floating image onto the reference and returns the
transform on the finest lattice of the full-resolution image.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

import settings
from bemd import average_feature_map, decompose
from errors import NumericalError
from ffd_transform import (
    FfdTransform,
    field_from_bases,
    lattice_schedule,
    make_uniform_grid,
    transfer,
)
from image_core import downsample, normalize, pyramid_factors, require_same_size, sample_array
from similarity import MeasureKind, make_cost_function

logger = logging.getLogger(__name__)

METHODS = ("intensity", "lr-emd", "afr-emd")


@dataclass(frozen=True)
class OptimizerOptions:
    """Gradient-descent settings; lengths are in pixels of the level being optimized."""

    max_iters: int = 100
    initial_step: float = 2.0
    shrink: float = 0.5
    min_step: float = 1e-3
    fd_step: float = 0.5
    tolerance: float = 1e-6

    def __post_init__(self):
        for name in ("max_iters", "initial_step", "min_step", "fd_step", "tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"optimizer option {name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink factor must lie in (0, 1), got {self.shrink}")


@dataclass
class RegistrationResult:
    transform: FfdTransform
    method: str
    cost_traces: List[List[float]] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)
    lattice_sizes: List[int] = field(default_factory=list)
    # (cost with the warm-started transform, cost with the identity) at each level after the first
    warm_start_costs: List[Tuple[float, float]] = field(default_factory=list)
    wall_time: float = 0.0


def _support(basis_column):
    nz = np.nonzero(basis_column)[0]
    return slice(nz[0], nz[-1] + 1)


class _LevelProblem:
    """Cost of warping one moving array onto one fixed array, as a function of FFD offsets."""

    def __init__(self, fixed, moving, template, measure):
        self.moving = moving.data
        self.cost_fn = make_cost_function(measure, fixed.data)
        self.bx = template.basis_x()
        self.by = template.basis_y()
        self.ys, self.xs = np.mgrid[0:fixed.height, 0:fixed.width].astype(np.float64)
        self.col_support = [_support(self.bx[:, i]) for i in range(template.nx)]
        self.row_support = [_support(self.by[:, j]) for j in range(template.ny)]

    def field(self, offsets):
        return field_from_bases(self.by, self.bx, offsets)

    def warp(self, field):
        return sample_array(self.moving, self.xs + field[..., 0], self.ys + field[..., 1])

    def evaluate(self, offsets):
        fld = self.field(offsets)
        warped = self.warp(fld)
        return self.cost_fn(warped), fld, warped

    def gradient(self, fld, warped, h):
        """
        Central differences, one offset component at a time.

        A control point only moves pixels inside its 4x4-cell support, so
        only that window is re-sampled for each difference.
        """
        ny, nx = self.by.shape[1], self.bx.shape[1]
        grad = np.zeros((ny, nx, 2))
        buf = warped.copy()
        for j in range(ny):
            rows = self.row_support[j]
            for i in range(nx):
                cols = self.col_support[i]
                bump = h * np.outer(self.by[rows, j], self.bx[cols, i])
                xs = self.xs[rows, cols] + fld[rows, cols, 0]
                ys = self.ys[rows, cols] + fld[rows, cols, 1]
                saved = buf[rows, cols].copy()
                for c in range(2):
                    sides = []
                    for sign in (1.0, -1.0):
                        if c == 0:
                            buf[rows, cols] = sample_array(self.moving, xs + sign * bump, ys)
                        else:
                            buf[rows, cols] = sample_array(self.moving, xs, ys + sign * bump)
                        sides.append(self.cost_fn(buf))
                    grad[j, i, c] = (sides[0] - sides[1]) / (2.0 * h)
                buf[rows, cols] = saved
        return grad


def _descend(fixed, moving, init, measure, opts):
    require_same_size(fixed, moving, "fixed and moving images")
    if (fixed.width, fixed.height) != (init.image_width, init.image_height):
        raise ValueError(
            f"transform domain {init.image_width}x{init.image_height} does not match images {fixed.width}x{fixed.height}"
        )

    problem = _LevelProblem(fixed, moving, init, measure)
    offsets = np.array(init.offsets)
    cost, fld, warped = problem.evaluate(offsets)
    if not np.isfinite(cost):
        raise NumericalError(f"initial {measure.name} cost is not finite")

    trace = [cost]
    step = opts.initial_step
    iters = 0
    while iters < opts.max_iters and step >= opts.min_step:
        grad = problem.gradient(fld, warped, opts.fd_step)
        scale = np.abs(grad).max()
        if not np.isfinite(scale) or scale == 0.0:
            break
        direction = -grad / scale

        accepted = None
        while step >= opts.min_step:
            candidate = offsets + step * direction
            c_cost, c_fld, c_warped = problem.evaluate(candidate)
            if np.isfinite(c_cost) and c_cost < cost:
                accepted = (candidate, c_cost, c_fld, c_warped)
                break
            step *= opts.shrink
        if accepted is None:
            break

        improvement = (cost - accepted[1]) / max(abs(cost), 1e-300)
        offsets, cost, fld, warped = accepted
        trace.append(cost)
        iters += 1
        logger.debug(f"   iter {iters}: {measure.name}={cost:.6g}, step={step:.3g}")
        if improvement < opts.tolerance:
            break
        # Let the step recover after a run of shrinks
        step = min(step / opts.shrink, opts.initial_step)

    return init.with_offsets(offsets), trace


def optimize_level(fixed, moving, init, measure, opts=None):
    """
    Gradient descent on cost(fixed, warp(moving, t)) over all control offsets.

    Steps move the largest offset by `step` pixels along the negative
    finite-difference gradient and are accepted only when the cost strictly
    decreases; otherwise the step shrinks. Stops at max_iters, when the step
    falls below min_step, or when the relative improvement is below tolerance.

    Returns:
        FfdTransform whose cost is <= the initial cost
    """
    transform, _ = _descend(fixed, moving, init, measure, opts or OptimizerOptions())
    return transform


def _level_cost(fixed, moving, t, measure):
    problem = _LevelProblem(fixed, moving, t, measure)
    cost, _, _ = problem.evaluate(t.offsets)
    return cost


def _run_levels(levels, measure, opts, grid_size, method, full_size):
    """
    Coarse-to-fine loop shared by the pipelines.

    levels: list of (fixed, moving, factor) from coarse to fine.
    """
    started = time.perf_counter()
    measure = measure or MeasureKind.parse("mi")
    sizes = lattice_schedule(len(levels), grid_size)
    result = RegistrationResult(transform=None, method=method, lattice_sizes=sizes)

    t = None
    prev_factor = None
    for idx, ((fixed, moving, factor), n) in enumerate(zip(levels, sizes), 1):
        if t is None:
            t = make_uniform_grid(fixed.width, fixed.height, n, n)
        else:
            t = transfer(t, fixed.width, fixed.height, n, n, src_factor=prev_factor, dst_factor=factor)
            identity = make_uniform_grid(fixed.width, fixed.height, n, n)
            result.warm_start_costs.append(
                (_level_cost(fixed, moving, t, measure), _level_cost(fixed, moving, identity, measure))
            )
        t, trace = _descend(fixed, moving, t, measure, opts)
        result.cost_traces.append(trace)
        result.iterations.append(len(trace) - 1)
        prev_factor = factor
        logger.info(
            f"📐 {method} level {idx}/{len(levels)} ({fixed.width}x{fixed.height}, {n}x{n} lattice): "
            f"{measure.name} {trace[0]:.5g} -> {trace[-1]:.5g} in {len(trace) - 1} step(s)"
        )

    width, height = full_size
    if prev_factor != 1 or t.nx != grid_size or t.ny != grid_size:
        t = transfer(t, width, height, grid_size, grid_size, src_factor=prev_factor, dst_factor=1)
    result.transform = t
    result.wall_time = time.perf_counter() - started
    return result


def _pyramid_levels(ref, flo, levels):
    return [(downsample(ref, f), downsample(flo, f), f) for f in pyramid_factors(levels)]


def register_intensity_hier(ref, flo, levels=3, measure=None, opts=None, grid_size=None):
    """Baseline: coarse-to-fine registration of downsampled intensities (factors 4, 2, 1)."""
    require_same_size(ref, flo, "reference and floating images")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    grid_size = settings.GRID_SIZE if grid_size is None else grid_size
    return _run_levels(
        _pyramid_levels(ref, flo, levels), measure, opts or OptimizerOptions(), grid_size, "intensity",
        (ref.width, ref.height),
    )


def register_lr_emd(ref, flo, n=3, measure=None, opts=None, grid_size=None, ref_stack=None, flo_stack=None, **emd_kwargs):
    """
    Level-based registration on IMFs.

    Loop level i = 1 (coarse) .. n (fine) registers IMF n - i + 1 of the
    floating image onto the same IMF of the reference, all at full
    resolution; each level warm-starts the next.
    """
    require_same_size(ref, flo, "reference and floating images")
    if n < 1:
        raise ValueError(f"IMF level count must be >= 1, got {n}")
    grid_size = settings.GRID_SIZE if grid_size is None else grid_size
    ref_stack = ref_stack or decompose(ref, n, **emd_kwargs)
    flo_stack = flo_stack or decompose(flo, n, **emd_kwargs)

    levels = []
    for i in range(1, n + 1):
        imf_index = n - i
        levels.append((normalize(ref_stack.imfs[imf_index]), normalize(flo_stack.imfs[imf_index]), 1))
    return _run_levels(levels, measure, opts or OptimizerOptions(), grid_size, "lr-emd", (ref.width, ref.height))


def register_afr_emd(ref, flo, n=3, measure=None, opts=None, grid_size=None, ref_stack=None, flo_stack=None, **emd_kwargs):
    """Average feature-map registration: the baseline pyramid run on the mean of the IMFs."""
    require_same_size(ref, flo, "reference and floating images")
    if n < 1:
        raise ValueError(f"IMF level count must be >= 1, got {n}")
    grid_size = settings.GRID_SIZE if grid_size is None else grid_size
    ref_stack = ref_stack or decompose(ref, n, **emd_kwargs)
    flo_stack = flo_stack or decompose(flo, n, **emd_kwargs)

    ref_map = normalize(average_feature_map(ref_stack))
    flo_map = normalize(average_feature_map(flo_stack))
    return _run_levels(
        _pyramid_levels(ref_map, flo_map, n), measure, opts or OptimizerOptions(), grid_size, "afr-emd",
        (ref.width, ref.height),
    )


def register(method, ref, flo, measure, levels=3, opts=None, grid_size=None, **emd_kwargs):
    if method == "intensity":
        return register_intensity_hier(ref, flo, levels, measure, opts, grid_size)
    if method == "lr-emd":
        return register_lr_emd(ref, flo, levels, measure, opts, grid_size, **emd_kwargs)
    if method == "afr-emd":
        return register_afr_emd(ref, flo, levels, measure, opts, grid_size, **emd_kwargs)
    raise ValueError(f"unknown registration method {method!r}; expected one of {METHODS}")
