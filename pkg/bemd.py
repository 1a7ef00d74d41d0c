"""
Bidimensional empirical mode decomposition (BEMD).

The image is peeled into intrinsic mode functions (IMFs), highest frequency
first, by repeatedly subtracting the mean of the upper and lower envelopes
fitted through its local extrema. Whatever is left after n levels is the
residual, which is where slow trends such as a bias field end up.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import ndimage
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator, RBFInterpolator

import settings
from errors import NumericalError
from image_core import ImageGrid

logger = logging.getLogger(__name__)

_RING = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=bool)


@dataclass(frozen=True, eq=False)
class ExtremaSet:
    """
    Local extrema of a grid as (x, y, value) rows.

    Both arrays end with the four corner anchors; n_maxima / n_minima count
    only the detected extrema that precede them.
    interior_maxima / interior_minima leave out those on the image border.
    """

    maxima: np.ndarray
    minima: np.ndarray
    n_maxima: int
    n_minima: int
    interior_maxima: int = 0
    interior_minima: int = 0

    def detected_maxima(self):
        return self.maxima[: self.n_maxima]

    def detected_minima(self):
        return self.minima[: self.n_minima]


@dataclass(frozen=True, eq=False)
class ImfStack:
    """IMFs ordered from highest to lowest frequency, plus the final residual."""

    imfs: Tuple[ImageGrid, ...]
    residual: ImageGrid
    sift_iterations: List[int] = field(default_factory=list)

    @property
    def levels(self):
        return len(self.imfs)


def _corner_anchors(data):
    h, w = data.shape
    corners = [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)]
    return np.array([(x, y, data[y, x]) for x, y in corners], dtype=np.float64)


def _as_points(mask, data):
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys, data[ys, xs]]).astype(np.float64)


def _find_extrema(data):
    neighbour_max = ndimage.maximum_filter(data, footprint=_RING, mode="constant", cval=-np.inf)
    neighbour_min = ndimage.minimum_filter(data, footprint=_RING, mode="constant", cval=np.inf)
    is_max = data > neighbour_max
    is_min = data < neighbour_min
    # A pixel without neighbours would qualify as both
    both = is_max & is_min
    is_max &= ~both
    is_min &= ~both

    anchors = _corner_anchors(data)
    maxima = _as_points(is_max, data)
    minima = _as_points(is_min, data)
    inner = (slice(1, -1), slice(1, -1))
    return ExtremaSet(
        maxima=np.vstack([maxima, anchors]),
        minima=np.vstack([minima, anchors]),
        n_maxima=len(maxima),
        n_minima=len(minima),
        interior_maxima=int(np.count_nonzero(is_max[inner])),
        interior_minima=int(np.count_nonzero(is_min[inner])),
    )


def find_local_extrema(grid):
    """
    Strict 8-connected local maxima and minima of a grid.

    Border pixels are compared with their in-bounds neighbours only; plateaus
    are not extrema. The four image corners are appended to both lists to
    anchor the envelopes at the borders.
    """
    return _find_extrema(grid.data)


def _deduplicate(points):
    coords, inverse = np.unique(points[:, :2], axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse)
    values = np.bincount(inverse, weights=points[:, 2]) / counts
    return np.column_stack([coords, values])


def _pixel_lattice(width, height):
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return np.column_stack([xs.ravel(), ys.ravel()])


def _envelope(points, width, height, tps_max_points):
    points = _deduplicate(np.asarray(points, dtype=np.float64))
    if len(points) < 3:
        raise NumericalError(f"envelope needs at least 3 distinct points, got {len(points)}")
    query = _pixel_lattice(width, height)

    if len(points) > tps_max_points:
        logger.debug(f"🔺 {len(points)} extrema > {tps_max_points}, using triangulated envelope")
        surface = LinearNDInterpolator(points[:, :2], points[:, 2])(query)
        holes = np.isnan(surface)
        if holes.any():
            surface[holes] = NearestNDInterpolator(points[:, :2], points[:, 2])(query[holes])
        return surface.reshape(height, width)

    try:
        rbf = RBFInterpolator(points[:, :2], points[:, 2], kernel="thin_plate_spline", degree=1)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"thin-plate envelope system is singular: {e}") from e
    return rbf(query).reshape(height, width)


def interpolate_envelope(points, width, height, tps_max_points=None):
    """
    Thin-plate spline surface through scattered (x, y, value) points.

    s(p) = sum_j w_j phi(|p - p_j|) + a0 + a1 x + a2 y with phi(r) = r^2 log r,
    evaluated on every pixel. Points sharing a coordinate are averaged first.
    Above tps_max_points the surface falls back to linear interpolation on a
    Delaunay triangulation, nearest-neighbour outside the hull.

    Returns:
        ImageGrid of shape (height, width)
    """
    if tps_max_points is None:
        tps_max_points = settings.TPS_MAX_POINTS
    return ImageGrid(_envelope(points, width, height, tps_max_points))


def _mean_envelope(data, tps_max_points):
    extrema = _find_extrema(data)
    h, w = data.shape
    upper = _envelope(extrema.maxima, w, h, tps_max_points)
    lower = _envelope(extrema.minima, w, h, tps_max_points)
    return (upper + lower) / 2.0, extrema


def mean_envelope(grid, tps_max_points=None):
    """(E_max + E_min) / 2 of a grid."""
    if tps_max_points is None:
        tps_max_points = settings.TPS_MAX_POINTS
    mean, _ = _mean_envelope(grid.data, tps_max_points)
    return ImageGrid(mean)


def _is_degenerate(extrema):
    # border pixels are compared with fewer neighbours
    return extrema.interior_maxima < 3 or extrema.interior_minima < 3


def _sift(data, max_sift_iters, sd_threshold, tps_max_points):
    h = data
    iterations = 0
    for it in range(max_sift_iters):
        mean, extrema = _mean_envelope(h, tps_max_points)
        # First pass always runs; corner anchors keep the envelopes defined.
        if it > 0 and _is_degenerate(extrema):
            break
        h_next = h - mean
        sd = np.sum((h - h_next) ** 2) / np.sum(h ** 2 + settings.SIFT_EPSILON)
        h = h_next
        iterations += 1
        logger.debug(f"   sift {iterations}: SD={sd:.4g}, maxima={extrema.n_maxima}, minima={extrema.n_minima}")
        if sd < sd_threshold:
            break
    return h, iterations


def sift(residual_prev, max_sift_iters=None, sd_threshold=None, tps_max_points=None):
    """
    Extract one IMF from the previous residual.

    Iterates h <- h - (E_max + E_min) / 2 until the sifting criterion
    SD = sum((h_prev - h)^2) / sum(h_prev^2 + eps) drops below sd_threshold,
    max_sift_iters is reached, or fewer than 3 interior maxima or minima remain.
    """
    max_sift_iters = settings.SIFT_MAX_ITERS if max_sift_iters is None else max_sift_iters
    sd_threshold = settings.SIFT_SD_THRESHOLD if sd_threshold is None else sd_threshold
    tps_max_points = settings.TPS_MAX_POINTS if tps_max_points is None else tps_max_points
    imf, _ = _sift(residual_prev.data, max_sift_iters, sd_threshold, tps_max_points)
    return ImageGrid(imf)


def decompose(img, n=None, max_sift_iters=None, sd_threshold=None, tps_max_points=None):
    """
    Decompose an image into n IMFs and a residual.

    RES_0 = img, IMF_i = sift(RES_{i-1}), RES_i = RES_{i-1} - IMF_i. When a
    residual has fewer than 3 interior maxima or minima the remaining IMFs are zero
    grids, so the stack always holds n levels.

    Args:
        img: ImageGrid to decompose
        n: number of levels (>= 1)
        max_sift_iters: sifting iteration cap per IMF
        sd_threshold: sifting stop threshold
        tps_max_points: extrema count above which envelopes are triangulated

    Returns:
        ImfStack
    """
    n = settings.EMD_LEVELS if n is None else n
    if n < 1:
        raise ValueError(f"level count must be >= 1, got {n}")
    max_sift_iters = settings.SIFT_MAX_ITERS if max_sift_iters is None else max_sift_iters
    sd_threshold = settings.SIFT_SD_THRESHOLD if sd_threshold is None else sd_threshold
    tps_max_points = settings.TPS_MAX_POINTS if tps_max_points is None else tps_max_points

    residual = img.data
    imfs = []
    iterations = []
    for level in range(1, n + 1):
        if _is_degenerate(_find_extrema(residual)):
            logger.info(f"⚠️ Residual degenerate at level {level}; padding {n - level + 1} zero IMF(s)")
            break
        imf, its = _sift(residual, max_sift_iters, sd_threshold, tps_max_points)
        residual = residual - imf
        imfs.append(ImageGrid(imf))
        iterations.append(its)
        logger.debug(f"🧮 IMF {level}/{n}: {its} sift iteration(s), energy={np.sum(imf ** 2):.4g}")

    while len(imfs) < n:
        imfs.append(ImageGrid(np.zeros_like(img.data)))
        iterations.append(0)

    return ImfStack(imfs=tuple(imfs), residual=ImageGrid(residual), sift_iterations=iterations)


def average_feature_map(stack):
    """Per-pixel mean of the IMFs; the residual is left out."""
    if stack.levels < 1:
        raise ValueError("stack has no IMFs")
    return ImageGrid(np.mean([imf.data for imf in stack.imfs], axis=0))


def reconstruct(stack, include_residual=True):
    total = np.sum([imf.data for imf in stack.imfs], axis=0)
    if include_residual:
        total = total + stack.residual.data
    return ImageGrid(total)


def denoise(img, n=None, **kwargs):
    """Sum of the IMFs alone: the image with its slow trend removed."""
    return reconstruct(decompose(img, n, **kwargs), include_residual=False)


def _row_counts(row):
    signs = np.sign(row)
    signs = signs[signs != 0]
    crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
    inner = row[1:-1]
    peaks = (inner > row[:-2]) & (inner > row[2:])
    troughs = (inner < row[:-2]) & (inner < row[2:])
    return crossings, int(np.count_nonzero(peaks | troughs))


def zero_crossing_agreement(stack):
    """
    Fraction of row profiles, per IMF, whose zero-crossing and extremum
    counts differ by at most one.
    """
    fractions = []
    for imf in stack.imfs:
        ok = 0
        for row in imf.data:
            crossings, extrema = _row_counts(row)
            ok += abs(crossings - extrema) <= 1
        fractions.append(ok / imf.height)
    return fractions
