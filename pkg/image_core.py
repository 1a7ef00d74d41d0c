"""
Grayscale image container and the pixel plumbing shared by every module.

Coordinate convention: x indexes columns, y indexes rows, origin at the
centre of the top-left pixel. Grids are immutable once built.
"""

import logging
import os
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage
from skimage import data as skdata
from skimage.transform import resize

from errors import ImageFormatError

logger = logging.getLogger(__name__)

PNG_MAGIC = b"\x89PNG"
GRAYMAP_MAGICS = (b"P2", b"P5")


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """2D scalar field stored row-major as a (height, width) float64 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"ImageGrid needs a 2D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"ImageGrid dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ImageGrid values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_values(cls, width, height, values):
        """Build a grid from a flat row-major sequence."""
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} values for {width}x{height}, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def same_size(self, other):
        return self.data.shape == other.data.shape


def require_same_size(a, b, what="images"):
    if not a.same_size(b):
        raise ValueError(f"{what} must have equal dimensions, got {a.width}x{a.height} and {b.width}x{b.height}")


def _sniff_format(path):
    with open(path, "rb") as f:
        head = f.read(4)
    if head.startswith(PNG_MAGIC):
        return "png"
    if head[:2] in GRAYMAP_MAGICS:
        return "pgm"
    raise ImageFormatError(f"{path}: not a grayscale graymap (P2/P5) or PNG file")


def load_image(path):
    """
    Load a grayscale raster as floating intensities.

    8-bit rasters are scaled by 1/255 and 16-bit rasters by 1/65535.

    Args:
        path: graymap (P2/P5) or grayscale PNG file

    Returns:
        ImageGrid
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"image not found: {path}")
    kind = _sniff_format(path)

    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageFormatError(f"{path}: OpenCV could not decode the {kind} file")
    if raw.ndim != 2:
        raise ImageFormatError(f"{path}: expected a single-channel image, got shape {raw.shape}")

    if raw.dtype == np.uint8:
        values = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        values = raw.astype(np.float64) / 65535.0
    else:
        raise ImageFormatError(f"{path}: unsupported sample type {raw.dtype}")

    logger.debug(f"📥 Loaded {path} ({kind}, {raw.dtype}) as {values.shape[1]}x{values.shape[0]}")
    return ImageGrid(values)


def save_image(img, path):
    """Write a 16-bit grayscale raster; values are clamped to [0, 1] first."""
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory does not exist: {parent}")

    quantized = np.round(np.clip(img.data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    try:
        ok = cv2.imwrite(str(path), quantized)
    except cv2.error as e:
        raise OSError(f"failed to write {path}: {e}") from e
    if not ok:
        raise OSError(f"failed to write {path}")
    logger.debug(f"💾 Saved {img.width}x{img.height} image to {path}")


def normalize(img):
    """Min-max rescale to [0, 1]; a constant image maps to zeros."""
    lo = img.data.min()
    hi = img.data.max()
    if hi == lo:
        return ImageGrid(np.zeros_like(img.data))
    return ImageGrid((img.data - lo) / (hi - lo))


def sample_array(data, xs, ys):
    """Bilinear samples of a raw (H, W) array, coordinates clamped to the border."""
    height, width = data.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, width - 1)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, height - 1)
    coords = np.stack([ys.ravel(), xs.ravel()])
    out = ndimage.map_coordinates(data, coords, order=1, mode="nearest", prefilter=False)
    return out.reshape(xs.shape)


def sample_bilinear_many(img, xs, ys):
    """Bilinear samples at arrays of (x, y), clamped to the image border."""
    return sample_array(img.data, xs, ys)


def sample_bilinear(img, x, y):
    return float(sample_bilinear_many(img, np.array([x]), np.array([y]))[0])


def downsample(img, factor):
    """
    Anti-aliased decimation by an integer factor.

    A 3x3 Gaussian blur is applied, then each output pixel takes the mean of
    its factor x factor source block (blocks truncated at the borders).
    Factor 1 returns the input untouched.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"downsample factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return img

    smoothed = cv2.GaussianBlur(img.data, (3, 3), 0, borderType=cv2.BORDER_REPLICATE)
    rows = np.arange(0, img.height, factor)
    cols = np.arange(0, img.width, factor)
    sums = np.add.reduceat(np.add.reduceat(smoothed, rows, axis=0), cols, axis=1)
    row_counts = np.diff(np.append(rows, img.height))
    col_counts = np.diff(np.append(cols, img.width))
    return ImageGrid(sums / np.outer(row_counts, col_counts))


def pyramid_factors(levels):
    """Decimation factors from coarse to fine, e.g. [4, 2, 1] for three levels."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    return [2 ** (levels - 1 - i) for i in range(levels)]


def block_centre(k, factor):
    """Source coordinate of the centre of decimated pixel k."""
    return factor * np.asarray(k, dtype=np.float64) + (factor - 1) / 2.0


PHANTOM_FOLD_PERIODS = (3.0, 6.0, 12.0)


def _smooth_phase(rng, width, height, sigma, spread=2.0):
    noise = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=sigma)
    return spread * (noise - noise.mean()) / (noise.std() + 1e-12)


def _folded_layer(rng, width, height, period):
    """Egg-crate oscillation of one period whose phase wanders smoothly across the slice."""
    gy, gx = np.mgrid[0:height, 0:width].astype(np.float64)
    k = 2.0 * np.pi / period
    phase_x = _smooth_phase(rng, width, height, 2.0 * period)
    phase_y = _smooth_phase(rng, width, height, 2.0 * period)
    return np.sin(k * gx + phase_x) * np.sin(k * gy + phase_y)


def make_phantom(width, height, seed=0, texture=0.12, periods=PHANTOM_FOLD_PERIODS, anatomy=0.2):
    """
    Synthetic head slice: a Shepp-Logan phantom under seeded folded texture.

    Each entry of periods adds one oscillating layer with amplitude
    texture * period / (2 pi), so every layer has the same peak slope
    (`texture` before normalization). anatomy scales the Shepp-Logan base.
    """
    base = resize(skdata.shepp_logan_phantom(), (height, width), anti_aliasing=True)
    rng = np.random.default_rng(seed)
    layers = anatomy * base
    for period in periods:
        layers = layers + texture * period / (2.0 * np.pi) * _folded_layer(rng, width, height, period)
    return normalize(ImageGrid(layers))
