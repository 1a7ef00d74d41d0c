"""
Additive bias-field simulator.

The field is an equal-weight mixture of K isotropic Gaussian kernels:

    G(x, y) = 1/K * sum_k exp(-|(x, y) - mu_k|^2 / (2 sigma^2))

and is added to an image without clamping.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

import settings
from image_core import ImageGrid, require_same_size

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BiasFieldConfig:
    """K kernels, their width and (optionally) their centres in pixels."""

    kernel_count: int
    sigma: Optional[float] = None
    means: Optional[Sequence[Tuple[float, float]]] = None
    seed: Optional[int] = None
    sigma_frac: float = settings.SIGMA_FRAC

    def resolve_sigma(self, width):
        sigma = self.sigma if self.sigma is not None else width / self.sigma_frac
        if self.kernel_count > 0 and sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        return sigma


def draw_means(width, height, kernel_count, seed):
    """Kernel centres drawn uniformly over the pixel domain."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, width - 1, size=kernel_count)
    ys = rng.uniform(0.0, height - 1, size=kernel_count)
    return list(zip(xs.tolist(), ys.tolist()))


def generate_bias_field(width, height, config):
    """
    Evaluate the Gaussian-mixture bias field on a width x height lattice.

    K = 0 yields the zero field. Missing means are drawn with config.seed;
    sigma defaults to width / 16.

    Returns:
        ImageGrid with values in [0, 1]
    """
    k = config.kernel_count
    if k < 0:
        raise ValueError(f"kernel count must be >= 0, got {k}")
    if k == 0:
        return ImageGrid(np.zeros((height, width)))

    sigma = config.resolve_sigma(width)
    means = config.means if config.means is not None else draw_means(width, height, k, config.seed)
    if len(means) != k:
        raise ValueError(f"expected {k} kernel means, got {len(means)}")

    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    field = np.zeros((height, width))
    for mx, my in means:
        field += np.exp(-((xs - mx) ** 2 + (ys - my) ** 2) / (2.0 * sigma ** 2))
    field /= k

    logger.debug(f"🌫️ Bias field K={k}, sigma={sigma:.3f}, means={[(round(x, 1), round(y, 1)) for x, y in means]}")
    return ImageGrid(field)


def apply_bias(img, field):
    """Pixel-wise sum of image and field, unclamped."""
    require_same_size(img, field, "image and bias field")
    return ImageGrid(img.data + field.data)
