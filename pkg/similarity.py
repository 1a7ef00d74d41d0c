"""
Similarity measures, each expressed as a cost to minimize.

    ssd  mean squared intensity difference
    cc   1 - r^2, r the Pearson correlation of the pixel vectors
    mi   negative mutual information (partial-volume histogram, nats)
    rc   residual complexity: sum log(1 + q^2 / alpha) over the DCT of a - b
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

import settings
from image_core import ImageGrid, require_same_size

logger = logging.getLogger(__name__)

MEASURES = ("ssd", "cc", "rc", "mi")


@dataclass(frozen=True)
class MeasureKind:
    name: str
    mi_bins: int = settings.MI_BINS
    rc_alpha: float = settings.RC_ALPHA

    def __post_init__(self):
        if self.name not in MEASURES:
            raise ValueError(f"unknown similarity measure {self.name!r}; expected one of {MEASURES}")
        if self.mi_bins < 2:
            raise ValueError(f"MI bin count must be >= 2, got {self.mi_bins}")
        if self.rc_alpha <= 0:
            raise ValueError(f"RC alpha must be > 0, got {self.rc_alpha}")

    @classmethod
    def parse(cls, name, mi_bins=None, rc_alpha=None):
        return cls(
            name=name.lower(),
            mi_bins=settings.MI_BINS if mi_bins is None else int(mi_bins),
            rc_alpha=settings.RC_ALPHA if rc_alpha is None else float(rc_alpha),
        )


# ─────────────────────────────
# Array-level kernels
# ─────────────────────────────
def _ssd(a, b):
    return float(np.mean((a - b) ** 2))


def _cc(a, b):
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        return 1.0
    r = np.sum(da * db) / denom
    return float(1.0 - r * r)


def _pv_bins(values, bins):
    """Lower bin index and upper-bin weight of each sample (linear partial volume)."""
    lo = values.min()
    hi = values.max()
    if hi == lo:
        pos = np.zeros(values.size)
    else:
        pos = (values.ravel() - lo) / (hi - lo) * (bins - 1)
    lower = np.clip(np.floor(pos).astype(np.int64), 0, bins - 2)
    return lower, pos - lower


def _joint_from_bins(a_bins, b_bins, bins):
    ia, fa = a_bins
    ib, fb = b_bins
    size = bins * bins
    hist = (
        np.bincount(ia * bins + ib, weights=(1 - fa) * (1 - fb), minlength=size)
        + np.bincount((ia + 1) * bins + ib, weights=fa * (1 - fb), minlength=size)
        + np.bincount(ia * bins + ib + 1, weights=(1 - fa) * fb, minlength=size)
        + np.bincount((ia + 1) * bins + ib + 1, weights=fa * fb, minlength=size)
    )
    return hist.reshape(bins, bins) / ia.size


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _mi_from_joint(joint):
    return _entropy(joint.sum(axis=1)) + _entropy(joint.sum(axis=0)) - _entropy(joint)


def _rc(a, b, alpha):
    q = dctn(a - b, norm="ortho")
    return float(np.sum(np.log1p(q * q / alpha)))


def make_cost_function(measure, fixed):
    """
    Cost closure against a fixed (H, W) array.

    The fixed image's MI bin assignment is computed once, outside the closure.
    """
    if measure.name == "ssd":
        return lambda moving: _ssd(fixed, moving)
    if measure.name == "cc":
        return lambda moving: _cc(fixed, moving)
    if measure.name == "rc":
        return lambda moving: _rc(fixed, moving, measure.rc_alpha)

    fixed_bins = _pv_bins(fixed, measure.mi_bins)

    def neg_mi(moving):
        return -_mi_from_joint(_joint_from_bins(fixed_bins, _pv_bins(moving, measure.mi_bins), measure.mi_bins))

    return neg_mi


# ─────────────────────────────
# Public measures on ImageGrid
# ─────────────────────────────
def ssd(a, b):
    require_same_size(a, b)
    return _ssd(a.data, b.data)


def cc(a, b):
    require_same_size(a, b)
    return _cc(a.data, b.data)


def joint_histogram(a, b, bins=None):
    """Partial-volume joint probability table of shape (bins, bins)."""
    bins = settings.MI_BINS if bins is None else bins
    require_same_size(a, b)
    if bins < 2:
        raise ValueError(f"MI bin count must be >= 2, got {bins}")
    return _joint_from_bins(_pv_bins(a.data, bins), _pv_bins(b.data, bins), bins)


def mi(a, b, bins=None):
    """Negative mutual information H(A) + H(B) - H(A, B), in nats."""
    return -_mi_from_joint(joint_histogram(a, b, bins))


def rc(a, b, alpha=None):
    alpha = settings.RC_ALPHA if alpha is None else alpha
    require_same_size(a, b)
    if alpha <= 0:
        raise ValueError(f"RC alpha must be > 0, got {alpha}")
    return _rc(a.data, b.data, alpha)


def dct2(grid):
    """Orthonormal 2D DCT-II (rows, then columns)."""
    return ImageGrid(dctn(grid.data, type=2, norm="ortho"))


def idct2(grid):
    return ImageGrid(idctn(grid.data, type=2, norm="ortho"))


def cost(measure, a, b):
    require_same_size(a, b)
    return make_cost_function(measure, a.data)(b.data)
