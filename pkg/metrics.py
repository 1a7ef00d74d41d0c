"""
Registration error scores: T-RMSE on dense displacement fields, I-RMSE on
intensities, and the convergence predicate used by the benchmark.
"""

import logging
from dataclasses import dataclass

import numpy as np

import settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialScore:
    t_rmse: float
    i_rmse: float
    converged: bool


def t_rmse(true_field, est_field):
    """
    Root mean squared Euclidean distance between two displacement fields.

    Args:
        true_field: DisplacementField
        est_field: DisplacementField of the same dimensions

    Returns:
        error in pixels
    """
    if true_field.vectors.shape != est_field.vectors.shape:
        raise ValueError(
            f"displacement fields must match, got {true_field.vectors.shape} and {est_field.vectors.shape}"
        )
    diff = true_field.vectors - est_field.vectors
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=-1))))


def i_rmse(ref, registered):
    if not ref.same_size(registered):
        raise ValueError(
            f"images must have equal dimensions, got {ref.width}x{ref.height} and {registered.width}x{registered.height}"
        )
    diff = ref.data - registered.data
    return float(np.sqrt(np.mean(diff * diff)))


def converged(t, threshold=None):
    """True when T-RMSE is strictly below the threshold (4 px by default)."""
    threshold = settings.CONVERGENCE_THRESHOLD if threshold is None else threshold
    if t < 0:
        raise ValueError(f"T-RMSE must be >= 0, got {t}")
    return bool(t < threshold)


def score_trial(true_field, est_field, ref_clean, registered_clean):
    t = t_rmse(true_field, est_field)
    score = TrialScore(t_rmse=t, i_rmse=i_rmse(ref_clean, registered_clean), converged=converged(t))
    logger.debug(f"📏 T-RMSE={score.t_rmse:.4f}px, I-RMSE={score.i_rmse:.4f}, converged={score.converged}")
    return score


def pearson(a, b):
    """Pearson correlation of two equally shaped arrays (or ImageGrids); 0 if either is constant."""
    a = np.asarray(getattr(a, "data", a), dtype=np.float64).ravel()
    b = np.asarray(getattr(b, "data", b), dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"inputs must have equal size, got {a.size} and {b.size}")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        return 0.0
    return float(np.sum(da * db) / denom)


def relative_improvement(method_value, baseline_value):
    """Percent by which method_value is lower than baseline_value; NaN without a usable baseline."""
    if baseline_value is None or not np.isfinite(baseline_value) or baseline_value == 0:
        return float("nan")
    if method_value is None or not np.isfinite(method_value):
        return float("nan")
    return float((baseline_value - method_value) / baseline_value * 100.0)
