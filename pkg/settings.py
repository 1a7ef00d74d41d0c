"""
Runtime defaults for emdreg.

Every value can be overridden through the environment (or a local .env file),
so a benchmark box can be tuned without touching the code.
"""

import os

from dotenv import load_dotenv

load_dotenv()


def _env_int(name, default):
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


def _env_float(name, default):
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


LOG_LEVEL = os.getenv("EMDREG_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Worker threads for independent benchmark trials
WORKERS = _env_int("EMDREG_WORKERS", 1)

# Empirical mode decomposition
EMD_LEVELS = _env_int("EMDREG_EMD_LEVELS", 3)
SIFT_MAX_ITERS = _env_int("EMDREG_SIFT_MAX_ITERS", 10)
SIFT_SD_THRESHOLD = _env_float("EMDREG_SIFT_SD_THRESHOLD", 0.2)
SIFT_EPSILON = 1e-12
TPS_MAX_POINTS = _env_int("EMDREG_TPS_MAX_POINTS", 2000)

# Similarity measures
MI_BINS = _env_int("EMDREG_MI_BINS", 64)
RC_ALPHA = _env_float("EMDREG_RC_ALPHA", 0.05)

# Ground-truth perturbation protocol
GRID_SIZE = _env_int("EMDREG_GRID_SIZE", 14)
PERTURB_AMPLITUDE = _env_float("EMDREG_PERTURB_AMPLITUDE", 6.0)
SIGMA_FRAC = _env_float("EMDREG_SIGMA_FRAC", 16.0)

# Experiment harness
RUNS = _env_int("EMDREG_RUNS", 15)
CONVERGENCE_THRESHOLD = _env_float("EMDREG_CONVERGENCE_THRESHOLD", 4.0)
PHANTOM_WIDTH = _env_int("EMDREG_PHANTOM_WIDTH", 109)
PHANTOM_HEIGHT = _env_int("EMDREG_PHANTOM_HEIGHT", 90)
# Full-size slice for the separation check
SLICE_WIDTH = _env_int("EMDREG_SLICE_WIDTH", 218)
SLICE_HEIGHT = _env_int("EMDREG_SLICE_HEIGHT", 181)
RECORDS_SCHEMA_VERSION = "1"
