"""
Configuration for the hullconc toolkit
Tolerances, defaults, run-store location and API settings
"""
import os
from pathlib import Path

# Base paths
BASE_DIR = Path(__file__).parent
# Run store lives in a temp location unless overridden
DB_PATH = Path(os.environ.get("HULLCONC_DB", "/tmp/hullconc_runs.duckdb"))

TOOL_VERSION = "0.1.0"
SCHEMA_VERSION = 1

# API Configuration
API_HOST = "0.0.0.0"
API_PORT = 8000
API_PREFIX = "/api/v1"

# Parallelism
THREADS_ENV = "HULLCONC_THREADS"
DEFAULT_THREADS = 1

# Exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2
EXIT_SOUNDNESS_VIOLATION = 3

# Distributions
DEFAULT_CALIBRATION_SIZE = 200_000
CALIBRATION_SEED = 1_000_003
MODEL_MIN_EIGENVALUE = 1e-6
MODEL_MIN_CALIBRATION = 1_000
NEGLIGIBLE_WEIGHT = 1e-12

# Order statistics
QUAD_ABS_TOL = 1e-9
QUAD_TAIL_CUTOFF = 1e-14
QUAD_LIMIT = 400
ROOT_REL_TOL = 1e-12
LOG_SPACE_THRESHOLD = -30.0
LEMMA4_MIN_N = 12
LEMMA4_TOLERANCE = 1e-8
SANDWICH_TOLERANCE = 1e-8

# Geometry
BOUNDARY_TOL = 1e-9
POLAR_IDENTITY_TOL = 1e-10
LP_TOL = 1e-11
MAX_DECOMPOSITION_TERMS = 64
NET_BUDGET_FACTOR = 10_000
NET_BUDGET_CAP = 10_000_000
NET_BATCH_SIZE = 256
NET_SWEEP_FACTOR = 4
NET_SWEEP_CAP = 65_536

# Bodies
NET_ORACLE_TOL = 1e-6
DEFAULT_BRUTEFORCE_DIRECTIONS = 10_000
DEFAULT_MC_REPLICATES = 10_000
# Per-oracle LRU of unit-direction support values (analytic non-Gaussian and mc modes)
SUPPORT_CACHE_SIZE = 16_384
DEFAULT_INCLUSION_DRAWS = 10_000
DEFAULT_DENSE_DIRECTIONS = 2_048
WILSON_Z = 1.959963984540054

# Experiments
DEFAULT_LEMMA4_LAWS = ["uniform", "normal", "exponential", "triangular"]
DEFAULT_LEMMA4_SIZES = [12, 100, 1_000, 10_000, 1_000_000]
DEFAULT_T_GRID = [round(0.05 * i, 2) for i in range(1, 21)]
DEFAULT_COROLLARY2_DIRECTIONS = 1_000
DEFAULT_STRONG_LAW_DIRECTIONS = 4_096
DEFAULT_EXPERIMENT_NET_BUDGET = 20_000
STRONG_LAW_MIN_K = 4
COROLLARY2_TOLERANCE = 1e-8

# CSV formatting: round-trip exact reals
REAL_FORMAT = ".17g"


def resolve_threads(requested=None) -> int:
    """Worker count: explicit request, then environment, then default"""
    if requested:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return DEFAULT_THREADS
