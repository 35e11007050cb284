"""
Pipeline constants for CountCluster guidance.
Values follow the published implementation details where they exist;
toy-only values are marked as such.
"""

from typing import Optional

# =============================================================================
# ATTENTION PREPROCESSING
# =============================================================================

# Gaussian smoothing applied to the object attention map before
# min-max normalization
SMOOTHING_KERNEL_SIZE = 3
SMOOTHING_KERNEL_SIGMA = 0.5

# Smallest square map the pipeline accepts (H = W >= 4)
MIN_MAP_SIZE = 4


# =============================================================================
# CLUSTERING AND OBJECTIVE
# =============================================================================

# Attention score threshold separating object patches from background
CLUSTER_THRESHOLD = 0.3

# Lower clamp on Q inside the KL term
KL_EPSILON = 1e-8
KL_EPSILON_MAX = 1e-4

# Largest object count the benchmark asks for
MAX_OBJECT_COUNT = 10

# How the summed per-cluster KL is divided
LOSS_SCALINGS = {
    "sqrt": "divide by sqrt(k)",
    "linear": "divide by k",
}

# How the per-cluster divergence treats P and Q, which need not sum to 1.
# "generalized" adds the mass terms -P + Q, so its per-patch gradient
# 1 - P / Q vanishes exactly where Q matches P.
KL_NORMALIZATIONS = {
    "generalized": "sum of P log(P / Q) - P + Q on min-max normalized scores",
    "literal": "sum of P log(P / Q) on min-max normalized scores",
    "simplex": "P and Q renormalized to sum 1 inside each cluster",
}
DEFAULT_KL_NORMALIZATION = "generalized"

# How far a cluster reaches. "region" measures the 8-connected patches around
# the center scoring at least tau times the center score; "cell" takes the
# farthest activated patch anywhere in the Voronoi cell.
RADIUS_MODES = ("region", "cell")
DEFAULT_RADIUS_MODE = "region"


# =============================================================================
# TRAJECTORY AND GUIDANCE SCHEDULE
# =============================================================================

NUM_TIMESTEPS = 50

# Single updates at t = 50..41, refinement at t = 50 and t = 40
GUIDED_TIMESTEPS = tuple(range(50, 40, -1))
REFINEMENT_SCHEDULE = ((50, 0.2), (40, 0.15))
MAX_REFINEMENT_ITERS = 25

# Toy step size, tuned on the default benchmark (0.5 overshoots)
TOY_ALPHA = 0.02

# Step sizes used on real models, kept for documentation only
PAPER_ALPHA = {
    "paper-sd21": 40.0,
    "paper-sdxl": 75000.0,
}


# =============================================================================
# BLOB SIMULATOR (toy)
# =============================================================================

BLOB_SLOTS = 12
NOISE0 = 0.03

# Initial latent sampling
LOG_AMPLITUDE_STD = 0.5
LOG_WIDTH_MEAN = 0.6931471805599453  # ln 2
LOG_WIDTH_STD = 0.3

# Render-time clamps; subgradient is zero outside these ranges
MIN_BLOB_WIDTH = 0.5
# Blobs wider than this merge with their neighbours at the default density
MAX_BLOB_WIDTH = 1.5
LOG_AMPLITUDE_BOUNDS = (-20.0, 20.0)


# =============================================================================
# BENCHMARK
# =============================================================================

DEFAULT_MAP_SIZE = 64
DEFAULT_COUNTS = tuple(range(2, 11))
DEFAULT_SEEDS = tuple(range(10))
DEFAULT_MIN_AREA = 2

# Variant name -> overrides applied on top of the base guidance config.
# "guided" is the reference every ablation is compared against.
VARIANTS: dict[str, dict] = {
    "guided": {},
    "baseline": {"guided": False},
    "no-min-distance": {"disable_min_distance": True},
    "k-scaling": {"use_k_scaling": True},
    "frozen-clusters": {"rebuild_clusters": False},
    "activated-only": {"activated_only": True},
    "simplex-kl": {"kl_normalization": "simplex"},
    "literal-kl": {"kl_normalization": "literal"},
    "cell-radius": {"radius_mode": "cell"},
}

DEFAULT_VARIANTS = ("guided", "baseline", "no-min-distance", "k-scaling")
ABLATION_VARIANTS = ("guided", "no-min-distance", "k-scaling")


def get_variant(name: str) -> Optional[dict]:
    """Get the config overrides for a benchmark variant, or None if unknown."""
    overrides = VARIANTS.get(name.lower())
    if overrides is None:
        return None
    return dict(overrides)


def get_paper_alpha(preset: str) -> float:
    """Get the published step size for a paper preset (toy alpha otherwise)."""
    return PAPER_ALPHA.get(preset.lower(), TOY_ALPHA)
