"""Pipeline configuration presets."""

from countcluster.data import defaults


class Config:
    """Base configuration: the toy blob pipeline."""
    K = 4
    SEED = 0
    OUT = "out"

    # Attention preprocessing
    KERNEL_SIZE = defaults.SMOOTHING_KERNEL_SIZE
    KERNEL_SIGMA = defaults.SMOOTHING_KERNEL_SIGMA

    # Clustering and loss
    TAU = defaults.CLUSTER_THRESHOLD
    EPSILON = defaults.KL_EPSILON
    ACTIVATED_ONLY = False
    KL_NORMALIZATION = defaults.DEFAULT_KL_NORMALIZATION
    RADIUS_MODE = defaults.DEFAULT_RADIUS_MODE
    REBUILD_CLUSTERS = True

    # Guidance schedule
    ALPHA = [defaults.TOY_ALPHA]
    GUIDED_TIMESTEPS = list(defaults.GUIDED_TIMESTEPS)
    REFINEMENT = [list(entry) for entry in defaults.REFINEMENT_SCHEDULE]
    MAX_REFINEMENT_ITERS = defaults.MAX_REFINEMENT_ITERS

    # Simulator and counting
    SIZE = defaults.DEFAULT_MAP_SIZE
    BLOB_SLOTS = defaults.BLOB_SLOTS
    NOISE0 = defaults.NOISE0
    MIN_AREA = defaults.DEFAULT_MIN_AREA
    OBJECTS = []

    # Benchmark
    COUNTS = list(defaults.DEFAULT_COUNTS)
    SEEDS = list(defaults.DEFAULT_SEEDS)
    VARIANTS = list(defaults.DEFAULT_VARIANTS)
    WORKERS = 1


class ToyConfig(Config):
    """Default preset."""
    PRESET = "toy"


class TestingConfig(Config):
    """Small maps and short benchmarks for the test suite."""
    PRESET = "testing"
    SIZE = 16
    COUNTS = [2, 3]
    SEEDS = [0, 1]
    MAX_REFINEMENT_ITERS = 5


class PaperSD21Config(Config):
    """Published SD2.1 step size; documentation only, not tuned for the blob latent."""
    PRESET = "paper-sd21"
    ALPHA = [defaults.get_paper_alpha("paper-sd21")]


class PaperSDXLConfig(Config):
    """Published SDXL step size; documentation only, not tuned for the blob latent."""
    PRESET = "paper-sdxl"
    ALPHA = [defaults.get_paper_alpha("paper-sdxl")]


PRESETS = {
    "toy": ToyConfig,
    "testing": TestingConfig,
    "paper-sd21": PaperSD21Config,
    "paper-sdxl": PaperSDXLConfig,
}
