"""voxelforge: quality-diversity exploration of 2D voxel soft robots.

Generates diverse morphologies in a metric-binned archive, trains one
controller per morphology, accounts the exact inference cost of each
controller, and analyzes the trade-off between structural and control
complexity against task fitness.
"""

__version__ = "0.1.0"

from .analysis import EvalRecord, RegressionFit, fit_regression, sensitivity
from .genome import Genome, VoxelType, deserialize, enumerate_all, mutate, serialize, validate
from .mapelites import Archive, bin_of, random_genome
from .mapelites import run as run_mapelites
from .morphometrics import MorphoMetrics, compute_all
from .physics import SimConfig, SoftBody, Terrain, build_body, observe, step
from .policy import FlopsReport, Policy, count_flops
from .ppo import PpoConfig, train
from .tasks import EpisodeResult, TaskEnv, TaskSpec, make_terrain, run_episode

__all__ = [
    "__version__",
    "Archive", "EpisodeResult", "EvalRecord", "FlopsReport", "Genome",
    "MorphoMetrics", "Policy", "PpoConfig", "RegressionFit", "SimConfig",
    "SoftBody", "TaskEnv", "TaskSpec", "Terrain", "VoxelType",
    "bin_of", "build_body", "compute_all", "count_flops", "deserialize",
    "enumerate_all", "fit_regression", "make_terrain", "mutate", "observe",
    "random_genome", "run_episode", "run_mapelites", "sensitivity",
    "serialize", "step", "train", "validate",
]
