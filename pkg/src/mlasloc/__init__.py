"""Maximum-likelihood map fusion for multistatic OFDM radar localization.

The pipeline: synthesize per-pair channel observations (channel), estimate
angles with 2-D MUSIC (subspace), fuse per-pair likelihoods into a combined
x-y map (likelihood), extract and refine peaks (detection), score against
baselines over randomized trials (baselines, harness).
"""

from .channel import (
    CoefficientModel,
    OfdmParams,
    RadarPairObservation,
    calibrate_noise_for_snr,
    path_coefficients,
    synthesize_observation,
)
from .config import ExperimentConfig, SceneTemplate, TargetRegion, load_config
from .detection import DetectionSet, find_peaks, refine_peaks
from .geometry import (
    AnglePair,
    ArraySpec,
    RadarPairGeometry,
    Scene,
    angles_for_target,
    joint_steering,
    ray_intersection,
    steering_matrix,
    steering_vector,
)
from .harness import MetricsSummary, TrialResult, match_detections, run_sweep, run_trial
from .likelihood import (
    CombinedObjective,
    PerPairContext,
    combined_map,
    local_map_value,
    per_target_likelihood,
    projection_trace,
)
from .mapgrid import GridSpec, LikelihoodMap
from .baselines import BaselineResult, music_combination_map, soft_fusion_estimate
from .subspace import NoiseSubspace, PreEstimate, music_value, noise_subspace, pre_estimate

__all__ = [
    "AnglePair",
    "ArraySpec",
    "BaselineResult",
    "CoefficientModel",
    "CombinedObjective",
    "DetectionSet",
    "ExperimentConfig",
    "GridSpec",
    "LikelihoodMap",
    "MetricsSummary",
    "NoiseSubspace",
    "OfdmParams",
    "PerPairContext",
    "PreEstimate",
    "RadarPairGeometry",
    "RadarPairObservation",
    "Scene",
    "SceneTemplate",
    "TargetRegion",
    "TrialResult",
    "angles_for_target",
    "calibrate_noise_for_snr",
    "combined_map",
    "find_peaks",
    "joint_steering",
    "load_config",
    "local_map_value",
    "match_detections",
    "music_combination_map",
    "music_value",
    "noise_subspace",
    "path_coefficients",
    "per_target_likelihood",
    "pre_estimate",
    "projection_trace",
    "ray_intersection",
    "refine_peaks",
    "run_sweep",
    "run_trial",
    "soft_fusion_estimate",
    "steering_matrix",
    "steering_vector",
    "synthesize_observation",
]
