"""Processing stages: gyro integration, features, UKF, merging, simulation and the pipeline."""

from .burst_io import Burst, read_burst, write_burst
from .gyro import FrameTiming, GyroTrace, integrate_rotation, interframe_rotations
from .features import CorrespondenceSet, detect_corners, fit_homography_robust, match_corners
from .ukf import UkfConfig, refine_homography
from .merge import AlignedFrame, MergeConfig, merge_wiener, select_frames, warp_frame
from .simulation import GroundTruthBurst, SensorModel, psnr, simulate_burst
from .pipeline import (
    FrameReport,
    PipelineConfig,
    align_burst,
    compare_with_baseline,
    load_config_file,
    run_pipeline,
)

__all__ = [
    "Burst",
    "read_burst",
    "write_burst",
    "FrameTiming",
    "GyroTrace",
    "integrate_rotation",
    "interframe_rotations",
    "CorrespondenceSet",
    "detect_corners",
    "fit_homography_robust",
    "match_corners",
    "UkfConfig",
    "refine_homography",
    "AlignedFrame",
    "MergeConfig",
    "merge_wiener",
    "select_frames",
    "warp_frame",
    "GroundTruthBurst",
    "SensorModel",
    "psnr",
    "simulate_burst",
    "FrameReport",
    "PipelineConfig",
    "align_burst",
    "compare_with_baseline",
    "load_config_file",
    "run_pipeline",
]
