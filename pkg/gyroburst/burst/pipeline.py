"""End-to-end burst alignment and merging.

Gyro rotations give every alternative frame an initial rotational
homography; matched corners supply the translation and plane normal; the
UKF refines the combination; a Gaussian-pyramid shift removes what is left
of the offset. Frames that still disagree with the reference are dropped
before the Wiener merge.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..core.data_formats import DataExporter, DataImporter
from ..core.errors import (
    BurstError,
    DegenerateConfiguration,
    InputFormatError,
    PreconditionError,
    TooFewFeatures,
)
from ..core.geometry import (
    CameraIntrinsics,
    Homography,
    RotationMatrix,
    compose_initial_homography,
    decompose_homography,
    to_camera_frame,
)
from ..core.image import Image, read_image, write_image
from ..core.monitoring import StageTimings, performance_monitor
from ..core.plotting import save_convergence_plot, save_steady_error_plot
from .burst_io import TRUTH_FILE, Burst, read_burst
from .features import (
    CorrespondenceSet,
    DEFAULT_POINT_NOISE_SIGMA,
    detect_corners,
    fit_homography_robust,
    match_corners,
)
from .gyro import FrameTiming, GyroTrace, interframe_rotations
from .merge import (
    AlignedFrame,
    MergeConfig,
    estimate_noise_sigma,
    merge_wiener,
    pyramid_align,
    select_frames,
    selection_mask,
    steady_error,
    warp_frame,
)
from .simulation import GroundTruthBurst, homography_error, psnr
from .ukf import UkfConfig, refine_homography

logger = logging.getLogger(__name__)

MERGED_FILE = "merged.png"
REPORT_FILE = "report.json"
WIDE_SEARCH_FACTOR = 3

Mode = Literal["full", "features_only", "gyro_only"]


class FeatureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_corners: int = Field(200, ge=4)
    min_distance: float = Field(8.0, gt=0.0)
    border: int = Field(8, ge=0)
    patch: int = 11
    search_radius: int = Field(8, ge=1)
    zncc_threshold: float = Field(0.5, ge=-1.0, le=1.0)
    point_noise_sigma: float = Field(DEFAULT_POINT_NOISE_SIGMA, gt=0.0)

    @field_validator("patch")
    @classmethod
    def _odd_patch(cls, v: int) -> int:
        if v < 7 or v % 2 == 0:
            raise ValueError(f"patch must be odd and >= 7, got {v}")
        return v


class PipelineConfig(BaseModel):
    """Everything ``align_burst`` needs besides the burst itself.

    ``intrinsics`` may be left unset when the burst directory carries a
    ``camera.json``; ``rk4_step_ns`` unset means the gyro's native interval
    capped at 1 ms.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    intrinsics: Optional[CameraIntrinsics] = None
    ukf: UkfConfig = Field(default_factory=UkfConfig)
    merge: MergeConfig = Field(default_factory=MergeConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    rk4_step_ns: Optional[int] = Field(None, ge=1)
    fallback_levels: int = Field(3, ge=1)
    fallback_search: int = Field(4, ge=1)
    ransac_threshold: float = Field(2.0, gt=0.0)
    ransac_iters: int = Field(1000, ge=1)
    ukf_max_iters: int = Field(10, ge=1)
    ukf_tol: float = Field(1e-3, gt=0.0)
    gyro_time_offset_ns: int = 0
    seed: int = 0
    workers: int = Field(1, ge=1)
    mode: Mode = "full"

    def with_overrides(self, values: Dict[str, Any]) -> "PipelineConfig":
        """Apply flat ``key=value`` overrides (see ``FLAT_KEYS``); ``None`` values are ignored."""
        values = {k: v for k, v in values.items() if v is not None}
        unknown = sorted(set(values) - set(FLAT_KEYS))
        if unknown:
            raise PreconditionError(f"unknown configuration keys: {', '.join(unknown)}")

        groups: Dict[str, Dict[str, Any]] = {name: {} for name in ("intrinsics", "ukf", "merge", "features", "top")}
        for key, value in values.items():
            groups[FLAT_KEYS[key]][key] = value

        update: Dict[str, Any] = dict(groups["top"])
        if groups["intrinsics"]:
            base = self.intrinsics.to_dict() if self.intrinsics else {}
            merged = {**base, **groups["intrinsics"]}
            missing = [k for k in ("fx", "fy", "cx", "cy") if k not in merged]
            if missing:
                raise PreconditionError(f"intrinsics incomplete, missing {', '.join(missing)}")
            update["intrinsics"] = CameraIntrinsics.from_dict({k: float(v) for k, v in merged.items()})
        for name in ("ukf", "features", "merge"):
            if groups[name]:
                current = getattr(self, name).model_dump()
                if name == "merge" and "tile" in groups[name] and "overlap" not in groups[name]:
                    current["overlap"] = None
                update[name] = type(getattr(self, name)).model_validate({**current, **groups[name]})
        data = {name: getattr(self, name) for name in type(self).model_fields}
        data.update(update)
        return PipelineConfig.model_validate(data)


FLAT_KEYS: Dict[str, str] = {
    **{k: "intrinsics" for k in ("fx", "fy", "cx", "cy")},
    **{k: "ukf" for k in ("alpha", "beta", "process_noise_sigma", "measurement_noise_sigma")},
    **{k: "features" for k in ("point_noise_sigma", "max_corners", "min_distance", "patch",
                               "search_radius", "zncc_threshold")},
    **{k: "merge" for k in ("tile", "overlap", "noise_variance", "max_frames",
                            "steady_error_threshold", "shrinkage")},
    **{k: "top" for k in ("ransac_threshold", "ransac_iters", "ukf_max_iters", "ukf_tol", "rk4_step_ns",
                          "fallback_levels", "fallback_search", "gyro_time_offset_ns", "seed",
                          "workers", "mode")},
}


def load_config_file(path: Union[str, Path], base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Read a ``key=value`` file and apply it on top of ``base``."""
    path = Path(path)
    if not path.exists():
        raise InputFormatError(path, "file not found")
    values = dotenv_values(path)
    lines = path.read_text().splitlines()

    def line_of(key: str) -> Optional[int]:
        for number, text in enumerate(lines, start=1):
            if text.strip().split("=", 1)[0].strip() == key:
                return number
        return None

    for key, value in values.items():
        if key not in FLAT_KEYS:
            raise InputFormatError(path, f"unknown key {key!r}", line_of(key))
        if value is None or value.strip() == "":
            raise InputFormatError(path, f"missing value for {key!r}", line_of(key))
    try:
        return (base or PipelineConfig()).with_overrides(dict(values))
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][-1]) if first.get("loc") else None
        raise InputFormatError(path, f"invalid value: {first['msg']}", line_of(key) if key else None) from e
    except ValueError as e:
        raise InputFormatError(path, str(e)) from e


@dataclass
class FrameReport:
    frame_id: int
    gyro_rotation: RotationMatrix
    initial_h: Homography
    refined_h: Homography
    final_h: Homography
    steady_error: float
    fallback_shift: Tuple[float, float] = (0.0, 0.0)
    valid: bool = False
    feature_count: int = 0
    inlier_count: int = 0
    path: str = "reference"
    reason: Optional[str] = None
    ukf_error: Optional[float] = None
    ukf_history: List[float] = field(default_factory=list)
    homography_error: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "gyro_rotvec": self.gyro_rotation.as_rotvec(),
            "initial_h": self.initial_h.tolist(),
            "refined_h": self.refined_h.tolist(),
            "final_h": self.final_h.tolist(),
            "steady_error": self.steady_error,
            "fallback_shift": list(self.fallback_shift),
            "valid": self.valid,
            "feature_count": self.feature_count,
            "inlier_count": self.inlier_count,
            "path": self.path,
            "reason": self.reason,
            "ukf_error": self.ukf_error,
            "ukf_history": self.ukf_history,
            "homography_error": self.homography_error,
        }


# ---------------------------------------------------------------------------
# Per-frame alignment
# ---------------------------------------------------------------------------

def initial_homography(
    r_gyro: RotationMatrix,
    h_features: Homography,
    k: CameraIntrinsics,
) -> Tuple[Homography, bool]:
    """Gyro rotation combined with the translation and normal of a feature homography.

    The feature homography is decomposed in calibrated coordinates with the
    gyro rotation as the tie-breaker; its rotation is discarded. Returns the
    pixel homography K (R + t n^T) K^-1 and whether the decomposition was a
    pure rotation (in which case t = 0).
    """
    calibrated = Homography(k.inverse @ h_features.h @ k.matrix)
    decomposition = decompose_homography(calibrated, r_gyro)
    r0 = to_camera_frame(r_gyro, k)
    if decomposition.degenerate:
        return r0.normalized(), True
    # K t n^T K^-1 written as T0 n0^T with a unit n0
    n_pix = k.inverse.T @ decomposition.n
    norm = float(np.linalg.norm(n_pix))
    h0 = compose_initial_homography(r0, k.matrix @ decomposition.t * norm, n_pix / norm)
    return h0.normalized(), False


def _with_shift(h: Homography, shift: np.ndarray) -> Homography:
    if not np.any(shift):
        return h
    return (h @ Homography.translation(float(shift[0]), float(shift[1]))).normalized()


def _rematched_error(reference: Image, frame: Image, corners: Optional[np.ndarray], h: Homography,
                     cfg: PipelineConfig) -> float:
    """Steady error of ``h`` measured on fresh matches around its own prediction."""
    if corners is None:
        return float("inf")
    f = cfg.features
    try:
        corr = match_corners(reference, frame, corners, h, f.search_radius, f.patch,
                             f.zncc_threshold, f.point_noise_sigma)
    except TooFewFeatures:
        return float("inf")
    return steady_error(h, corr)


def _align_one(
    index: int,
    reference: Image,
    frame: Image,
    corners: Optional[np.ndarray],
    r_gyro: RotationMatrix,
    k: Optional[CameraIntrinsics],
    cfg: PipelineConfig,
) -> Tuple[AlignedFrame, FrameReport]:
    f = cfg.features
    h_gyro = to_camera_frame(r_gyro, k).normalized() if k is not None else Homography.identity()
    initial = refined = h_gyro
    corr: Optional[CorrespondenceSet] = None
    inliers: Optional[CorrespondenceSet] = None
    report_extra: Dict[str, Any] = {}

    if cfg.mode == "gyro_only" or corners is None:
        path = "pyramid" if cfg.mode == "features_only" else "gyro"
        reason = None if cfg.mode == "gyro_only" else "no corners in reference"
    else:
        # without gyro the prediction is the identity, so search wider
        radius = f.search_radius * (WIDE_SEARCH_FACTOR if cfg.mode == "features_only" else 1)
        try:
            corr = match_corners(reference, frame, corners, h_gyro, radius, f.patch,
                                 f.zncc_threshold, f.point_noise_sigma)
            h_feat, mask = fit_homography_robust(corr, cfg.ransac_threshold, cfg.ransac_iters,
                                                 rng_seed=cfg.seed + index)
            inliers = corr.subset(mask)
            if cfg.mode == "features_only":
                initial = refined = h_feat
                path = "features"
            else:
                initial, degenerate = initial_homography(r_gyro, h_feat, k)
                refined, ukf_err, history = refine_homography(
                    initial, inliers, cfg.ukf, cfg.ukf_max_iters, cfg.ukf_tol, return_history=True)
                report_extra = {"ukf_error": ukf_err, "ukf_history": history}
                path = "ukf_pure_rotation" if degenerate else "ukf"
            reason = None
        except (TooFewFeatures, DegenerateConfiguration) as e:
            logger.warning(f"Frame {index}: feature path failed ({e}); using pyramid fallback")
            logger.debug("Feature path failure", exc_info=True)
            inliers = None
            initial = refined = h_gyro
            path = "features_fallback" if cfg.mode == "features_only" else "gyro_fallback"
            reason = str(e)

    warped = warp_frame(frame, refined)
    shift = pyramid_align(reference, warped, cfg.fallback_levels, cfg.fallback_search)
    final = _with_shift(refined, shift)
    if np.any(shift):
        warped = warp_frame(frame, final)

    error = _rematched_error(reference, frame, corners, final, cfg)
    if not np.isfinite(error):
        reason = reason or "steady error not measurable"

    report = FrameReport(
        frame_id=index,
        gyro_rotation=r_gyro,
        initial_h=initial,
        refined_h=refined,
        final_h=final,
        steady_error=float(error),
        fallback_shift=(float(shift[0]), float(shift[1])),
        feature_count=len(corr) if corr is not None else 0,
        inlier_count=len(inliers) if inliers is not None else 0,
        path=path,
        reason=reason,
        **report_extra,
    )
    return AlignedFrame(warped, final, float(error), valid=False), report


def _failed_frame(index: int, frame: Image, r_gyro: RotationMatrix, error: BurstError) -> Tuple[AlignedFrame, FrameReport]:
    h = Homography.identity()
    report = FrameReport(
        frame_id=index,
        gyro_rotation=r_gyro,
        initial_h=h,
        refined_h=h,
        final_h=h,
        steady_error=float("inf"),
        path="failed",
        reason=f"{type(error).__name__}: {error}",
    )
    return AlignedFrame(frame, h, float("inf"), valid=False), report


def align_burst(
    frames: Sequence[Image],
    timings: Sequence[FrameTiming],
    trace: Optional[GyroTrace],
    cfg: PipelineConfig,
    stages: Optional[StageTimings] = None,
) -> Tuple[List[AlignedFrame], List[FrameReport]]:
    """Align every alternative frame to frame 0 and apply frame selection.

    Per-frame failures never propagate: the frame is reported invalid with
    a reason. Missing gyro coverage of an exposure is an input error.
    """
    if not frames:
        raise PreconditionError("a burst needs at least one frame")
    if len(timings) != len(frames):
        raise PreconditionError(f"{len(timings)} timings for {len(frames)} frames")
    for frame in frames[1:]:
        if frame.shape != frames[0].shape:
            raise PreconditionError(f"frame size {frame.shape} differs from reference {frames[0].shape}")
    if cfg.mode != "features_only":
        if trace is None:
            raise PreconditionError(f"mode {cfg.mode!r} needs a gyro trace")
        if cfg.intrinsics is None:
            raise PreconditionError(f"mode {cfg.mode!r} needs camera intrinsics")

    stages = stages or StageTimings()
    reference = frames[0]
    if cfg.mode == "features_only":
        rotations = [RotationMatrix.identity()] * len(frames)
    else:
        with stages.stage("integrate"):
            rotations = interframe_rotations(trace, timings, cfg.rk4_step_ns, cfg.gyro_time_offset_ns)

    corners: Optional[np.ndarray] = None
    if len(frames) > 1:
        try:
            corners = detect_corners(reference, cfg.features.max_corners, cfg.features.min_distance,
                                     cfg.features.border)
        except TooFewFeatures as e:
            logger.warning(f"Reference has too few corners ({e}); all frames use the fallback path")

    identity = Homography.identity()
    ref_report = FrameReport(
        frame_id=0,
        gyro_rotation=RotationMatrix.identity(),
        initial_h=identity,
        refined_h=identity,
        final_h=identity,
        steady_error=0.0,
        valid=True,
        feature_count=len(corners) if corners is not None else 0,
    )

    def work(index: int) -> Tuple[AlignedFrame, FrameReport]:
        try:
            return _align_one(index, reference, frames[index], corners, rotations[index],
                              cfg.intrinsics, cfg)
        except BurstError as e:
            logger.warning(f"Frame {index}: alignment failed ({e})")
            logger.debug("Alignment failure", exc_info=True)
            return _failed_frame(index, frames[index], rotations[index], e)

    indices = range(1, len(frames))
    with stages.stage("align"):
        if cfg.workers > 1 and len(frames) > 2:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(work, indices))
        else:
            results = [work(i) for i in indices]

    aligned = [AlignedFrame(reference, identity, 0.0, True)] + [r[0] for r in results]
    reports = [ref_report] + [r[1] for r in results]

    threshold = cfg.merge.steady_error_threshold
    for i, keep in enumerate(selection_mask(aligned, cfg.merge)):
        if i == 0:
            continue
        aligned[i] = replace(aligned[i], valid=keep)
        reports[i].valid = keep
        if keep:
            continue
        if reports[i].reason is None:
            if aligned[i].steady_error > threshold:
                reports[i].reason = f"steady error {aligned[i].steady_error:.2f} px above {threshold:g} px"
            else:
                reports[i].reason = f"beyond max_frames={cfg.merge.max_frames}"
        logger.warning(f"Frame {i} rejected: {reports[i].reason}")

    n_valid = sum(r.valid for r in reports[1:])
    logger.info(f"Aligned {len(frames) - 1} alternative frames; {n_valid} valid")
    return aligned, reports


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------

BurstSource = Union[str, Path, Burst, GroundTruthBurst]


def _as_burst(source: BurstSource) -> Burst:
    if isinstance(source, GroundTruthBurst):
        return source.to_burst()
    if isinstance(source, Burst):
        return source
    return read_burst(source)


def _noise_level(burst: Burst, cfg: PipelineConfig) -> Tuple[float, str]:
    """Noise sigma for the Wiener merge and where it came from."""
    if cfg.merge.noise_variance > 0:
        return float(np.sqrt(cfg.merge.noise_variance)), "config"
    if burst.noise_sigma is not None:
        return float(burst.noise_sigma), "ground_truth"
    reference = burst.frames[0]
    if reference.width >= 64 and reference.height >= 64:
        return estimate_noise_sigma(reference), "estimated"
    logger.warning("Reference too small to estimate noise; merging without shrinkage")
    return 0.0, "none"


def truth_errors(reports: Sequence[FrameReport], burst: Burst) -> List[float]:
    """Ground-truth ``homography_error`` of every frame's final homography."""
    errors = []
    for report, truth in zip(reports, burst.true_homographies or []):
        try:
            errors.append(homography_error(report.final_h, truth, burst.frame_size))
        except BurstError:
            errors.append(float("inf"))
    return errors


def run_pipeline(
    source: BurstSource,
    cfg: Optional[PipelineConfig] = None,
    output_dir: Union[str, Path] = "output",
    plots: bool = False,
) -> Tuple[Image, Path]:
    """Align, select and merge a burst; write ``merged.png`` and ``report.json``.

    ``source`` is a burst directory or an in-memory burst. Intrinsics from
    the burst fill in when the configuration has none. With ground truth
    present the report adds PSNR figures and per-frame homography errors.
    """
    cfg = cfg or PipelineConfig()
    output_dir = Path(output_dir)
    stages = StageTimings()

    with performance_monitor("pipeline") as run:
        with stages.stage("load"):
            burst = _as_burst(source)
        if cfg.intrinsics is None:
            cfg = cfg.model_copy(update={"intrinsics": burst.intrinsics})

        aligned, reports = align_burst(burst.frames, burst.timings, burst.trace, cfg, stages)

        sigma, sigma_source = _noise_level(burst, cfg)
        merge_cfg = cfg.merge.model_copy(update={"noise_variance": sigma ** 2})
        with stages.stage("merge"):
            selected = select_frames(aligned, merge_cfg)
            merged = merge_wiener(selected, merge_cfg)
        merged = Image(np.clip(merged.data, 0.0, 1.0))

    n_merged = len(selected)
    report: Dict[str, Any] = {
        "input": str(source) if isinstance(source, (str, Path)) else "<memory>",
        "mode": cfg.mode,
        "seed": cfg.seed,
        "n_frames": len(burst.frames),
        "n_valid_alternatives": sum(r.valid for r in reports[1:]),
        "merged_frames": n_merged,
        "noise_sigma": sigma,
        "noise_source": sigma_source,
        "predicted_residual_sigma": sigma / np.sqrt(n_merged),
        "config": cfg.model_dump(),
        "frames": reports,
        "timings": stages,
        "resources": run.usage,
    }

    if burst.true_homographies is not None:
        for r, err in zip(reports, truth_errors(reports, burst)):
            r.homography_error = err
        alt_errors = [r.homography_error for r in reports[1:]]
        report["metrics"] = {
            "median_homography_error": float(np.median(alt_errors)) if alt_errors else 0.0,
        }
    if burst.clean_reference is not None:
        merged_psnr = psnr(merged, burst.clean_reference)
        single_psnr = psnr(burst.frames[0], burst.clean_reference)
        report.setdefault("metrics", {}).update({
            "psnr_merged": merged_psnr,
            "psnr_reference": single_psnr,
            "psnr_gain": merged_psnr - single_psnr,
        })
        logger.info(f"PSNR {single_psnr:.2f} dB -> {merged_psnr:.2f} dB with {n_merged} frames")

    write_image(merged, output_dir / MERGED_FILE)
    report_path = DataExporter.to_json(report, output_dir / REPORT_FILE)
    if plots:
        save_steady_error_plot(reports, cfg.merge.steady_error_threshold, output_dir / "steady_error.png")
        histories = {f"frame {r.frame_id}": r.ukf_history for r in reports if r.ukf_history}
        if histories:
            save_convergence_plot(histories, output_dir / "ukf_convergence.png")
    logger.info(f"Merged {n_merged}/{len(burst.frames)} frames into {output_dir / MERGED_FILE}")
    return merged, report_path


# ---------------------------------------------------------------------------
# Translation-only baseline
# ---------------------------------------------------------------------------

def baseline_align_burst(frames: Sequence[Image], cfg: PipelineConfig) -> List[Homography]:
    """Global translation per frame from the Gaussian pyramid alone."""
    reference = frames[0]
    homographies = [Homography.identity()]
    for frame in frames[1:]:
        shift = pyramid_align(reference, frame, cfg.fallback_levels, cfg.fallback_search)
        homographies.append(Homography.translation(float(shift[0]), float(shift[1])))
    return homographies


def count_valid_against_truth(
    homographies: Sequence[Homography],
    truth: Sequence[Homography],
    frame_size: Sequence[int],
    threshold: float,
    valid: Optional[Sequence[bool]] = None,
) -> int:
    """Alternative frames (index >= 1) whose homography is within ``threshold`` px of the truth."""
    count = 0
    for i in range(1, min(len(homographies), len(truth))):
        if valid is not None and not valid[i]:
            continue
        try:
            error = homography_error(homographies[i], truth[i], frame_size)
        except BurstError:
            continue
        if error <= threshold:
            count += 1
    return count


def compare_with_baseline(source: Union[Burst, GroundTruthBurst], cfg: Optional[PipelineConfig] = None) -> Dict[str, Any]:
    """Valid-frame counts of the configured pipeline and the translation-only baseline."""
    cfg = cfg or PipelineConfig()
    burst = _as_burst(source)
    if burst.true_homographies is None:
        raise PreconditionError("baseline comparison needs ground-truth homographies")
    if cfg.intrinsics is None:
        cfg = cfg.model_copy(update={"intrinsics": burst.intrinsics})
    threshold = cfg.merge.steady_error_threshold

    _, reports = align_burst(burst.frames, burst.timings, burst.trace, cfg)
    pipeline_count = count_valid_against_truth(
        [r.final_h for r in reports], burst.true_homographies, burst.frame_size, threshold,
        valid=[r.valid for r in reports],
    )
    baseline_count = count_valid_against_truth(
        baseline_align_burst(burst.frames, cfg), burst.true_homographies, burst.frame_size, threshold,
    )
    logger.info(f"Valid frames: pipeline {pipeline_count}, baseline {baseline_count} "
                f"of {len(burst.frames) - 1}")
    return {
        "mode": cfg.mode,
        "alternatives": len(burst.frames) - 1,
        "pipeline_valid": pipeline_count,
        "baseline_valid": baseline_count,
    }


def evaluate_result(
    burst_dir: Union[str, Path],
    merged_path: Union[str, Path],
    report_path: Optional[Union[str, Path]] = None,
    cfg: Optional[PipelineConfig] = None,
    baseline: bool = True,
) -> Dict[str, Any]:
    """Score a merged image (and optionally a run report) against a simulated burst's ground truth."""
    burst = read_burst(burst_dir)
    if burst.true_homographies is None and burst.clean_reference is None:
        raise InputFormatError(Path(burst_dir) / TRUTH_FILE, "burst has no ground truth")
    merged = read_image(merged_path)
    metrics: Dict[str, Any] = {"burst": str(burst_dir), "merged": str(merged_path)}

    if burst.clean_reference is not None:
        merged_psnr = psnr(merged, burst.clean_reference)
        single_psnr = psnr(burst.frames[0], burst.clean_reference)
        metrics.update({"psnr_merged": merged_psnr, "psnr_reference": single_psnr,
                        "psnr_gain": merged_psnr - single_psnr})

    if report_path is not None and burst.true_homographies is not None:
        data = DataImporter.from_json(report_path, restore_non_finite=True)
        if not isinstance(data, dict) or not isinstance(data.get("frames"), list):
            raise InputFormatError(report_path, "expected a run report with a \"frames\" list")
        frames = data["frames"]
        errors = []
        for entry, truth in zip(frames, burst.true_homographies):
            try:
                errors.append(homography_error(Homography.from_list(entry["final_h"]), truth, burst.frame_size))
            except (BurstError, KeyError, TypeError, ValueError):
                errors.append(float("inf"))
        metrics["homography_errors"] = errors
        if len(errors) > 1:
            metrics["median_homography_error"] = float(np.median(errors[1:]))

    if baseline and burst.true_homographies is not None:
        metrics["baseline"] = compare_with_baseline(burst, cfg)
    return metrics
