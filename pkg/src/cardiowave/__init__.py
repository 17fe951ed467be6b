"""Contactless cardiac sensing pipeline: synthetic FMCW radar to ECG metrics."""

from .beamform import BeamformedVoxelSeries, VoxelGrid, beamform, voxel_power
from .cluster import CardiacMeasurementSet, ClusterModel, cluster, emit_measurements
from .ecg import EcgTrace, synth_ecg
from .focus import (
    SegmentationResult,
    best_overlap_segmentation,
    coarse_templates,
    dtw_distance,
    focus_voxels,
    matching_score,
    reform_segments,
    update_template,
)
from .metrics import (
    DelineationResult,
    MetricsReport,
    delineate,
    evaluate,
    false_monitoring_ratio,
    morphology,
    rr_errors,
    timing_errors,
)
from .micromotion import MotionSignal, amplify_micromotion, extract_phase, extract_signals
from .sim import (
    BreathingParams,
    ChirpConfig,
    MotionProfile,
    PulseKernel,
    RadarFrameCube,
    TorsoPhantom,
    default_phantom,
    ecg_to_surface_motion,
    render_frames,
)

__version__ = "0.1.0"
