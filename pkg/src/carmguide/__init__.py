"""carmguide: desk-scale simulator and guidance engine for C-arm repositioning.

Layered bottom-up: geometry (transforms, clouds), surfaces and carm
(device model), depth and tracker (virtual sensors), registry and icp
(save/show and alignment), evaluation (study metrics), session/service/cli
(stateful engine and its boundaries).
"""

from .geometry import (
    FrameId,
    FrameMismatchError,
    PoseDelta,
    RigidTransform,
    TaggedPointCloud,
    apply_to_point,
    compose,
    invert,
    pose_delta,
)
from .carm import (
    CArmDofs,
    CArmGeometry,
    DofAdjustment,
    Keypoint3D,
    dof_adjustment_from_delta,
    forward_kinematics,
    sample_surface,
    xray_project,
)
from .depth import CameraIntrinsics, DepthImage, render_depth, sense_points, unproject_depth
from .tracker import FeatureObservation, Landmark, TrackerEstimate, project_feature, solve_pose
from .registry import SavedView, ViewRegistry, load, persist, save_view, show_view
from .icp import AlignmentReport, IcpParams, SpatialIndex, icp_align, nearest_neighbor
from .evaluation import (
    KeypointSet,
    PoseErrorStats,
    RunLog,
    StudyScenario,
    keypoint_displacement,
    pose_error_stats,
    run_study,
)
from .config import SessionConfig, default_config, load_config
from .session import CommandMessage, SessionState, handle_command, replay_log, snapshot

__version__ = "0.1.0"
