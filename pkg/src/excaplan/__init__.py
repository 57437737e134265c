"""Excavation planning for rigid objects in clutter.

Library + CLI: a deterministic clutter/excavation surrogate generates
labeled samples, a small voxel-based network predicts excavation success,
and a cross-entropy-method planner optimizes 6-parameter task-space
trajectories against the learned predictor.
"""

from .geometry import (
    CuboidRegion,
    Frame,
    GridSpec,
    HeightMap,
    HeightMapSpec,
    Point3,
    PointCloud,
    RigidTransform,
    VoxelGrid,
    build_height_map,
    crop_cuboid,
    surface_height,
    transform_cloud,
    voxelize,
)
from .kinematics import (
    BucketPose,
    ExcavatorModel,
    JointConfig,
    JointTrajectory,
    TaskTrajectory,
    ValidityReport,
    expand_phases,
    fk,
    ik,
    interpolate_trajectory,
    validate,
)
from .planner import (
    CemConfig,
    HeuristicRanges,
    PlanResult,
    TrajDistribution,
    cem_plan,
    plan,
    plan_highest_heu,
    plan_random_heu,
    score_batch,
)
from .simulator import (
    ClutterScene,
    ExcavationOutcome,
    ForceParams,
    RigidObject,
    SceneGenConfig,
    capture_candidates,
    dump_and_settle,
    execute_excavation,
    gen_object,
    gen_scene,
    label_outcome,
    render_cloud,
)

__version__ = "0.1.0"
