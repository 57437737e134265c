"""Task-space excavation trajectories, 5-phase waypoint expansion, 4-DOF
arm forward/inverse kinematics, joint interpolation, and validity checks.

A trajectory is six numbers: attack point (x, y), attack excavation angle
alpha, penetration depth d, dragging length l, and closing angle beta.
Excavation angle convention: 0 = bucket horizontal pointing away from the
base, -pi/2 = bucket vertical pointing down. The bucket angle equals the
sum of the boom, stick, and bucket joint angles.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDragError, JointLimitError, OutOfRangeError, UnreachableError
from .geometry import CuboidRegion, HeightMap, surface_height

# validity-report failure causes
ATTACK_OUT_OF_RANGE = "attack_out_of_range"
ATTACK_OUT_OF_FOOTPRINT = "attack_out_of_footprint"
DEGENERATE_DRAG = "degenerate_drag"
IK_UNREACHABLE = "ik_unreachable"
JOINT_LIMIT = "joint_limit"

DEFAULT_ATTACK_MARGIN = 0.02
DEFAULT_INTERP_STEP = 0.01

_TRAJ_STRUCT = struct.Struct("<6d")


@dataclass(frozen=True)
class TaskTrajectory:
    """One excavation, fully described in task space."""

    x: float
    y: float
    alpha: float
    d: float
    l: float
    beta: float

    def __post_init__(self):
        vals = [self.x, self.y, self.alpha, self.d, self.l, self.beta]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite trajectory parameters: {vals}")
        if self.d < 0 or self.l < 0:
            raise ValueError(f"penetration depth and drag length must be >= 0, got d={self.d}, l={self.l}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.alpha, self.d, self.l, self.beta])

    @staticmethod
    def from_array(a) -> "TaskTrajectory":
        return TaskTrajectory(*(float(v) for v in a))

    def to_bytes(self) -> bytes:
        """6 float64 little-endian in (x, y, alpha, d, l, beta) order."""
        return _TRAJ_STRUCT.pack(self.x, self.y, self.alpha, self.d, self.l, self.beta)

    @staticmethod
    def from_bytes(data: bytes) -> "TaskTrajectory":
        return TaskTrajectory(*_TRAJ_STRUCT.unpack(data))


@dataclass(frozen=True)
class BucketPose:
    """4D bucket-tip pose: position in the tray frame plus excavation angle."""

    x: float
    y: float
    z: float
    alpha: float


@dataclass(frozen=True)
class JointConfig:
    q1: float  # swing
    q2: float  # boom
    q3: float  # stick
    q4: float  # bucket

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2, self.q3, self.q4])


@dataclass
class ExcavatorModel:
    """4-DOF excavator arm: swing joint plus a planar boom/stick/bucket chain.

    The swing pivot sits at (base_x, base_y) in the tray frame at height
    base_height (tray-frame z). Link lengths are configurable; defaults keep
    the default tray comfortably inside the workspace for moderate digs.
    """

    base_x: float = -0.5
    base_y: float = 0.109
    base_z: float = -0.15
    base_height: float = 0.25
    boom_length: float = 0.45
    stick_length: float = 0.35
    bucket_length: float = 0.12
    lift_height: float = 0.25
    bucket_volume_cm3: float = 450.0
    bucket_width: float = 0.10
    bucket_mouth_length: float = 0.075
    bucket_depth: float = 0.06
    # per-joint [min, max] radians: swing, boom, stick, bucket
    joint_limits: tuple = ((-3.2, 3.2), (-1.2, 1.6), (-3.0, 0.0), (-3.8, 1.5))
    max_joint_step: float = 0.35
    start_pose: BucketPose = field(
        default_factory=lambda: BucketPose(-0.12, 0.109, 0.25, -math.pi / 2)
    )

    def __post_init__(self):
        for name in ("boom_length", "stick_length", "bucket_length", "base_height",
                     "bucket_width", "bucket_mouth_length", "bucket_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        box = self.bucket_width * self.bucket_mouth_length * self.bucket_depth * 1e6
        if abs(box - self.bucket_volume_cm3) > 0.01 * self.bucket_volume_cm3:
            raise ValueError(
                f"bucket box dims give {box:.1f} cm^3, inconsistent with "
                f"bucket_volume_cm3={self.bucket_volume_cm3}"
            )

    def within_limits(self, q: JointConfig) -> bool:
        vals = (q.q1, q.q2, q.q3, q.q4)
        return all(lo - 1e-12 <= v <= hi + 1e-12 for v, (lo, hi) in zip(vals, self.joint_limits))


@dataclass(frozen=True)
class JointTrajectory:
    waypoints: np.ndarray  # (N, 4) joint values
    phase_boundaries: tuple[int, ...]  # index of the last waypoint of each phase


@dataclass(frozen=True)
class ValidityReport:
    ik_valid: bool
    attack_in_range: bool
    reasons: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return self.ik_valid and self.attack_in_range


def fk(m: ExcavatorModel, q: JointConfig) -> BucketPose:
    """Bucket-tip pose for a joint configuration."""
    a12 = q.q2 + q.q3
    alpha = a12 + q.q4
    r = (m.boom_length * math.cos(q.q2)
         + m.stick_length * math.cos(a12)
         + m.bucket_length * math.cos(alpha))
    zp = (m.boom_length * math.sin(q.q2)
          + m.stick_length * math.sin(a12)
          + m.bucket_length * math.sin(alpha))
    return BucketPose(
        m.base_x + r * math.cos(q.q1),
        m.base_y + r * math.sin(q.q1),
        m.base_height + zp,
        alpha,
    )


def ik(m: ExcavatorModel, p: BucketPose) -> JointConfig:
    """Closed-form inverse kinematics.

    Swing angle from atan2, bucket-tip offset removed using the excavation
    angle, then the remaining planar 2R problem solved in closed form.
    Elbow-up is preferred; the elbow-down branch is only returned when
    elbow-up violates the joint limits and elbow-down does not.
    """
    dx, dy = p.x - m.base_x, p.y - m.base_y
    q1 = math.atan2(dy, dx)
    rho = math.hypot(dx, dy)
    wr = rho - m.bucket_length * math.cos(p.alpha)
    wz = (p.z - m.base_height) - m.bucket_length * math.sin(p.alpha)
    b, s = m.boom_length, m.stick_length
    d2 = wr * wr + wz * wz
    c3 = (d2 - b * b - s * s) / (2.0 * b * s)
    if c3 > 1.0 + 1e-9 or c3 < -1.0 - 1e-9:
        raise UnreachableError(
            f"wrist at distance {math.sqrt(d2):.4f} outside annulus [{abs(b - s):.4f}, {b + s:.4f}]"
        )
    c3 = min(1.0, max(-1.0, c3))
    base_angle = math.atan2(wz, wr)
    candidates = []
    for q3 in (-math.acos(c3), math.acos(c3)):  # elbow-up first
        q2 = base_angle - math.atan2(s * math.sin(q3), b + s * c3)
        q4 = p.alpha - q2 - q3
        candidates.append(JointConfig(q1, q2, q3, q4))
    for q in candidates:
        if m.within_limits(q):
            return q
    raise JointLimitError(f"no IK branch within joint limits for pose {p}")


def expand_phases(t: TaskTrajectory, hm: HeightMap, m: ExcavatorModel) -> list[BucketPose]:
    """Key bucket poses P0..P5 for the five phases.

    attacking: start pose -> surface contact at (x, y);
    penetration: straight down by d;
    dragging: horizontal by l toward the base projection;
    closing: rotate the bucket in place from alpha to beta;
    lifting: raise to the configured lift height.
    """
    z0 = surface_height(hm, t.x, t.y)
    vx, vy = m.base_x - t.x, m.base_y - t.y
    dist = math.hypot(vx, vy)
    if t.l >= dist:
        raise DegenerateDragError(
            f"drag length {t.l} reaches past the base projection at distance {dist:.4f}"
        )
    ux, uy = vx / dist, vy / dist
    xe, ye = t.x + t.l * ux, t.y + t.l * uy
    return [
        m.start_pose,
        BucketPose(t.x, t.y, z0, t.alpha),
        BucketPose(t.x, t.y, z0 - t.d, t.alpha),
        BucketPose(xe, ye, z0 - t.d, t.alpha),
        BucketPose(xe, ye, z0 - t.d, t.beta),
        BucketPose(xe, ye, m.lift_height, t.beta),
    ]


def _segment_length(a: BucketPose, b: BucketPose, m: ExcavatorModel) -> float:
    pos = math.sqrt((b.x - a.x) ** 2 + (b.y - a.y) ** 2 + (b.z - a.z) ** 2)
    # pure rotations still travel: the wrist sweeps an arc of radius bucket_length
    return max(pos, abs(b.alpha - a.alpha) * m.bucket_length)


def interpolate_trajectory(
    poses: list[BucketPose], m: ExcavatorModel, step: float = DEFAULT_INTERP_STEP
) -> JointTrajectory:
    """Linear task-space interpolation at <= step spacing, converted by IK.

    Waypoints per segment: ceil(effective_length / step) + 1 (shared segment
    endpoints deduplicated in the concatenated list); angles interpolate
    proportionally to the segment fraction. Raises a kinematics error
    carrying the failing phase index when any waypoint has no IK solution
    or when consecutive waypoints exceed the max joint step.
    """
    waypoints: list[np.ndarray] = []
    boundaries: list[int] = []
    for phase, (a, b) in enumerate(zip(poses[:-1], poses[1:])):
        length = _segment_length(a, b, m)
        if length == 0.0:
            fracs = [0.0]
        else:
            n = max(1, math.ceil(length / step - 1e-9))
            fracs = [i / n for i in range(n + 1)]
        for idx, f in enumerate(fracs):
            if waypoints and idx == 0:
                continue  # shared with the previous segment's end
            pose = BucketPose(
                a.x + f * (b.x - a.x),
                a.y + f * (b.y - a.y),
                a.z + f * (b.z - a.z),
                a.alpha + f * (b.alpha - a.alpha),
            )
            try:
                q = ik(m, pose)
            except (UnreachableError, JointLimitError) as e:
                e.phase = phase
                raise
            qa = q.as_array()
            if waypoints and np.max(np.abs(qa - waypoints[-1])) > m.max_joint_step:
                raise JointLimitError(
                    f"joint step exceeds {m.max_joint_step} rad in phase {phase}", phase=phase
                )
            waypoints.append(qa)
        boundaries.append(len(waypoints) - 1)
    return JointTrajectory(np.array(waypoints), tuple(boundaries))


def validate(
    t: TaskTrajectory,
    hm: HeightMap,
    m: ExcavatorModel,
    tray: CuboidRegion,
    margin: float = DEFAULT_ATTACK_MARGIN,
    step: float = DEFAULT_INTERP_STEP,
) -> ValidityReport:
    """Check attack-point range and IK feasibility of the whole trajectory.

    Never raises: every failure mode is reported as a reason.
    """
    reasons: list[str] = []
    attack_in_range = tray.footprint_contains(t.x, t.y, margin)
    if not attack_in_range:
        reasons.append(ATTACK_OUT_OF_RANGE)
    ik_valid = True
    try:
        poses = expand_phases(t, hm, m)
        interpolate_trajectory(poses, m, step)
    except DegenerateDragError:
        ik_valid = False
        reasons.append(DEGENERATE_DRAG)
    except UnreachableError:
        ik_valid = False
        reasons.append(IK_UNREACHABLE)
    except JointLimitError:
        ik_valid = False
        reasons.append(JOINT_LIMIT)
    except OutOfRangeError:
        ik_valid = False
        reasons.append(ATTACK_OUT_OF_FOOTPRINT)
    return ValidityReport(ik_valid, attack_in_range, tuple(reasons))
