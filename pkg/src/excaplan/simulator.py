"""Deterministic surrogate excavation environment.

Random convex rigid objects are dropped into a tray with a vertical
drop-and-settle rule (stacking by footprint overlap, no rolling). A
synthetic top-surface pointcloud is rendered by vertical raycasting.
Executing an excavation captures objects whose centroids fall inside a
prism swept along the drag line, greedily nearest-to-the-drag-end first,
up to the bucket volume; a penetration + payload force proxy decides
force-limit failures.

Everything is a pure function of (seed, config): re-running produces
byte-identical scenes, clouds, and outcomes.

Object volumes are quantized to 2^-32 cm^3 at generation so that any
bookkeeping sum (in-tray + dumped) is exact in float64 regardless of
summation order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DataError
from .geometry import (
    CuboidRegion,
    Frame,
    HeightMap,
    Point3,
    PointCloud,
    RigidTransform,
    surface_height,
)
from .kinematics import (
    DEFAULT_ATTACK_MARGIN,
    ExcavatorModel,
    TaskTrajectory,
    ValidityReport,
    validate,
)

VOLUME_QUANTUM_CM3 = 2.0 ** -32

SNAPSHOT_MAGIC = b"EXCS"
SNAPSHOT_VERSION = 1

INVALID_IK_OR_RANGE = "ik_or_range"
INVALID_FORCE_LIMIT = "force_limit"


def quantize_volume(vol_cm3: float) -> float:
    return round(vol_cm3 / VOLUME_QUANTUM_CM3) * VOLUME_QUANTUM_CM3


def hull_volume_centroid(hull: ConvexHull) -> tuple[float, np.ndarray]:
    """Volume and volumetric centroid from signed tetrahedra against the origin.

    Each triangular facet is oriented to match qhull's outward normal, so the
    signed sum is correct for any origin position.
    """
    pts = hull.points
    total = 0.0
    weighted = np.zeros(3)
    for simplex, eq in zip(hull.simplices, hull.equations):
        a, b, c = pts[simplex]
        if np.dot(np.cross(b - a, c - a), eq[:3]) < 0:
            b, c = c, b
        v = np.dot(a, np.cross(b, c)) / 6.0
        total += v
        weighted += v * (a + b + c) / 4.0
    return total, weighted / total


def _ordered_footprint(points_xy: np.ndarray) -> np.ndarray:
    """Counterclockwise 2D convex hull vertices."""
    hull = ConvexHull(points_xy)
    return points_xy[hull.vertices]


def _polygons_overlap(pa: np.ndarray, pb: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (touching counts as overlap)."""
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            ex, ey = poly[(i + 1) % n] - poly[i]
            axis = np.array([-ey, ex])
            proj_a = pa @ axis
            proj_b = pb @ axis
            if proj_a.max() < proj_b.min() or proj_b.max() < proj_a.min():
                return False
    return True


class RigidObject:
    """Convex rigid body; vertices in a body frame centered on the volume centroid."""

    __slots__ = (
        "id", "vertices", "volume_cm3", "density",
        "_rotation", "_xy", "_z",
        "_face_normals", "_face_offsets",
        "_rot_verts", "_footprint", "_rot_normals", "_min_rot_z", "_max_rot_z",
    )

    def __init__(self, obj_id: int, vertices: np.ndarray, volume_cm3: float, density: float = 6.0):
        vertices = np.asarray(vertices, dtype=np.float64)
        if not 4 <= len(vertices) <= 50:
            raise DataError(f"object {obj_id}: vertex count {len(vertices)} outside [4, 50]")
        self.id = int(obj_id)
        self.vertices = vertices
        self.volume_cm3 = float(volume_cm3)
        self.density = float(density)
        hull = ConvexHull(vertices)
        if abs(hull.volume * 1e6 - self.volume_cm3) > 1e-9 * self.volume_cm3 + 1e-6:
            raise DataError(
                f"object {obj_id}: stored volume {self.volume_cm3} cm^3 "
                f"!= hull volume {hull.volume * 1e6} cm^3"
            )
        # outward halfspaces n.v <= b in the body frame
        self._face_normals = hull.equations[:, :3].copy()
        self._face_offsets = -hull.equations[:, 3].copy()
        self._rotation = np.eye(3)
        self._xy = np.zeros(2)
        self._z = 0.0
        self._refresh_rotation_caches()

    # -- placement -------------------------------------------------------

    def _refresh_rotation_caches(self):
        self._rot_verts = self.vertices @ self._rotation.T
        self._rot_normals = self._face_normals @ self._rotation.T
        self._min_rot_z = float(self._rot_verts[:, 2].min())
        self._max_rot_z = float(self._rot_verts[:, 2].max())
        self._footprint = None

    def place(self, x: float, y: float, yaw: float):
        c, s = math.cos(yaw), math.sin(yaw)
        self._rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        self._xy = np.array([x, y])
        self._refresh_rotation_caches()
        self._footprint = _ordered_footprint(self._rot_verts[:, :2] + self._xy)

    def set_rotation(self, rotation: np.ndarray, x: float, y: float):
        self._rotation = np.asarray(rotation, dtype=np.float64)
        self._xy = np.array([x, y])
        self._refresh_rotation_caches()
        self._footprint = _ordered_footprint(self._rot_verts[:, :2] + self._xy)

    def set_height(self, z: float):
        self._z = float(z)

    # -- queries ----------------------------------------------------------

    @property
    def pose(self) -> RigidTransform:
        return RigidTransform(self._rotation, np.array([self._xy[0], self._xy[1], self._z]))

    @property
    def centroid(self) -> np.ndarray:
        return np.array([self._xy[0], self._xy[1], self._z])

    @property
    def footprint(self) -> np.ndarray:
        return self._footprint

    @property
    def top_z(self) -> float:
        return self._max_rot_z + self._z

    @property
    def bottom_z(self) -> float:
        return self._min_rot_z + self._z

    @property
    def mass_kg(self) -> float:
        return self.volume_cm3 * self.density / 1000.0

    def posed_vertices(self) -> np.ndarray:
        out = self._rot_verts.copy()
        out[:, 0] += self._xy[0]
        out[:, 1] += self._xy[1]
        out[:, 2] += self._z
        return out

    def top_surface_patch(self, xs: np.ndarray, ys: np.ndarray):
        """Top-surface heights relative to the object's z translation.

        For the raster positions xs x ys, returns the highest boundary of the
        solid along each vertical ray (or -inf where the ray misses). Depends
        only on the xy placement, so the patch stays valid when the object
        settles to a new height.
        """
        dx = xs - self._xy[0]
        dy = ys - self._xy[1]
        rhs = (
            self._face_offsets[:, None, None]
            - self._rot_normals[:, 0, None, None] * dx[None, :, None]
            - self._rot_normals[:, 1, None, None] * dy[None, None, :]
        )
        nz = self._rot_normals[:, 2]
        hi = np.full((len(xs), len(ys)), np.inf)
        lo = np.full((len(xs), len(ys)), -np.inf)
        feasible = np.ones((len(xs), len(ys)), dtype=bool)
        for k in range(len(nz)):
            if nz[k] > 1e-12:
                np.minimum(hi, rhs[k] / nz[k], out=hi)
            elif nz[k] < -1e-12:
                np.maximum(lo, rhs[k] / nz[k], out=lo)
            else:
                feasible &= rhs[k] >= -1e-12
        feasible &= lo <= hi + 1e-12
        return np.where(feasible, hi, -np.inf)


def default_tray() -> CuboidRegion:
    """0.38 x 0.4 x 0.3 m excavation cuboid centered on the tray origin."""
    return CuboidRegion(Point3(0.0, 0.0, 0.0), np.array([0.19, 0.20, 0.15]))


@dataclass(frozen=True)
class SceneGenConfig:
    n_objects_range: tuple[int, int] = (50, 400)
    vertex_count_range: tuple[int, int] = (10, 50)
    coord_max_range: tuple[float, float] = (0.01, 0.05)
    tray: CuboidRegion = field(default_factory=default_tray)
    density: float = 6.0

    def __post_init__(self):
        for name in ("n_objects_range", "vertex_count_range", "coord_max_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered, got ({lo}, {hi})")


@dataclass(frozen=True)
class ForceParams:
    """Analytic force proxy constants."""

    k_pen: float = 4000.0  # N/m^2 against the engaged frontal area d * bucket_width
    k_drag: float = 2.0  # dimensionless payload multiplier
    g: float = 9.81
    force_limit: float = 150.0


@dataclass(frozen=True)
class ExcavationOutcome:
    captured_ids: tuple[int, ...]
    captured_volume: float  # cm^3
    captured_count: int
    peak_force: float  # N
    valid: bool
    invalid_reason: str = ""


class ClutterScene:
    """Mutable world state: rigid objects in a tray plus dump bookkeeping."""

    def __init__(self, objects: list[RigidObject], tray: CuboidRegion, floor_z: float):
        self.objects = objects
        self.tray = tray
        self.floor_z = float(floor_z)
        self.dumped_volume = 0.0
        self.pending_volume = 0.0
        self._render_cache: dict = {}

    def in_tray_volume(self) -> float:
        return sum(o.volume_cm3 for o in self.objects)

    def clone(self) -> "ClutterScene":
        out = ClutterScene([], self.tray, self.floor_z)
        for o in self.objects:
            c = RigidObject(o.id, o.vertices, o.volume_cm3, o.density)
            c.set_rotation(o._rotation, o._xy[0], o._xy[1])
            c.set_height(o._z)
            out.objects.append(c)
        out.dumped_volume = self.dumped_volume
        out.pending_volume = self.pending_volume
        return out


def gen_object(
    rng: np.random.Generator,
    obj_id: int = 0,
    vertex_count_range: tuple[int, int] = (10, 50),
    coord_max_range: tuple[float, float] = (0.01, 0.05),
    density: float = 6.0,
) -> RigidObject:
    """Random convex object: uniform raw vertices in a per-axis random box,
    reduced to their convex hull, recentered on the volume centroid."""
    while True:
        n = int(rng.integers(vertex_count_range[0], vertex_count_range[1] + 1))
        axis_max = rng.uniform(coord_max_range[0], coord_max_range[1], size=3)
        raw = rng.uniform(0.0, 1.0, size=(n, 3)) * axis_max
        try:
            hull = ConvexHull(raw)
        except QhullError:
            continue
        if len(hull.vertices) < 4:
            continue
        vol_m3, centroid = hull_volume_centroid(hull)
        if vol_m3 <= 0:
            continue
        verts = raw[hull.vertices] - centroid
        return RigidObject(obj_id, verts, quantize_volume(vol_m3 * 1e6), density)


def _support_height(obj: RigidObject, settled: list[RigidObject], floor_z: float) -> float:
    """Max top height of settled material overlapping the object's footprint."""
    fp = obj.footprint
    bb_lo = fp.min(axis=0)
    bb_hi = fp.max(axis=0)
    support = floor_z
    for prev in settled:
        pfp = prev.footprint
        if np.any(pfp.max(axis=0) < bb_lo) or np.any(pfp.min(axis=0) > bb_hi):
            continue
        if prev.top_z <= support:
            continue
        if _polygons_overlap(fp, pfp):
            support = prev.top_z
    return support


def settle_scene(scene: ClutterScene) -> None:
    """Re-run the vertical drop rule over all objects in placement order."""
    settled: list[RigidObject] = []
    for obj in scene.objects:
        support = _support_height(obj, settled, scene.floor_z)
        obj.set_height(support - obj._min_rot_z)
        settled.append(obj)


def gen_scene(cfg: SceneGenConfig, rng: np.random.Generator) -> ClutterScene:
    """Drop n random objects at random footprint positions and yaws."""
    tray = cfg.tray
    n = int(rng.integers(cfg.n_objects_range[0], cfg.n_objects_range[1] + 1))
    floor_z = tray.center.z - tray.half_extents[2]
    scene = ClutterScene([], tray, floor_z)
    for i in range(n):
        obj = gen_object(rng, i, cfg.vertex_count_range, cfg.coord_max_range, cfg.density)
        x = rng.uniform(tray.center.x - tray.half_extents[0], tray.center.x + tray.half_extents[0])
        y = rng.uniform(tray.center.y - tray.half_extents[1], tray.center.y + tray.half_extents[1])
        yaw = rng.uniform(0.0, 2.0 * math.pi)
        obj.place(x, y, yaw)
        support = _support_height(obj, scene.objects, floor_z)
        obj.set_height(support - obj._min_rot_z)
        scene.objects.append(obj)
    return scene


def _raster_axis(lo: float, width: float, spacing: float) -> np.ndarray:
    n = int(math.floor(width / spacing + 1e-9))
    return lo + spacing / 2.0 + spacing * np.arange(n)


def render_cloud(
    scene: ClutterScene, spacing: float = 0.005, region: CuboidRegion | None = None
) -> PointCloud:
    """Vertical raycast on a raster over the region footprint (default: tray).

    Each ray yields one point at the highest object surface it crosses, or
    at the tray floor. Per-object surface patches are cached: settling only
    shifts an object vertically, which shifts its patch by the same amount.
    """
    if spacing <= 0:
        raise ValueError(f"raster spacing must be positive, got {spacing}")
    if region is None:
        region = scene.tray
    cx, cy = region.center.x, region.center.y
    hx, hy = region.half_extents[0], region.half_extents[1]
    xs = _raster_axis(cx - hx, 2 * hx, spacing)
    ys = _raster_axis(cy - hy, 2 * hy, spacing)
    cache_key = (round(spacing, 12), round(cx - hx, 12), round(cy - hy, 12), len(xs), len(ys))
    cache = scene._render_cache.setdefault(cache_key, {})

    z = np.full((len(xs), len(ys)), scene.floor_z)
    inv = 1.0 / spacing
    for obj in scene.objects:
        patch = cache.get(obj.id)
        if patch is None:
            fp = obj.footprint
            i0 = max(0, int(math.floor((fp[:, 0].min() - xs[0]) * inv)))
            i1 = min(len(xs), int(math.ceil((fp[:, 0].max() - xs[0]) * inv)) + 1)
            j0 = max(0, int(math.floor((fp[:, 1].min() - ys[0]) * inv)))
            j1 = min(len(ys), int(math.ceil((fp[:, 1].max() - ys[0]) * inv)) + 1)
            if i0 >= i1 or j0 >= j1:
                patch = (0, 0, np.full((0, 0), -np.inf))
            else:
                patch = (i0, j0, obj.top_surface_patch(xs[i0:i1], ys[j0:j1]))
            cache[obj.id] = patch
        i0, j0, rel = patch
        if rel.size:
            view = z[i0:i0 + rel.shape[0], j0:j0 + rel.shape[1]]
            np.maximum(view, rel + obj._z, out=view)

    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), z.ravel()])
    return PointCloud(pts, Frame.TRAY)


def capture_candidates(
    scene: ClutterScene, t: TaskTrajectory, m: ExcavatorModel, hm: HeightMap
) -> list[int]:
    """Objects whose centroid lies in the capture prism, nearest drag end first.

    The prism follows the drag line from the attack point toward the base:
    axial extent [0, l + bucket mouth length], width bucket_width centered on
    the line, z from (attack surface - d) up to the local clutter surface.
    """
    z0 = surface_height(hm, t.x, t.y)
    vx, vy = m.base_x - t.x, m.base_y - t.y
    dist = math.hypot(vx, vy)
    ux, uy = vx / dist, vy / dist
    ex, ey = t.x + t.l * ux, t.y + t.l * uy
    axial_max = t.l + m.bucket_mouth_length
    half_w = m.bucket_width / 2.0
    z_lo = z0 - t.d

    nx_lo, ny_lo = hm.origin
    nx, ny = hm.dims
    picked = []
    for obj in scene.objects:
        cx, cy, cz = obj.centroid
        rel_x, rel_y = cx - t.x, cy - t.y
        axial = rel_x * ux + rel_y * uy
        if not 0.0 <= axial <= axial_max:
            continue
        perp = abs(-rel_x * uy + rel_y * ux)
        if perp > half_w:
            continue
        i = int(math.floor((cx - nx_lo) / hm.cell_size))
        j = int(math.floor((cy - ny_lo) / hm.cell_size))
        if not (0 <= i < nx and 0 <= j < ny):
            continue
        if not z_lo <= cz <= hm.heights[i, j]:
            continue
        picked.append((math.hypot(cx - ex, cy - ey), obj.id))
    picked.sort()
    return [oid for _, oid in picked]


def execute_excavation(
    scene: ClutterScene,
    t: TaskTrajectory,
    m: ExcavatorModel,
    hm: HeightMap,
    validity: ValidityReport | None = None,
    force: ForceParams = ForceParams(),
    margin: float = DEFAULT_ATTACK_MARGIN,
) -> ExcavationOutcome:
    """Execute one excavation against the surrogate capture/force model.

    Invalid trajectories (IK or attack range) and force-limit violations
    abort the dig: nothing is captured. Captured objects move to the
    scene's pending-bucket register until dumped.
    """
    if validity is None:
        validity = validate(t, hm, m, scene.tray, margin)
    if not validity.valid:
        return ExcavationOutcome((), 0.0, 0, 0.0, False, INVALID_IK_OR_RANGE)

    candidates = capture_candidates(scene, t, m, hm)
    by_id = {o.id: o for o in scene.objects}
    payload_mass = sum(by_id[oid].mass_kg for oid in candidates)
    peak_force = force.k_pen * t.d * m.bucket_width + force.k_drag * payload_mass * force.g
    if peak_force > force.force_limit:
        return ExcavationOutcome((), 0.0, 0, peak_force, False, INVALID_FORCE_LIMIT)

    captured: list[int] = []
    volume = 0.0
    for oid in candidates:
        v = by_id[oid].volume_cm3
        if volume + v > m.bucket_volume_cm3:
            break
        captured.append(oid)
        volume += v

    cap_set = set(captured)
    scene.objects = [o for o in scene.objects if o.id not in cap_set]
    for key in scene._render_cache.values():
        for oid in captured:
            key.pop(oid, None)
    scene.pending_volume += volume
    return ExcavationOutcome(tuple(captured), volume, len(captured), peak_force, True, "")


def label_outcome(o: ExcavationOutcome, threshold_cm3: float = 134.0) -> bool:
    """Success iff the trial was valid and captured strictly more than the threshold."""
    return bool(o.valid and o.captured_volume > threshold_cm3)


def dump_and_settle(scene: ClutterScene, o: ExcavationOutcome) -> ClutterScene:
    """Move the pending bucket volume to the dump register and re-settle."""
    scene.pending_volume -= o.captured_volume
    scene.dumped_volume += o.captured_volume
    if o.captured_count:
        settle_scene(scene)
    return scene


# -- snapshot serialization (debugging/stats) -----------------------------

def save_scene(scene: ClutterScene) -> bytes:
    """Little-endian snapshot: magic, version u16, count u32, then per object
    id u32, vertex count u16, vertices 3xf64 each, volume f64, pose 9+3 f64."""
    out = [SNAPSHOT_MAGIC, struct.pack("<HI", SNAPSHOT_VERSION, len(scene.objects))]
    for o in scene.objects:
        out.append(struct.pack("<IH", o.id, len(o.vertices)))
        out.append(o.vertices.astype("<f8").tobytes())
        out.append(struct.pack("<d", o.volume_cm3))
        pose = o.pose
        out.append(pose.rotation.astype("<f8").tobytes())
        out.append(pose.translation.astype("<f8").tobytes())
    return b"".join(out)


def load_scene(data: bytes, tray: CuboidRegion, floor_z: float, density: float = 6.0) -> ClutterScene:
    if data[:4] != SNAPSHOT_MAGIC:
        raise DataError("bad scene snapshot magic")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != SNAPSHOT_VERSION:
        raise DataError(f"unsupported scene snapshot version {version}")
    off = 10
    scene = ClutterScene([], tray, floor_z)
    for _ in range(count):
        oid, nv = struct.unpack_from("<IH", data, off)
        off += 6
        verts = np.frombuffer(data, dtype="<f8", count=3 * nv, offset=off).reshape(nv, 3).copy()
        off += 24 * nv
        (vol,) = struct.unpack_from("<d", data, off)
        off += 8
        rot = np.frombuffer(data, dtype="<f8", count=9, offset=off).reshape(3, 3).copy()
        off += 72
        trans = np.frombuffer(data, dtype="<f8", count=3, offset=off).copy()
        off += 24
        obj = RigidObject(oid, verts, vol, density)
        obj.set_rotation(rot, trans[0], trans[1])
        obj.set_height(trans[2])
        scene.objects.append(obj)
    return scene
