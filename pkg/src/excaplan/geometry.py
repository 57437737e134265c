"""Tray-frame pointcloud processing: rigid transforms, cuboid cropping,
voxelization, and height-map construction.

All binning operations share one floor rule (see `bin_indices`): a
coordinate maps to cell i when it falls in the half-open interval
[origin + i*res, origin + (i+1)*res). Indices are computed as
floor((coord - origin) * (1/res)) rather than dividing, so that decimal
boundaries like 0.0 on a 0.01 m grid anchored at -0.32 land in the cell
the exact decimal arithmetic would give.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FrameMismatchError, InvalidTransformError, OutOfRangeError

ORTHONORMAL_TOL = 1e-9


class Frame(enum.Enum):
    CAMERA = "camera"
    TRAY = "tray"


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError(f"non-finite point: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (3x3 orthonormal, det +1) plus translation, both tray-frame units."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InvalidTransformError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=ORTHONORMAL_TOL):
            raise InvalidTransformError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidTransformError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def yaw(angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(angle), np.sin(angle)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return RigidTransform(r, np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self ∘ other (apply `other` first, then `self`)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class CuboidRegion:
    center: Point3
    half_extents: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if not np.all(he > 0):
            raise ValueError(f"half extents must be positive, got {he}")
        object.__setattr__(self, "half_extents", he)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-bound membership mask: |p - c| <= half extent on all axes."""
        d = np.abs(np.asarray(points, dtype=np.float64) - self.center.as_array())
        return np.all(d <= self.half_extents, axis=-1)

    def footprint_contains(self, x, y, margin: float = 0.0) -> bool:
        return bool(
            abs(x - self.center.x) <= self.half_extents[0] - margin
            and abs(y - self.center.y) <= self.half_extents[1] - margin
        )


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) float64, order-preserving
    frame: Frame

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def require_tray_frame(cloud: PointCloud, op: str) -> None:
    if cloud.frame is not Frame.TRAY:
        raise FrameMismatchError(f"{op} requires a tray-frame cloud, got {cloud.frame.value}")


def bin_indices(coords: np.ndarray, origin: float, resolution: float) -> np.ndarray:
    """Shared floor-binning rule for voxel grids and height maps."""
    inv = 1.0 / resolution
    return np.floor((np.asarray(coords, dtype=np.float64) - origin) * inv).astype(np.int64)


@dataclass(frozen=True)
class GridSpec:
    """Dense occupancy grid layout; origin is the minimum corner."""

    dims: tuple[int, int, int] = (64, 64, 32)
    resolution: float = 0.01
    origin: Point3 = field(default=None)  # default: grid centered on the tray origin

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError(f"grid resolution must be positive, got {self.resolution}")
        if any(int(d) <= 0 for d in self.dims):
            raise ConfigError(f"grid dims must be positive, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.origin is None:
            nx, ny, nz = self.dims
            object.__setattr__(
                self,
                "origin",
                Point3(
                    -0.5 * nx * self.resolution,
                    -0.5 * ny * self.resolution,
                    -0.5 * nz * self.resolution,
                ),
            )


@dataclass(frozen=True)
class VoxelGrid:
    dims: tuple[int, int, int]
    resolution: float
    origin: Point3
    occupancy: np.ndarray  # bool, shape dims

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != tuple(self.dims):
            raise ConfigError(f"occupancy shape {occ.shape} != dims {self.dims}")
        object.__setattr__(self, "occupancy", occ)

    def pack_bits(self) -> bytes:
        """Bit-pack occupancy row-major with x fastest, then y, then z.

        Bit k of byte j is flat cell index 8*j + k (little-endian bit order);
        flat index = ix + nx*iy + nx*ny*iz.
        """
        flat = self.occupancy.ravel(order="F")
        return np.packbits(flat, bitorder="little").tobytes()

    @staticmethod
    def from_packed(data: bytes, spec: GridSpec) -> "VoxelGrid":
        nx, ny, nz = spec.dims
        n = nx * ny * nz
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[:n]
        occ = bits.astype(bool).reshape((nx, ny, nz), order="F")
        return VoxelGrid(spec.dims, spec.resolution, spec.origin, occ)


@dataclass(frozen=True)
class HeightMapSpec:
    dims: tuple[int, int] = (64, 64)
    cell_size: float = 0.01
    origin: tuple[float, float] = (-0.32, -0.32)
    floor_z: float = -0.15

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ConfigError(f"height-map cell size must be positive, got {self.cell_size}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


@dataclass(frozen=True)
class HeightMap:
    dims: tuple[int, int]
    cell_size: float
    origin: tuple[float, float]
    heights: np.ndarray  # (nx, ny), max surface z per cell
    floor_z: float

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.shape != tuple(self.dims):
            raise ConfigError(f"heights shape {h.shape} != dims {self.dims}")
        object.__setattr__(self, "heights", h)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.origin[0] + (i + 0.5) * self.cell_size,
            self.origin[1] + (j + 0.5) * self.cell_size,
        )


def transform_cloud(cloud: PointCloud, t: RigidTransform, frame: Frame | None = None) -> PointCloud:
    """Apply p' = R p + translation to every point.

    The output frame tag is the caller's statement of what the transform
    produced; it defaults to the input tag.
    """
    return PointCloud(t.apply(cloud.points), cloud.frame if frame is None else frame)


def crop_cuboid(cloud: PointCloud, region: CuboidRegion) -> PointCloud:
    """Keep exactly the points inside the cuboid (closed bounds), order preserved."""
    require_tray_frame(cloud, "crop_cuboid")
    return PointCloud(cloud.points[region.contains(cloud.points)], Frame.TRAY)


def voxelize(cloud: PointCloud, spec: GridSpec) -> VoxelGrid:
    """Binary occupancy: a cell is set iff at least one point bins into it.

    Points outside [origin, origin + dims*resolution) are silently dropped
    (half-open upper bound).
    """
    require_tray_frame(cloud, "voxelize")
    nx, ny, nz = spec.dims
    occ = np.zeros((nx, ny, nz), dtype=bool)
    pts = cloud.points
    if len(pts):
        o = spec.origin
        ix = bin_indices(pts[:, 0], o.x, spec.resolution)
        iy = bin_indices(pts[:, 1], o.y, spec.resolution)
        iz = bin_indices(pts[:, 2], o.z, spec.resolution)
        keep = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
        occ[ix[keep], iy[keep], iz[keep]] = True
    return VoxelGrid(spec.dims, spec.resolution, spec.origin, occ)


def build_height_map(cloud: PointCloud, spec: HeightMapSpec) -> HeightMap:
    """Per-cell max surface z; empty cells sit at floor_z."""
    require_tray_frame(cloud, "build_height_map")
    nx, ny = spec.dims
    heights = np.full((nx, ny), spec.floor_z, dtype=np.float64)
    pts = cloud.points
    if len(pts):
        ix = bin_indices(pts[:, 0], spec.origin[0], spec.cell_size)
        iy = bin_indices(pts[:, 1], spec.origin[1], spec.cell_size)
        keep = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        np.maximum.at(heights, (ix[keep], iy[keep]), pts[keep, 2])
        np.maximum(heights, spec.floor_z, out=heights)
    return HeightMap(spec.dims, spec.cell_size, spec.origin, heights, spec.floor_z)


def surface_height(hm: HeightMap, x: float, y: float) -> float:
    """Height of the cell containing (x, y), same floor-binning rule as voxelize."""
    i = int(bin_indices(np.array([x]), hm.origin[0], hm.cell_size)[0])
    j = int(bin_indices(np.array([y]), hm.origin[1], hm.cell_size)[0])
    nx, ny = hm.dims
    if not (0 <= i < nx and 0 <= j < ny):
        raise OutOfRangeError(f"query ({x}, {y}) outside height-map footprint")
    return float(hm.heights[i, j])
