import numpy as np
import pytest

from excaplan.errors import FrameMismatchError, InvalidTransformError, OutOfRangeError, ConfigError
from excaplan.geometry import (
    CuboidRegion,
    Frame,
    GridSpec,
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


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_transform(rng, scale=0.5):
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, size=3))


class TestRigidTransform:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(0)
        cloud = PointCloud(rng.uniform(-1, 1, size=(50, 3)), Frame.TRAY)
        out = transform_cloud(cloud, RigidTransform.identity())
        assert np.array_equal(out.points, cloud.points)
        assert out.frame is Frame.TRAY

    def test_quarter_turn_about_z(self):
        t = RigidTransform.yaw(np.pi / 2)
        out = transform_cloud(PointCloud([[1.0, 0.0, 0.0]], Frame.TRAY), t)
        assert np.allclose(out.points[0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_round_trip_inverse(self):
        rng = np.random.default_rng(1)
        cloud = PointCloud(rng.uniform(-1, 1, size=(200, 3)), Frame.TRAY)
        t = random_transform(rng)
        back = transform_cloud(transform_cloud(cloud, t), t.inverse())
        assert np.max(np.abs(back.points - cloud.points)) < 1e-9

    def test_non_orthonormal_rejected(self):
        with pytest.raises(InvalidTransformError):
            RigidTransform(np.eye(3) * 1.01, np.zeros(3))
        with pytest.raises(InvalidTransformError):
            # reflection: orthonormal but det -1
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_compose_matches_sequential_application(self):
        rng = np.random.default_rng(2)
        a, b = random_transform(rng), random_transform(rng)
        pts = rng.uniform(-1, 1, size=(20, 3))
        assert np.allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)


class TestCropCuboid:
    REGION = CuboidRegion(Point3(0.05, -0.02, 0.1), np.array([0.1, 0.2, 0.05]))

    def test_center_retained(self):
        out = crop_cuboid(PointCloud([[0.05, -0.02, 0.1]], Frame.TRAY), self.REGION)
        assert len(out) == 1

    def test_face_point_retained(self):
        # closed bounds: |p - c| exactly equal to the half extent stays in
        out = crop_cuboid(PointCloud([[0.15, -0.02, 0.1]], Frame.TRAY), self.REGION)
        assert len(out) == 1

    def test_matches_brute_force_membership(self):
        rng = np.random.default_rng(3)
        c = self.REGION.center.as_array()
        he = self.REGION.half_extents
        pts = rng.uniform(c - 2 * he, c + 2 * he, size=(1000, 3))
        out = crop_cuboid(PointCloud(pts, Frame.TRAY), self.REGION)
        expected = [
            p for p in pts
            if all(abs(p[k] - c[k]) <= he[k] for k in range(3))
        ]
        assert np.array_equal(out.points, np.array(expected).reshape(-1, 3))

    def test_camera_frame_rejected(self):
        with pytest.raises(FrameMismatchError):
            crop_cuboid(PointCloud([[0.0, 0.0, 0.0]], Frame.CAMERA), self.REGION)


class TestVoxelize:
    def test_origin_point_lands_in_center_cell(self):
        grid = voxelize(PointCloud([[0.0, 0.0, 0.0]], Frame.TRAY), GridSpec())
        assert grid.occupancy[32, 32, 16]
        assert grid.occupancy.sum() == 1

    def test_half_open_bounds(self):
        spec = GridSpec()
        lo = voxelize(PointCloud([[-0.32, -0.32, -0.16]], Frame.TRAY), spec)
        assert lo.occupancy[0, 0, 0]
        hi = voxelize(PointCloud([[0.32, 0.32, 0.16]], Frame.TRAY), spec)
        assert hi.occupancy.sum() == 0

    def test_matches_brute_force_binning(self):
        rng = np.random.default_rng(4)
        spec = GridSpec(dims=(16, 12, 8), resolution=0.02, origin=Point3(-0.1, -0.05, 0.0))
        pts = rng.uniform(-0.3, 0.4, size=(500, 3))
        grid = voxelize(PointCloud(pts, Frame.TRAY), spec)
        expected = np.zeros(spec.dims, dtype=bool)
        inv = 1.0 / spec.resolution
        for p in pts:
            i = int(np.floor((p[0] - spec.origin.x) * inv))
            j = int(np.floor((p[1] - spec.origin.y) * inv))
            k = int(np.floor((p[2] - spec.origin.z) * inv))
            if 0 <= i < 16 and 0 <= j < 12 and 0 <= k < 8:
                expected[i, j, k] = True
        assert np.array_equal(grid.occupancy, expected)

    def test_non_positive_resolution_rejected(self):
        with pytest.raises(ConfigError):
            GridSpec(resolution=0.0)

    def test_duplicate_points_idempotent(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-0.3, 0.3, size=(100, 3))
        spec = GridSpec()
        base = voxelize(PointCloud(pts, Frame.TRAY), spec)
        doubled = voxelize(PointCloud(np.vstack([pts, pts[::3]]), Frame.TRAY), spec)
        assert np.array_equal(base.occupancy, doubled.occupancy)

    def test_extrinsics_invariance(self):
        # re-expressing the cloud in any other camera frame, with the tray
        # transform compensated, must give a bit-identical grid
        rng = np.random.default_rng(6)
        cloud_cam = PointCloud(rng.uniform(-0.5, 0.5, size=(300, 3)), Frame.CAMERA)
        t_tray_cam = random_transform(rng)
        spec = GridSpec()
        ref = voxelize(transform_cloud(cloud_cam, t_tray_cam, Frame.TRAY), spec)
        for _ in range(20):
            e = random_transform(rng)
            cloud2 = transform_cloud(cloud_cam, e.inverse(), Frame.CAMERA)
            grid2 = voxelize(transform_cloud(cloud2, t_tray_cam.compose(e), Frame.TRAY), spec)
            assert np.array_equal(ref.occupancy, grid2.occupancy)

    def test_crop_then_voxelize_equals_voxelize_when_cuboid_covers_grid(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-0.5, 0.5, size=(400, 3))
        spec = GridSpec()
        cuboid = CuboidRegion(Point3(0, 0, 0), np.array([0.4, 0.4, 0.2]))  # covers the grid box
        direct = voxelize(PointCloud(pts, Frame.TRAY), spec)
        cropped = voxelize(crop_cuboid(PointCloud(pts, Frame.TRAY), cuboid), spec)
        assert np.array_equal(direct.occupancy, cropped.occupancy)

    def test_pack_bits_layout(self):
        spec = GridSpec(dims=(4, 3, 2), resolution=0.01, origin=Point3(0, 0, 0))
        occ = np.zeros((4, 3, 2), dtype=bool)
        occ[1, 2, 1] = True  # flat = 1 + 4*2 + 4*3*1 = 21 -> byte 2, bit 5
        grid = VoxelGrid(spec.dims, spec.resolution, spec.origin, occ)
        packed = grid.pack_bits()
        assert len(packed) == 3  # ceil(24 / 8)
        assert packed[2] == 1 << 5 and packed[0] == 0 and packed[1] == 0
        back = VoxelGrid.from_packed(packed, spec)
        assert np.array_equal(back.occupancy, occ)

    def test_default_grid_packs_to_16384_bytes(self):
        grid = voxelize(PointCloud(np.zeros((0, 3)), Frame.TRAY), GridSpec())
        assert len(grid.pack_bits()) == 16384


class TestHeightMap:
    SPEC = HeightMapSpec(dims=(38, 40), cell_size=0.01, origin=(-0.19, -0.2), floor_z=-0.15)

    def test_empty_cloud_all_floor(self):
        hm = build_height_map(PointCloud(np.zeros((0, 3)), Frame.TRAY), self.SPEC)
        assert np.all(hm.heights == -0.15)

    def test_max_rule_in_one_cell(self):
        pts = [[0.001, 0.001, 0.03], [0.002, 0.002, 0.07]]
        hm = build_height_map(PointCloud(pts, Frame.TRAY), self.SPEC)
        assert hm.heights[19, 20] == 0.07

    def test_matches_brute_force_max_binning(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform([-0.25, -0.25, -0.2], [0.25, 0.25, 0.2], size=(800, 3))
        hm = build_height_map(PointCloud(pts, Frame.TRAY), self.SPEC)
        expected = np.full(self.SPEC.dims, self.SPEC.floor_z)
        for p in pts:
            i = int(np.floor((p[0] - self.SPEC.origin[0]) * 100.0))
            j = int(np.floor((p[1] - self.SPEC.origin[1]) * 100.0))
            if 0 <= i < 38 and 0 <= j < 40:
                expected[i, j] = max(expected[i, j], p[2])
        assert np.array_equal(hm.heights, expected)

    def test_surface_height_at_cell_center(self):
        pts = [[-0.185, -0.195, 0.05]]
        hm = build_height_map(PointCloud(pts, Frame.TRAY), self.SPEC)
        assert surface_height(hm, -0.185, -0.195) == 0.05

    def test_surface_height_on_shared_edge_uses_floor_binning(self):
        hm = build_height_map(PointCloud(np.zeros((0, 3)), Frame.TRAY), self.SPEC)
        # x = -0.18 is the boundary between cells 0 and 1: floor rule puts it in cell 1
        heights = hm.heights.copy()
        heights[1, 0] = 0.123
        hm2 = type(hm)(hm.dims, hm.cell_size, hm.origin, heights, hm.floor_z)
        assert surface_height(hm2, -0.18, -0.2) == 0.123

    def test_surface_height_matches_brute_force_lookup(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform([-0.19, -0.2, -0.1], [0.18, 0.19, 0.1], size=(500, 3))
        hm = build_height_map(PointCloud(pts, Frame.TRAY), self.SPEC)
        for _ in range(100):
            x = rng.uniform(-0.19, 0.1899)
            y = rng.uniform(-0.2, 0.1999)
            i = int(np.floor((x + 0.19) * 100.0))
            j = int(np.floor((y + 0.2) * 100.0))
            assert surface_height(hm, x, y) == hm.heights[i, j]

    def test_out_of_footprint_query_raises(self):
        hm = build_height_map(PointCloud(np.zeros((0, 3)), Frame.TRAY), self.SPEC)
        with pytest.raises(OutOfRangeError):
            surface_height(hm, 0.5, 0.0)
        with pytest.raises(OutOfRangeError):
            surface_height(hm, 0.19, 0.0)  # max edge excluded (half-open)

    def test_voxel_column_matches_height_map_cell(self):
        # with equal resolutions, a point's (i, j) voxel column equals its
        # height-map cell: one shared binning rule
        rng = np.random.default_rng(10)
        spec_v = GridSpec(dims=(38, 40, 30), resolution=0.01, origin=Point3(-0.19, -0.2, -0.15))
        pts = rng.uniform([-0.19, -0.2, -0.14], [0.18, 0.19, 0.14], size=(300, 3))
        grid = voxelize(PointCloud(pts, Frame.TRAY), spec_v)
        hm = build_height_map(PointCloud(pts, Frame.TRAY), self.SPEC)
        occupied_cols = grid.occupancy.any(axis=2)
        non_floor = hm.heights > hm.floor_z
        assert np.array_equal(occupied_cols, non_floor)
