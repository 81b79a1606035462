import math

import numpy as np
import pytest

from yor.frames import Pose3, quat_about_y
from yor.mapping import (
    FREE,
    LETHAL,
    OCCUPIED,
    UNKNOWN,
    CostMap,
    FloorEstimate,
    GridGeometry,
    OccupancyGrid,
    PointCloud,
    PoseQuality,
    VoxelMap,
    cloud_from_bytes,
    cloud_to_bytes,
    costmap_from_bytes,
    costmap_to_bytes,
    estimate_floor,
    fuse,
    inflate,
    integrate_cloud,
    local_occupancy,
    project_occupancy,
    rasterize_boxes,
    reject_outliers,
)


def brute_force_outliers(points: np.ndarray, radius: float, min_neighbors: int):
    """O(n^2) oracle for neighbor counting."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    for i in range(n):
        d = np.linalg.norm(points - points[i], axis=1)
        keep[i] = (np.sum(d <= radius) - 1) >= min_neighbors
    return keep


class TestRejectOutliers:
    def test_empty(self):
        out = reject_outliers(PointCloud.empty())
        assert len(out) == 0

    def test_cluster_plus_isolated(self):
        rng = np.random.default_rng(0)
        cluster = rng.uniform(-0.025, 0.025, size=(5, 3))
        iso = np.array([[1.0, 1.0, 1.0]])
        cloud = PointCloud(np.vstack([cluster, iso]))
        out = reject_outliers(cloud, radius=0.12, min_neighbors=3)
        assert len(out) == 5
        assert np.all(np.linalg.norm(out.points, axis=1) < 0.1)

    def test_collinear_all_removed(self):
        # 4 points spaced 0.1 m: nobody has 3 neighbors within 0.12 m
        pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0]])
        out = reject_outliers(PointCloud(pts), radius=0.12, min_neighbors=3)
        assert len(out) == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 1.0, size=(2000, 3))
        cloud = PointCloud(pts)
        out = reject_outliers(cloud, radius=0.12, min_neighbors=3)
        keep = brute_force_outliers(pts, 0.12, 3)
        np.testing.assert_array_equal(out.points, pts[keep])


class TestFloorEstimate:
    def test_percentile_band(self):
        ys = np.concatenate([np.zeros(95), np.ones(5)])
        pts = np.column_stack([np.zeros(100), ys, np.zeros(100)])
        state = estimate_floor(PointCloud(pts), FloorEstimate())
        assert state.height == pytest.approx(0.0, abs=1e-12)

    def test_constant_field(self):
        pts = np.column_stack([np.zeros(50), np.full(50, 0.30), np.zeros(50)])
        state = estimate_floor(PointCloud(pts), FloorEstimate())
        assert state.height == pytest.approx(0.30)

    def test_ema_smoothing(self):
        state = FloorEstimate(height=0.0, alpha=0.2, initialized=True)
        pts = np.column_stack([np.zeros(50), np.full(50, 0.10), np.zeros(50)])
        state = estimate_floor(PointCloud(pts), state)
        # (1 - 0.2) * 0.10 + 0.2 * 0.0 = 0.08... with the instantaneous value
        # weighting; the appendix filter weights the previous value by alpha
        assert state.height == pytest.approx(0.08, abs=1e-12)

    def test_empty_cloud_stale(self):
        state = FloorEstimate(height=0.25, initialized=True)
        out = estimate_floor(PointCloud.empty(), state)
        assert out.height == 0.25
        assert out.stale

    def test_formula_oracle_random(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ys = rng.uniform(0.0, 2.0, 500)
            pts = np.column_stack([rng.uniform(0, 1, 500), ys, rng.uniform(0, 1, 500)])
            state = estimate_floor(PointCloud(pts), FloorEstimate())
            p5 = np.percentile(ys, 5)
            expected = ys[(ys >= p5) & (ys <= p5 + 0.1)].mean()
            assert state.height == pytest.approx(expected, abs=1e-12)


class TestVoxelIntegration:
    def test_quantization(self):
        vmap = VoxelMap(0.02)
        cloud = PointCloud(np.array([[1.001, 0.0, 0.999]]))
        integrate_cloud(vmap, cloud, Pose3.identity(), PoseQuality(True))
        assert (50, 0, 49) in vmap.hits

    def test_degraded_quality_no_change(self):
        vmap = VoxelMap(0.02)
        integrate_cloud(vmap, PointCloud(np.random.default_rng(0).uniform(size=(50, 3))),
                        Pose3.identity(), PoseQuality(False))
        assert len(vmap) == 0

    def test_double_integration_doubles_hits(self):
        rng = np.random.default_rng(3)
        cloud = PointCloud(rng.uniform(0, 1, size=(100, 3)))
        vmap = VoxelMap(0.02)
        integrate_cloud(vmap, cloud, Pose3.identity(), PoseQuality(True))
        keys1 = set(vmap.hits)
        counts1 = dict(vmap.hits)
        integrate_cloud(vmap, cloud, Pose3.identity(), PoseQuality(True))
        assert set(vmap.hits) == keys1
        assert all(vmap.hits[k] == 2 * counts1[k] for k in keys1)

    def test_sensor_pose_transform(self):
        # a point 1 m ahead of a sensor rotated +90 deg about Y lands on +X
        vmap = VoxelMap(0.02)
        pose = Pose3(quat_about_y(math.pi / 2), np.array([0.0, 0.0, 0.0]))
        integrate_cloud(vmap, PointCloud(np.array([[0.0, 0.0, 1.0]])), pose,
                        PoseQuality(True))
        (key,) = vmap.hits
        assert key == (49, 0, 0) or key == (50, 0, 0)
        # world x must be ~1.0, z ~0.0
        assert key[2] in (-1, 0)


class TestProjection:
    GEOM = GridGeometry(0.0, 0.0, 0.05, 40, 40)

    def _vmap_with_point(self, x, y, z):
        vmap = VoxelMap(0.02)
        integrate_cloud(vmap, PointCloud(np.array([[x, y, z]])), Pose3.identity(),
                        PoseQuality(True))
        return vmap

    def test_floor_band_voxel_free(self):
        vmap = self._vmap_with_point(1.0, 0.10, 1.0)
        grid = project_occupancy(vmap, FloorEstimate(height=0.0), self.GEOM)
        assert grid.cells[20, 20] == FREE

    def test_obstacle_band_voxel_occupied(self):
        vmap = self._vmap_with_point(1.0, 0.30, 1.0)
        grid = project_occupancy(vmap, FloorEstimate(height=0.0), self.GEOM)
        assert grid.cells[20, 20] == OCCUPIED

    def test_overhang_ignored(self):
        vmap = self._vmap_with_point(1.0, 2.0, 1.0)
        grid = project_occupancy(vmap, FloorEstimate(height=0.0), self.GEOM,
                                 robot_height=1.5)
        assert grid.cells[20, 20] == UNKNOWN

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        vmap = VoxelMap(0.02)
        integrate_cloud(vmap, PointCloud(rng.uniform(0, 2, size=(500, 3))),
                        Pose3.identity(), PoseQuality(True))
        floor = FloorEstimate(height=0.0)
        a = project_occupancy(vmap, floor, self.GEOM)
        b = project_occupancy(vmap, floor, self.GEOM)
        np.testing.assert_array_equal(a.cells, b.cells)


def brute_force_inflation(grid: OccupancyGrid, robot_radius: float, soft_band: float):
    """Exact oracle: per-cell min distance to occupied cells, in cell units."""
    occ = np.argwhere(grid.cells == OCCUPIED)
    cell = grid.geom.cell_size
    h, w = grid.cells.shape
    cost = np.zeros((h, w), dtype=np.uint8)
    if len(occ) == 0:
        return cost
    for r in range(h):
        for c in range(w):
            d = np.min(np.hypot(occ[:, 0] - r, occ[:, 1] - c))
            d_m = d * cell
            if d <= robot_radius / cell + 1e-9:
                cost[r, c] = LETHAL
            elif d_m <= robot_radius + soft_band + 1e-9:
                cost[r, c] = np.uint8(round(254 * (1 - (d_m - robot_radius) / soft_band)))
    return cost


class TestInflate:
    def test_empty_grid_zero_cost(self):
        geom = GridGeometry(0, 0, 0.05, 20, 20)
        cm = inflate(OccupancyGrid.blank(geom, fill=FREE))
        assert not cm.cost.any()

    def test_single_cell_lethal_radius(self):
        geom = GridGeometry(0, 0, 0.05, 31, 31)
        grid = OccupancyGrid.blank(geom, fill=FREE)
        grid.cells[15, 15] = OCCUPIED
        cm = inflate(grid, robot_radius=0.3, soft_band=0.2)
        # exactly the cells within 6-cell Euclidean distance are lethal
        for r in range(31):
            for c in range(31):
                expected = math.hypot(r - 15, c - 15) <= 6.0
                assert (cm.cost[r, c] == LETHAL) == expected, (r, c)

    def test_soft_cost_value(self):
        geom = GridGeometry(0, 0, 0.05, 41, 41)
        grid = OccupancyGrid.blank(geom, fill=FREE)
        grid.cells[20, 20] = OCCUPIED
        cm = inflate(grid, robot_radius=0.3, soft_band=0.2)
        # cell 8 cells away: d = 0.4 m -> round(254 * 0.5) = 127
        assert cm.cost[20, 28] == 127

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        geom = GridGeometry(0, 0, 0.05, 40, 40)
        grid = OccupancyGrid.blank(geom, fill=FREE)
        for r, c in rng.integers(0, 40, size=(15, 2)):
            grid.cells[r, c] = OCCUPIED
        cm = inflate(grid, 0.3, 0.2)
        oracle = brute_force_inflation(grid, 0.3, 0.2)
        np.testing.assert_array_equal(cm.cost, oracle)

    def test_monotone_in_distance(self):
        geom = GridGeometry(0, 0, 0.05, 41, 41)
        grid = OccupancyGrid.blank(geom, fill=FREE)
        grid.cells[20, 20] = OCCUPIED
        cm = inflate(grid, 0.3, 0.2)
        row = cm.cost[20, 20:].astype(int)
        assert all(row[i] >= row[i + 1] for i in range(len(row) - 1))

    def test_unknown_cells_flagged(self):
        geom = GridGeometry(0, 0, 0.05, 10, 10)
        grid = OccupancyGrid.blank(geom)  # all unknown
        cm = inflate(grid)
        assert cm.unknown.all()
        assert not cm.cost.any()


class TestFuse:
    GEOM = GridGeometry(0, 0, 0.05, 10, 10)

    def _cm(self, value, lethal_at=None):
        cost = np.full((10, 10), value, dtype=np.uint8)
        if lethal_at:
            cost[lethal_at] = LETHAL
        return CostMap(self.GEOM, cost, np.zeros((10, 10), dtype=bool))

    def test_interpolation(self):
        out = fuse(self._cm(100), self._cm(0), 0.5)
        assert np.all(out.cost == 50)

    def test_lethal_dominates(self):
        out = fuse(self._cm(0), self._cm(0, lethal_at=(3, 3)), 0.0)
        assert out.cost[3, 3] == LETHAL

    def test_endpoints(self):
        g, l = self._cm(80), self._cm(20)
        np.testing.assert_array_equal(fuse(g, l, 0.0).cost, g.cost)
        np.testing.assert_array_equal(fuse(g, l, 1.0).cost, l.cost)

    def test_geometry_mismatch(self):
        other = CostMap(GridGeometry(0, 0, 0.05, 5, 5),
                        np.zeros((5, 5), dtype=np.uint8),
                        np.zeros((5, 5), dtype=bool))
        with pytest.raises(ValueError, match="geometry"):
            fuse(self._cm(0), other)


class TestCodecs:
    def test_costmap_roundtrip(self):
        rng = np.random.default_rng(6)
        geom = GridGeometry(-1.0, 2.0, 0.05, 17, 9)
        cm = CostMap(geom, rng.integers(0, 256, size=(9, 17), dtype=np.uint8),
                     np.zeros((9, 17), dtype=bool))
        out = costmap_from_bytes(costmap_to_bytes(cm))
        assert out.geom.width == 17 and out.geom.height == 9
        assert out.geom.cell_size == pytest.approx(0.05)
        np.testing.assert_array_equal(out.cost, cm.cost)

    def test_cloud_roundtrip(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-5, 5, size=(257, 3)).astype(np.float32).astype(np.float64)
        out = cloud_from_bytes(cloud_to_bytes(PointCloud(pts)))
        np.testing.assert_allclose(out.points, pts, atol=0)

    def test_cloud_header_layout(self):
        data = cloud_to_bytes(PointCloud(np.array([[1.0, 2.0, 3.0]])))
        assert data[:4] == (1).to_bytes(4, "little")
        assert len(data) == 4 + 12


class TestLocalAndRasterize:
    def test_rasterize_marks_intersecting_cells(self):
        geom = GridGeometry(0, 0, 0.05, 20, 20)
        grid = rasterize_boxes([(0.5, 0.5, 0.2, 0.2)], geom)
        assert grid.cells[10, 10] == OCCUPIED
        assert grid.cells[0, 0] == FREE

    def test_local_occupancy_band_rules(self):
        geom = GridGeometry(0, 0, 0.05, 20, 20)
        pts = np.array([[0.5, 0.05, 0.5], [0.8, 0.6, 0.8], [0.2, 3.0, 0.2]])
        grid = local_occupancy(pts, FloorEstimate(height=0.0), geom,
                               floor_band=0.25, robot_height=1.5)
        assert grid.cells[10, 10] == FREE
        assert grid.cells[16, 16] == OCCUPIED
        assert grid.cells[4, 4] == UNKNOWN
