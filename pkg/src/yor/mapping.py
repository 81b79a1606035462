"""World-frame voxel mapping, floor estimation, occupancy projection,
obstacle inflation, and global/local cost fusion.

Grids are row-major arrays indexed [row, col] where row maps to the world Z
axis and col to X. Occupancy codes: 0 unknown, 1 free, 2 occupied. Costs
are 0..255 with 255 lethal.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from .frames import Pose3

UNKNOWN, FREE, OCCUPIED = 0, 1, 2
LETHAL = 255


@dataclass
class PointCloud:
    """N x 3 float array of (x, y, z) points plus a timestamp in seconds."""

    points: np.ndarray
    timestamp: float = 0.0

    @staticmethod
    def empty(timestamp: float = 0.0) -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), timestamp)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GridGeometry:
    """Metric placement of a 2D grid: origin corner, cell size, dimensions."""

    x0: float
    z0: float
    cell_size: float = 0.05
    width: int = 0
    height: int = 0

    def cell_of(self, x: float, z: float) -> tuple[int, int] | None:
        col = int(math.floor((x - self.x0) / self.cell_size))
        row = int(math.floor((z - self.z0) / self.cell_size))
        if 0 <= col < self.width and 0 <= row < self.height:
            return col, row
        return None

    def center(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.x0 + (col + 0.5) * self.cell_size,
            self.z0 + (row + 0.5) * self.cell_size,
        )

    @staticmethod
    def from_bounds(x0: float, z0: float, x1: float, z1: float, cell_size: float = 0.05) -> "GridGeometry":
        w = max(1, int(math.ceil((x1 - x0) / cell_size)))
        h = max(1, int(math.ceil((z1 - z0) / cell_size)))
        return GridGeometry(x0, z0, cell_size, w, h)


@dataclass
class OccupancyGrid:
    geom: GridGeometry
    cells: np.ndarray  # uint8 codes, shape (height, width)

    @staticmethod
    def blank(geom: GridGeometry, fill: int = UNKNOWN) -> "OccupancyGrid":
        return OccupancyGrid(geom, np.full((geom.height, geom.width), fill, dtype=np.uint8))


@dataclass
class CostMap:
    geom: GridGeometry
    cost: np.ndarray  # uint8, shape (height, width)
    unknown: np.ndarray  # bool mask, same shape

    def is_lethal(self, col: int, row: int) -> bool:
        return self.cost[row, col] == LETHAL


@dataclass
class PoseQuality:
    """Tracking quality gate for map updates."""

    good: bool = True


def reject_outliers(
    cloud: PointCloud, radius: float = 0.12, min_neighbors: int = 3
) -> PointCloud:
    """Keep exactly the points having at least min_neighbors other points
    within radius (closed ball)."""
    pts = cloud.points
    if len(pts) == 0:
        return PointCloud(pts.copy(), cloud.timestamp)
    tree = cKDTree(pts)
    counts = tree.query_ball_point(pts, radius, return_length=True)
    keep = counts - 1 >= min_neighbors  # query counts the point itself
    return PointCloud(pts[keep].copy(), cloud.timestamp)


@dataclass
class FloorEstimate:
    """EMA-smoothed floor height from the 5th percentile + band average."""

    height: float = 0.0
    band: float = 0.1
    alpha: float = 0.2
    initialized: bool = False
    stale: bool = False


def estimate_floor(cloud: PointCloud, state: FloorEstimate) -> FloorEstimate:
    """Update the floor estimate from a world-frame cloud.

    Instantaneous floor = mean of the vertical coordinates lying within
    [p5, p5 + band] where p5 is the 5th percentile; the stored height is
    an EMA of the instantaneous values. An empty cloud leaves the state
    unchanged and flags it stale.
    """
    if len(cloud) == 0:
        state.stale = True
        return state
    ys = cloud.points[:, 1]
    p5 = float(np.percentile(ys, 5.0))
    band = ys[(ys >= p5) & (ys <= p5 + state.band)]
    inst = float(band.mean()) if len(band) else p5
    if not state.initialized:
        state.height = inst
        state.initialized = True
    else:
        state.height = (1.0 - state.alpha) * inst + state.alpha * state.height
    state.stale = False
    return state


@dataclass
class VoxelMap:
    """Sparse world-frame voxel set with hit counts; one representative per
    voxel is kept per integrated cloud (voxel filtering)."""

    voxel_size: float = 0.02
    hits: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.hits)

    def voxel_index(self, point) -> tuple[int, int, int]:
        s = self.voxel_size
        return (
            int(math.floor(point[0] / s)),
            int(math.floor(point[1] / s)),
            int(math.floor(point[2] / s)),
        )

    def occupied_array(self) -> np.ndarray:
        if not self.hits:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array(list(self.hits.keys()), dtype=np.int64)


def integrate_cloud(
    vmap: VoxelMap, cloud: PointCloud, sensor_pose: Pose3, quality: PoseQuality
) -> VoxelMap:
    """Transform a (pre-filtered) sensor cloud into the world frame and add
    it to the voxel map. Updates are gated on pose quality: a degraded pose
    leaves the map untouched."""
    if not quality.good or len(cloud) == 0:
        return vmap
    from .frames import quat_to_matrix

    rot = quat_to_matrix(sensor_pose.q)
    world = cloud.points @ rot.T + sensor_pose.t
    idx = np.floor(world / vmap.voxel_size).astype(np.int64)
    for key in set(map(tuple, idx)):
        vmap.hits[key] = vmap.hits.get(key, 0) + 1
    return vmap


def project_occupancy(
    vmap: VoxelMap,
    floor: FloorEstimate,
    geom: GridGeometry,
    floor_band: float = 0.25,
    robot_height: float = 1.5,
) -> OccupancyGrid:
    """Project voxels onto a 2D grid. Voxels within floor_band above the
    floor mark their cell free; voxels between the band and robot_height
    mark it occupied; higher voxels (overhangs) are ignored."""
    grid = OccupancyGrid.blank(geom)
    occ = vmap.occupied_array()
    if len(occ) == 0:
        return grid
    s = vmap.voxel_size
    centers_y = (occ[:, 1] + 0.5) * s
    xs = (occ[:, 0] + 0.5) * s
    zs = (occ[:, 2] + 0.5) * s
    cols = np.floor((xs - geom.x0) / geom.cell_size).astype(np.int64)
    rows = np.floor((zs - geom.z0) / geom.cell_size).astype(np.int64)
    inb = (cols >= 0) & (cols < geom.width) & (rows >= 0) & (rows < geom.height)
    rel = centers_y - floor.height
    low = inb & (rel <= floor_band)
    high = inb & (rel > floor_band) & (rel <= robot_height)
    grid.cells[rows[low], cols[low]] = np.maximum(grid.cells[rows[low], cols[low]], FREE)
    grid.cells[rows[high], cols[high]] = OCCUPIED
    return grid


def inflate(
    grid: OccupancyGrid, robot_radius: float = 0.3, soft_band: float = 0.2
) -> CostMap:
    """Distance-transform inflation: cells within robot_radius of an
    occupied cell are lethal; cost decays linearly over soft_band beyond
    that; unknown cells carry zero cost but are flagged."""
    occ = grid.cells == OCCUPIED
    unknown = grid.cells == UNKNOWN
    cost = np.zeros(grid.cells.shape, dtype=np.uint8)
    if occ.any():
        cell = grid.geom.cell_size
        d_cells = distance_transform_edt(~occ)
        # epsilon keeps the boundary ring (e.g. exactly 6 cells at 0.3 m /
        # 0.05 m) inside the inclusive lethal set despite float division
        lethal = d_cells <= robot_radius / cell + 1e-9
        d_m = d_cells * cell
        soft = ~lethal & (d_m <= robot_radius + soft_band + 1e-9)
        cost[soft] = np.rint(
            254.0 * (1.0 - (d_m[soft] - robot_radius) / soft_band)
        ).astype(np.uint8)
        cost[lethal] = LETHAL
    return CostMap(grid.geom, cost, unknown)


def fuse(global_map: CostMap, local_map: CostMap, lam: float = 0.5) -> CostMap:
    """Per-cell linear interpolation (1 - lam) * global + lam * local, with
    lethal dominance so interpolation can never erase a hard obstacle."""
    if global_map.geom != local_map.geom:
        raise ValueError("cost map geometry mismatch")
    g = global_map.cost.astype(np.float64)
    l = local_map.cost.astype(np.float64)
    out = np.rint((1.0 - lam) * g + lam * l).astype(np.uint8)
    lethal = (global_map.cost == LETHAL) | (local_map.cost == LETHAL)
    out[lethal] = LETHAL
    unknown = global_map.unknown & local_map.unknown
    return CostMap(global_map.geom, out, unknown)


def rasterize_boxes(
    boxes: list[tuple[float, float, float, float]], geom: GridGeometry
) -> OccupancyGrid:
    """Prior occupancy from axis-aligned box footprints (cx, cz, sx, sz):
    cells intersecting a box are occupied, the rest free."""
    grid = OccupancyGrid.blank(geom, fill=FREE)
    cell = geom.cell_size
    for cx, cz, sx, sz in boxes:
        c0 = int(math.floor((cx - 0.5 * sx - geom.x0) / cell))
        c1 = int(math.floor((cx + 0.5 * sx - geom.x0) / cell))
        r0 = int(math.floor((cz - 0.5 * sz - geom.z0) / cell))
        r1 = int(math.floor((cz + 0.5 * sz - geom.z0) / cell))
        c0, c1 = max(c0, 0), min(c1, geom.width - 1)
        r0, r1 = max(r0, 0), min(r1, geom.height - 1)
        if c0 <= c1 and r0 <= r1:
            grid.cells[r0 : r1 + 1, c0 : c1 + 1] = OCCUPIED
    return grid


def local_occupancy(
    world_points: np.ndarray,
    floor: FloorEstimate,
    geom: GridGeometry,
    floor_band: float = 0.25,
    robot_height: float = 1.5,
) -> OccupancyGrid:
    """Single-frame occupancy from a world-frame cloud (the live local map);
    same band rules as project_occupancy without voxel bookkeeping."""
    grid = OccupancyGrid.blank(geom)
    if len(world_points) == 0:
        return grid
    cols = np.floor((world_points[:, 0] - geom.x0) / geom.cell_size).astype(np.int64)
    rows = np.floor((world_points[:, 2] - geom.z0) / geom.cell_size).astype(np.int64)
    inb = (cols >= 0) & (cols < geom.width) & (rows >= 0) & (rows < geom.height)
    rel = world_points[:, 1] - floor.height
    low = inb & (rel <= floor_band)
    high = inb & (rel > floor_band) & (rel <= robot_height)
    grid.cells[rows[low], cols[low]] = np.maximum(grid.cells[rows[low], cols[low]], FREE)
    grid.cells[rows[high], cols[high]] = OCCUPIED
    return grid


# --- bus payload codecs -----------------------------------------------------
# costmap: little-endian header (x0, z0, cell_size: f32; width, height: u32)
# followed by width*height row-major cost bytes.
# cloud: u32 point count + count x 3 little-endian f32.

_COSTMAP_HEADER = struct.Struct("<fffII")
_CLOUD_HEADER = struct.Struct("<I")


def costmap_to_bytes(cm: CostMap) -> bytes:
    head = _COSTMAP_HEADER.pack(
        cm.geom.x0, cm.geom.z0, cm.geom.cell_size, cm.geom.width, cm.geom.height
    )
    return head + cm.cost.astype(np.uint8).tobytes(order="C")


def costmap_from_bytes(data: bytes) -> CostMap:
    x0, z0, cell, w, h = _COSTMAP_HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype=np.uint8, offset=_COSTMAP_HEADER.size)
    if len(body) != w * h:
        raise ValueError("costmap payload size mismatch")
    geom = GridGeometry(float(x0), float(z0), float(cell), int(w), int(h))
    cost = body.reshape(h, w).copy()
    return CostMap(geom, cost, np.zeros((h, w), dtype=bool))


def cloud_to_bytes(cloud: PointCloud) -> bytes:
    pts = np.ascontiguousarray(cloud.points, dtype="<f4")
    return _CLOUD_HEADER.pack(len(pts)) + pts.tobytes(order="C")


def cloud_from_bytes(data: bytes, timestamp: float = 0.0) -> PointCloud:
    (n,) = _CLOUD_HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f4", offset=_CLOUD_HEADER.size)
    if len(body) != 3 * n:
        raise ValueError("cloud payload size mismatch")
    return PointCloud(body.reshape(n, 3).astype(np.float64), timestamp)


class MappingPipeline:
    """Owns the voxel map, floor estimator, and cost-map fusion.

    A single mapping task feeds clouds at 5 Hz via on_cloud(); consumers
    take immutable fused cost maps at 10 Hz via fused(). When a static
    prior grid is supplied (pre-mapped runs) global integration can be
    disabled so live clouds only feed the local layer.
    """

    def __init__(
        self,
        geom: GridGeometry,
        voxel_size: float = 0.02,
        outlier_radius: float = 0.12,
        outlier_neighbors: int = 3,
        floor_band_map: float = 0.1,
        floor_band_grid: float = 0.25,
        robot_height: float = 1.5,
        inflation_radius: float = 0.3,
        soft_band: float = 0.2,
        fuse_lambda: float = 0.5,
        static_grid: OccupancyGrid | None = None,
        integrate_global: bool = True,
    ):
        self.geom = geom
        self.vmap = VoxelMap(voxel_size)
        self.floor = FloorEstimate(band=floor_band_map)
        self.outlier_radius = outlier_radius
        self.outlier_neighbors = outlier_neighbors
        self.floor_band_grid = floor_band_grid
        self.robot_height = robot_height
        self.inflation_radius = inflation_radius
        self.soft_band = soft_band
        self.fuse_lambda = fuse_lambda
        self.static_grid = static_grid
        self.integrate_global = integrate_global
        self._latest_world: np.ndarray = np.zeros((0, 3))
        self._global_cost: CostMap | None = None
        self._global_dirty = True

    def on_cloud(self, cloud: PointCloud, sensor_pose: Pose3, quality: PoseQuality) -> None:
        from .frames import quat_to_matrix

        filtered = reject_outliers(cloud, self.outlier_radius, self.outlier_neighbors)
        if not quality.good:
            # degraded tracking: drop the frame entirely (map gating)
            self._latest_world = np.zeros((0, 3))
            return
        rot = quat_to_matrix(sensor_pose.q)
        world = filtered.points @ rot.T + sensor_pose.t
        self._latest_world = world
        estimate_floor(PointCloud(world, cloud.timestamp), self.floor)
        if self.integrate_global:
            integrate_cloud(self.vmap, filtered, sensor_pose, quality)
            self._global_dirty = True

    def global_costmap(self) -> CostMap:
        if self._global_cost is None or self._global_dirty:
            if self.static_grid is not None and not self.integrate_global:
                grid = self.static_grid
            else:
                grid = project_occupancy(
                    self.vmap, self.floor, self.geom, self.floor_band_grid, self.robot_height
                )
                if self.static_grid is not None:
                    merged = grid.cells.copy()
                    st = self.static_grid.cells
                    merged[st == OCCUPIED] = OCCUPIED
                    free = (merged == UNKNOWN) & (st == FREE)
                    merged[free] = FREE
                    grid = OccupancyGrid(self.geom, merged)
            self._global_cost = inflate(grid, self.inflation_radius, self.soft_band)
            self._global_dirty = False
        return self._global_cost

    def fused(self) -> CostMap:
        g = self.global_costmap()
        local_grid = local_occupancy(
            self._latest_world, self.floor, self.geom, self.floor_band_grid, self.robot_height
        )
        l = inflate(local_grid, self.inflation_radius, self.soft_band)
        return fuse(g, l, self.fuse_lambda)
