"""Weighted A* grid planning, waypoint extraction, and replan triggering."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .frames import Pose2
from .mapping import LETHAL, CostMap

SQRT2 = math.sqrt(2.0)


class PlanError(RuntimeError):
    pass


@dataclass
class PlannerParams:
    """Heuristic weight w >= 1, soft-cost scaling beta, unknown-space policy."""

    weight: float = 1.2
    beta: float = 1.0 / 64.0
    avoid_unknown: bool = False
    goal_tol: float = 0.02


@dataclass
class Path:
    """Ordered 8-adjacent grid cells (col, row) from start to goal and the
    accumulated edge cost in meters (scaled by soft costs)."""

    cells: list[tuple[int, int]]
    cost: float
    goal_snapped: bool = False


# neighbor offsets (dcol, drow) with unit step lengths in cells
_NEIGHBORS = (
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
)


def _octile(dc: int, dr: int) -> float:
    a, b = abs(dc), abs(dr)
    if a < b:
        a, b = b, a
    return a + (SQRT2 - 1.0) * b


def plan(cost_map: CostMap, start: Pose2, goal: Pose2, params: PlannerParams | None = None) -> Path:
    """Weighted A* from the start cell to any cell whose center lies within
    goal_tol of the metric goal.

    Edge cost is Euclidean step length times (1 + beta * entered-cell cost);
    the heuristic is weight * octile distance. Ties break on lower f, then
    lower h, then row-major index, making plans deterministic.
    """
    params = params or PlannerParams()
    geom = cost_map.geom
    w, h = geom.width, geom.height
    cell = geom.cell_size

    blocked = cost_map.cost == LETHAL
    if params.avoid_unknown:
        blocked = blocked | cost_map.unknown

    sc = geom.cell_of(start.x, start.z)
    if sc is None:
        raise PlanError("start blocked: start pose outside the map")
    if blocked[sc[1], sc[0]]:
        raise PlanError("start blocked")

    # goal region: cell centers within goal_tol of the goal point (at most
    # one cell when goal_tol < cell/2); fall back to the containing cell
    gc = geom.cell_of(goal.x, goal.z)
    if gc is None:
        raise PlanError("no path: goal outside the map")
    goal_cells: set[tuple[int, int]] = set()
    snapped = False
    for dc in (-1, 0, 1):
        for dr in (-1, 0, 1):
            c, r = gc[0] + dc, gc[1] + dr
            if not (0 <= c < w and 0 <= r < h) or blocked[r, c]:
                continue
            cx, cz = geom.center(c, r)
            if math.hypot(cx - goal.x, cz - goal.z) <= params.goal_tol:
                goal_cells.add((c, r))
    if not goal_cells:
        if blocked[gc[1], gc[0]]:
            raise PlanError("no path: goal region blocked")
        goal_cells = {gc}
        snapped = True

    mult = 1.0 + params.beta * cost_map.cost.astype(np.float64)
    weight = params.weight
    # heuristic target: representative goal cell (deterministic choice)
    gcol, grow = min(goal_cells, key=lambda cr: cr[1] * w + cr[0])

    g_score = np.full(w * h, np.inf)
    parent = np.full(w * h, -1, dtype=np.int64)
    closed = np.zeros(w * h, dtype=bool)

    s_idx = sc[1] * w + sc[0]
    h0 = weight * _octile(gcol - sc[0], grow - sc[1]) * cell
    open_heap: list[tuple[float, float, int]] = [(h0, h0, s_idx)]
    g_score[s_idx] = 0.0
    goal_idx = {r * w + c for c, r in goal_cells}

    blocked_flat = blocked.ravel()
    mult_flat = mult.ravel()

    found = -1
    while open_heap:
        f, _, idx = heapq.heappop(open_heap)
        if closed[idx]:
            continue
        closed[idx] = True
        if idx in goal_idx:
            found = idx
            break
        row, col = divmod(idx, w)
        g_here = g_score[idx]
        for dc, dr, step in _NEIGHBORS:
            c, r = col + dc, row + dr
            if not (0 <= c < w and 0 <= r < h):
                continue
            nidx = r * w + c
            if closed[nidx] or blocked_flat[nidx]:
                continue
            ng = g_here + step * cell * mult_flat[nidx]
            if ng < g_score[nidx]:
                g_score[nidx] = ng
                parent[nidx] = idx
                nh = weight * _octile(gcol - c, grow - r) * cell
                heapq.heappush(open_heap, (ng + nh, nh, nidx))

    if found < 0:
        raise PlanError("no path")

    cells: list[tuple[int, int]] = []
    idx = found
    while idx >= 0:
        r, c = divmod(idx, w)
        cells.append((c, r))
        idx = parent[idx]
    cells.reverse()
    return Path(cells, float(g_score[found]), snapped)


@dataclass
class Waypoints:
    """Metric waypoint sequence with spacing roughly twice the cell size."""

    points: list[tuple[float, float]] = field(default_factory=list)


def extract_waypoints(path: Path, geom, spacing: float | None = None) -> Waypoints:
    """Subsample cell centers to a spacing of about 2x the cell size.

    Greedy rule: from the last emitted cell, advance to the furthest cell
    whose cumulative arc length stays within the target spacing. The final
    cell is always included (its spacing may be shorter)."""
    if not path.cells:
        raise ValueError("empty path")
    target = spacing if spacing is not None else 2.0 * geom.cell_size
    centers = [geom.center(c, r) for c, r in path.cells]
    out = [centers[0]]
    i = 0
    n = len(centers)
    while i < n - 1:
        acc = 0.0
        j = i
        while j < n - 1:
            x0, z0 = centers[j]
            x1, z1 = centers[j + 1]
            step = math.hypot(x1 - x0, z1 - z0)
            if acc + step > target + 1e-9:
                break
            acc += step
            j += 1
        if j == i:
            j = i + 1  # single step already exceeds target; take it anyway
        if centers[j] != out[-1]:  # degenerate paths may loop onto themselves
            out.append(centers[j])
        i = j
    if out[-1] != centers[-1]:
        out.append(centers[-1])
    return Waypoints(out)


def needs_replan(path: Path, cost_map: CostMap, from_index: int = 0) -> bool:
    """True iff any remaining path cell (suffix from from_index) is lethal
    in the given map."""
    cost = cost_map.cost
    for col, row in path.cells[from_index:]:
        if cost[row, col] == LETHAL:
            return True
    return False
