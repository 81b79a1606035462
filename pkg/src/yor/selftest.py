"""Built-in property checks runnable without the test suite (`yor selftest`)."""

from __future__ import annotations

import heapq
import math

import numpy as np

from . import bus, swerve
from .base_control import EmaFilter
from .frames import Pose3, Twist2, quat_about_y
from .manip import LIFT_MAX, LIFT_MIN, LIFT_VMAX, JointState, LiftState, ShaperLimits, ee_hold_target, lift_step, shape_command
from .mapping import LETHAL, CostMap, GridGeometry
from .planner import PlannerParams, plan
from .frames import Pose2


def _check_swerve_oracle() -> str | None:
    geom = swerve.ChassisGeometry()
    w, l = geom.half_width, geom.half_length
    rng = np.random.default_rng(7)
    corners = ((l, -w), (l, w), (-l, w), (-l, -w))
    for _ in range(1000):
        vx, vy, om = rng.uniform(-1, 1, 3)
        states = swerve.inverse_kinematics(Twist2(vx, vy, om), geom)
        for s, (rx, ry) in zip(states, corners):
            ex = vx + om * -ry
            ey = vy + om * rx
            mx = s.drive * math.cos(s.steer)
            my = s.drive * math.sin(s.steer)
            if abs(mx - ex) > 1e-9 or abs(my - ey) > 1e-9:
                return "module velocity deviates from rigid-body oracle"
    return None


def _check_shortest_turn() -> str | None:
    rng = np.random.default_rng(8)
    for _ in range(10000):
        cur = rng.uniform(-math.pi, math.pi)
        tgt = swerve.ModuleState(rng.uniform(-math.pi, math.pi), rng.uniform(-1, 1))
        out = swerve.optimize_module(cur, tgt)
        d = abs(math.remainder(out.steer - cur, 2 * math.pi))
        if d > math.pi / 2 + 1e-12:
            return "steering delta exceeds 90 degrees"
        if abs(abs(out.drive) - abs(tgt.drive)) > 1e-15:
            return "wheel speed magnitude changed"
    return None


def _check_ema() -> str | None:
    f = EmaFilter(0.2, prev=Twist2(0.1, 0, 0))
    out = f.step(Twist2(0.5, 0, 0))
    if abs(out.vx - 0.42) > 1e-12:
        return f"ema value {out.vx} != 0.42"
    return None


def _dijkstra_cost(cm: CostMap, start, goals, beta) -> float:
    w, h = cm.geom.width, cm.geom.height
    cell = cm.geom.cell_size
    mult = 1.0 + beta * cm.cost.astype(float)
    blocked = cm.cost == LETHAL
    dist = {start: 0.0}
    pq = [(0.0, start)]
    goalset = set(goals)
    while pq:
        d, node = heapq.heappop(pq)
        if node in goalset:
            return d
        if d > dist.get(node, float("inf")):
            continue
        c, r = node
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            nc, nr = c + dc, r + dr
            if not (0 <= nc < w and 0 <= nr < h) or blocked[nr, nc]:
                continue
            nd = d + math.hypot(dc, dr) * cell * mult[nr, nc]
            if nd < dist.get((nc, nr), float("inf")):
                dist[(nc, nr)] = nd
                heapq.heappush(pq, (nd, (nc, nr)))
    return float("inf")


def _check_planner() -> str | None:
    rng = np.random.default_rng(11)
    for trial in range(5):
        n = 32
        geom = GridGeometry(0.0, 0.0, 0.05, n, n)
        cost = np.zeros((n, n), dtype=np.uint8)
        blobs = rng.integers(0, n, size=(30, 2))
        for r, c in blobs:
            cost[max(0, r - 1) : r + 2, max(0, c - 1) : c + 2] = LETHAL
        cost[0:2, 0:2] = 0
        cost[-2:, -2:] = 0
        cm = CostMap(geom, cost, np.zeros_like(cost, dtype=bool))
        start = Pose2(*geom.center(0, 0), 0.0)
        goal = Pose2(*geom.center(n - 1, n - 1), 0.0)
        params = PlannerParams(weight=1.0, beta=1 / 64)
        try:
            p = plan(cm, start, goal, params)
        except Exception:
            continue
        ref = _dijkstra_cost(cm, (0, 0), [p.cells[-1]], 1 / 64)
        if abs(p.cost - ref) > 1e-9:
            return f"trial {trial}: A* cost {p.cost} != dijkstra {ref}"
    return None


def _check_bus_roundtrip() -> str | None:
    rng = np.random.default_rng(13)
    for _ in range(1000):
        env = bus.Envelope(
            topic="pose",
            type_tag=int(rng.integers(0, 255)),
            seq=int(rng.integers(0, 2**63)),
            timestamp_us=int(rng.integers(0, 2**63)),
            payload=bytes(rng.integers(0, 256, size=rng.integers(0, 64), dtype=np.uint8)),
        )
        out, _ = bus.decode(bus.encode(env))
        if out != env:
            return "envelope round trip mismatch"
    return None


def _check_lift() -> str | None:
    rng = np.random.default_rng(17)
    st = LiftState(0.9, 0.0)
    for _ in range(2000):
        v = float(rng.uniform(-1, 1))
        st = lift_step(st, 0.02, velocity=v)
        if not (LIFT_MIN <= st.height <= LIFT_MAX) or abs(st.velocity) > LIFT_VMAX + 1e-12:
            return "lift bounds violated"
    held = lift_step(st, 0.02, velocity=0.0)
    if held.height != st.height:
        return "zero command moved the lift"
    return None


def _check_shaper() -> str | None:
    lim = ShaperLimits(1.0, 10.0)
    rng = np.random.default_rng(19)
    q = rng.uniform(-1, 1, 64)
    state = JointState(q, np.zeros_like(q))
    target = rng.uniform(-2, 2, 64)
    for _ in range(1000):
        nxt = shape_command(state, target, lim, 0.005)
        if np.any(np.abs(nxt.qd) > lim.max_velocity + 1e-12):
            return "shaper velocity bound violated"
        if np.any(np.abs(nxt.qd - state.qd) > lim.max_acceleration * 0.005 + 1e-12):
            return "shaper acceleration bound violated"
        state = nxt
    if np.max(np.abs(state.q - target)) > 1e-12:
        return "shaper did not converge"
    return None


def _check_ee_hold() -> str | None:
    rng = np.random.default_rng(23)
    for _ in range(200):
        wb0 = Pose3(quat_about_y(rng.uniform(-3, 3)), rng.uniform(-1, 1, 3))
        be0 = Pose3(quat_about_y(rng.uniform(-3, 3)), rng.uniform(-1, 1, 3))
        wbt = Pose3(quat_about_y(rng.uniform(-3, 3)), rng.uniform(-1, 1, 3))
        cmd = ee_hold_target(wb0, be0, wbt)
        world = wbt.compose(cmd)
        ref = wb0.compose(be0)
        if np.linalg.norm(world.t - ref.t) > 1e-9:
            return "EE hold identity failed"
    return None


CHECKS = [
    ("swerve kinematics vs rigid-body oracle", _check_swerve_oracle),
    ("shortest-turn optimization bounds", _check_shortest_turn),
    ("EMA filter value", _check_ema),
    ("weighted A* vs dijkstra (w=1)", _check_planner),
    ("bus frame round trip", _check_bus_roundtrip),
    ("lift bounds and self-locking", _check_lift),
    ("command shaper limits", _check_shaper),
    ("world-frame EE hold identity", _check_ee_hold),
]


def run_selftest() -> int:
    failures = 0
    for name, fn in CHECKS:
        err = fn()
        if err is None:
            print(f"PASS  {name}")
        else:
            failures += 1
            print(f"FAIL  {name}: {err}")
    return 0 if failures == 0 else 1
