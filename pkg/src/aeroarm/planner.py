"""Time-to-collision screening and A* base planning inside the corridor."""

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from aeroarm.trajectory import Trajectory, fmt

# Slack on the per-step speed bound for float round-off in cell spacing.
SPEED_EPS = 1e-12


class NoFeasiblePath(RuntimeError):
    """The time-expanded corridor graph has no safe route to the end."""

    def __init__(self, index):
        super().__init__(f"no safe base position reachable at sample {index}")
        self.index = index


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float
    velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(map(float, self.center)))
        object.__setattr__(self, "velocity", tuple(map(float, self.velocity)))
        vals = (*self.center, *self.velocity, self.radius)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("obstacle fields must be finite")
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")

    def at(self, t):
        """The same obstacle with its centre advanced to time ``t``."""
        return Obstacle((self.center[0] + self.velocity[0] * t,
                         self.center[1] + self.velocity[1] * t),
                        self.radius, self.velocity)


@dataclass(frozen=True)
class PlannerConfig:
    v_max: float = 1.5
    ttc_threshold: float = 2.0
    dt: float = 0.1
    smoothing_passes: int = 0
    ttc_penalty: float = 0.05
    # per-step squared-length cost; makes equal-length paths prefer even steps
    effort_weight: float = 10.0

    def __post_init__(self):
        for name in ("v_max", "ttc_threshold", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.smoothing_passes < 0 or self.ttc_penalty < 0 or self.effort_weight < 0:
            raise ValueError("smoothing_passes, ttc_penalty and effort_weight must be >= 0")


@dataclass(frozen=True)
class BasePlan:
    trajectory: Trajectory
    min_ttc_along_path: float


def time_to_collision(position, velocity, obstacle):
    """Seconds until the point reaches the obstacle's circle.

    Both bodies keep their current velocities. Returns 0 when already
    inside the circle and ``None`` when the paths never meet.
    """
    px = position[0] - obstacle.center[0]
    py = position[1] - obstacle.center[1]
    vx = velocity[0] - obstacle.velocity[0]
    vy = velocity[1] - obstacle.velocity[1]
    c = px * px + py * py - obstacle.radius**2
    if c < 0:
        return 0.0
    a = vx * vx + vy * vy
    b = 2.0 * (px * vx + py * vy)
    if a == 0.0 or b >= 0.0:
        return None
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return None
    # numerically stable smaller root of a t^2 + b t + c with b < 0
    return 2.0 * c / (-b + math.sqrt(disc))


def _min_ttc(position, velocity, obstacles):
    best = math.inf
    for ob in obstacles:
        t = time_to_collision(position, velocity, ob)
        if t is not None and t < best:
            best = t
    return best


def plan_base_path(corridor, start, obstacles, config):
    """A* over (sample index, corridor cell).

    An edge from index ``i`` to ``i + 1`` is kept when the step fits the
    speed bound and the TTC at sample ``i``, flying that step's velocity
    against every obstacle placed at ``t_i``, is at least the threshold.
    The final sample is checked hovering. Edge cost is the step length plus
    ``effort_weight * length**2`` plus ``ttc_penalty / ttc``.

    Raises
    ------
    ValueError
        ``start`` is not a cell of the first corridor set.
    NoFeasiblePath
        With the first index no safe route reaches.
    """
    n = len(corridor)
    res = corridor.resolution
    dt = config.dt
    start_cell = corridor.cell_of(start)
    if not corridor.contains(0, start_cell):
        raise ValueError(f"start {tuple(start)} is not in corridor set 0")

    step_cap = config.v_max * dt + SPEED_EPS
    reach = int(math.floor(step_cap / res))
    moves = [(dx, dy) for dx in range(-reach, reach + 1)
             for dy in range(-reach, reach + 1)
             if math.hypot(dx, dy) * res <= step_cap]
    origin = np.asarray(corridor.origin)
    goal_tree = cKDTree(corridor.centers(n - 1))
    timed = [[ob.at(i * dt) for ob in obstacles] for i in range(n)]

    def center(cell):
        return (origin[0] + cell[0] * res, origin[1] + cell[1] * res)

    def heuristic(cell):
        return float(goal_tree.query(center(cell))[0])

    def terminal_ok(cell):
        return _min_ttc(center(cell), (0.0, 0.0), timed[n - 1]) >= config.ttc_threshold

    g_best = {(0, *start_cell): 0.0}
    parent = {}
    heap = [(heuristic(start_cell), 0, start_cell[0], start_cell[1])]
    furthest = 0
    while heap:
        f, i, cx, cy = heapq.heappop(heap)
        node = (i, cx, cy)
        g = g_best[node]
        if f > g + heuristic((cx, cy)) + 1e-12:
            continue  # stale entry
        furthest = max(furthest, i)
        if i == n - 1:
            if terminal_ok((cx, cy)):
                return _reconstruct(node, parent, corridor, dt, timed)
            continue
        here = center((cx, cy))
        nxt = corridor.cell_set(i + 1)
        for dx, dy in moves:
            cell = (cx + dx, cy + dy)
            if cell not in nxt:
                continue
            vel = (dx * res / dt, dy * res / dt)
            ttc = _min_ttc(here, vel, timed[i])
            if ttc < config.ttc_threshold:
                continue
            step = math.hypot(dx, dy) * res
            cost = step + config.effort_weight * step * step
            if math.isfinite(ttc):
                cost += config.ttc_penalty / ttc
            key = (i + 1, *cell)
            ng = g + cost
            if ng < g_best.get(key, math.inf):
                g_best[key] = ng
                parent[key] = node
                heapq.heappush(heap, (ng + heuristic(cell), i + 1, cell[0], cell[1]))
    raise NoFeasiblePath(min(furthest + 1, n - 1))


def _reconstruct(node, parent, corridor, dt, timed):
    cells = [node[1:]]
    while node in parent:
        node = parent[node]
        cells.append(node[1:])
    cells.reverse()
    return _plan_from_cells(cells, corridor, dt, timed)


def _plan_from_cells(cells, corridor, dt, timed):
    pts = np.asarray(corridor.origin) + np.asarray(cells, dtype=float) * corridor.resolution
    traj = Trajectory.from_points(pts, dt)
    return BasePlan(traj, path_min_ttc(pts, dt, timed))


def path_min_ttc(points, dt, timed):
    """Smallest TTC over the path, ``inf`` when nothing is ever approached."""
    best = math.inf
    for i in range(len(points)):
        vel = (0.0, 0.0) if i == len(points) - 1 else tuple((points[i + 1] - points[i]) / dt)
        best = min(best, _min_ttc(tuple(points[i]), vel, timed[i]))
    return best


def smooth_plan(plan, corridor, obstacles, config, passes=None):
    """Corridor-respecting midpoint smoothing.

    Each interior point moves to the cell nearest the midpoint of its
    neighbours when the result stays in the corridor, within the speed
    bound and above the TTC threshold on both adjoining steps.
    """
    passes = config.smoothing_passes if passes is None else passes
    dt = config.dt
    n = len(plan.trajectory)
    timed = [[ob.at(i * dt) for ob in obstacles] for i in range(n)]
    cells = [corridor.cell_of(p) for p in plan.trajectory.points]
    res = corridor.resolution
    cap = config.v_max * dt + SPEED_EPS

    def pos(c):
        return np.asarray(corridor.origin) + np.asarray(c, dtype=float) * res

    def step_ok(i, a, b):
        pa, pb = pos(a), pos(b)
        if np.hypot(*(pb - pa)) > cap:
            return False
        return _min_ttc(tuple(pa), tuple((pb - pa) / dt), timed[i]) >= config.ttc_threshold

    for _ in range(passes):
        for i in range(1, n - 1):
            mid = 0.5 * (pos(cells[i - 1]) + pos(cells[i + 1]))
            cand = corridor.cell_of(mid)
            if cand == cells[i] or not corridor.contains(i, cand):
                continue
            if step_ok(i - 1, cells[i - 1], cand) and step_ok(i, cand, cells[i + 1]):
                cells[i] = cand
    return _plan_from_cells(cells, corridor, dt, timed)


def check_plan(plan, corridor, obstacles, config):
    """List of invariant violations (empty when the plan is valid)."""
    problems = []
    pts = plan.trajectory.points
    dt = plan.trajectory.uniform_dt
    cap = config.v_max * dt + SPEED_EPS
    for i, p in enumerate(pts):
        if not corridor.contains(i, corridor.cell_of(p)):
            problems.append(f"sample {i} outside corridor")
        vel = (0.0, 0.0) if i == len(pts) - 1 else (pts[i + 1] - p) / dt
        if i < len(pts) - 1 and np.hypot(*(pts[i + 1] - p)) > cap:
            problems.append(f"step {i} exceeds v_max")
        ttc = _min_ttc(tuple(p), tuple(vel), [ob.at(i * dt) for ob in obstacles])
        if ttc < config.ttc_threshold:
            problems.append(f"sample {i} ttc {ttc:.3g} below threshold")
    return problems


def read_obstacles(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Obstacle((float(r["x"]), float(r["y"])), float(r["radius"]),
                     (float(r["vx"]), float(r["vy"]))) for r in rows]


def write_obstacles(obstacles, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "radius", "vx", "vy"])
        for ob in obstacles:
            w.writerow([fmt(ob.center[0]), fmt(ob.center[1]), fmt(ob.radius),
                        fmt(ob.velocity[0]), fmt(ob.velocity[1])])
