"""Time-indexed feasible corridor of base positions.

For every sample of the end-effector target trajectory the corridor holds
the grid cells whose centres can serve as the arm base: the target is
inside the margin-shrunk reachable annulus, an inverse-kinematics branch
respects the joint limits, and the cell does not touch an obstacle at that
sample's time.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from aeroarm.trajectory import fmt


class CorridorEmpty(RuntimeError):
    """Some target sample has no feasible base cell."""

    def __init__(self, index, corridor=None):
        super().__init__(f"no feasible base cell for target sample {index}")
        self.index = index
        self.corridor = corridor


@dataclass(frozen=True, eq=False)
class FeasibleCorridor:
    """Per-sample sets of integer grid cells.

    Cell ``(i, j)`` has its centre at ``origin + (i, j) * resolution``.
    ``cells[k]`` is an ``(n_k, 2)`` int array sorted lexicographically.
    """

    origin: tuple
    resolution: float
    cells: tuple

    def __len__(self):
        return len(self.cells)

    def centers(self, index):
        return np.asarray(self.origin) + self.cells[index] * self.resolution

    def cell_of(self, point):
        """Integer cell whose centre is nearest to ``point``."""
        rel = (np.asarray(point, dtype=float) - self.origin) / self.resolution
        return tuple(int(v) for v in np.floor(rel + 0.5))

    def contains(self, index, cell):
        return cell in self.cell_set(index)

    def cell_set(self, index):
        cache = self.__dict__.setdefault("_sets", {})
        if index not in cache:
            cache[index] = {tuple(c) for c in self.cells[index].tolist()}
        return cache[index]

    def empty_indices(self):
        return [k for k, c in enumerate(self.cells) if len(c) == 0]

    def occupancy(self):
        return np.array([len(c) for c in self.cells])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "cell_x", "cell_y"])
            for k in range(len(self.cells)):
                for cx, cy in self.centers(k):
                    w.writerow([k, fmt(cx), fmt(cy)])


def _ik_feasible(rel, arm):
    """Mask of relative targets with an elbow branch inside the joint limits."""
    l1, l2 = arm.l1, arm.l2
    r2 = np.einsum("ij,ij->i", rel, rel)
    c2 = np.clip((r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2), -1.0, 1.0)
    heading = np.arctan2(rel[:, 0], rel[:, 1])
    lo1, hi1 = arm.q1_limits
    lo2, hi2 = arm.q2_limits
    ok = np.zeros(len(rel), dtype=bool)
    for sign in (1.0, -1.0):
        q2 = sign * np.arccos(c2)
        q1 = heading - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
        q1_ok = np.zeros(len(rel), dtype=bool)
        for shift in (0.0, -2 * math.pi, 2 * math.pi):
            q1_ok |= (q1 + shift >= lo1) & (q1 + shift <= hi1)
        ok |= q1_ok & (q2 >= lo2) & (q2 <= hi2)
    return ok


def _touches_obstacle(centers, half, obstacle, t):
    """Mask of square cells (half-width ``half``) meeting a circle at time t."""
    cx = obstacle.center[0] + obstacle.velocity[0] * t
    cy = obstacle.center[1] + obstacle.velocity[1] * t
    dx = np.maximum(np.abs(centers[:, 0] - cx) - half, 0.0)
    dy = np.maximum(np.abs(centers[:, 1] - cy) - half, 0.0)
    return dx * dx + dy * dy < obstacle.radius**2


def default_margin(arm):
    return 0.05 * arm.reach


def compute_corridor(target, arm, grid_resolution, margin=None, obstacles=(),
                     allow_empty=False):
    """Scan the grid around each target sample for feasible base cells.

    Obstacles move at constant velocity and are placed at each sample's
    time. Raises :class:`CorridorEmpty` for the first empty sample unless
    ``allow_empty`` is set.
    """
    if not grid_resolution > 0:
        raise ValueError("grid_resolution must be positive")
    if margin is None:
        margin = default_margin(arm)
    inner = abs(arm.l1 - arm.l2)
    outer = arm.l1 + arm.l2
    if not 0 <= margin < (outer - inner) / 2:
        raise ValueError(f"margin must lie in [0, {(outer - inner) / 2:.6g})")
    r_in, r_out = inner + margin, outer - margin

    pts = target.points
    res = float(grid_resolution)
    origin = tuple(float(v) for v in np.floor((pts.min(axis=0) - outer) / res) * res)
    span = int(math.ceil(r_out / res)) + 1

    offsets = np.stack(np.meshgrid(np.arange(-span, span + 1),
                                   np.arange(-span, span + 1),
                                   indexing="ij"), axis=-1).reshape(-1, 2)
    cells = []
    for k, (p, t) in enumerate(zip(pts, target.times)):
        base_cell = np.floor((p - origin) / res + 0.5).astype(int)
        cand = base_cell + offsets
        centers = np.asarray(origin) + cand * res
        rel = p - centers
        dist = np.hypot(rel[:, 0], rel[:, 1])
        keep = (dist >= r_in) & (dist <= r_out)
        keep[keep] = _ik_feasible(rel[keep], arm)
        for ob in obstacles:
            keep &= ~_touches_obstacle(centers, res / 2, ob, t)
        chosen = cand[keep]
        order = np.lexsort((chosen[:, 1], chosen[:, 0]))
        cells.append(chosen[order])

    corridor = FeasibleCorridor(origin, res, tuple(cells))
    empty = corridor.empty_indices()
    if empty and not allow_empty:
        raise CorridorEmpty(empty[0], corridor)
    return corridor
