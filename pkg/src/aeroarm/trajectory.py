"""Uniformly sampled planar trajectories and the CSV helpers shared by all
artifact writers."""

import csv
import math
from dataclasses import dataclass

import numpy as np


def fmt(value):
    """Float formatting used by every CSV artifact (9 significant digits)."""
    return format(float(value), ".9g")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped planar points with uniform spacing.

    ``samples`` is an ``(n, 3)`` array of ``(t, x, y)`` rows.
    """

    samples: np.ndarray
    uniform_dt: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3:
            raise ValueError("samples must have shape (n, 3)")
        if len(s) < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("trajectory samples must be finite")
        if not self.uniform_dt > 0:
            raise ValueError("uniform_dt must be positive")
        steps = np.diff(s[:, 0])
        if np.any(steps <= 0):
            raise ValueError("sample times must be strictly increasing")
        # tolerance admits times re-read from 9-significant-digit CSV
        tol = 1e-9 + 2e-8 * np.abs(s[:, 0]).max()
        if np.any(np.abs(steps - self.uniform_dt) > tol):
            raise ValueError("sample spacing must equal uniform_dt")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "uniform_dt", float(self.uniform_dt))

    @classmethod
    def from_points(cls, points, dt, t0=0.0):
        pts = np.asarray(points, dtype=float)
        t = t0 + dt * np.arange(len(pts))
        return cls(np.column_stack([t, pts]), dt)

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.uniform_dt == other.uniform_dt
                and np.array_equal(self.samples, other.samples))

    @property
    def times(self):
        return self.samples[:, 0]

    @property
    def points(self):
        return self.samples[:, 1:]

    def accelerations(self):
        """Second differences of position, one per interval ``i -> i+1``.

        Central differences at interior samples; the first interval reuses
        the value of the second and the last interval is zero-padded.
        """
        p = self.points
        acc = np.zeros_like(p)
        if len(p) >= 3:
            acc[1:-1] = (p[2:] - 2 * p[1:-1] + p[:-2]) / self.uniform_dt**2
            acc[0] = acc[1]
        return acc

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y"])
            for t, x, y in self.samples:
                w.writerow([fmt(t), fmt(x), fmt(y)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no trajectory rows")
        s = np.array([[float(r["t"]), float(r["x"]), float(r["y"])] for r in rows])
        dt = (s[-1, 0] - s[0, 0]) / (len(s) - 1) if len(s) > 1 else math.nan
        return cls(s, dt)
