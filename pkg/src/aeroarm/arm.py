"""Two-link overhead manipulator: kinematics and Lagrangian dynamics.

Angles are measured from the body-vertical axis, with ``q2`` relative to
link 1, so the end effector sits at

    x = l1 sin q1 + l2 sin(q1 + q2)
    y = l1 cos q1 + l2 cos(q1 + q2)

relative to the arm base. The equation of motion is

    M(q) qdd + C(q, qd) qd + G(q) = tau + tau_base

where ``G = dV/dq`` and ``tau_base`` is the d'Alembert load of an
accelerating base.
"""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from aeroarm import _kernels

# Slack on the reachable annulus so targets exactly on the boundary survive
# round-off in |p|.
REACH_EPS = 1e-12


class Unreachable(ValueError):
    """Target cannot be reached from the current base position."""


class NumericalBlowup(FloatingPointError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class ArmParams:
    """Physical constants of the two-link arm.

    ``i1`` and ``i2`` are moments of inertia about each link's own joint,
    not about its centre of mass.
    """

    l1: float = 0.5
    l2: float = 0.4
    lc1: float = 0.25
    lc2: float = 0.2
    m1: float = 0.3
    m2: float = 0.2
    i1: float = 0.025
    i2: float = 0.2 * 0.4**2 / 3
    g: float = 9.81
    q1_limits: tuple = (-math.pi / 2, math.pi / 2)
    q2_limits: tuple = (-2.5, 2.5)
    tau_max: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "q1_limits", tuple(map(float, self.q1_limits)))
        object.__setattr__(self, "q2_limits", tuple(map(float, self.q2_limits)))
        vals = [self.l1, self.l2, self.lc1, self.lc2, self.m1, self.m2,
                self.i1, self.i2, self.g, self.tau_max,
                *self.q1_limits, *self.q2_limits]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("ArmParams fields must be finite")
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("link lengths must be positive")
        if not (0 < self.lc1 <= self.l1 and 0 < self.lc2 <= self.l2):
            raise ValueError("centre-of-mass distances must lie in (0, l]")
        for name in ("m1", "m2", "i1", "i2", "g", "tau_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("q1_limits", "q2_limits"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")

    @property
    def reach(self):
        return self.l1 + self.l2

    def with_mass_scale(self, factor):
        """Masses and inertias multiplied by ``factor``; geometry unchanged."""
        if factor <= 0:
            raise ValueError("mass scale must be positive")
        return replace(self, m1=self.m1 * factor, m2=self.m2 * factor,
                       i1=self.i1 * factor, i2=self.i2 * factor)

    def as_array(self):
        return np.array([self.l1, self.l2, self.lc1, self.lc2, self.m1,
                         self.m2, self.i1, self.i2, self.g,
                         *self.q1_limits, *self.q2_limits, self.tau_max])


@dataclass(frozen=True)
class JointState:
    q1: float
    q2: float
    dq1: float = 0.0
    dq2: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise NumericalBlowup(f"non-finite joint state {self.as_tuple()}")

    def as_tuple(self):
        return (self.q1, self.q2, self.dq1, self.dq2)


class ArmMatrices(NamedTuple):
    m: np.ndarray
    c: np.ndarray
    grav: np.ndarray


def forward_kinematics(params, q1, q2):
    """End-effector position relative to the arm base."""
    return (params.l1 * math.sin(q1) + params.l2 * math.sin(q1 + q2),
            params.l1 * math.cos(q1) + params.l2 * math.cos(q1 + q2))


def _within(value, limits):
    return limits[0] <= value <= limits[1]


def _wrap_into(angle, limits):
    """Shift ``angle`` by a multiple of 2*pi into ``limits`` if possible."""
    for shift in (0.0, -2 * math.pi, 2 * math.pi):
        if _within(angle + shift, limits):
            return angle + shift
    return None


def inverse_kinematics(params, target):
    """Joint angles placing the end effector at ``target``.

    Prefers the elbow-positive branch (``q2 >= 0``) and falls back to its
    mirror when the first violates joint limits.

    Raises
    ------
    Unreachable
        ``target`` lies outside the reachable annulus, or both elbow
        branches violate the joint limits.
    """
    x, y = float(target[0]), float(target[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("target must be finite")
    l1, l2 = params.l1, params.l2
    r = math.hypot(x, y)
    if r > l1 + l2 + REACH_EPS or r < abs(l1 - l2) - REACH_EPS:
        raise Unreachable(f"|target| = {r:.6g} outside [{abs(l1 - l2):.6g}, "
                          f"{l1 + l2:.6g}]")
    c2 = (r * r - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    q2 = math.acos(min(1.0, max(-1.0, c2)))
    heading = math.atan2(x, y)
    for elbow in (q2, -q2):
        q1 = heading - math.atan2(l2 * math.sin(elbow), l1 + l2 * math.cos(elbow))
        q1 = _wrap_into(q1, params.q1_limits)
        if q1 is not None and _within(elbow, params.q2_limits):
            return q1, elbow
    raise Unreachable("both elbow branches violate joint limits")


def arm_matrices(params, state):
    """Mass matrix, Coriolis matrix and gravity load at ``state``.

    ``c`` is the Christoffel-symbol form, so ``dM/dt - 2C`` is
    skew-symmetric; ``grav`` is ``dV/dq``.
    """
    s2, c2 = math.sin(state.q2), math.cos(state.q2)
    k = params.m2 * params.l1 * params.lc2
    m12 = params.i2 + k * c2
    m = np.array([[params.i1 + params.i2 + params.m2 * params.l1**2 + 2 * k * c2, m12],
                  [m12, params.i2]])
    h = k * s2
    c = np.array([[-h * state.dq2, -h * (state.dq1 + state.dq2)],
                  [h * state.dq1, 0.0]])
    grav = np.array(_kernels.gravity_load(params.as_array(), state.q1, state.q2))
    return ArmMatrices(m, c, grav)


def base_load(params, q1, q2, base_accel):
    """Joint torques induced by accelerating the arm base.

    Each link's mass sees the inertial force ``-m * a_base`` at its centre
    of mass, mapped to the joints through that point's Jacobian.
    """
    ax, ay = base_accel
    l1, lc1, lc2 = params.l1, params.lc1, params.lc2
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    j1 = np.array([[lc1 * c1, 0.0], [-lc1 * s1, 0.0]])
    j2 = np.array([[l1 * c1 + lc2 * c12, lc2 * c12],
                   [-l1 * s1 - lc2 * s12, -lc2 * s12]])
    a = np.array([ax, ay], dtype=float)
    return j1.T @ (-params.m1 * a) + j2.T @ (-params.m2 * a)


def joint_accel(params, state, torque, base_accel=(0.0, 0.0)):
    """qdd for the given state, applied torque and base acceleration."""
    tm = params.tau_max
    t1 = min(max(torque[0], -tm), tm)
    t2 = min(max(torque[1], -tm), tm)
    return _kernels.arm_accel(params.as_array(), *state.as_tuple(), t1, t2,
                              float(base_accel[0]), float(base_accel[1]))


def arm_step(params, state, torque, base_accel=(0.0, 0.0), dt=1e-3):
    """Advance the arm by one fixed RK4 step of length ``dt``.

    Torques beyond ``tau_max`` are clamped. Angles leaving the joint limits
    are clamped and that joint's rate is zeroed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _kernels.arm_rk4(params.as_array(), *state.as_tuple(),
                           float(torque[0]), float(torque[1]),
                           float(base_accel[0]), float(base_accel[1]), float(dt))
    if not all(math.isfinite(v) for v in out):
        raise NumericalBlowup(f"arm state diverged: {out}")
    return JointState(*out)


def mechanical_energy(params, state):
    """(kinetic, potential) energy in joules."""
    mats = arm_matrices(params, state)
    qd = np.array([state.dq1, state.dq2])
    kinetic = 0.5 * qd @ mats.m @ qd
    potential = params.g * (
        params.m1 * params.lc1 * math.cos(state.q1)
        + params.m2 * (params.l1 * math.cos(state.q1)
                       + params.lc2 * math.cos(state.q1 + state.q2)))
    return float(kinetic), float(potential)
