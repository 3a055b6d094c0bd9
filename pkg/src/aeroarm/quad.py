"""Planar quadrotor body, arm-induced moments and a reactive thrust loop."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from aeroarm import _kernels
from aeroarm.arm import NumericalBlowup


@dataclass(frozen=True)
class QuadParams:
    m_o: float = 1.5
    i_o: float = 0.03
    r_arm: float = 0.2
    g: float = 9.81
    u_max: float = 15.0
    alpha_max: float = 0.5

    def __post_init__(self):
        for name in ("m_o", "i_o", "r_arm", "g", "u_max", "alpha_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.alpha_max >= math.pi / 2:
            raise ValueError("alpha_max must be below pi/2")

    @property
    def hover_thrust(self):
        """Per-propeller thrust that balances weight at zero tilt."""
        return self.m_o * self.g / 2

    def as_array(self):
        return np.array([self.m_o, self.i_o, self.r_arm, self.g, self.u_max])


@dataclass(frozen=True)
class QuadState:
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    alpha: float = 0.0
    dalpha: float = 0.0

    def as_tuple(self):
        return (self.x, self.y, self.vx, self.vy, self.alpha, self.dalpha)

    def tilt_violated(self, params):
        return abs(self.alpha) > params.alpha_max


class MomentReport(NamedTuple):
    m_static: float
    m_dynamic: float
    m_total: float


def quad_step(params, state, u1, u2, external_moment=0.0, dt=1e-3):
    """One RK4 step of the planar rigid body; thrusts clamped to [0, u_max]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _kernels.quad_rk4(params.as_array(), *state.as_tuple(), float(u1),
                            float(u2), float(external_moment), float(dt))
    if not all(math.isfinite(v) for v in out):
        raise NumericalBlowup(f"quadrotor state diverged: {out}")
    return QuadState(*out)


def static_moment(arm, q1, q2, alpha):
    """Moment of the arm links' weight about the body centre."""
    return (-(arm.l1 / 2) * arm.m1 * arm.g * math.sin(q1 - alpha)
            + (arm.l2 / 2) * arm.m2 * arm.g * math.sin(q1 + q2 - alpha))


def dynamic_moment(arm, ddq1, ddq2):
    """Reaction moment of the joints' angular accelerations."""
    return -arm.i1 * ddq1 + arm.i2 * (ddq1 + ddq2)


def total_moment(arm, q1, q2, alpha, ddq1, ddq2):
    ms = static_moment(arm, q1, q2, alpha)
    md = dynamic_moment(arm, ddq1, ddq2)
    return MomentReport(ms, md, ms + md)


@dataclass(frozen=True)
class PDGains:
    kp_pos: float
    kd_pos: float
    kp_att: float
    kd_att: float

    def __post_init__(self):
        if min(self.kp_pos, self.kd_pos, self.kp_att, self.kd_att) <= 0:
            raise ValueError("PD gains must be positive")

    @classmethod
    def critically_damped(cls, params, pos_bandwidth=3.0, att_bandwidth=25.0):
        """Gains giving critically damped position and attitude loops.

        Bandwidths are natural frequencies in rad/s; position gains are per
        unit mass so they act as acceleration commands.
        """
        wp, wa = pos_bandwidth, att_bandwidth
        return cls(kp_pos=wp * wp, kd_pos=2 * wp,
                   kp_att=params.i_o * wa * wa, kd_att=2 * params.i_o * wa)


class Reference(NamedTuple):
    """Desired pose, with optional velocity and acceleration feed-forward."""
    x: float
    y: float
    alpha: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    ddalpha: float = 0.0


def reactive_thrust_control(params, history, reference, delay_steps, gains):
    """PD thrust law with hover feed-forward, acting on a delayed state.

    ``history`` holds past observed states, most recent last; the law
    reads the entry ``delay_steps`` ticks back (or the oldest one while the
    history is still short). Returns the clamped thrust pair ``(u1, u2)``.
    """
    if delay_steps < 0:
        raise ValueError("delay_steps must be >= 0")
    if not history:
        raise ValueError("history must hold at least one state")
    s = history[max(0, len(history) - 1 - delay_steps)]
    ref = reference

    ax_cmd = ref.ax + gains.kp_pos * (ref.x - s.x) + gains.kd_pos * (ref.vx - s.vx)
    ay_cmd = ref.ay + gains.kp_pos * (ref.y - s.y) + gains.kd_pos * (ref.vy - s.vy)
    # tilt needed for the horizontal command, bounded by the flight envelope
    alpha_cmd = ref.alpha + math.atan2(-ax_cmd, params.g + ay_cmd)
    alpha_cmd = min(max(alpha_cmd, -params.alpha_max), params.alpha_max)
    thrust = params.m_o * (params.g + ay_cmd) / max(math.cos(s.alpha), 0.1)

    err = s.alpha - alpha_cmd
    torque = params.i_o * ref.ddalpha - gains.kp_att * err - gains.kd_att * s.dalpha
    diff = torque / params.r_arm
    u1 = min(max(0.5 * (thrust + diff), 0.0), params.u_max)
    u2 = min(max(0.5 * (thrust - diff), 0.0), params.u_max)
    return u1, u2
