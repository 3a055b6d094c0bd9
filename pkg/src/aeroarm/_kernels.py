"""Compiled inner loops.

Everything here works on flat float arrays and scalars so that numba can
compile it in nopython mode. The public, typed API lives in ``arm``,
``quad`` and ``qlearn``; those modules pack their dataclasses into the
layouts below and call in.

Arm parameter vector layout (``ARM_*`` indices)::

    l1 l2 lc1 lc2 m1 m2 i1 i2 g q1_lo q1_hi q2_lo q2_hi tau_max
"""

import math

import numpy as np
from numba import njit

ARM_L1, ARM_L2, ARM_LC1, ARM_LC2 = 0, 1, 2, 3
ARM_M1, ARM_M2, ARM_I1, ARM_I2, ARM_G = 4, 5, 6, 7, 8
ARM_Q1LO, ARM_Q1HI, ARM_Q2LO, ARM_Q2HI, ARM_TAU = 9, 10, 11, 12, 13
ARM_NPARAM = 14

QUAD_M, QUAD_I, QUAD_R, QUAD_G, QUAD_UMAX = 0, 1, 2, 3, 4
QUAD_NPARAM = 5

BLOWUP_REWARD = -10.0


@njit(cache=True)
def gravity_load(p, q1, q2):
    """G(q) = dV/dq, the torque that holds the arm still."""
    s1 = math.sin(q1)
    s12 = math.sin(q1 + q2)
    m2 = p[ARM_M2]
    g = p[ARM_G]
    g2 = -m2 * g * p[ARM_LC2] * s12
    g1 = -(p[ARM_M1] * p[ARM_LC1] + m2 * p[ARM_L1]) * g * s1 + g2
    return g1, g2


@njit(cache=True)
def base_load(p, q1, q2, ax, ay):
    """d'Alembert joint load of a base acceleration (ax, ay)."""
    l1 = p[ARM_L1]
    lc1 = p[ARM_LC1]
    lc2 = p[ARM_LC2]
    m2 = p[ARM_M2]
    s1 = math.sin(q1)
    c1 = math.cos(q1)
    s12 = math.sin(q1 + q2)
    c12 = math.cos(q1 + q2)
    d1 = -p[ARM_M1] * lc1 * (c1 * ax - s1 * ay) - m2 * (
        (l1 * c1 + lc2 * c12) * ax - (l1 * s1 + lc2 * s12) * ay
    )
    d2 = -m2 * lc2 * (c12 * ax - s12 * ay)
    return d1, d2


@njit(cache=True)
def servo_torque(p, servo, level1, level2, q1, q2, dq1, dq2, ax, ay):
    """Joint torque of the servo layer for a chosen pair of levels.

    ``servo`` = (feedforward, damping1, damping2). The feed-forward cancels
    gravity and the known base-acceleration load.
    """
    u1 = level1 - servo[1] * dq1
    u2 = level2 - servo[2] * dq2
    if servo[0] != 0.0:
        g1, g2 = gravity_load(p, q1, q2)
        d1, d2 = base_load(p, q1, q2, ax, ay)
        u1 += g1 - d1
        u2 += g2 - d2
    return u1, u2


@njit(cache=True)
def arm_accel(p, q1, q2, dq1, dq2, tau1, tau2, ax, ay):
    """Joint accelerations from M qdd + C qd + G = tau + tau_base."""
    l1 = p[ARM_L1]
    lc1 = p[ARM_LC1]
    lc2 = p[ARM_LC2]
    m1 = p[ARM_M1]
    m2 = p[ARM_M2]
    g = p[ARM_G]
    s2 = math.sin(q2)
    c2 = math.cos(q2)

    k = m2 * l1 * lc2
    m11 = p[ARM_I1] + p[ARM_I2] + m2 * l1 * l1 + 2.0 * k * c2
    m12 = p[ARM_I2] + k * c2
    m22 = p[ARM_I2]

    h = k * s2
    # C qd with the Christoffel-consistent C
    cq1 = -h * dq2 * dq1 - h * (dq1 + dq2) * dq2
    cq2 = h * dq1 * dq1

    g1, g2 = gravity_load(p, q1, q2)
    d1, d2 = base_load(p, q1, q2, ax, ay)

    r1 = tau1 + d1 - cq1 - g1
    r2 = tau2 + d2 - cq2 - g2
    det = m11 * m22 - m12 * m12
    return (m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det


@njit(cache=True)
def arm_rk4(p, q1, q2, dq1, dq2, tau1, tau2, ax, ay, dt):
    """One clamped RK4 step; returns (q1, q2, dq1, dq2)."""
    tm = p[ARM_TAU]
    tau1 = min(max(tau1, -tm), tm)
    tau2 = min(max(tau2, -tm), tm)

    a1, a2 = arm_accel(p, q1, q2, dq1, dq2, tau1, tau2, ax, ay)
    k1q1, k1q2, k1d1, k1d2 = dq1, dq2, a1, a2
    h = 0.5 * dt
    a1, a2 = arm_accel(p, q1 + h * k1q1, q2 + h * k1q2, dq1 + h * k1d1,
                       dq2 + h * k1d2, tau1, tau2, ax, ay)
    k2q1, k2q2, k2d1, k2d2 = dq1 + h * k1d1, dq2 + h * k1d2, a1, a2
    a1, a2 = arm_accel(p, q1 + h * k2q1, q2 + h * k2q2, dq1 + h * k2d1,
                       dq2 + h * k2d2, tau1, tau2, ax, ay)
    k3q1, k3q2, k3d1, k3d2 = dq1 + h * k2d1, dq2 + h * k2d2, a1, a2
    a1, a2 = arm_accel(p, q1 + dt * k3q1, q2 + dt * k3q2, dq1 + dt * k3d1,
                       dq2 + dt * k3d2, tau1, tau2, ax, ay)
    k4q1, k4q2, k4d1, k4d2 = dq1 + dt * k3d1, dq2 + dt * k3d2, a1, a2

    w = dt / 6.0
    nq1 = q1 + w * (k1q1 + 2.0 * k2q1 + 2.0 * k3q1 + k4q1)
    nq2 = q2 + w * (k1q2 + 2.0 * k2q2 + 2.0 * k3q2 + k4q2)
    nd1 = dq1 + w * (k1d1 + 2.0 * k2d1 + 2.0 * k3d1 + k4d1)
    nd2 = dq2 + w * (k1d2 + 2.0 * k2d2 + 2.0 * k3d2 + k4d2)

    if nq1 < p[ARM_Q1LO]:
        nq1 = p[ARM_Q1LO]
        nd1 = 0.0
    elif nq1 > p[ARM_Q1HI]:
        nq1 = p[ARM_Q1HI]
        nd1 = 0.0
    if nq2 < p[ARM_Q2LO]:
        nq2 = p[ARM_Q2LO]
        nd2 = 0.0
    elif nq2 > p[ARM_Q2HI]:
        nq2 = p[ARM_Q2HI]
        nd2 = 0.0
    return nq1, nq2, nd1, nd2


@njit(cache=True)
def quad_deriv(p, vx, vy, alpha, dalpha, u1, u2, moment):
    f = u1 + u2
    ax = -f * math.sin(alpha) / p[QUAD_M]
    # weight subtracted before dividing so hover thrust gives exactly zero
    ay = (f * math.cos(alpha) - p[QUAD_M] * p[QUAD_G]) / p[QUAD_M]
    aa = (p[QUAD_R] * (u1 - u2) + moment) / p[QUAD_I]
    return vx, vy, ax, ay, dalpha, aa


@njit(cache=True)
def quad_rk4(p, x, y, vx, vy, alpha, dalpha, u1, u2, moment, dt):
    umax = p[QUAD_UMAX]
    u1 = min(max(u1, 0.0), umax)
    u2 = min(max(u2, 0.0), umax)
    h = 0.5 * dt
    a0, b0, c0, d0, e0, f0 = quad_deriv(p, vx, vy, alpha, dalpha, u1, u2, moment)
    a1, b1, c1, d1, e1, f1 = quad_deriv(p, vx + h * c0, vy + h * d0,
                                        alpha + h * e0, dalpha + h * f0,
                                        u1, u2, moment)
    a2, b2, c2, d2, e2, f2 = quad_deriv(p, vx + h * c1, vy + h * d1,
                                        alpha + h * e1, dalpha + h * f1,
                                        u1, u2, moment)
    a3, b3, c3, d3, e3, f3 = quad_deriv(p, vx + dt * c2, vy + dt * d2,
                                        alpha + dt * e2, dalpha + dt * f2,
                                        u1, u2, moment)
    w = dt / 6.0
    return (x + w * (a0 + 2.0 * a1 + 2.0 * a2 + a3),
            y + w * (b0 + 2.0 * b1 + 2.0 * b2 + b3),
            vx + w * (c0 + 2.0 * c1 + 2.0 * c2 + c3),
            vy + w * (d0 + 2.0 * d1 + 2.0 * d2 + d3),
            alpha + w * (e0 + 2.0 * e1 + 2.0 * e2 + e3),
            dalpha + w * (f0 + 2.0 * f1 + 2.0 * f2 + f3))


@njit(cache=True)
def bin_index(value, lo, hi, n):
    if value <= lo:
        return 0
    if value >= hi:
        return n - 1
    b = int((value - lo) / (hi - lo) * n)
    return min(b, n - 1)


@njit(cache=True)
def encode(q1, q2, step, n_steps, q1_lo, q1_hi, n1, q2_lo, q2_hi, n2, ns):
    b1 = bin_index(q1, q1_lo, q1_hi, n1)
    b2 = bin_index(q2, q2_lo, q2_hi, n2)
    bs = min(step * ns // n_steps, ns - 1)
    return (bs * n1 + b1) * n2 + b2


@njit(cache=True)
def greedy(values, s):
    best = 0
    bv = values[s, 0]
    for a in range(1, values.shape[1]):
        if values[s, a] > bv:
            bv = values[s, a]
            best = a
    return best


@njit(cache=True)
def bellman(values, s, a, r, s_next, lr, gamma, terminal):
    """Q(s,a) += lr * (r + gamma * max_a' Q(s',a') - Q(s,a)); returns it."""
    if terminal:
        tgt = r
    else:
        tgt = r + gamma * values[s_next, greedy(values, s_next)]
    values[s, a] += lr * (tgt - values[s, a])
    return values[s, a]


@njit(cache=True)
def mdp_episode(next_state, rewards, terminal, start, horizon, values, lr,
                gamma, epsilon, learn, seed):
    """Epsilon-greedy rollout on a deterministic finite MDP.

    ``start < 0`` draws the start state uniformly. Returns the reward sum.
    """
    np.random.seed(seed)
    ns, na = values.shape
    s = start if start >= 0 else np.random.randint(ns)
    total = 0.0
    for _ in range(horizon):
        if terminal[s]:
            break
        if learn and np.random.random() < epsilon:
            a = np.random.randint(na)
        else:
            a = greedy(values, s)
        s2 = next_state[s, a]
        r = rewards[s, a]
        total += r
        if learn:
            bellman(values, s, a, r, s2, lr, gamma, terminal[s2])
        s = s2
    return total


@njit(cache=True)
def episode(p, q0, base, base_acc, target, values, disc, levels, n_sub,
            sub_dt, d_max, lr, gamma, epsilon, learn, seed, servo,
            out_xy):
    """Roll one episode, updating ``values`` in place when ``learn``.

    ``disc`` = (q1_lo, q1_hi, n1, q2_lo, q2_hi, n2, n_step_bins).
    ``servo`` configures the joint layer between the chosen torque level
    and the joints, see :func:`servo_torque`.
    Writes the end-effector world track into ``out_xy`` and returns
    (reward_sum, n_rewards, sq_err_sum, err_sum, n_err, blown_up).
    """
    np.random.seed(seed)
    n = target.shape[0]
    nl = levels.shape[0]
    na = values.shape[1]
    q1_lo, q1_hi, n1 = disc[0], disc[1], int(disc[2])
    q2_lo, q2_hi, n2 = disc[3], disc[4], int(disc[5])
    ns = int(disc[6])
    l1 = p[ARM_L1]
    l2 = p[ARM_L2]

    q1, q2, dq1, dq2 = q0[0], q0[1], 0.0, 0.0
    out_xy[0, 0] = base[0, 0] + l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
    out_xy[0, 1] = base[0, 1] + l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
    s = encode(q1, q2, 0, n, q1_lo, q1_hi, n1, q2_lo, q2_hi, n2, ns)

    rsum = 0.0
    nr = 0
    sq = 0.0
    ab = 0.0
    ne = 0
    blown = False
    for i in range(n - 1):
        if learn and np.random.random() < epsilon:
            a = np.random.randint(na)
        else:
            a = greedy(values, s)
        t1 = levels[a // nl]
        t2 = levels[a % nl]
        ax = base_acc[i, 0]
        ay = base_acc[i, 1]
        for _ in range(n_sub):
            u1, u2 = servo_torque(p, servo, t1, t2, q1, q2, dq1, dq2, ax, ay)
            q1, q2, dq1, dq2 = arm_rk4(p, q1, q2, dq1, dq2, u1, u2, ax, ay,
                                       sub_dt)
        if not (math.isfinite(q1) and math.isfinite(q2)
                and math.isfinite(dq1) and math.isfinite(dq2)):
            r = BLOWUP_REWARD
            if learn:
                bellman(values, s, a, r, s, lr, gamma, True)
            rsum += r
            nr += 1
            blown = True
            for j in range(i + 1, n):
                out_xy[j, 0] = math.nan
                out_xy[j, 1] = math.nan
            break
        ex = base[i + 1, 0] + l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
        ey = base[i + 1, 1] + l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
        out_xy[i + 1, 0] = ex
        out_xy[i + 1, 1] = ey
        d = math.hypot(ex - target[i + 1, 0], ey - target[i + 1, 1])
        r = 10.0 * max(0.0, 1.0 - d / d_max)
        rsum += r
        nr += 1
        sq += d * d
        ab += d
        ne += 1
        s_next = encode(q1, q2, i + 1, n, q1_lo, q1_hi, n1, q2_lo, q2_hi,
                        n2, ns)
        if learn:
            bellman(values, s, a, r, s_next, lr, gamma, i + 1 == n - 1)
        s = s_next
    return rsum, nr, sq, ab, ne, blown
