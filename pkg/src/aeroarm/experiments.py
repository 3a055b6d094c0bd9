"""Pipeline orchestration: targets, planning, training, sweeps and the
manipulator-disturbance co-simulation."""

import concurrent.futures
import csv
import dataclasses
import math
import os
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import UnivariateSpline

from aeroarm import _kernels
from aeroarm.arm import JointState, arm_step, joint_accel
from aeroarm.corridor import compute_corridor
from aeroarm.planner import plan_base_path, read_obstacles, smooth_plan
from aeroarm.qlearn import (Discretizer, EpisodeReport, QTable, TrackingEnv,
                            encode_state, run_episode, train)
from aeroarm.quad import (PDGains, QuadState, Reference, quad_step,
                          reactive_thrust_control, total_moment)
from aeroarm.trajectory import Trajectory, fmt


def line_target(tc):
    s = np.linspace(0.0, 1.0, tc.n_samples)
    pts = np.column_stack([tc.start[0] + tc.length * s, np.full_like(s, tc.start[1])])
    return Trajectory.from_points(pts, tc.dt)


def sine_target(tc):
    """Horizontal sweep with a vertical sine band, ``periods`` cycles long."""
    s = np.linspace(0.0, 1.0, tc.n_samples)
    pts = np.column_stack([tc.start[0] + tc.length * s,
                           tc.start[1] + tc.amplitude * np.sin(2 * math.pi * tc.periods * s)])
    return Trajectory.from_points(pts, tc.dt)


def arc_target(tc):
    """Arc starting at ``start`` and bending upward around a centre below it."""
    phi = np.linspace(0.0, tc.arc_angle, tc.n_samples)
    cx, cy = tc.start[0], tc.start[1] - tc.arc_radius
    pts = np.column_stack([cx + tc.arc_radius * np.sin(phi), cy + tc.arc_radius * np.cos(phi)])
    return Trajectory.from_points(pts, tc.dt)


TARGET_GENERATORS = {"line": line_target, "sine": sine_target, "arc": arc_target}


def build_target(cfg):
    gen = TARGET_GENERATORS.get(cfg.target.source)
    if gen is not None:
        return gen(cfg.target)
    return Trajectory.from_csv(cfg.resolve(cfg.target.source))


def load_obstacles(cfg):
    return read_obstacles(cfg.resolve(cfg.obstacles_file)) if cfg.obstacles_file else []


@dataclass
class PlanResult:
    target: Trajectory
    obstacles: list
    corridor: object
    plan: object


def choose_start(corridor, target, offset):
    """Corridor-0 cell centre closest to ``target[0] + offset``."""
    want = target.points[0] + np.asarray(offset)
    centers = corridor.centers(0)
    d = np.hypot(*(centers - want).T)
    return centers[int(np.argmin(d))]


def run_plan(cfg):
    """Corridor then base plan for the configured scenario."""
    target = build_target(cfg)
    if not math.isclose(cfg.planner.dt, target.uniform_dt):
        cfg = cfg.override("planner", dt=target.uniform_dt)
    obstacles = load_obstacles(cfg)
    corridor = compute_corridor(target, cfg.arm, cfg.corridor.grid_resolution,
                                cfg.corridor.margin, obstacles)
    start = choose_start(corridor, target, cfg.corridor.base_offset)
    plan = plan_base_path(corridor, start, obstacles, cfg.planner)
    if cfg.planner.smoothing_passes:
        plan = smooth_plan(plan, corridor, obstacles, cfg.planner)
    return PlanResult(target, obstacles, corridor, plan)


def build_discretizer(cfg, n_steps):
    d = cfg.disc
    disc = Discretizer.default(cfg.arm, n_steps, bins=d.q_bins,
                               tau_scale=d.tau_scale, n_levels=d.n_levels)
    if d.step_bins:
        disc = dataclasses.replace(disc, step_index_bins=d.step_bins)
    if d.bin_scale != 1.0:
        disc = disc.with_bin_scale(d.bin_scale)
    return disc


def build_env(cfg, planned):
    target = planned.target
    return TrackingEnv(cfg.arm, planned.plan.trajectory, target,
                       build_discretizer(cfg, len(target)), cfg.servo,
                       cfg.disc.substeps)


@dataclass
class TrainResult:
    table: QTable
    curve: list
    report: EpisodeReport
    env: TrackingEnv


def run_train(cfg, planned=None):
    planned = planned or run_plan(cfg)
    env = build_env(cfg, planned)
    table, curve = train(env, cfg.learn)
    report = run_episode(env, table, cfg.learn, "greedy")
    return TrainResult(table, curve, report, env)


# -- sweep -----------------------------------------------------------------

SWEEP_AXES = {
    "lr": ("learning_rate", [0.1, 0.01, 0.001]),
    "gamma": ("discount", [0.9, 0.5, 0.2]),
    "samples": ("bin_scale", ["+25%", "-25%"]),
}


def cell_seed(root_seed, axis, value):
    """Seed of one sweep cell: the root seed mixed with a stable label hash."""
    label = zlib.crc32(f"{axis}={value}".encode())
    return int(np.random.SeedSequence([int(root_seed), label]).generate_state(1)[0])


def _cell_config(cfg, axis, value):
    seed = cell_seed(cfg.learn.rng_seed, axis, value)
    cfg = cfg.override("learn", rng_seed=seed)
    if axis == "lr":
        return cfg.override("learn", learning_rate=value)
    if axis == "gamma":
        return cfg.override("learn", discount=value)
    scale = 1.0 + float(value.rstrip("%")) / 100.0
    return cfg.override("disc", bin_scale=scale)


def _run_cell(args):
    cfg, axis, value, planned = args
    try:
        res = run_train(_cell_config(cfg, axis, value), planned)
        return {"rmse": res.report.rmse, "avg_reward": res.report.avg_reward, "error": ""}
    except Exception as exc:  # a failed cell is recorded, the sweep goes on
        return {"rmse": math.nan, "avg_reward": math.nan, "error": f"{type(exc).__name__}: {exc}"}


def run_sweep(cfg, axis, threads=None):
    """Rows ``(parameter, value, rmse, avg_reward, error)`` in table order."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    name, values = SWEEP_AXES[axis]
    planned = run_plan(cfg)
    jobs = [(cfg, axis, v, planned) for v in values]
    if threads is None:
        threads = int(os.environ.get("AEROARM_THREADS", "1") or 1)
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(min(threads, len(jobs))) as pool:
            results = dict(zip(values, pool.map(_run_cell, jobs)))
    else:
        results = {v: _run_cell(job) for v, job in zip(values, jobs)}
    return [{"parameter": name, "value": v, **results[v]} for v in values]


def write_sweep(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "value", "rmse", "avg_reward", "error"])
        for r in rows:
            w.writerow([r["parameter"], r["value"], fmt(r["rmse"]),
                        fmt(r["avg_reward"]), r["error"]])


# -- disturbance co-simulation ---------------------------------------------

@dataclass
class ReferenceTrack:
    """Flight reference sampled every integration step."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    alpha: np.ndarray
    dalpha: np.ndarray
    ddalpha: np.ndarray


def reference_track(plan, g, h, tolerance):
    """Quintic smoothing spline of the plan and its flat-output attitude.

    The grid plan is fitted to within about ``tolerance`` per sample (RMS)
    rather than interpolated, which would ring between cells. The spline is
    C4, so the tilt realising its acceleration is C2 and the open-loop
    thrusts derived from it are continuous.
    """
    t_plan = plan.times - plan.times[0]
    smooth = len(t_plan) * tolerance**2
    fits = [UnivariateSpline(t_plan, plan.points[:, j], k=5, s=smooth) for j in range(2)]
    n = int(round(t_plan[-1] / h))
    t = np.linspace(0.0, t_plan[-1], n + 1)
    d = [np.column_stack([f(t, nu) for f in fits]) for nu in range(5)]
    ax, ay = d[2].T
    jx, jy = d[3].T
    sx, sy = d[4].T
    # alpha = atan2(-ax, ay + g) differentiated twice
    num, den = -ax, ay + g
    dnum, dden = -jx, jy
    ddnum, ddden = -sx, sy
    r2 = num * num + den * den
    alpha = np.arctan2(num, den)
    top = den * dnum - num * dden
    dalpha = top / r2
    dtop = den * ddnum - num * ddden
    dr2 = 2 * (num * dnum + den * dden)
    ddalpha = (dtop * r2 - top * dr2) / (r2 * r2)
    return ReferenceTrack(t, d[0], d[1], d[2], alpha, dalpha, ddalpha)


def feedforward_thrust(quad, acc, alpha_ddot):
    """Open-loop thrusts that fly the reference with no disturbance."""
    ax, ay = acc
    f = quad.m_o * math.hypot(ax, ay + quad.g)
    diff = quad.i_o * alpha_ddot / quad.r_arm
    clamp = lambda u: min(max(u, 0.0), quad.u_max)
    return clamp(0.5 * (f + diff)), clamp(0.5 * (f - diff))


@dataclass
class DisturbTrace:
    label: str
    rows: list
    max_deviation: float
    max_alpha: float
    blown_up: bool = False


def co_simulate(cfg, table, env, amplification, control, delay_steps=None,
                substeps=None):
    """Fly the planned base while the arm replays its greedy policy.

    The arm's total moment on the body drives the quadrotor, whose realised
    acceleration feeds back into the arm. Without ``control`` the thrusts
    are the open-loop feed-forward of the plan; with it, the reactive PD
    law runs every integration step on a state ``delay_steps`` steps old.
    Amplified arms get proportionally stronger joint actuators.
    """
    delay = cfg.disturb.delay_steps if delay_steps is None else delay_steps
    n_sub = substeps or cfg.disturb.substeps
    arm = dataclasses.replace(cfg.arm.with_mass_scale(amplification),
                              tau_max=cfg.arm.tau_max * amplification)
    quad = cfg.quad
    plan = env.base
    h = plan.uniform_dt / n_sub
    ref_track = reference_track(plan, quad.g, h, 0.5 * cfg.corridor.grid_resolution)
    t, pos, vel, acc = ref_track.t, ref_track.pos, ref_track.vel, ref_track.acc
    alpha_ref, dalpha_ref, ddalpha_ref = ref_track.alpha, ref_track.dalpha, ref_track.ddalpha
    gains = PDGains.critically_damped(quad, cfg.disturb.pos_bandwidth,
                                      cfg.disturb.att_bandwidth)
    disc = env.discretizer
    servo_arr = env.servo.as_array()
    p = arm.as_array()

    state = QuadState(pos[0, 0], pos[0, 1], vel[0, 0], vel[0, 1],
                      alpha_ref[0], dalpha_ref[0])
    joint = JointState(*env.q0)
    history = [state]
    base_acc = tuple(acc[0])
    label = f"{'control' if control else 'no_control'}/{'amplified' if amplification != 1 else 'nominal'}"
    rows = []
    max_dev = 0.0
    max_alpha = abs(state.alpha)
    k = 0
    try:
        for i in range(len(plan) - 1):
            action = table.greedy_action(encode_state(disc, joint, i))
            lv1, lv2 = disc.action_torques(action)
            for _ in range(n_sub):
                # the servo compensates the planned, not the realised, base motion
                tau = _kernels.servo_torque(p, servo_arr, lv1, lv2, *joint.as_tuple(),
                                            acc[k, 0], acc[k, 1])
                ddq = joint_accel(arm, joint, tau, base_acc)
                moment = total_moment(arm, joint.q1, joint.q2, state.alpha, *ddq).m_total
                if control:
                    ref = Reference(pos[k, 0], pos[k, 1], 0.0, vel[k, 0], vel[k, 1],
                                    acc[k, 0], acc[k, 1], ddalpha_ref[k])
                    u1, u2 = reactive_thrust_control(quad, history, ref, delay, gains)
                else:
                    # midpoint sample keeps the zero-order hold second order
                    u1, u2 = feedforward_thrust(quad, 0.5 * (acc[k] + acc[k + 1]),
                                                0.5 * (ddalpha_ref[k] + ddalpha_ref[k + 1]))
                new = quad_step(quad, state, u1, u2, moment, h)
                base_acc = ((new.vx - state.vx) / h, (new.vy - state.vy) / h)
                joint = arm_step(arm, joint, tau, base_acc, h)
                state = new
                history.append(state)
                if len(history) > delay + 1:
                    history.pop(0)
                k += 1
                dev = math.hypot(state.x - pos[k, 0], state.y - pos[k, 1])
                max_dev = max(max_dev, dev)
                max_alpha = max(max_alpha, abs(state.alpha))
                rows.append((t[k], pos[k, 0], pos[k, 1], state.x, state.y,
                             state.alpha, moment))
    except FloatingPointError:
        return DisturbTrace(label, rows, math.inf, math.inf, blown_up=True)
    return DisturbTrace(label, rows, max_dev, max_alpha)


def run_disturb(cfg, table, env):
    """The four traces {no control, control} x {nominal, amplified}."""
    traces = []
    for control in (False, True):
        for amp in (1.0, cfg.mass_amplification):
            traces.append(co_simulate(cfg, table, env, amp, control))
    return traces


def write_disturb(traces, path, summary_path, quad):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trace", "t", "planned_x", "planned_y", "actual_x",
                    "actual_y", "alpha", "moment"])
        for tr in traces:
            for row in tr.rows:
                w.writerow([tr.label, *map(fmt, row)])
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trace", "max_deviation", "max_alpha", "alpha_limit_exceeded",
                    "blown_up"])
        for tr in traces:
            w.writerow([tr.label, fmt(tr.max_deviation), fmt(tr.max_alpha),
                        str(tr.max_alpha > quad.alpha_max).lower(),
                        str(tr.blown_up).lower()])


# -- commands --------------------------------------------------------------

def _out_dir(cfg):
    path = cfg.resolve(cfg.output_dir)
    os.makedirs(path, exist_ok=True)
    return path


def write_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "avg_reward"])
        for k, r in enumerate(curve):
            w.writerow([k, fmt(r)])


def write_report(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name in ("avg_reward", "rmse", "ade", "accuracy_pct"):
            w.writerow([name, fmt(getattr(report, name))])
        w.writerow(["blown_up", str(report.blown_up).lower()])


def cmd_plan(cfg, log=print):
    planned = run_plan(cfg)
    out = _out_dir(cfg)
    planned.plan.trajectory.to_csv(os.path.join(out, "plan.csv"))
    planned.corridor.to_csv(os.path.join(out, "corridor.csv"))
    occ = planned.corridor.occupancy()
    log(f"min TTC along path: {planned.plan.min_ttc_along_path:.4g} s")
    log(f"corridor cells per sample: min {occ.min()} mean {occ.mean():.1f} max {occ.max()}")
    return planned


def cmd_train(cfg, log=print):
    res = run_train(cfg)
    out = _out_dir(cfg)
    res.table.save(os.path.join(out, "qtable.bin"))
    write_curve(res.curve, os.path.join(out, "learning_curve.csv"))
    write_report(res.report, os.path.join(out, "episode_report.csv"))
    if res.report.tracked_trajectory is not None:
        res.report.tracked_trajectory.to_csv(os.path.join(out, "tracked.csv"))
    r = res.report
    log(f"greedy: avg reward {r.avg_reward:.3f}  rmse {r.rmse:.4f} m  "
        f"ade {r.ade:.4f} m  accuracy {r.accuracy_pct:.1f}%")
    return res


def load_trained(cfg, planned=None):
    """Environment plus the table saved by ``cmd_train``."""
    env = build_env(cfg, planned or run_plan(cfg))
    path = os.path.join(cfg.resolve(cfg.output_dir), "qtable.bin")
    return QTable.load(path, env.discretizer), env


def cmd_eval(cfg, log=print):
    table, env = load_trained(cfg)
    report = run_episode(env, table, cfg.learn, "greedy")
    out = _out_dir(cfg)
    write_report(report, os.path.join(out, "eval_report.csv"))
    if report.tracked_trajectory is not None:
        report.tracked_trajectory.to_csv(os.path.join(out, "eval_tracked.csv"))
    log(f"greedy: avg reward {report.avg_reward:.3f}  rmse {report.rmse:.4f} m  "
        f"accuracy {report.accuracy_pct:.1f}%")
    return report


def cmd_sweep(cfg, axis, log=print):
    rows = run_sweep(cfg, axis)
    write_sweep(rows, os.path.join(_out_dir(cfg), f"sweep_{axis}.csv"))
    for r in rows:
        log(f"{r['parameter']}={r['value']}: rmse {r['rmse']:.4f}  "
            f"avg reward {r['avg_reward']:.3f} {r['error']}")
    return rows


def cmd_disturb(cfg, log=print):
    """Disturbance traces, reusing a saved table when one exists."""
    if os.path.isfile(os.path.join(cfg.resolve(cfg.output_dir), "qtable.bin")):
        table, env = load_trained(cfg)
    else:
        res = run_train(cfg)
        table, env = res.table, res.env
    traces = run_disturb(cfg, table, env)
    out = _out_dir(cfg)
    write_disturb(traces, os.path.join(out, "disturb.csv"),
                  os.path.join(out, "disturb_summary.csv"), cfg.quad)
    for tr in traces:
        state = "blown up" if tr.blown_up else f"max deviation {tr.max_deviation:.4g} m"
        log(f"{tr.label}: {state}")
    return traces
