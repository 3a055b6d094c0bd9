"""Tabular Q-learning of joint torques for end-effector tracking.

The agent sees ``(q1 bin, q2 bin, trajectory-step bin)`` and picks one
torque level per joint. Torque commands go through a joint servo layer
(feed-forward of gravity and of the planned base acceleration, plus
viscous damping injection) before reaching the arm dynamics. The damping
makes each level act as a joint-rate command that settles within one step.
"""

import csv
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from aeroarm import _kernels
from aeroarm.arm import inverse_kinematics
from aeroarm.trajectory import Trajectory, fmt

MAX_REWARD = 10.0
QTABLE_MAGIC = b"AAQT"
QTABLE_VERSION = 1


@dataclass(frozen=True)
class Discretizer:
    """Bin layout of the state space and the torque levels of each joint.

    Actions enumerate level pairs ``action = r1 * n + r2`` where ``r`` ranks
    the levels by magnitude (0, then -a, +a, ...). Action 0 therefore holds
    both joints, which is what an untouched state picks on an argmax tie.
    """

    q1_bounds: tuple
    q1_bins: int
    q2_bounds: tuple
    q2_bins: int
    step_index_bins: int
    n_steps: int
    tau_levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "q1_bounds", tuple(map(float, self.q1_bounds)))
        object.__setattr__(self, "q2_bounds", tuple(map(float, self.q2_bounds)))
        object.__setattr__(self, "tau_levels", tuple(map(float, self.tau_levels)))
        if min(self.q1_bins, self.q2_bins, self.step_index_bins) < 2:
            raise ValueError("bin counts must be >= 2")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        for lo, hi in (self.q1_bounds, self.q2_bounds):
            if not lo < hi:
                raise ValueError("bin bounds must satisfy lo < hi")
        lv = np.array(self.tau_levels)
        if (np.any(np.diff(lv) <= 0) or 0.0 not in self.tau_levels
                or not np.allclose(lv, -lv[::-1])):
            raise ValueError("torque levels must be sorted, symmetric and include 0")

    @classmethod
    def default(cls, arm, n_steps, bins=25, tau_scale=1.0, n_levels=5):
        """Bins spanning the joint limits, one step bin per sample, and
        ``n_levels`` evenly spaced torques up to ``tau_scale * tau_max``."""
        top = tau_scale * arm.tau_max
        return cls(arm.q1_limits, bins, arm.q2_limits, bins, n_steps, n_steps,
                   tuple(np.linspace(-top, top, n_levels)))

    def with_bin_scale(self, factor):
        """Per-joint bin counts scaled by ``factor`` (rounded)."""
        return replace(self, q1_bins=max(2, round(self.q1_bins * factor)),
                       q2_bins=max(2, round(self.q2_bins * factor)))

    @property
    def n_states(self):
        return self.q1_bins * self.q2_bins * self.step_index_bins

    @property
    def n_actions(self):
        return len(self.tau_levels) ** 2

    @property
    def action_levels(self):
        """Levels in action-rank order: by magnitude, negative first."""
        return tuple(sorted(self.tau_levels, key=lambda v: (abs(v), v)))

    def action_torques(self, action_id):
        if not 0 <= action_id < self.n_actions:
            raise IndexError(f"action_id {action_id} outside [0, {self.n_actions})")
        lv = self.action_levels
        n = len(lv)
        return lv[action_id // n], lv[action_id % n]

    def as_array(self):
        return np.array([*self.q1_bounds, self.q1_bins, *self.q2_bounds,
                         self.q2_bins, self.step_index_bins], dtype=float)


def encode_state(disc, joint, step_index):
    """State id of a joint configuration at a trajectory step.

    Angles outside the bin bounds fall into the edge bins.
    """
    if not 0 <= step_index < disc.n_steps:
        raise IndexError(f"step_index {step_index} outside [0, {disc.n_steps})")
    return int(_kernels.encode(joint.q1, joint.q2, int(step_index), disc.n_steps,
                               disc.q1_bounds[0], disc.q1_bounds[1], disc.q1_bins,
                               disc.q2_bounds[0], disc.q2_bounds[1], disc.q2_bins,
                               disc.step_index_bins))


@dataclass(eq=False)
class QTable:
    values: np.ndarray
    discretizer: Discretizer = None

    @classmethod
    def zeros(cls, disc):
        return cls(np.zeros((disc.n_states, disc.n_actions)), disc)

    def greedy_action(self, state_id):
        """Argmax action, lowest id on ties."""
        return int(_kernels.greedy(self.values, int(state_id)))

    def save(self, path):
        rows, cols = self.values.shape
        with open(path, "wb") as fh:
            fh.write(QTABLE_MAGIC)
            fh.write(struct.pack("<III", QTABLE_VERSION, rows, cols))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, discretizer=None):
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != QTABLE_MAGIC:
            raise ValueError(f"{path}: not a Q-table file")
        version, rows, cols = struct.unpack_from("<III", blob, 4)
        if version != QTABLE_VERSION:
            raise ValueError(f"{path}: unsupported Q-table version {version}")
        values = np.frombuffer(blob, dtype="<f8", offset=16).astype(float)
        if values.size != rows * cols:
            raise ValueError(f"{path}: truncated Q-table")
        values = values.reshape(rows, cols)
        if discretizer is not None and values.shape != (discretizer.n_states,
                                                         discretizer.n_actions):
            raise ValueError(f"{path}: table shape {values.shape} does not match "
                             f"discretizer ({discretizer.n_states}, {discretizer.n_actions})")
        return cls(values, discretizer)

    def to_csv(self, path, nonzero_only=False):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state_id", "action_id", "value"])
            for s, a in np.ndindex(*self.values.shape):
                v = self.values[s, a]
                if nonzero_only and v == 0.0:
                    continue
                w.writerow([s, a, fmt(v)])


def bellman_update(table, s, a, reward, s_next, alpha, gamma, terminal=False):
    """Q(s,a) <- Q(s,a) + alpha [R + gamma max_a' Q(s',a') - Q(s,a)].

    Mutates ``table`` in place and returns the new Q(s, a). A terminal
    transition drops the bootstrap term.
    """
    values = table.values if isinstance(table, QTable) else table
    return float(_kernels.bellman(values, int(s), int(a), float(reward),
                                  int(s_next), float(alpha), float(gamma),
                                  bool(terminal)))


def reward(ee_position, target, d_max):
    """Distance reward: 10 on target, falling linearly to 0 at ``d_max``."""
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    d = math.hypot(ee_position[0] - target[0], ee_position[1] - target[1])
    return MAX_REWARD * max(0.0, 1.0 - d / d_max)


@dataclass(frozen=True)
class LearnConfig:
    episodes: int = 15000
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: str = "exponential"
    d_max: float = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_decay not in ("exponential", "linear"):
            raise ValueError("epsilon_decay must be 'exponential' or 'linear'")
        if self.d_max is not None and not self.d_max > 0:
            raise ValueError("d_max must be positive")

    def epsilon(self, episode):
        """Exploration rate of episode ``episode`` (0-based)."""
        if self.episodes <= 1:
            return self.epsilon_start
        frac = episode / (self.episodes - 1)
        if self.epsilon_decay == "linear":
            return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
        if self.epsilon_end == 0:
            return self.epsilon_start if frac < 1 else 0.0
        return self.epsilon_start * (self.epsilon_end / self.epsilon_start) ** frac


@dataclass(frozen=True)
class ServoConfig:
    """Joint layer between the chosen torque level and the arm.

    Applied torque = level + feed-forward - damping * joint rate.
    """

    gravity_feedforward: bool = True
    damping: tuple = (4.0, 1.3)

    def as_array(self):
        return np.array([1.0 if self.gravity_feedforward else 0.0,
                         float(self.damping[0]), float(self.damping[1])])


@dataclass
class EpisodeReport:
    avg_reward: float
    rmse: float
    ade: float
    accuracy_pct: float
    tracked_trajectory: Trajectory = None
    blown_up: bool = False


@dataclass(eq=False)
class TrackingEnv:
    """Arm riding on a planned base path, asked to follow a target path."""

    arm: object
    base: Trajectory
    target: Trajectory
    discretizer: Discretizer
    servo: ServoConfig = field(default_factory=ServoConfig)
    substeps: int = 50

    def __post_init__(self):
        if len(self.base) != len(self.target):
            raise ValueError("base plan and target must have the same length")
        if not math.isclose(self.base.uniform_dt, self.target.uniform_dt):
            raise ValueError("base plan and target must share the time step")
        if self.discretizer.n_steps != len(self.target):
            raise ValueError("discretizer n_steps must equal the trajectory length")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.q0 = np.array(inverse_kinematics(
            self.arm, self.target.points[0] - self.base.points[0]))
        self._p = self.arm.as_array()
        self._base = np.ascontiguousarray(self.base.points)
        self._acc = np.ascontiguousarray(self.base.accelerations())
        self._target = np.ascontiguousarray(self.target.points)
        self._disc = self.discretizer.as_array()
        self._levels = np.array(self.discretizer.action_levels)
        self._servo = self.servo.as_array()

    def d_max(self, config):
        return config.d_max if config.d_max is not None else 0.25 * self.arm.reach

    def new_table(self):
        return QTable.zeros(self.discretizer)

    def rollout(self, values, config, epsilon, learn, seed):
        out = np.zeros((len(self.target), 2))
        dt = self.target.uniform_dt
        rsum, nr, sq, ab, ne, blown = _kernels.episode(
            self._p, self.q0, self._base, self._acc, self._target, values,
            self._disc, self._levels, self.substeps, dt / self.substeps,
            self.d_max(config), config.learning_rate, config.discount,
            epsilon, learn, seed, self._servo, out)
        rmse = math.sqrt(sq / ne) if ne else math.inf
        ade = ab / ne if ne else math.inf
        finite = out[np.all(np.isfinite(out), axis=1)]
        tracked = Trajectory.from_points(finite, dt) if len(finite) >= 2 else None
        return EpisodeReport(
            avg_reward=rsum / nr, rmse=rmse, ade=ade,
            accuracy_pct=100.0 * (1.0 - ade / self.arm.reach),
            tracked_trajectory=tracked, blown_up=bool(blown))


@dataclass(eq=False)
class TabularMDP:
    """Deterministic finite MDP driven by the same learner as the arm.

    ``start = -1`` draws each episode's start state uniformly.
    """

    next_state: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray = None
    start: int = -1
    horizon: int = 20

    def __post_init__(self):
        self.next_state = np.asarray(self.next_state, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if self.terminal is None:
            self.terminal = np.zeros(len(self.next_state), dtype=bool)
        self.terminal = np.asarray(self.terminal, dtype=bool)

    def new_table(self):
        return QTable(np.zeros(self.next_state.shape))

    def rollout(self, values, config, epsilon, learn, seed):
        total = _kernels.mdp_episode(self.next_state, self.rewards, self.terminal,
                                     self.start, self.horizon, values,
                                     config.learning_rate, config.discount,
                                     epsilon, learn, seed)
        return EpisodeReport(avg_reward=total / self.horizon, rmse=0.0, ade=0.0,
                             accuracy_pct=100.0)


def episode_seeds(config):
    rng = np.random.default_rng(config.rng_seed)
    return rng.integers(0, 2**32 - 1, size=config.episodes, dtype=np.uint64)


def run_episode(env, table, config, mode="greedy", epsilon=None, seed=0):
    """Play one episode; ``learn`` mode updates ``table`` in place."""
    if mode not in ("learn", "greedy"):
        raise ValueError("mode must be 'learn' or 'greedy'")
    learn = mode == "learn"
    if epsilon is None:
        epsilon = config.epsilon_start if learn else 0.0
    report = env.rollout(table.values, config, float(epsilon), learn, int(seed))
    assert report.rmse >= report.ade - 1e-12, "power-mean inequality violated"
    return report


def train(env, config):
    """Q-learning over ``config.episodes`` epsilon-greedy episodes.

    Returns the final table and the per-episode average reward curve.
    """
    table = env.new_table()
    curve = []
    for k, seed in enumerate(episode_seeds(config)):
        rep = run_episode(env, table, config, "learn", config.epsilon(k), int(seed))
        curve.append(rep.avg_reward)
    return table, curve


def greedy_actions(table, state_ids):
    return np.array([table.greedy_action(s) for s in state_ids], dtype=int)


class QLearningTracker(BaseEstimator):
    """Estimator wrapper around :func:`train`.

    ``fit`` takes an environment (a :class:`TrackingEnv` or
    :class:`TabularMDP`); ``predict`` maps state ids, or rows of
    ``(q1, q2, step_index)`` for tracking environments, to greedy actions.
    """

    def __init__(self, episodes=15000, learning_rate=0.1, discount=0.9,
                 epsilon_start=1.0, epsilon_end=0.05,
                 epsilon_decay="exponential", d_max=None, random_state=0):
        self.episodes = episodes
        self.learning_rate = learning_rate
        self.discount = discount
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay = epsilon_decay
        self.d_max = d_max
        self.random_state = random_state

    def learn_config(self):
        return LearnConfig(episodes=self.episodes, learning_rate=self.learning_rate,
                           discount=self.discount, epsilon_start=self.epsilon_start,
                           epsilon_end=self.epsilon_end,
                           epsilon_decay=self.epsilon_decay, d_max=self.d_max,
                           rng_seed=self.random_state)

    def fit(self, env, y=None):
        self.env_ = env
        self.table_, self.learning_curve_ = train(env, self.learn_config())
        return self

    def _state_ids(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            return X.astype(int)
        X = check_array(X, ensure_min_features=3)
        disc = self.table_.discretizer
        if disc is None:
            raise ValueError("this table has no discretizer; pass state ids")
        return np.array([
            _kernels.encode(q1, q2, int(k), disc.n_steps, disc.q1_bounds[0],
                            disc.q1_bounds[1], disc.q1_bins, disc.q2_bounds[0],
                            disc.q2_bounds[1], disc.q2_bins, disc.step_index_bins)
            for q1, q2, k in X[:, :3]])

    def predict(self, X):
        check_is_fitted(self, "table_")
        return greedy_actions(self.table_, self._state_ids(X))

    def evaluate(self, env=None):
        """Greedy episode report on ``env`` (the fitted one by default)."""
        check_is_fitted(self, "table_")
        return run_episode(env or self.env_, self.table_, self.learn_config(), "greedy")

    def score(self, env=None, y=None):
        return self.evaluate(env).avg_reward
