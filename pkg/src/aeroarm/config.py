"""Scenario configuration: flat ``section.key = value`` text files.

Every key maps onto a field of one of the parameter dataclasses. Unknown
keys and malformed values are rejected before anything is computed.
"""

import dataclasses
import math
import os
from dataclasses import dataclass, field

from aeroarm.arm import ArmParams
from aeroarm.planner import PlannerConfig
from aeroarm.qlearn import LearnConfig, ServoConfig
from aeroarm.quad import QuadParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TargetConfig:
    """End-effector target: a built-in generator name or a CSV path."""

    source: str = "sine"
    n_samples: int = 40
    dt: float = 0.1
    start: tuple = (0.0, 1.0)
    length: float = 1.95
    amplitude: float = 0.25
    periods: float = 1.5
    arc_radius: float = 1.0
    arc_angle: float = math.pi / 2

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(map(float, self.start)))
        if self.n_samples < 2 or not self.dt > 0:
            raise ValueError("target needs n_samples >= 2 and dt > 0")


@dataclass(frozen=True)
class CorridorConfig:
    grid_resolution: float = 0.05
    # keeps the base near the middle of the arm's workspace
    margin: float = 0.3
    # preferred base position relative to the first target sample
    base_offset: tuple = (-0.25, -0.55)

    def __post_init__(self):
        object.__setattr__(self, "base_offset", tuple(map(float, self.base_offset)))
        if not self.grid_resolution > 0:
            raise ValueError("grid_resolution must be positive")


@dataclass(frozen=True)
class DiscretizationConfig:
    q_bins: int = 25
    step_bins: int = 10  # 0: one bin per trajectory sample
    tau_scale: float = 1.0
    n_levels: int = 5
    bin_scale: float = 1.0
    substeps: int = 50

    def __post_init__(self):
        if self.q_bins < 2 or self.n_levels < 3 or self.n_levels % 2 == 0:
            raise ValueError("need q_bins >= 2 and an odd n_levels >= 3")
        if not 0 < self.tau_scale <= 1:
            raise ValueError("tau_scale must lie in (0, 1]")
        if self.step_bins < 0 or self.substeps < 1 or not self.bin_scale > 0:
            raise ValueError("invalid step_bins, substeps or bin_scale")


@dataclass(frozen=True)
class DisturbConfig:
    delay_steps: int = 0
    pos_bandwidth: float = 3.0
    att_bandwidth: float = 25.0
    substeps: int = 50

    def __post_init__(self):
        if self.delay_steps < 0 or self.substeps < 1:
            raise ValueError("delay_steps must be >= 0 and substeps >= 1")
        if not (self.pos_bandwidth > 0 and self.att_bandwidth > 0):
            raise ValueError("bandwidths must be positive")


SECTIONS = {
    "arm": ArmParams,
    "quad": QuadParams,
    "target": TargetConfig,
    "corridor": CorridorConfig,
    "planner": PlannerConfig,
    "learn": LearnConfig,
    "disc": DiscretizationConfig,
    "servo": ServoConfig,
    "disturb": DisturbConfig,
}
TOP_LEVEL = {"obstacles_file": str, "output_dir": str, "mass_amplification": float}


@dataclass(frozen=True)
class ScenarioConfig:
    arm: ArmParams = field(default_factory=ArmParams)
    quad: QuadParams = field(default_factory=QuadParams)
    target: TargetConfig = field(default_factory=TargetConfig)
    corridor: CorridorConfig = field(default_factory=CorridorConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    learn: LearnConfig = field(default_factory=LearnConfig)
    disc: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    servo: ServoConfig = field(default_factory=ServoConfig)
    disturb: DisturbConfig = field(default_factory=DisturbConfig)
    obstacles_file: str = ""
    output_dir: str = "out"
    mass_amplification: float = 3.0
    base_dir: str = "."

    def __post_init__(self):
        if not self.mass_amplification >= 1:
            raise ValueError("mass_amplification must be >= 1")

    def resolve(self, path):
        """Path relative to the directory of the config file."""
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def override(self, section, **changes):
        """Copy with fields of one section (or top-level fields) replaced."""
        try:
            if section is None:
                return dataclasses.replace(self, **changes)
            sub = dataclasses.replace(getattr(self, section), **changes)
            return dataclasses.replace(self, **{section: sub})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _parse_value(text, kind, key):
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    try:
        if kind is bool:
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(v) for v in text.strip("()[]").split(","))
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _field_types(cls):
    return {f.name: f.type for f in dataclasses.fields(cls)}


def parse_text(text, base_dir="."):
    """Build a :class:`ScenarioConfig` from config-file text."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        raw[key] = value

    sections = {name: {} for name in SECTIONS}
    top = {}
    for key, value in raw.items():
        if key in TOP_LEVEL:
            top[key] = _parse_value(value, TOP_LEVEL[key], key)
            continue
        section, _, name = key.partition(".")
        types = _field_types(SECTIONS[section]) if section in SECTIONS else {}
        if name not in types:
            raise ConfigError(f"unknown key {key}")
        sections[section][name] = _parse_value(value, types[name], key)

    try:
        built = {name: SECTIONS[name](**vals) for name, vals in sections.items()}
        cfg = ScenarioConfig(**built, **top, base_dir=base_dir)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _check_files(cfg)
    return cfg


def _check_files(cfg):
    from aeroarm.experiments import TARGET_GENERATORS

    if cfg.target.source not in TARGET_GENERATORS:
        if not os.path.isfile(cfg.resolve(cfg.target.source)):
            raise ConfigError(f"target.source: no generator or file named "
                              f"{cfg.target.source!r}")
    if cfg.obstacles_file and not os.path.isfile(cfg.resolve(cfg.obstacles_file)):
        raise ConfigError(f"obstacles_file {cfg.obstacles_file!r} does not exist")


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_text(text, base_dir=os.path.dirname(os.path.abspath(path)))


def serialize(cfg):
    """Canonical text form; ``parse_text(serialize(c))`` reproduces ``c``."""
    lines = []
    for key in TOP_LEVEL:
        lines.append(f"{key} = {_format_value(getattr(cfg, key))}")
    for name in SECTIONS:
        sub = getattr(cfg, name)
        lines.append("")
        for f in dataclasses.fields(sub):
            lines.append(f"{name}.{f.name} = {_format_value(getattr(sub, f.name))}")
    return "\n".join(lines) + "\n"
