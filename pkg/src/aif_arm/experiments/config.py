"""Scenario configuration: dataclasses plus a strict YAML loader."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from ..errors import ScenarioError

SCENARIOS = (
    "estimation-noise",
    "reaching",
    "visual-shift-adaptation",
    "jupiter",
    "broken-sensor",
    "self-recognition",
)


@dataclass
class NoiseConfig:
    proprio_pos: float = 0.05
    proprio_vel: float = 0.05
    visual: float = 0.01


@dataclass
class PerturbationConfig:
    enabled: bool = False
    visual_shift: list = field(default_factory=lambda: [0.0, 0.0])
    shift_step: int = 0
    broken_channels: dict = field(default_factory=dict)


@dataclass
class WorldConfig:
    link_lengths: list = field(default_factory=lambda: [1.0, 1.0])
    link_masses: list = field(default_factory=lambda: [1.0, 1.0])
    gravity: float = 0.0
    gravity_dir: list = field(default_factory=lambda: [1.0, 0.0])
    damping: float = 0.0
    mode: str = "velocity"
    velocity_limit: float = 2.0
    sense_velocity: bool = True
    # per-joint [low, high] range random poses are drawn from
    pose_range: list = field(default_factory=lambda: [-1.5, 1.5])
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)


@dataclass
class SigmaConfig:
    proprio_pos: float = 1.0
    proprio_vel: float = 1.0
    visual: float = 1.0
    dynamics: list = field(default_factory=lambda: [1.0, 1.0])


@dataclass
class GprConfig:
    samples: int = 200
    length_scale: float = 0.5
    signal_variance: float = 1.0
    noise_variance: float = 1e-4
    model_file: Optional[str] = None


@dataclass
class AgentSettings:
    k_z: float = 1.0
    k_a: float = 1.0
    dt: float = 0.01
    max_order: int = 1
    visual_action_channel: bool = True
    action_limit: Optional[float] = None
    torque_gain: float = 1.0
    # analytic | gpr
    visual_model: str = "analytic"
    use_visual: bool = True
    attractor_gain: float = 1.0
    # gain of the linear dynamics towards a joint goal (jupiter)
    dynamics_gain: float = 1.0
    sigma: SigmaConfig = field(default_factory=SigmaConfig)
    gpr: GprConfig = field(default_factory=GprConfig)


@dataclass
class GoalConfig:
    # none | random | fixed | current
    kind: str = "none"
    # visual | joints | both
    target: str = "visual"
    desired_visual: Optional[list] = None
    desired_joints: Optional[list] = None
    # max per-joint offset of the start pose from the goal pose; null draws
    # an independent random start
    start_offset: Optional[float] = None


@dataclass
class SelfRecognitionConfig:
    calibration_trials: int = 20
    window: int = 50
    # amplitude (rad/s) and frequency (Hz) of the known velocity profile
    amplitude: float = 0.8
    frequency: float = 0.5
    # stationary std (rad/s) and per-step correlation of the foreign arm's random velocity
    other_speed: float = 1.5
    other_correlation: float = 0.95
    # threshold rule: margin | mean
    calibration: str = "margin"


@dataclass
class Scenario:
    name: str
    trials: int = 1
    seed: int = 0
    duration: int = 500
    # prior offset level for belief initialisation: 0 exact, 1 small, 2 large, 3 random pose
    prior_level: int = 0
    joint_tol: float = 0.1
    ee_tol: float = 0.05
    world: WorldConfig = field(default_factory=WorldConfig)
    agent: AgentSettings = field(default_factory=AgentSettings)
    goal: GoalConfig = field(default_factory=GoalConfig)
    self_recognition: SelfRecognitionConfig = field(default_factory=SelfRecognitionConfig)

    def validate(self) -> Scenario:
        if self.name not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {self.name!r}; expected one of {SCENARIOS}")
        if self.trials < 1:
            raise ScenarioError("trials must be >= 1")
        if self.duration < 1:
            raise ScenarioError("duration must be >= 1")
        if self.prior_level not in (0, 1, 2, 3):
            raise ScenarioError("prior_level must be 0, 1, 2 or 3")
        n = len(self.world.link_lengths)
        if len(self.world.link_masses) != n:
            raise ScenarioError("link_masses and link_lengths differ in length")
        if self.world.mode not in ("velocity", "torque"):
            raise ScenarioError(f"unknown world mode {self.world.mode!r}")
        if self.agent.visual_model not in ("analytic", "gpr"):
            raise ScenarioError(f"unknown visual_model {self.agent.visual_model!r}")
        if self.goal.kind not in ("none", "random", "fixed", "current"):
            raise ScenarioError(f"unknown goal kind {self.goal.kind!r}")
        if self.goal.target not in ("visual", "joints", "both"):
            raise ScenarioError(f"unknown goal target {self.goal.target!r}")
        if self.goal.kind == "fixed" and self.goal.desired_visual is None and self.goal.desired_joints is None:
            raise ScenarioError("fixed goal needs desired_visual and/or desired_joints")
        if len(self.agent.sigma.dynamics) != self.agent.max_order + 1:
            raise ScenarioError("sigma.dynamics needs one variance per generalized order")
        if len(self.world.pose_range) != 2 or self.world.pose_range[0] >= self.world.pose_range[1]:
            raise ScenarioError("pose_range must be [low, high] with low < high")
        if self.self_recognition.calibration not in ("margin", "mean"):
            raise ScenarioError("self_recognition.calibration must be 'margin' or 'mean'")
        if self.self_recognition.window < 1 or self.self_recognition.calibration_trials < 1:
            raise ScenarioError("self_recognition window and calibration_trials must be >= 1")
        if self.name == "jupiter" and self.world.mode != "torque":
            raise ScenarioError("the jupiter scenario runs in torque mode")
        return self


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ScenarioError(f"{path or 'scenario'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ScenarioError(f"{path or 'scenario'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        sub = f"{path}.{key}" if path else key
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value or {}, sub)
        else:
            kwargs[key] = _coerce(hint, value, sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScenarioError(f"{path or 'scenario'}: {exc}") from exc


def _coerce(hint, value, path):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        hint = args[0]
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is bool and isinstance(value, bool):
        return value
    if hint is str and isinstance(value, str):
        return value
    if hint in (list, dict) and isinstance(value, hint):
        return value
    raise ScenarioError(f"{path}: expected {getattr(hint, '__name__', hint)}, got {value!r}")


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict) or "name" not in data:
        raise ScenarioError("scenario needs a 'name'")
    return _build(Scenario, data, "").validate()


def load_scenario(path) -> Scenario:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_to_dict(s: Scenario) -> dict:
    return dataclasses.asdict(s)
