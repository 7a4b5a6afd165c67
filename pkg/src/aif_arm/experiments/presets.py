"""Built-in scenario presets, one per experiment family.

These are the tuned defaults the acceptance suite runs. They can be dumped
to YAML with ``aif-arm preset NAME`` and edited.
"""

from __future__ import annotations

import copy

from .config import SCENARIOS, scenario_from_dict

_AGENT = {
    "k_z": 5.0,
    "k_a": 30.0,
    "dt": 0.01,
    "max_order": 1,
    "sigma": {"proprio_pos": 1.0, "proprio_vel": 1.0, "visual": 0.25, "dynamics": [1.0, 1.0]},
}

_NOISE = {"proprio_pos": 0.05, "proprio_vel": 0.05, "visual": 0.01}

PRESETS = {
    "estimation-noise": {
        "name": "estimation-noise",
        "trials": 50,
        "duration": 500,
        "prior_level": 1,
        "world": {"noise": _NOISE},
        "agent": _AGENT,
        "goal": {"kind": "none"},
    },
    "reaching": {
        "name": "reaching",
        "trials": 100,
        "duration": 1500,
        "world": {"noise": _NOISE},
        "agent": _AGENT,
        "goal": {"kind": "random", "target": "visual"},
    },
    "visual-shift-adaptation": {
        "name": "visual-shift-adaptation",
        "trials": 50,
        "duration": 400,
        "world": {
            "noise": _NOISE,
            "perturbation": {"enabled": True, "visual_shift": [0.1, 0.0], "shift_step": 200},
        },
        "agent": _AGENT,
        "goal": {"kind": "random", "target": "visual", "start_offset": 0.0},
    },
    "jupiter": {
        "name": "jupiter",
        "trials": 20,
        "duration": 1000,
        "world": {
            "mode": "torque",
            "gravity": 9.81,
            "damping": 5.0,
            "link_masses": [0.5, 0.5],
            "noise": _NOISE,
        },
        "agent": dict(_AGENT, action_limit=50.0, torque_gain=3.0),
        "goal": {"kind": "random", "target": "joints", "start_offset": 0.5},
    },
    "broken-sensor": {
        "name": "broken-sensor",
        "trials": 20,
        "duration": 600,
        "world": {
            "noise": _NOISE,
            "perturbation": {"enabled": True, "broken_channels": {"visual": 300}},
        },
        "agent": _AGENT,
        "goal": {"kind": "random", "target": "visual", "start_offset": 0.0},
    },
    "self-recognition": {
        "name": "self-recognition",
        "trials": 50,
        "duration": 250,
        "world": {"noise": _NOISE},
        # covariances matched to the sensor noise so foreign motion is costly
        "agent": dict(
            _AGENT,
            k_a=0.0,
            k_z=0.05,
            sigma={"proprio_pos": 0.01, "proprio_vel": 0.01, "visual": 0.0025, "dynamics": [0.01, 0.01]},
        ),
        "self_recognition": {"calibration_trials": 20, "window": 200},
    },
}


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"no preset {name!r}; choose from {', '.join(SCENARIOS)}")
    return copy.deepcopy(PRESETS[name])


def preset(name: str, **overrides):
    d = preset_dict(name)
    d.update(overrides)
    return scenario_from_dict(d)
