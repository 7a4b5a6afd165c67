"""Planar N-link arm world used as ground truth for the agent.

Velocity mode integrates the commanded joint velocities directly. Torque
mode uses a lumped diagonal inertia per joint, gravity acting on point
masses at link midpoints, and viscous damping, integrated semi-implicitly.

Gravity points along ``gravity_dir`` in the task plane. The default is the
+x axis of the kinematic frame, so ``q = 0`` is the hanging rest pose and a
single link at ``q = pi/2`` is horizontal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import ActionMode, Observation
from .errors import SimulationError
from .genmodel import AnalyticFK

EARTH_GRAVITY = 9.81
JUPITER_GRAVITY = 24.79


@dataclass(frozen=True)
class PerturbationSpec:
    """Step perturbations: a visual marker shift and sensor dropouts."""

    visual_shift: tuple = (0.0, 0.0)
    shift_step: int = 0
    # channel name -> step at which it stops reporting
    broken_channels: Mapping[str, int] = field(default_factory=dict)
    enabled: bool = False

    def __post_init__(self):
        if self.shift_step < 0 or any(t < 0 for t in self.broken_channels.values()):
            raise ValueError("perturbation activation steps must be >= 0")
        for name in self.broken_channels:
            if name not in ("proprio_vel", "visual"):
                raise ValueError(f"channel {name!r} cannot be broken")

    def shift_active(self, step: int) -> bool:
        return self.enabled and step >= self.shift_step and any(self.visual_shift)

    def broken(self, step: int) -> tuple:
        if not self.enabled:
            return ()
        return tuple(c for c, t in self.broken_channels.items() if step >= t)

    def active(self, step: int) -> bool:
        return self.shift_active(step) or bool(self.broken(step))


@dataclass(frozen=True)
class NoiseSpec:
    proprio_pos: float = 0.0
    proprio_vel: float = 0.0
    visual: float = 0.0


@dataclass(frozen=True, eq=False)
class ArmWorld:
    q: np.ndarray
    qdot: np.ndarray
    link_lengths: np.ndarray
    link_masses: np.ndarray
    gravity: float = 0.0
    damping: float = 0.0
    mode: ActionMode = ActionMode.VELOCITY
    noise: NoiseSpec = NoiseSpec()
    perturbation: PerturbationSpec = PerturbationSpec()
    rng_seed: int = 0
    velocity_limit: float = 2.0
    gravity_dir: tuple = (1.0, 0.0)
    sense_velocity: bool = True
    step_index: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        qdot = np.array(self.qdot, dtype=float)
        links = np.array(self.link_lengths, dtype=float)
        masses = np.array(self.link_masses, dtype=float)
        if not (q.shape == qdot.shape == links.shape == masses.shape) or q.ndim != 1:
            raise ValueError("q, qdot, link_lengths and link_masses must be equal-length vectors")
        if np.any(links <= 0) or np.any(masses <= 0):
            raise ValueError("link lengths and masses must be > 0")
        if self.gravity < 0 or self.damping < 0:
            raise ValueError("gravity and damping must be >= 0")
        gdir = np.asarray(self.gravity_dir, dtype=float)
        if gdir.shape != (2,) or not np.isclose(np.linalg.norm(gdir), 1.0):
            raise ValueError("gravity_dir must be a 2-D unit vector")
        for name, arr in (("q", q), ("qdot", qdot), ("link_lengths", links), ("link_masses", masses)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "mode", ActionMode(self.mode))
        if self.rng is None:
            object.__setattr__(self, "rng", np.random.default_rng(self.rng_seed))
        object.__setattr__(self, "_fk", AnalyticFK(links))

    @property
    def n_joints(self) -> int:
        return self.q.size

    @property
    def fk(self) -> AnalyticFK:
        return self._fk

    def end_effector(self) -> np.ndarray:
        return self.fk.predict(self.q)

    def inertia(self) -> np.ndarray:
        reach = np.cumsum(self.link_lengths)
        per_link = self.link_masses * reach**2
        return np.cumsum(per_link[::-1])[::-1]

    def gravity_torque(self, q=None) -> np.ndarray:
        """Torque gravity exerts on each joint."""
        q = self.q if q is None else np.asarray(q, dtype=float)
        theta = np.cumsum(q)
        gdir = np.asarray(self.gravity_dir, dtype=float)
        perp = np.column_stack([-np.sin(theta), np.cos(theta)])
        L = self.link_lengths
        weight = self.link_masses * self.gravity
        torque = np.zeros(self.n_joints)
        for i in range(self.n_joints):
            for j in range(i, self.n_joints):
                # d(midpoint of link j)/dq_i
                d = L[i:j] @ perp[i:j] + 0.5 * L[j] * perp[j]
                torque[i] += weight[j] * float(d @ gdir)
        return torque

    def kinetic_energy(self) -> float:
        return 0.5 * float(self.inertia() @ self.qdot**2)


def world_step(w: ArmWorld, a, dt: float) -> ArmWorld:
    a = np.asarray(a, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if a.shape != w.q.shape or not np.all(np.isfinite(a)):
        raise ValueError("action must be a finite vector of length n_joints")
    if w.mode is ActionMode.VELOCITY:
        qdot = np.clip(a, -w.velocity_limit, w.velocity_limit)
    else:
        I = w.inertia()
        qddot_free = (a + w.gravity_torque()) / I
        # damping handled implicitly so it can only remove energy
        qdot = (w.qdot + dt * qddot_free) / (1.0 + dt * w.damping / I)
    q = w.q + dt * qdot
    if not (np.isfinite(q).all() and np.isfinite(qdot).all()):
        raise SimulationError("arm simulation blew up", w.step_index)
    return _advance(w, q, qdot)


def _advance(w: ArmWorld, q, qdot) -> ArmWorld:
    # fields other than the state are already validated; skip __post_init__
    q.setflags(write=False)
    qdot.setflags(write=False)
    nxt = object.__new__(ArmWorld)
    nxt.__dict__.update(w.__dict__, q=q, qdot=qdot, step_index=w.step_index + 1)
    return nxt


def angular_acceleration(w: ArmWorld, a) -> np.ndarray:
    """Undamped torque-mode acceleration at the current state."""
    return (np.asarray(a, dtype=float) + w.gravity_torque()) / w.inertia()


def observe(w: ArmWorld, timestamp: Optional[float] = None) -> Observation:
    """Noisy sensory snapshot. Draws from the world's generator in a fixed order."""
    n = w.n_joints
    rng = w.rng
    step = w.step_index
    pos = w.q + w.noise.proprio_pos * rng.standard_normal(n)
    vel = w.qdot + w.noise.proprio_vel * rng.standard_normal(n)
    vis = w.end_effector() + w.noise.visual * rng.standard_normal(2)
    if w.perturbation.shift_active(step):
        vis = vis + np.asarray(w.perturbation.visual_shift, dtype=float)
    broken = w.perturbation.broken(step)
    return Observation(
        proprio_pos=pos,
        proprio_vel=vel if w.sense_velocity and "proprio_vel" not in broken else None,
        visual=None if "visual" in broken else vis,
        timestamp=float(step) if timestamp is None else timestamp,
    )
