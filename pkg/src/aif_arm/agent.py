"""Coupled perception/action integration.

Perception moves the belief along ``Dz - k_z dF/dz``; action moves the motor
command along ``-k_a sum_c (ds_c/da)^T dF/ds_c``. Both use forward Euler at
the agent's ``dt`` and are evaluated from the same pre-tick (z, s) pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import ActionMode, AgentConfig, GeneralizedLatent, Observation, PrecisionSet, shift_orders
from .errors import DivergenceError
from .free_energy import FreeEnergyReport, vfe
from .genmodel import DynamicsModel, LinearDynamics, SensoryModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Models:
    """The agent's generative model: visual map ``g`` and dynamics ``f``."""

    sensory: Optional[SensoryModel] = None
    dynamics: DynamicsModel = LinearDynamics()


@dataclass(frozen=True, eq=False)
class AgentState:
    z: GeneralizedLatent
    a: np.ndarray
    last_report: Optional[FreeEnergyReport] = None
    step_count: int = 0

    @classmethod
    def initial(cls, z: GeneralizedLatent, a=None) -> AgentState:
        a = np.zeros(z.n_joints) if a is None else np.array(a, dtype=float)
        return cls(z=z, a=a)


@dataclass(frozen=True, eq=False)
class SensoryActionJacobian:
    """Per-channel ds/da blocks, each (channel_dim, n_joints)."""

    blocks: dict

    def __getitem__(self, name):
        return self.blocks[name]


def sensory_action_jacobian(
    cfg: AgentConfig, g_model, z: GeneralizedLatent, visual_jacobian=None
) -> SensoryActionJacobian:
    n = cfg.n_joints
    scale = 1.0 if cfg.action_mode is ActionMode.VELOCITY else cfg.torque_gain
    blocks = {"proprio_pos": scale * cfg.dt * np.eye(n), "proprio_vel": scale * np.eye(n)}
    if cfg.visual_action_channel and g_model is not None:
        J = g_model.jacobian(z.orders[0]) if visual_jacobian is None else visual_jacobian
        blocks["visual"] = scale * cfg.dt * J
    else:
        blocks["visual"] = np.zeros((2, n))
    return SensoryActionJacobian(blocks)


def _report(state, s, models, P):
    return vfe(state.z, s, models.sensory, models.dynamics, P)


def perception_step(
    state: AgentState,
    s: Observation,
    models: Models,
    P: PrecisionSet,
    cfg: AgentConfig,
    report: Optional[FreeEnergyReport] = None,
) -> GeneralizedLatent:
    try:
        report = report or _report(state, s, models, P)
    except FloatingPointError as exc:
        raise DivergenceError("perception gradient diverged", state.step_count) from exc
    dz = shift_orders(state.z).orders - cfg.k_z * report.grad_latent
    z_next = state.z.orders + cfg.dt * dz
    if not np.all(np.isfinite(z_next)):
        raise DivergenceError("perception update diverged", state.step_count)
    return GeneralizedLatent(z_next)


def action_step(
    state: AgentState,
    s: Observation,
    models: Models,
    P: PrecisionSet,
    cfg: AgentConfig,
    report: Optional[FreeEnergyReport] = None,
) -> np.ndarray:
    if cfg.k_a == 0:
        return state.a.copy()
    try:
        report = report or _report(state, s, models, P)
    except FloatingPointError as exc:
        raise DivergenceError("action gradient diverged", state.step_count) from exc
    dsda = sensory_action_jacobian(cfg, models.sensory, state.z, report.visual_jacobian)
    da = np.zeros(cfg.n_joints)
    for name, grad in report.grad_obs.items():
        da -= dsda[name].T @ grad
    a_next = state.a + cfg.dt * cfg.k_a * da
    if not np.all(np.isfinite(a_next)):
        raise DivergenceError("action update diverged", state.step_count)
    limit = cfg.limit
    clipped = np.clip(a_next, -limit, limit)
    if not np.array_equal(clipped, a_next):
        log.debug("step %d: action clamped to +/-%g", state.step_count, limit)
    return clipped


def agent_tick(
    state: AgentState, s: Observation, models: Models, P: PrecisionSet, cfg: AgentConfig
) -> AgentState:
    try:
        report = _report(state, s, models, P)
    except FloatingPointError as exc:
        raise DivergenceError("free-energy gradient diverged", state.step_count) from exc
    z_next = perception_step(state, s, models, P, cfg, report)
    a_next = action_step(state, s, models, P, cfg, report)
    return replace(state, z=z_next, a=a_next, last_report=report, step_count=state.step_count + 1)
