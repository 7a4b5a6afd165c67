"""Seeded trial execution: couples the agent with the simulated arm."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..agent import AgentState, Models, agent_tick
from ..core import ActionMode, AgentConfig, GeneralizedLatent, Goal, PrecisionSet
from ..genmodel import AnalyticFK, AttractorDynamics, GprModel, LinearDynamics, gpr_fit, sample_fk_dataset
from ..selfhood import EvidenceWindow, calibrate_threshold, classify_self, evidence_update
from ..simulator import JUPITER_GRAVITY, ArmWorld, NoiseSpec, PerturbationSpec, observe, world_step
from .config import Scenario

log = logging.getLogger(__name__)

# per-joint prior offset bound for each difficulty level
PRIOR_LEVEL_OFFSET = {0: 0.0, 1: 0.2, 2: 0.8}


@dataclass
class TrialRecord:
    """Per-step log of one trial plus its summary numbers."""

    index: int
    n_joints: int
    variant: str = ""
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    evidence: Optional[EvidenceWindow] = None

    def columns(self) -> list:
        n = self.n_joints
        return (
            ["step", "t"]
            + [f"z0_est_{i}" for i in range(n)]
            + [f"q_true_{i}" for i in range(n)]
            + [f"action_{i}" for i in range(n)]
            + ["vfe", "e_proprio", "e_visual", "perturb_active"]
        )

    def array(self, name: str) -> np.ndarray:
        """A per-step column (or per-joint block, for z0_est/q_true/action)."""
        cols = self.columns()
        n = self.n_joints
        if name in ("z0_est", "q_true", "action"):
            start = cols.index(f"{name}_0")
            return np.array([r[start : start + n] for r in self.rows], dtype=float)
        i = cols.index(name)
        return np.array([np.nan if r[i] is None else r[i] for r in self.rows], dtype=float)


@dataclass
class TrialSetup:
    world: ArmWorld
    models: Models
    precisions: PrecisionSet
    config: AgentConfig
    state: AgentState
    goal: Optional[Goal]
    fk: AnalyticFK


def trial_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, stream]))


def _world_seed(seed: int, index: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, index, 1000 + salt]).generate_state(1)[0])


_GPR_CACHE: dict = {}


def sensory_model_for(scn: Scenario, fk: AnalyticFK):
    if scn.agent.visual_model == "analytic":
        return fk
    g = scn.agent.gpr
    if g.model_file:
        return GprModel.load(g.model_file)
    key = (tuple(fk.link_lengths), g.samples, g.length_scale, g.signal_variance, g.noise_variance, scn.seed, tuple(scn.world.pose_range))
    if key not in _GPR_CACHE:
        lo, hi = scn.world.pose_range
        X, Y = sample_fk_dataset(fk, g.samples, lo - 0.5, hi + 0.5, seed=scn.seed)
        _GPR_CACHE[key] = gpr_fit(X, Y, g.length_scale, g.signal_variance, g.noise_variance)
    return _GPR_CACHE[key]


def random_pose(rng, scn: Scenario, n: int) -> np.ndarray:
    lo, hi = scn.world.pose_range
    return rng.uniform(lo, hi, n)


def reachable_pose(rng, scn: Scenario, fk: AnalyticFK) -> np.ndarray:
    """Random pose whose end-effector stays away from the workspace boundary and base."""
    reach = float(fk.link_lengths.sum())
    for _ in range(1000):
        q = random_pose(rng, scn, fk.n_joints)
        r = np.linalg.norm(fk.predict(q) - fk.base)
        if 0.3 * reach <= r <= 0.9 * reach:
            return q
    raise RuntimeError("could not sample a reachable pose")


def prior_belief(rng, scn: Scenario, q_true: np.ndarray) -> np.ndarray:
    if scn.prior_level == 3:
        lo, hi = -np.pi, np.pi
        return rng.uniform(lo, hi, q_true.size)
    bound = PRIOR_LEVEL_OFFSET[scn.prior_level]
    return q_true + rng.uniform(-bound, bound, q_true.size)


def agent_config(scn: Scenario, n: int, k_a: Optional[float] = None) -> AgentConfig:
    a = scn.agent
    return AgentConfig(
        k_z=a.k_z,
        k_a=a.k_a if k_a is None else k_a,
        dt=a.dt,
        n_joints=n,
        max_order=a.max_order,
        action_mode=ActionMode(scn.world.mode),
        visual_action_channel=a.visual_action_channel,
        action_limit=a.action_limit,
        torque_gain=a.torque_gain,
    )


def precision_set(scn: Scenario, n: int) -> PrecisionSet:
    s = scn.agent.sigma
    return PrecisionSet.diagonal(
        n,
        scn.agent.max_order,
        proprio_pos=s.proprio_pos,
        proprio_vel=s.proprio_vel,
        visual=s.visual,
        dynamics=s.dynamics,
    )


def make_world(scn: Scenario, q0, seed: int, gravity: Optional[float] = None) -> ArmWorld:
    w = scn.world
    p = w.perturbation
    return ArmWorld(
        q=q0,
        qdot=np.zeros(len(q0)),
        link_lengths=w.link_lengths,
        link_masses=w.link_masses,
        gravity=w.gravity if gravity is None else gravity,
        gravity_dir=tuple(w.gravity_dir),
        damping=w.damping,
        mode=ActionMode(w.mode),
        noise=NoiseSpec(w.noise.proprio_pos, w.noise.proprio_vel, w.noise.visual),
        perturbation=PerturbationSpec(
            visual_shift=tuple(p.visual_shift),
            shift_step=p.shift_step,
            broken_channels=dict(p.broken_channels),
            enabled=p.enabled,
        ),
        rng_seed=seed,
        velocity_limit=w.velocity_limit,
        sense_velocity=w.sense_velocity and scn.agent.max_order >= 1,
    )


def make_goal(rng, scn: Scenario, fk: AnalyticFK, q_start: np.ndarray) -> tuple:
    """Goal and the joint configuration that realises it (None if unknown)."""
    g = scn.goal
    if g.kind == "none":
        return None, None
    if g.kind == "fixed":
        q_goal = None if g.desired_joints is None else np.asarray(g.desired_joints, dtype=float)
        vis = g.desired_visual
        if vis is None and q_goal is not None and g.target in ("visual", "both"):
            vis = fk.predict(q_goal)
    else:
        q_goal = q_start.copy() if g.kind == "current" else reachable_pose(rng, scn, fk)
        vis = fk.predict(q_goal)
    goal = Goal(
        desired_visual=vis if g.target in ("visual", "both") else None,
        desired_joints=q_goal if g.target in ("joints", "both") else None,
    )
    return goal, q_goal


def dynamics_model(scn: Scenario, goal: Optional[Goal], sensory, n: int):
    if goal is None:
        return LinearDynamics()
    if scn.name == "jupiter" or (goal.desired_visual is None and scn.goal.target == "joints"):
        target = GeneralizedLatent.from_position(goal.desired_joints, scn.agent.max_order)
        gain = np.zeros(n) + scn.agent.dynamics_gain
        return LinearDynamics(gain=gain, target=GeneralizedLatent(target.orders[:1]))
    return AttractorDynamics(sensory, goal, gain=scn.agent.attractor_gain)


def setup_trial(scn: Scenario, index: int, gravity: Optional[float] = None) -> TrialSetup:
    rng = trial_rng(scn.seed, index)
    fk = AnalyticFK(scn.world.link_lengths)
    n = fk.n_joints
    goal_rng = trial_rng(scn.seed, index, 1)

    if scn.goal.kind in ("none", "current"):
        q0 = reachable_pose(rng, scn, fk)
        goal, q_goal = make_goal(goal_rng, scn, fk, q0)
    else:
        goal, q_goal = make_goal(goal_rng, scn, fk, None)
        off = scn.goal.start_offset
        if off is None or q_goal is None:
            q0 = reachable_pose(rng, scn, fk)
        else:
            q0 = q_goal + rng.uniform(-off, off, n)

    prior = prior_belief(rng, scn, q0)
    k_a = 0.0 if scn.name == "estimation-noise" else None
    cfg = agent_config(scn, n, k_a)
    sensory = sensory_model_for(scn, fk) if scn.agent.use_visual else None
    models = Models(sensory=sensory, dynamics=dynamics_model(scn, goal, sensory, n))
    P = precision_set(scn, n)
    z = GeneralizedLatent.from_position(prior, cfg.max_order)
    world = make_world(scn, q0, _world_seed(scn.seed, index), gravity)
    return TrialSetup(world, models, P, cfg, AgentState.initial(z), goal, fk)


def _ee_error(fk, goal, q, z0):
    if goal is None:
        return float(np.linalg.norm(fk.predict(z0) - fk.predict(q)))
    if goal.desired_visual is not None:
        return float(np.linalg.norm(fk.predict(q) - goal.desired_visual))
    return float(np.linalg.norm(fk.predict(q) - fk.predict(goal.desired_joints)))


def simulate(setup: TrialSetup, scn: Scenario, index: int, variant: str = "", observe_fn=None, on_tick=None) -> TrialRecord:
    """Run the coupled loop for ``scn.duration`` steps.

    ``observe_fn(world) -> Observation`` replaces the world's own sensing
    (used by the self-recognition protocol); ``on_tick(state)`` sees every
    post-tick agent state.
    """
    world, state, cfg = setup.world, setup.state, setup.config
    rec = TrialRecord(index=index, n_joints=world.n_joints, variant=variant)
    observe_fn = observe_fn or observe
    for step in range(scn.duration):
        s = observe_fn(world)
        if not scn.agent.use_visual and s.visual is not None:
            s = s.without("visual")
        state = agent_tick(state, s, setup.models, setup.precisions, cfg)
        world = world_step(world, state.a, cfg.dt)
        if on_tick is not None:
            on_tick(state)
        rep = state.last_report
        e_p = rep.residuals.get("proprio_pos")
        e_v = rep.residuals.get("visual")
        rec.rows.append(
            [step, round(step * cfg.dt, 12)]
            + state.z.orders[0].tolist()
            + world.q.tolist()
            + state.a.tolist()
            + [
                rep.value,
                None if e_p is None else float(np.linalg.norm(e_p)),
                None if e_v is None else float(np.linalg.norm(e_v)),
                int(world.perturbation.active(step)),
            ]
        )
    rec.summary = trial_summary(rec, setup, scn)
    return rec


def trial_summary(rec: TrialRecord, setup: TrialSetup, scn: Scenario) -> dict:
    z0 = rec.array("z0_est")
    q = rec.array("q_true")
    goal = setup.goal
    est = np.linalg.norm(z0 - q, axis=1)
    joint_goal = goal is not None and goal.desired_joints is not None
    if joint_goal:
        track = np.linalg.norm(q - goal.desired_joints, axis=1)
        joint_err = float(track[-1])
    else:
        track = est
        joint_err = float(est[-1])
    ee_err = _ee_error(setup.fk, goal, q[-1], z0[-1])
    if goal is None:
        converged = joint_err < scn.joint_tol
    elif goal.desired_visual is not None:
        converged = ee_err < scn.ee_tol
    else:
        converged = joint_err < scn.joint_tol
    return {
        "final_joint_err_rad": joint_err,
        "final_est_err_rad": float(est[-1]),
        "final_ee_err_m": ee_err,
        "mean_tracking_err_rad": float(track.mean()),
        "vfe_initial": float(rec.rows[0][rec.columns().index("vfe")]),
        "vfe_final": float(rec.rows[-1][rec.columns().index("vfe")]),
        "converged": bool(converged),
    }


def run_trial(scn: Scenario, index: int) -> list:
    """All records produced by one trial index (two for jupiter)."""
    if scn.name == "jupiter":
        out = []
        for g in (scn.world.gravity, JUPITER_GRAVITY):
            setup = setup_trial(scn, index, gravity=g)
            out.append(simulate(setup, scn, index, variant=f"g={g:g}"))
        return out
    if scn.name == "self-recognition":
        return [run_self_trial(scn, index, label) for label in ("self", "other")]
    return [simulate(setup_trial(scn, index), scn, index)]


def run_scenario(scn: Scenario, jobs: int = 1) -> list:
    """Execute every trial; records are ordered by trial index."""
    scn.validate()
    if scn.name == "self-recognition":
        return run_self_recognition(scn, jobs)
    return _run_indices(scn, range(scn.trials), jobs)


def _run_indices(scn, indices, jobs):
    indices = list(indices)
    if jobs <= 1:
        results = [run_trial(scn, i) for i in indices]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_trial, [scn] * len(indices), indices))
    return [rec for group in results for rec in group]


# self-recognition -----------------------------------------------------------


def _profile(scn: Scenario, phase: np.ndarray, step: int) -> np.ndarray:
    sr = scn.self_recognition
    t = step * scn.agent.dt
    return sr.amplitude * np.sin(2 * np.pi * sr.frequency * t + phase)


def run_self_trial(scn: Scenario, index: int, label: str) -> TrialRecord:
    """Own arm follows a known velocity profile; the visual stream shows either
    that arm or an independent one moving at random.

    The agent does not act (k_a = 0); its dynamics prior is the commanded
    velocity profile, and the windowed mean free energy over the last
    ``window`` steps is stored in the summary.
    """
    sr = scn.self_recognition
    salt = 0 if label == "self" else 1
    rng = trial_rng(scn.seed, index, 10 + salt)
    fk = AnalyticFK(scn.world.link_lengths)
    n = fk.n_joints
    q0 = reachable_pose(rng, scn, fk)
    phase = rng.uniform(0, 2 * np.pi, n)
    scn_v = replace(scn, world=replace(scn.world, mode="velocity"))
    own = make_world(scn_v, q0, _world_seed(scn.seed, index, 10 + salt))
    other = None
    if label == "other":
        other = make_world(scn_v, reachable_pose(rng, scn, fk), _world_seed(scn.seed, index, 20))
        other_rng = trial_rng(scn.seed, index, 30)
        other_vel = np.zeros(n)

    cfg = agent_config(scn_v, n, k_a=0.0)
    sensory = sensory_model_for(scn, fk)
    P = precision_set(scn, n)
    state = AgentState.initial(GeneralizedLatent.from_position(q0, cfg.max_order))
    window = EvidenceWindow(capacity=sr.window)
    rec = TrialRecord(index=index, n_joints=n, variant=label)

    for step in range(scn.duration):
        cmd = _profile(scn, phase, step)
        s = observe(own)
        if other is not None:
            vis = observe(other).visual
            s = type(s)(proprio_pos=s.proprio_pos, proprio_vel=s.proprio_vel, visual=vis, timestamp=s.timestamp)
        # efference copy: the belief expects the commanded velocity
        models = Models(sensory, _EfferenceDynamics(cmd, cfg.max_order))
        state = agent_tick(state, s, models, P, cfg)
        own = world_step(own, cmd, cfg.dt)
        if other is not None:
            rho = sr.other_correlation
            other_vel = rho * other_vel + np.sqrt(1 - rho**2) * other_rng.normal(0.0, sr.other_speed, n)
            other = world_step(other, other_vel, cfg.dt)
        window = evidence_update(window, state.last_report)
        rep = state.last_report
        e_p = rep.residuals.get("proprio_pos")
        e_v = rep.residuals.get("visual")
        rec.rows.append(
            [step, round(step * cfg.dt, 12)]
            + state.z.orders[0].tolist()
            + own.q.tolist()
            + cmd.tolist()
            + [
                rep.value,
                None if e_p is None else float(np.linalg.norm(e_p)),
                None if e_v is None else float(np.linalg.norm(e_v)),
                int(label == "other"),
            ]
        )
    z0 = rec.array("z0_est")
    q = rec.array("q_true")
    est = np.linalg.norm(z0 - q, axis=1)
    rec.summary = {
        "final_joint_err_rad": float(est[-1]),
        "final_est_err_rad": float(est[-1]),
        "final_ee_err_m": float(np.linalg.norm(fk.predict(z0[-1]) - fk.predict(q[-1]))),
        "mean_tracking_err_rad": float(est.mean()),
        "vfe_initial": float(rec.rows[0][rec.columns().index("vfe")]),
        "vfe_final": float(rec.rows[-1][rec.columns().index("vfe")]),
        "window_mean_vfe": window.mean,
        "label": label,
        "converged": True,
    }
    rec.evidence = window
    return rec


@dataclass(frozen=True, eq=False)
class _EfferenceDynamics:
    """Order-0 motion predicted to equal the commanded joint velocity."""

    command: np.ndarray
    max_order: int

    def predict(self, z):
        out = np.zeros_like(z.orders)
        out[0] = self.command
        return out

    def jacobian(self, z):
        k = z.orders.size
        return np.zeros((k, k))


def run_self_recognition(scn: Scenario, jobs: int = 1) -> list:
    """Calibrate a threshold on held-out runs, then classify each trial's streams."""
    n_cal = scn.self_recognition.calibration_trials
    # calibration runs use indices after the evaluation trials
    cal = _run_indices(scn, range(scn.trials, scn.trials + n_cal), jobs)
    threshold = calibrate_threshold(
        [r.summary["window_mean_vfe"] for r in cal if r.variant == "self"],
        [r.summary["window_mean_vfe"] for r in cal if r.variant == "other"],
        rule=scn.self_recognition.calibration,
    )
    records = _run_indices(scn, range(scn.trials), jobs)
    for rec in records:
        verdict = classify_self(replace(rec.evidence, threshold=threshold))
        rec.summary["threshold"] = threshold
        rec.summary["classified_self"] = verdict.is_self
        rec.summary["converged"] = verdict.is_self == (rec.variant == "self")
    return records
