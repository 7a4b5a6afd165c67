"""Value types shared by the models, the agent loop and the simulator.

All arrays stored on these types are copied and marked read-only at
construction, so instances can be shared freely between agents/threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionError

CHANNELS = ("proprio_pos", "proprio_vel", "visual")
MAX_SUPPORTED_ORDER = 3


def _frozen(x, ndim=None, name="array"):
    arr = np.array(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GeneralizedLatent:
    """Joint state in generalized coordinates.

    ``orders[k]`` is the k-th time derivative of the joint angles, so the
    array has shape ``(max_order + 1, n_joints)``.
    """

    orders: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.orders, ndim=2, name="orders")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"empty generalized state {arr.shape}")
        object.__setattr__(self, "orders", arr)

    @classmethod
    def zeros(cls, n_joints: int, max_order: int = 1) -> GeneralizedLatent:
        return cls(np.zeros((max_order + 1, n_joints)))

    @classmethod
    def from_position(cls, q, max_order: int = 1) -> GeneralizedLatent:
        q = np.asarray(q, dtype=float)
        orders = np.zeros((max_order + 1, q.size))
        orders[0] = q
        return cls(orders)

    @property
    def max_order(self) -> int:
        return self.orders.shape[0] - 1

    @property
    def n_joints(self) -> int:
        return self.orders.shape[1]

    @property
    def position(self) -> np.ndarray:
        return self.orders[0]

    def flat(self) -> np.ndarray:
        return self.orders.ravel()

    def __eq__(self, other):
        if not isinstance(other, GeneralizedLatent):
            return NotImplemented
        return self.orders.shape == other.orders.shape and bool(
            np.array_equal(self.orders, other.orders)
        )

    def __repr__(self):
        return f"GeneralizedLatent(orders={self.orders.tolist()})"


def shift_orders(z: GeneralizedLatent) -> GeneralizedLatent:
    """Apply the generalized-motion shift operator D.

    Order k of the result is order k+1 of ``z``; the top order, which would
    need an unstored derivative, is truncated to zero.
    """
    out = np.zeros_like(z.orders)
    out[:-1] = z.orders[1:]
    return GeneralizedLatent(out)


@dataclass(frozen=True, eq=False)
class Observation:
    """One sensory snapshot. Absent channels are ``None``."""

    proprio_pos: np.ndarray
    proprio_vel: Optional[np.ndarray] = None
    visual: Optional[np.ndarray] = None
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "proprio_pos", _frozen(self.proprio_pos, 1, "proprio_pos"))
        if self.proprio_vel is not None:
            vel = _frozen(self.proprio_vel, 1, "proprio_vel")
            if vel.shape != self.proprio_pos.shape:
                raise DimensionError("proprio_vel and proprio_pos lengths differ")
            object.__setattr__(self, "proprio_vel", vel)
        if self.visual is not None:
            vis = _frozen(self.visual, 1, "visual")
            if vis.shape != (2,):
                raise DimensionError(f"visual must have length 2, got {vis.shape}")
            object.__setattr__(self, "visual", vis)
        if not np.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")

    @property
    def n_joints(self) -> int:
        return self.proprio_pos.size

    def channels(self) -> dict:
        """Present channels in canonical order."""
        return {c: getattr(self, c) for c in CHANNELS if getattr(self, c) is not None}

    def without(self, *names: str) -> Observation:
        """Copy with the named optional channels dropped."""
        kw = {c: getattr(self, c) for c in CHANNELS}
        for name in names:
            if name == "proprio_pos":
                raise ValueError("proprio_pos cannot be dropped")
            if name not in kw:
                raise KeyError(name)
            kw[name] = None
        return Observation(timestamp=self.timestamp, **kw)


def _cov_block(x, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr * np.eye(dim)
    elif arr.ndim == 1:
        arr = np.diag(arr)
    if arr.shape != (dim, dim):
        raise DimensionError(f"{name} covariance must be {dim}x{dim}, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PrecisionSet:
    """Sensory and dynamics covariances with cached inverses.

    ``sigma_x`` maps channel name to its covariance block; ``sigma_z`` holds
    one ``n_joints x n_joints`` block per generalized order.
    """

    sigma_x: Mapping[str, np.ndarray]
    sigma_z: Sequence[np.ndarray]
    _prec_x: dict = field(init=False, repr=False)
    _prec_z: tuple = field(init=False, repr=False)
    _logdet_x: dict = field(init=False, repr=False)
    _logdet_z: float = field(init=False, repr=False)

    def __post_init__(self):
        sx, px, lx = {}, {}, {}
        for name, block in self.sigma_x.items():
            if name not in CHANNELS:
                raise KeyError(f"unknown sensory channel {name!r}")
            sx[name], px[name], lx[name] = _factor(block, name)
        sz, pz, lz = [], [], 0.0
        n = None
        for k, block in enumerate(self.sigma_z):
            s, p, ld = _factor(block, f"sigma_z[{k}]")
            if n is not None and s.shape[0] != n:
                raise DimensionError("sigma_z blocks differ in size")
            n = s.shape[0]
            sz.append(s)
            pz.append(p)
            lz += ld
        if not sz:
            raise DimensionError("sigma_z needs at least one block")
        if "proprio_pos" in sx and sx["proprio_pos"].shape[0] != n:
            raise DimensionError("proprio_pos block does not match n_joints")
        if "proprio_vel" in sx and sx["proprio_vel"].shape[0] != n:
            raise DimensionError("proprio_vel block does not match n_joints")
        if "visual" in sx and sx["visual"].shape[0] != 2:
            raise DimensionError("visual block must be 2x2")
        object.__setattr__(self, "sigma_x", sx)
        object.__setattr__(self, "sigma_z", tuple(sz))
        object.__setattr__(self, "_prec_x", px)
        object.__setattr__(self, "_prec_z", tuple(pz))
        object.__setattr__(self, "_logdet_x", lx)
        object.__setattr__(self, "_logdet_z", lz)

    @classmethod
    def diagonal(
        cls,
        n_joints: int,
        max_order: int = 1,
        proprio_pos=1.0,
        proprio_vel=1.0,
        visual=1.0,
        dynamics=1.0,
    ) -> PrecisionSet:
        """Isotropic/diagonal variances per channel and per order.

        Pass ``None`` for a channel to leave it out. ``dynamics`` may be a
        scalar or one variance per order.
        """
        sx = {}
        for name, var, dim in (
            ("proprio_pos", proprio_pos, n_joints),
            ("proprio_vel", proprio_vel, n_joints),
            ("visual", visual, 2),
        ):
            if var is not None:
                sx[name] = _cov_block(var, dim, name)
        dyn = np.broadcast_to(np.asarray(dynamics, dtype=float), (max_order + 1,))
        sz = [float(v) * np.eye(n_joints) for v in dyn]
        return cls(sx, sz)

    @property
    def n_joints(self) -> int:
        return self.sigma_z[0].shape[0]

    @property
    def max_order(self) -> int:
        return len(self.sigma_z) - 1

    def precision_x(self, channel: str) -> np.ndarray:
        return self._prec_x[channel]

    def precision_z(self, order: int) -> np.ndarray:
        return self._prec_z[order]

    def logdet_x(self, channel: str) -> float:
        return self._logdet_x[channel]

    @property
    def logdet_z(self) -> float:
        return self._logdet_z

    def scaled(self, c_x: float = 1.0, c_z: float = 1.0) -> PrecisionSet:
        return PrecisionSet(
            {k: c_x * v for k, v in self.sigma_x.items()}, [c_z * v for v in self.sigma_z]
        )


def _factor(block, name):
    cov = np.array(block, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"{name} must be square, got {cov.shape}")
    if not np.all(np.isfinite(cov)) or not np.array_equal(cov, cov.T):
        raise ValueError(f"{name} must be finite and symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    eye = np.eye(cov.shape[0])
    chol_inv = np.linalg.solve(chol, eye)
    prec = chol_inv.T @ chol_inv
    prec = 0.5 * (prec + prec.T)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    cov.setflags(write=False)
    prec.setflags(write=False)
    return cov, prec, logdet


class ActionMode(str, enum.Enum):
    VELOCITY = "velocity"
    TORQUE = "torque"


@dataclass(frozen=True)
class AgentConfig:
    """Gains and integration settings for the perception/action loop."""

    k_z: float = 1.0
    k_a: float = 1.0
    dt: float = 0.01
    n_joints: int = 2
    max_order: int = 1
    action_mode: ActionMode = ActionMode.VELOCITY
    visual_action_channel: bool = True
    # Symmetric clamp on the action; None picks 2 rad/s or 10 N m by mode.
    action_limit: Optional[float] = None
    # Effective inverse inertia multiplying ds/da in torque mode.
    torque_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "action_mode", ActionMode(self.action_mode))
        if not self.k_z > 0:
            raise ValueError("k_z must be > 0")
        # k_a == 0 is the perception-only configuration.
        if not self.k_a >= 0:
            raise ValueError("k_a must be >= 0")
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1]")
        if self.n_joints < 1:
            raise ValueError("n_joints must be >= 1")
        if not 0 <= self.max_order <= MAX_SUPPORTED_ORDER:
            raise ValueError(f"max_order must be in [0, {MAX_SUPPORTED_ORDER}]")
        if self.action_limit is not None and not self.action_limit > 0:
            raise ValueError("action_limit must be > 0")
        if not self.torque_gain > 0:
            raise ValueError("torque_gain must be > 0")

    @property
    def limit(self) -> float:
        if self.action_limit is not None:
            return self.action_limit
        return 2.0 if self.action_mode is ActionMode.VELOCITY else 10.0


@dataclass(frozen=True, eq=False)
class Goal:
    """Desired sensory outcome: an end-effector position, joint angles, or both."""

    desired_visual: Optional[np.ndarray] = None
    desired_joints: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.desired_visual is None and self.desired_joints is None:
            raise ValueError("goal needs desired_visual and/or desired_joints")
        if self.desired_visual is not None:
            vis = _frozen(self.desired_visual, 1, "desired_visual")
            if vis.shape != (2,):
                raise DimensionError("desired_visual must have length 2")
            object.__setattr__(self, "desired_visual", vis)
        if self.desired_joints is not None:
            object.__setattr__(
                self, "desired_joints", _frozen(self.desired_joints, 1, "desired_joints")
            )
