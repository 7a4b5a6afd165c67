"""Generative models.

Sensory models map joint angles to a 2-D end-effector position and expose
``predict(q)`` / ``jacobian(q)``. Dynamics models map a generalized latent to
its predicted generalized motion and expose ``predict(z)`` (shape of
``z.orders``) and ``jacobian(z)`` (square over the flattened orders).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .core import GeneralizedLatent, Goal
from .errors import DimensionError, NonPSDKernelError

GPR_FORMAT_VERSION = 1


def _readonly(x):
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_q(q, n):
    q = np.asarray(q, dtype=float)
    if q.shape != (n,):
        raise DimensionError(f"expected joint vector of length {n}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint vector must be finite")
    return q


@dataclass(frozen=True, eq=False)
class AnalyticFK:
    """Planar serial chain; joint angles accumulate along the chain."""

    link_lengths: np.ndarray
    base: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        links = _readonly(self.link_lengths)
        if links.ndim != 1 or links.size < 1:
            raise DimensionError("link_lengths must be a non-empty vector")
        if not np.all(np.isfinite(links)) or np.any(links <= 0):
            raise ValueError("link lengths must be positive and finite")
        base = _readonly(self.base)
        if base.shape != (2,):
            raise DimensionError("base must be a 2-D point")
        object.__setattr__(self, "link_lengths", links)
        object.__setattr__(self, "base", base)

    @property
    def n_joints(self) -> int:
        return self.link_lengths.size

    def _terms(self, q):
        q = _check_q(q, self.n_joints)
        theta = np.cumsum(q)
        return self.link_lengths * np.cos(theta), self.link_lengths * np.sin(theta)

    def predict(self, q) -> np.ndarray:
        c, s = self._terms(q)
        return self.base + np.array([c.sum(), s.sum()])

    def jacobian(self, q) -> np.ndarray:
        return self.predict_jacobian(q)[1]

    def predict_jacobian(self, q):
        c, s = self._terms(q)
        J = np.empty((2, c.size))
        # joint i moves every link distal to it
        J[0] = -np.cumsum(s[::-1])[::-1]
        J[1] = np.cumsum(c[::-1])[::-1]
        return self.base + np.array([c.sum(), s.sum()]), J

    def link_points(self, q) -> np.ndarray:
        """Base, elbow(s) and end-effector positions, shape (n+1, 2)."""
        q = _check_q(q, self.n_joints)
        theta = np.cumsum(q)
        steps = self.link_lengths[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        return np.vstack([self.base, self.base + np.cumsum(steps, axis=0)])


def fk_predict(model: AnalyticFK, q) -> np.ndarray:
    return model.predict(q)


def fk_jacobian(model: AnalyticFK, q) -> np.ndarray:
    return model.jacobian(q)


def se_kernel(A, B, length_scale, signal_variance):
    """Squared-exponential kernel matrix between the rows of A and B."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    diff = A[:, None, :] - B[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    return signal_variance * np.exp(-0.5 * sq / length_scale**2)


@dataclass(frozen=True, eq=False)
class GprModel:
    """Fitted GP regression from joint angles to 2-D positions.

    Build with :func:`gpr_fit`; ``alpha`` solves ``(K + noise I) alpha = Y``
    and ``chol`` is the lower Cholesky factor of ``K + noise I``.
    """

    X: np.ndarray
    Y: np.ndarray
    length_scale: float
    signal_variance: float
    noise_variance: float
    alpha: np.ndarray
    chol: np.ndarray

    @property
    def n_joints(self) -> int:
        return self.X.shape[1]

    def kernel_matrix(self) -> np.ndarray:
        return _symmetric_kernel(self.X, self.length_scale, self.signal_variance)

    def _kvec(self, q):
        q = _check_q(q, self.n_joints)
        diff = q - self.X
        k = self.signal_variance * np.exp(-0.5 * np.einsum("ij,ij->i", diff, diff) / self.length_scale**2)
        return k, diff

    def predict(self, q) -> np.ndarray:
        k, _ = self._kvec(q)
        return k @ self.alpha

    def predict_with_variance(self, q):
        k, _ = self._kvec(q)
        v = solve_triangular(self.chol, k, lower=True, check_finite=False)
        var = self.signal_variance - float(v @ v)
        return k @ self.alpha, max(var, 0.0)

    def jacobian(self, q) -> np.ndarray:
        return self.predict_jacobian(q)[1]

    def predict_jacobian(self, q):
        k, diff = self._kvec(q)
        dk = -(k[:, None] * diff) / self.length_scale**2  # (m, n)
        return k @ self.alpha, self.alpha.T @ dk

    def to_dict(self) -> dict:
        return {
            "format_version": GPR_FORMAT_VERSION,
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "length_scale": self.length_scale,
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "alpha": self.alpha.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> GprModel:
        version = doc.get("format_version")
        if version != GPR_FORMAT_VERSION:
            raise ValueError(f"unsupported GPR model format version {version!r}")
        model = gpr_fit(doc["X"], doc["Y"], doc["length_scale"], doc["signal_variance"], doc["noise_variance"])
        stored = np.asarray(doc["alpha"], dtype=float)
        if stored.shape != model.alpha.shape or not np.allclose(stored, model.alpha, rtol=1e-6, atol=1e-9):
            raise ValueError("stored alpha does not match the refitted model")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> GprModel:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _symmetric_kernel(X, length_scale, signal_variance):
    K = se_kernel(X, X, length_scale, signal_variance)
    # mirror the upper triangle so K == K.T holds exactly
    iu = np.triu_indices_from(K, k=1)
    K[(iu[1], iu[0])] = K[iu]
    np.fill_diagonal(K, signal_variance)
    return K


def gpr_fit(X, Y, length_scale=0.5, signal_variance=1.0, noise_variance=1e-4) -> GprModel:
    X = np.array(X, dtype=float)
    Y = np.array(Y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError("X must be a non-empty (m, n) matrix")
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise DimensionError("X and Y row counts differ")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("training data must be finite")
    for name, val in (
        ("length_scale", length_scale),
        ("signal_variance", signal_variance),
        ("noise_variance", noise_variance),
    ):
        if not val > 0:
            raise ValueError(f"{name} must be > 0")
    if X.shape[0] > 1:
        diff = X[:, None, :] - X[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        d[np.diag_indices_from(d)] = np.inf
        if d.min() < 1e-9:
            i, j = np.unravel_index(np.argmin(d), d.shape)
            raise ValueError(f"duplicate training inputs at rows {i} and {j}")

    K = _symmetric_kernel(X, length_scale, signal_variance)
    Kn = K + noise_variance * np.eye(X.shape[0])
    try:
        L = np.linalg.cholesky(Kn)
    except np.linalg.LinAlgError as exc:
        raise NonPSDKernelError(
            "kernel matrix is not positive definite; check hyperparameters"
        ) from exc
    alpha = cho_solve((L, True), Y, check_finite=False)
    return GprModel(
        X=_readonly(X),
        Y=_readonly(Y),
        length_scale=float(length_scale),
        signal_variance=float(signal_variance),
        noise_variance=float(noise_variance),
        alpha=_readonly(alpha),
        chol=_readonly(L),
    )


def gpr_predict(model: GprModel, q):
    """Posterior mean (2-D) and scalar variance at ``q``."""
    return model.predict_with_variance(q)


def gpr_jacobian(model: GprModel, q) -> np.ndarray:
    return model.jacobian(q)


def sample_fk_dataset(fk: AnalyticFK, n_samples, low=-np.pi / 2, high=np.pi / 2, seed=0, design="grid"):
    """Joint samples over ``[low, high]^n`` and their FK positions.

    ``design="grid"`` lays out the densest full grid that fits in
    ``n_samples`` and fills the remainder with scrambled Sobol points;
    ``design="sobol"`` uses Sobol points throughout.
    """
    from scipy.stats import qmc

    d = fk.n_joints
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if design not in ("grid", "sobol"):
        raise ValueError(f"unknown design {design!r}")
    n_grid = 0
    if design == "grid":
        k = int(np.floor(n_samples ** (1.0 / d) + 1e-9))
        if k >= 2:
            n_grid = k**d
    sampler = qmc.Sobol(d=d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # balance warning for non power-of-two sizes
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n_samples - n_grid)
    if n_grid:
        axes = np.meshgrid(*[np.linspace(0.0, 1.0, k)] * d, indexing="ij")
        u = np.vstack([np.stack([a.ravel() for a in axes], axis=1), u])
    X = qmc.scale(u, np.broadcast_to(low, d), np.broadcast_to(high, d))
    Y = np.array([fk.predict(x) for x in X])
    return X, Y


SensoryModel = Union[AnalyticFK, GprModel]


def _check_z(z: GeneralizedLatent, n):
    if z.n_joints != n:
        raise DimensionError(f"latent has {z.n_joints} joints, model expects {n}")


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """Linear pull of every stored order towards a target state.

    ``gain`` is a scalar or a per-joint diagonal. Orders the target does not
    cover (or all orders, without a target) predict zero motion.
    """

    gain: Union[float, np.ndarray] = 0.0
    target: Optional[GeneralizedLatent] = None

    def __post_init__(self):
        gain = _readonly(self.gain)
        if gain.ndim > 1 or not np.all(np.isfinite(gain)):
            raise ValueError("gain must be a finite scalar or diagonal vector")
        object.__setattr__(self, "gain", gain)
        if self.target is not None and not isinstance(self.target, GeneralizedLatent):
            object.__setattr__(self, "target", GeneralizedLatent(self.target))

    def _gain_vec(self, n):
        if self.gain.ndim == 0:
            return np.full(n, float(self.gain))
        if self.gain.size != n:
            raise DimensionError("gain diagonal length does not match n_joints")
        return self.gain

    def _covered(self, z):
        if self.target is None:
            return 0
        if self.target.n_joints != z.n_joints:
            raise DimensionError("target and latent joint counts differ")
        return min(self.target.max_order, z.max_order) + 1

    def predict(self, z: GeneralizedLatent) -> np.ndarray:
        out = np.zeros_like(z.orders)
        c = self._covered(z)
        if c:
            out[:c] = self._gain_vec(z.n_joints) * (self.target.orders[:c] - z.orders[:c])
        return out

    def jacobian(self, z: GeneralizedLatent) -> np.ndarray:
        n, K = z.n_joints, z.max_order + 1
        diag = np.zeros((K, n))
        c = self._covered(z)
        diag[:c] = -self._gain_vec(n)
        return np.diag(diag.ravel())


@dataclass(frozen=True, eq=False)
class AttractorDynamics:
    """Goal-directed prior: pulls the belief so predicted sensations approach the goal.

    Only order 0 is driven; the pull is ``gain * (J_g(z0)^T (s_d - g(z0)) + (q_d - z0))``
    with the visual and joint terms included when the goal has them.
    """

    sensory_model: Optional[SensoryModel]
    goal: Goal
    gain: float = 1.0
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.goal.desired_visual is not None and self.sensory_model is None:
            raise ValueError("a visual goal needs a sensory model")
        if self.sensory_model is not None and self.goal.desired_joints is not None:
            if self.goal.desired_joints.size != self.sensory_model.n_joints:
                raise DimensionError("desired_joints length does not match the sensory model")

    def pull(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        if self.goal.desired_visual is not None:
            pred, J = self.sensory_model.predict_jacobian(q)
            out += J.T @ (self.goal.desired_visual - pred)
        if self.goal.desired_joints is not None:
            if self.goal.desired_joints.size != q.size:
                raise DimensionError("desired_joints length does not match latent")
            out += self.goal.desired_joints - q
        return self.gain * out

    def predict(self, z: GeneralizedLatent) -> np.ndarray:
        if self.sensory_model is not None:
            _check_z(z, self.sensory_model.n_joints)
        out = np.zeros_like(z.orders)
        out[0] = self.pull(z.orders[0])
        return out

    def jacobian(self, z: GeneralizedLatent) -> np.ndarray:
        # central differences on order 0 only; higher orders do not enter f
        n, K = z.n_joints, z.max_order + 1
        J = np.zeros((K * n, K * n))
        q = z.orders[0]
        h = self.fd_step
        for i in range(n):
            dq = np.zeros(n)
            dq[i] = h
            J[:n, i] = (self.pull(q + dq) - self.pull(q - dq)) / (2 * h)
        return J


DynamicsModel = Union[LinearDynamics, AttractorDynamics]


def dynamics_predict(model: DynamicsModel, z: GeneralizedLatent) -> np.ndarray:
    return model.predict(z)


def dynamics_jacobian(model: DynamicsModel, z: GeneralizedLatent) -> np.ndarray:
    return model.jacobian(z)
