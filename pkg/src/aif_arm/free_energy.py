"""Laplace-approximated variational free energy and its gradients.

Channel wiring: ``proprio_pos`` predicts order 0 of the latent directly,
``proprio_vel`` predicts order 1, and ``visual`` predicts ``g(z0)``.
Channels missing from the observation are dropped, together with their
log-determinant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GeneralizedLatent, Observation, PrecisionSet, shift_orders
from .errors import DimensionError


@dataclass(frozen=True, eq=False)
class FreeEnergyReport:
    value: float
    sensory_term: float
    dynamics_term: float
    logdet_term: float
    grad_latent: np.ndarray  # same shape as z.orders
    grad_obs: dict  # channel -> dF/ds
    residuals: dict  # channel -> s - g(z)
    dynamics_residual: np.ndarray  # Dz - f(z)
    visual_jacobian: Optional[np.ndarray] = None  # dg/dz0 when visual was observed


def _check(z: GeneralizedLatent, s: Observation, P: PrecisionSet):
    if s.n_joints != z.n_joints:
        raise DimensionError(f"observation has {s.n_joints} joints, latent has {z.n_joints}")
    if P.n_joints != z.n_joints or P.max_order != z.max_order:
        raise DimensionError("precision set does not match the latent layout")
    if s.proprio_vel is not None and z.max_order < 1:
        raise DimensionError("velocity sensing needs max_order >= 1")
    for name in s.channels():
        if name not in P.sigma_x:
            raise DimensionError(f"no covariance block for channel {name!r}")


def vfe(z: GeneralizedLatent, s: Observation, g, f, P: PrecisionSet) -> FreeEnergyReport:
    """Evaluate F(z, s) and both gradients.

    ``g`` is the visual sensory model (may be None when no visual channel is
    observed); ``f`` is the dynamics model.
    """
    _check(z, s, P)
    q = z.orders[0]
    grad = np.zeros_like(z.orders)
    J_g = None
    residuals, grad_obs = {}, {}
    sensory = logdet = 0.0

    for name, obs in s.channels().items():
        Pi = P.precision_x(name)
        if name == "proprio_pos":
            e = obs - q
        elif name == "proprio_vel":
            e = obs - z.orders[1]
        else:
            if g is None:
                raise DimensionError("visual channel observed but no sensory model given")
            pred, J_g = g.predict_jacobian(q)
            e = obs - pred
        w = Pi @ e
        residuals[name] = e
        grad_obs[name] = w
        sensory += 0.5 * float(e @ w)
        logdet += 0.5 * P.logdet_x(name)
        if name == "proprio_pos":
            grad[0] -= w
        elif name == "proprio_vel":
            grad[1] -= w
        else:
            grad[0] -= J_g.T @ w

    pred = f.predict(z)
    if pred.shape != z.orders.shape:
        raise DimensionError("dynamics prediction shape does not match the latent")
    e_z = shift_orders(z).orders - pred
    w_z = np.stack([P.precision_z(k) @ e_z[k] for k in range(z.max_order + 1)])
    dynamics = 0.5 * float(np.sum(e_z * w_z))
    logdet += 0.5 * P.logdet_z
    # d(Dz)/dz routes order k's residual into order k+1's gradient
    grad[1:] += w_z[:-1]
    grad -= (f.jacobian(z).T @ w_z.ravel()).reshape(grad.shape)

    value = sensory + dynamics + logdet
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise FloatingPointError("non-finite free energy or gradient")
    return FreeEnergyReport(
        value=value,
        sensory_term=sensory,
        dynamics_term=dynamics,
        logdet_term=logdet,
        grad_latent=grad,
        grad_obs=grad_obs,
        residuals=residuals,
        dynamics_residual=e_z,
        visual_jacobian=J_g,
    )


def grad_vfe_latent(z, s, g, f, P, report: Optional[FreeEnergyReport] = None) -> np.ndarray:
    return (report or vfe(z, s, g, f, P)).grad_latent


def grad_vfe_obs(z, s, g, f, P, report: Optional[FreeEnergyReport] = None) -> dict:
    return (report or vfe(z, s, g, f, P)).grad_obs
