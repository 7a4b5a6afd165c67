"""Independent reference computations used by the tests.

Nothing here calls into the package's gradient or precision code paths.
"""

import numpy as np
from scipy.linalg import block_diag


def central_diff(fun, x, h=1e-6):
    """Central finite-difference Jacobian of a vector (or scalar) function."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx.flat[i] = h
        J[:, i] = (np.atleast_1d(fun(x + dx)) - np.atleast_1d(fun(x - dx))) / (2 * h)
    return J


def fk_reference(links, q):
    """Planar chain position written as an explicit loop."""
    x = y = angle = 0.0
    for L, qi in zip(links, q):
        angle += qi
        x += L * np.cos(angle)
        y += L * np.sin(angle)
    return np.array([x, y])


def vfe_reference(z_orders, obs, g_fun, f_fun, sigma_x, sigma_z):
    """Straight-line Laplace free energy from stacked vectors and dense matrices.

    ``obs``/``sigma_x`` are dicts keyed by channel; only channels present in
    ``obs`` are used. ``f_fun`` maps the (K, n) orders to a (K, n) array.
    """
    z = np.asarray(z_orders, dtype=float)
    K, n = z.shape
    s_parts, pred_parts, blocks = [], [], []
    for name in ("proprio_pos", "proprio_vel", "visual"):
        if obs.get(name) is None:
            continue
        s_parts.append(np.asarray(obs[name], dtype=float))
        if name == "proprio_pos":
            pred_parts.append(z[0])
        elif name == "proprio_vel":
            pred_parts.append(z[1])
        else:
            pred_parts.append(g_fun(z[0]))
        blocks.append(np.asarray(sigma_x[name], dtype=float))
    e_s = np.concatenate(s_parts) - np.concatenate(pred_parts)
    Sx = block_diag(*blocks)
    Dz = np.vstack([z[1:], np.zeros((1, n))])
    e_z = (Dz - f_fun(z)).ravel()
    Sz = block_diag(*sigma_z)
    return (
        0.5 * e_s @ np.linalg.inv(Sx) @ e_s
        + 0.5 * e_z @ np.linalg.inv(Sz) @ e_z
        + 0.5 * np.linalg.slogdet(Sx)[1]
        + 0.5 * np.linalg.slogdet(Sz)[1]
    )


def random_spd(rng, dim, low=0.3, high=2.0):
    """Random symmetric positive-definite matrix with eigenvalues in [low, high]."""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    M = Q @ np.diag(rng.uniform(low, high, dim)) @ Q.T
    return 0.5 * (M + M.T)
