"""Trivariate Gaussian output head: parameterization, likelihood, sampling.

The distribution over a 3-vector is parameterized by mean ``mu`` (3,),
per-axis standard deviations ``sigma`` (3,), and pairwise correlations
``rho`` = (rho_01, rho_02, rho_12). The covariance is Sigma = D R D with
D = diag(sigma) and R the unit-diagonal correlation matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _node

RHO_MAX = 0.999
PD_SHRINK = 0.9
PD_MAX_SHRINKS = 20
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianParams3:
    """Parameters of one trivariate Gaussian; fields are tape tensors."""

    mu: Tensor  # (3,)
    sigma: Tensor  # (3,) strictly positive
    rho: Tensor  # (3,) = (rho_01, rho_02, rho_12), |rho| < 1

    def correlation(self) -> np.ndarray:
        r01, r02, r12 = self.rho.values
        return np.array([[1.0, r01, r02], [r01, 1.0, r12], [r02, r12, 1.0]])

    def covariance(self) -> np.ndarray:
        d = self.sigma.values
        return self.correlation() * np.outer(d, d)


def _is_pd(R: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(R)
        return True
    except np.linalg.LinAlgError:
        return False


def gaussian3_from_linear(h: Tensor, W_p: Tensor) -> GaussianParams3:
    """Map a hidden vector through a 9-row linear head to Gaussian params.

    Rows 0-2 are the mean, rows 3-5 are log standard deviations (exp link),
    rows 6-8 are correlations (tanh link, clipped to |rho| <= 0.999). If the
    implied correlation matrix is not positive definite, the correlations
    are shrunk by 0.9, at most 20 times; the shrink is a plain scale factor,
    so gradients still flow through the correlation rows.
    """
    if W_p.shape[0] != 9 or W_p.shape[1] != h.shape[0]:
        raise ValueError(f"gaussian head dims do not conform: W_p{W_p.shape} h{h.shape}")
    raw = W_p.values @ h.values
    mu = raw[:3]
    sigma = np.exp(raw[3:6])
    t = np.tanh(raw[6:9])
    rho_c = np.clip(t, -RHO_MAX, RHO_MAX)

    shrink = 1.0
    rho = rho_c
    for _ in range(PD_MAX_SHRINKS):
        R = np.array([[1.0, rho[0], rho[1]], [rho[0], 1.0, rho[2]], [rho[1], rho[2], 1.0]])
        if _is_pd(R):
            break
        shrink *= PD_SHRINK
        rho = rho_c * shrink
    else:
        raise ArithmeticError("correlation repair failed to reach positive definiteness")

    out = np.concatenate([mu, sigma, rho])
    inside = np.abs(t) < RHO_MAX

    def backward(g):
        draw = np.concatenate(
            [
                g[:3],
                g[3:6] * sigma,
                g[6:9] * shrink * inside * (1.0 - t * t),
            ]
        )
        h.accumulate_grad(W_p.values.T @ draw)
        W_p.accumulate_grad(np.outer(draw, h.values))

    packed = _node(out, (h, W_p), backward, "gaussian_head")
    return GaussianParams3(mu=packed[:3], sigma=packed[3:6], rho=packed[6:9])


def gaussian3_nll(params: GaussianParams3, target: np.ndarray) -> Tensor:
    """Negative log density of ``target`` under the Gaussian, as a scalar node.

    Computed through the Cholesky factor of the covariance; the backward
    pass uses the closed forms grad_mu = -Sigma^-1 delta and
    dNLL/dSigma = 0.5 (Sigma^-1 - Sigma^-1 delta delta^T Sigma^-1).
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (3,):
        raise ValueError(f"target must be a 3-vector, got shape {target.shape}")
    mu, sigma, rho = params.mu, params.sigma, params.rho
    Sigma = params.covariance()
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as e:
        raise ArithmeticError("covariance is not positive definite") from e
    delta = target - mu.values
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, delta))  # Sigma^-1 delta
    logdet = 2.0 * np.log(np.diag(L)).sum()
    nll = 0.5 * (3.0 * LOG_2PI + logdet + float(delta @ alpha))

    def backward(g):
        Linv = np.linalg.solve(L, np.eye(3))
        Sigma_inv = Linv.T @ Linv
        G = 0.5 * (Sigma_inv - np.outer(alpha, alpha))  # dNLL/dSigma
        R = params.correlation()
        s = sigma.values
        mu.accumulate_grad(g * (-alpha))
        sigma.accumulate_grad(g * 2.0 * ((G * R) @ s))
        rho.accumulate_grad(
            g * 2.0 * np.array([G[0, 1] * s[0] * s[1], G[0, 2] * s[0] * s[2], G[1, 2] * s[1] * s[2]])
        )

    return _node(np.float64(nll), (mu, sigma, rho), backward, "gaussian_nll")


def gaussian3_sample(params: GaussianParams3, rng: np.random.Generator) -> np.ndarray:
    """Draw one 3-vector; sampling is not part of the differentiable tape."""
    L = np.linalg.cholesky(params.covariance())
    return params.mu.values + L @ rng.standard_normal(3)


def gaussian3_shift_scale(params: GaussianParams3, shift: np.ndarray, scale: np.ndarray) -> GaussianParams3:
    """Affine per-axis change of variables y = x * scale + shift.

    Correlations are invariant under positive per-axis scaling; used to map
    a distribution from normalized coordinates back to physical units.
    """
    scale = np.asarray(scale, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if scale.shape != (3,) or shift.shape != (3,):
        raise ValueError("shift and scale must be 3-vectors")
    if not np.all(scale > 0.0):
        raise ValueError("scale must be strictly positive")
    return GaussianParams3(
        mu=params.mu * scale + shift,
        sigma=params.sigma * scale,
        rho=params.rho,
    )
