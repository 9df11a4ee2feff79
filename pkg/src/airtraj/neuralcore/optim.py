"""Adam optimizer with bias correction and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, global_norm

DEFAULT_LR = 0.005
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8
DEFAULT_CLIP = 5.0


@dataclass
class AdamState:
    """First/second moment accumulators, one slot per parameter tensor."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.values) for p in params],
            v=[np.zeros_like(p.values) for p in params],
        )


def clip_global_norm(params: list[Tensor], max_norm: float = DEFAULT_CLIP) -> float:
    """Scale all gradients in place so their joint norm is <= max_norm.

    Returns the pre-clip global norm.
    """
    grads = [p.grad for p in params if p.grad is not None]
    norm = global_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def adam_step(
    params: list[Tensor],
    state: AdamState,
    lr: float = DEFAULT_LR,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    eps: float = DEFAULT_EPS,
) -> None:
    """One Adam update over an ordered parameter list, in place.

    The same list order must be used on every call against a given state;
    missing gradients count as zero.
    """
    if len(state.m) != len(params):
        raise ValueError(f"optimizer state has {len(state.m)} slots for {len(params)} params")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, m, v in zip(params, state.m, state.v):
        if m.shape != p.values.shape:
            raise ValueError(f"state shape {m.shape} does not match param shape {p.values.shape}")
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
