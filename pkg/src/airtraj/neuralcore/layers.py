"""Neural building blocks: dense, embedding, LSTM cell, attention, conv2d.

Each layer is a single fused tape node with a hand-derived backward pass,
which keeps the op count low when models unroll over many frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _node

ACTIVATIONS = ("none", "relu", "tanh", "sigmoid")


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def dense_forward(x: Tensor, W: Tensor, b: Tensor | None, activation: str = "none") -> Tensor:
    """y = act(W x + b). ``b`` may be omitted."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if W.values.ndim != 2 or x.values.ndim != 1 or W.shape[1] != x.shape[0]:
        raise ValueError(f"dense dims do not conform: W{W.shape} x{x.shape}")
    pre = W.values @ x.values
    if b is not None:
        if b.shape != (W.shape[0],):
            raise ValueError(f"dense bias shape {b.shape} does not match W{W.shape}")
        pre = pre + b.values

    if activation == "none":
        out = pre
        dact = None
    elif activation == "relu":
        out = np.maximum(pre, 0.0)
        dact = (pre > 0.0).astype(np.float64)
    elif activation == "tanh":
        out = np.tanh(pre)
        dact = 1.0 - out * out
    else:  # sigmoid
        out = 1.0 / (1.0 + np.exp(-pre))
        dact = out * (1.0 - out)

    parents = (x, W) if b is None else (x, W, b)

    def backward(g):
        gp = g if dact is None else g * dact
        x.accumulate_grad(W.values.T @ gp)
        W.accumulate_grad(np.outer(gp, x.values))
        if b is not None:
            b.accumulate_grad(gp)

    return _node(out, parents, backward, "dense")


def embed(x: Tensor, W_e: Tensor) -> Tensor:
    """Fixed-length ReLU embedding of a feature vector."""
    return dense_forward(x, W_e, None, activation="relu")


@dataclass
class LstmState:
    """Hidden and cell vectors of one LSTM cell."""

    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, d_h: int) -> "LstmState":
        return cls(Tensor(np.zeros(d_h)), Tensor(np.zeros(d_h)))


@dataclass
class LstmWeights:
    """Fused gate weights, gate order (input, forget, candidate, output)."""

    W_x: Tensor  # (4*d_h, d_in)
    W_h: Tensor  # (4*d_h, d_h)
    b: Tensor  # (4*d_h,)

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_h: int, forget_bias: float = 1.0) -> "LstmWeights":
        b = np.zeros(4 * d_h)
        b[d_h : 2 * d_h] = forget_bias
        return cls(
            W_x=Tensor(uniform_init(rng, (4 * d_h, d_in), d_in), requires_grad=True),
            W_h=Tensor(uniform_init(rng, (4 * d_h, d_h), d_h), requires_grad=True),
            b=Tensor(b, requires_grad=True),
        )

    @property
    def d_h(self) -> int:
        return self.W_h.shape[1]

    def tensors(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.W_x, self.W_h, self.b)


def lstm_cell_step(x: Tensor, s: LstmState, w: LstmWeights) -> LstmState:
    """One step of a standard LSTM cell; the input state is not modified."""
    d_h = w.d_h
    if x.values.ndim != 1 or w.W_x.shape[1] != x.shape[0]:
        raise ValueError(f"lstm input dims do not conform: W_x{w.W_x.shape} x{x.shape}")
    if s.h.shape != (d_h,) or s.c.shape != (d_h,):
        raise ValueError("lstm state dims do not conform")

    pre = w.W_x.values @ x.values + w.W_h.values @ s.h.values + w.b.values
    i = 1.0 / (1.0 + np.exp(-pre[:d_h]))
    f = 1.0 / (1.0 + np.exp(-pre[d_h : 2 * d_h]))
    g = np.tanh(pre[2 * d_h : 3 * d_h])
    o = 1.0 / (1.0 + np.exp(-pre[3 * d_h :]))
    c_new = f * s.c.values + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c

    parents = (x, s.h, s.c, w.W_x, w.W_h, w.b)

    # h and c are exposed as slices of one fused node so the cell backward
    # runs exactly once, after both downstream gradients have accumulated.
    def backward(ghc):
        dh = ghc[:d_h]
        dc = ghc[d_h:] + dh * o * (1.0 - tanh_c * tanh_c)
        do = dh * tanh_c
        dpre = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * s.c.values * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        x.accumulate_grad(w.W_x.values.T @ dpre)
        s.h.accumulate_grad(w.W_h.values.T @ dpre)
        s.c.accumulate_grad(dc * f)
        w.W_x.accumulate_grad(np.outer(dpre, x.values))
        w.W_h.accumulate_grad(np.outer(dpre, s.h.values))
        w.b.accumulate_grad(dpre)

    hc = _node(np.concatenate([h_new, c_new]), parents, backward, "lstm_hc")
    return LstmState(hc[:d_h], hc[d_h:])


def scaled_dot_attention(
    h_query: Tensor,
    h_keys: list[Tensor],
    W_vv: Tensor,
    W_v: Tensor,
    d_e: int,
) -> tuple[Tensor, Tensor]:
    """Soft attention over key hidden states.

    score_i = (m / sqrt(d_e)) * <W_vv h_query, W_v h_keys[i]>; the context is
    the softmax-weighted sum of the raw key vectors. Returns
    (weights, context); the weights tensor is provided for inspection and
    does not carry gradient itself (gradients flow through the context).
    """
    m = len(h_keys)
    if m == 0:
        raise ValueError("attention needs at least one key; isolated nodes are the caller's job")
    scale = m / math.sqrt(d_e)
    q = W_vv.values @ h_query.values  # (d_e,)
    K = np.stack([k.values for k in h_keys])  # (m, d_h)
    Kp = K @ W_v.values.T  # (m, d_e)
    scores = scale * (Kp @ q)  # (m,)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    weights = e / e.sum()
    context = weights @ K  # (d_h,)

    parents = (h_query, W_vv, W_v, *h_keys)

    def backward(g):
        dweights = K @ g  # (m,)
        ds = weights * (dweights - float(dweights @ weights))  # softmax backward
        dq = scale * (Kp.T @ ds)
        dKp = scale * np.outer(ds, q)  # (m, d_e)
        dK = np.outer(weights, g) + dKp @ W_v.values  # (m, d_h)
        h_query.accumulate_grad(W_vv.values.T @ dq)
        W_vv.accumulate_grad(np.outer(dq, h_query.values))
        W_v.accumulate_grad(dKp.T @ K)
        for i, k in enumerate(h_keys):
            k.accumulate_grad(dK[i])

    context_t = _node(context, parents, backward, "attention")
    weights_t = Tensor(weights, name="attention_weights")
    return weights_t, context_t


def conv2d_forward(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation of a (C,H,W) field with (O,C,kh,kw) kernels."""
    C, H, W = x.shape
    O, C_k, kh, kw = kernels.shape
    if C_k != C:
        raise ValueError(f"conv channel mismatch: input {C}, kernels {C_k}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise ValueError("kernel does not fit within the padded input")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = x.values
    if padding:
        xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding)))

    # im2col: (C*kh*kw, Ho*Wo)
    cols = np.empty((C, kh, kw, Ho, Wo))
    for a in range(kh):
        for b_ in range(kw):
            cols[:, a, b_] = xp[:, a : a + stride * Ho : stride, b_ : b_ + stride * Wo : stride]
    cols2 = cols.reshape(C * kh * kw, Ho * Wo)
    Wm = kernels.values.reshape(O, C * kh * kw)
    out = (Wm @ cols2).reshape(O, Ho, Wo)
    if bias is not None:
        out = out + bias.values[:, None, None]

    parents = (x, kernels) if bias is None else (x, kernels, bias)

    def backward(g):
        gf = g.reshape(O, Ho * Wo)
        kernels.accumulate_grad((gf @ cols2.T).reshape(kernels.shape))
        if bias is not None:
            bias.accumulate_grad(g.sum(axis=(1, 2)))
        dcols = (Wm.T @ gf).reshape(C, kh, kw, Ho, Wo)
        dxp = np.zeros((C, Hp, Wp))
        for a in range(kh):
            for b_ in range(kw):
                dxp[:, a : a + stride * Ho : stride, b_ : b_ + stride * Wo : stride] += dcols[:, a, b_]
        if padding:
            dxp = dxp[:, padding:-padding, padding:-padding]
        x.accumulate_grad(dxp)

    return _node(out, parents, backward, "conv2d")
