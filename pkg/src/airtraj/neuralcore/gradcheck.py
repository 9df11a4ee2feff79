"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor

DEFAULT_EPS = 1e-5
DEFAULT_FLOOR = 1e-8


def finite_diff_gradcheck(
    op: Callable[[], Tensor],
    inputs: list[Tensor],
    eps: float = DEFAULT_EPS,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``op`` must rebuild a scalar-valued graph from the current values of
    ``inputs`` on every call. Relative error per coordinate is
    |analytic - numeric| / max(floor, |analytic| + |numeric|).

    ``floor`` sets the gradient magnitude below which the comparison turns
    absolute. Central differences carry fp noise of roughly |f|*1e-16/eps,
    so deep compositions with large outputs need a floor above that noise;
    keep the tight default for single ops.
    """
    out = op()
    if out.values.shape != ():
        raise ValueError("gradcheck requires a scalar-valued op")
    for t in inputs:
        t.zero_grad()
    out.backward()
    analytic = [np.array(t.grad, copy=True) if t.grad is not None else np.zeros_like(t.values) for t in inputs]

    worst = 0.0
    for t, a in zip(inputs, analytic):
        for idx in np.ndindex(t.values.shape):
            orig = t.values[idx]
            t.values[idx] = orig + eps
            f_plus = float(op().values)
            t.values[idx] = orig - eps
            f_minus = float(op().values)
            t.values[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            if not np.isfinite(numeric):
                raise ArithmeticError("non-finite value during finite differencing")
            err = abs(a[idx] - numeric) / max(floor, abs(a[idx]) + abs(numeric))
            worst = max(worst, err)
    return worst
